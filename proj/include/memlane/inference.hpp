#pragma once

#include <chrono>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "memlane/errors.hpp"
#include "memlane/model.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

// Extractor-selection rule for streaming inference.
struct Policy {
    enum class Kind { AlwaysFast, AlwaysSlow, OneInN, RandThreshold };

    Kind kind = Kind::AlwaysFast;
    int n = 1;             // OneInN period
    double theta = 0.0;    // RandThreshold cutoff
    bool clear_on_slow = true;
    std::uint64_t seed = 0;

    static Policy always_fast() { return Policy{Kind::AlwaysFast, 1, 0.0, true, 0}; }
    static Policy always_slow() { return Policy{Kind::AlwaysSlow, 1, 0.0, true, 0}; }
    static Policy one_in(int n) { return Policy{Kind::OneInN, n, 0.0, true, 0}; }
    static Policy rand_threshold(double theta, std::uint64_t seed = 0) {
        return Policy{Kind::RandThreshold, 1, theta, true, seed};
    }

    void validate() const {
        if (kind == Kind::OneInN && n < 1)
            throw ArgumentError("policy: one-in period must be >= 1, got " + std::to_string(n));
        if (kind == Kind::RandThreshold && (theta < 0.0 || theta > 1.0))
            throw ArgumentError("policy: threshold must be in [0,1], got " + std::to_string(theta));
    }

    std::string descriptor() const {
        switch (kind) {
            case Kind::AlwaysFast: return "always-fast";
            case Kind::AlwaysSlow: return "always-slow";
            case Kind::OneInN: return "one-in:" + std::to_string(n);
            case Kind::RandThreshold: {
                std::ostringstream os;
                os << "randn:" << theta;
                return os.str();
            }
        }
        return "?";
    }
};

// "always-fast" | "always-slow" | "one-in:N" | "randn:THETA"
inline Policy parse_policy(const std::string& text) {
    if (text == "always-fast") return Policy::always_fast();
    if (text == "always-slow") return Policy::always_slow();
    auto parse_tail = [&](const std::string& prefix) -> std::string {
        return text.substr(prefix.size());
    };
    if (text.rfind("one-in:", 0) == 0) {
        int n = 0;
        try {
            n = std::stoi(parse_tail("one-in:"));
        } catch (const std::exception&) {
            throw ArgumentError("policy: cannot parse period in '" + text + "'");
        }
        Policy p = Policy::one_in(n);
        p.validate();
        return p;
    }
    if (text.rfind("randn:", 0) == 0) {
        double theta = 0.0;
        try {
            theta = std::stod(parse_tail("randn:"));
        } catch (const std::exception&) {
            throw ArgumentError("policy: cannot parse threshold in '" + text + "'");
        }
        Policy p = Policy::rand_threshold(theta);
        p.validate();
        return p;
    }
    throw ArgumentError("policy: unknown policy '" + text +
                        "' (expected always-fast|always-slow|one-in:N|randn:THETA)");
}

// Realized per-frame decision log; the audit trail behind the report tables.
struct FrameDecision {
    int frame = 0;
    ExtractorKind kind = ExtractorKind::Fast;
    bool cleared = false;
    double latency_s = 0.0;
};

using Schedule = std::vector<FrameDecision>;

// Frame 0 bootstraps memory on the slow extractor for the scheduled
// policies; OneInN never consults the PRNG, RandThreshold draws one uniform
// per frame index >= 1.
inline ExtractorKind decide(const Policy& policy, int frame_index, SplitMix64& rng) {
    policy.validate();
    switch (policy.kind) {
        case Policy::Kind::AlwaysFast:
            return ExtractorKind::Fast;
        case Policy::Kind::AlwaysSlow:
            return ExtractorKind::Slow;
        case Policy::Kind::OneInN:
            return frame_index % policy.n == 0 ? ExtractorKind::Slow : ExtractorKind::Fast;
        case Policy::Kind::RandThreshold: {
            if (frame_index == 0) return ExtractorKind::Slow;
            return rng.uniform() > policy.theta ? ExtractorKind::Slow : ExtractorKind::Fast;
        }
    }
    return ExtractorKind::Fast;
}

struct StreamResult {
    std::vector<Tensor<float>> masks;  // sigmoid(logits), [1,H,W]
    Schedule schedule;
};

// Streaming inference: per frame decide, optionally zero the memory before a
// slow pass, run the pipeline, record probabilities and forward latency.
inline StreamResult run_stream(const std::vector<Tensor<float>>& frames,
                               ModelParams<float>& params, const Policy& policy) {
    if (frames.empty()) throw ArgumentError("run_stream: no frames");
    policy.validate();
    NoGradGuard no_grad;
    SplitMix64 rng = substream(policy.seed, 0x706f6c696379ULL);  // "policy"
    MemoryState<float> state = MemoryState<float>::zeros(params.config);
    StreamResult result;
    result.masks.reserve(frames.size());
    result.schedule.reserve(frames.size());
    for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
        FrameDecision d;
        d.frame = t;
        d.kind = decide(policy, t, rng);
        if (d.kind == ExtractorKind::Slow && policy.clear_on_slow) {
            state.clear();
            d.cleared = true;
        }
        const auto start = std::chrono::steady_clock::now();
        auto [logits, next] = forward_frame(frames[static_cast<std::size_t>(t)], d.kind, state, params);
        const auto stop = std::chrono::steady_clock::now();
        state = next;
        d.latency_s = std::chrono::duration<double>(stop - start).count();
        result.masks.push_back(sigmoid(logits));
        result.schedule.push_back(d);
    }
    return result;
}

// Mean throughput over the frames after `warmup`, single-thread measurement.
inline double profile_fps(const std::vector<Tensor<float>>& frames, ModelParams<float>& params,
                          const Policy& policy, int warmup) {
    if (warmup < 0 || warmup >= static_cast<int>(frames.size())) {
        throw ArgumentError("profile_fps: warmup " + std::to_string(warmup) +
                            " must be < frame count " + std::to_string(frames.size()));
    }
    StreamResult r = run_stream(frames, params, policy);
    double total = 0.0;
    for (std::size_t t = static_cast<std::size_t>(warmup); t < r.schedule.size(); ++t)
        total += r.schedule[t].latency_s;
    return static_cast<double>(r.schedule.size() - static_cast<std::size_t>(warmup)) / total;
}

}  // namespace memlane
