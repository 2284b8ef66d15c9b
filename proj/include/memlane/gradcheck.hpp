#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_small_abs_err = 0.0;  // worst |a-n| among sub-resolution entries
    std::size_t checked = 0;
    std::size_t below_resolution = 0;
    std::size_t skipped_nonsmooth = 0;  // probes that straddled a relu kink
    std::size_t total = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_err = 0.0;
    double max_small_abs_err = 0.0;
    double abs_tolerance = 0.0;
    std::string worst_param;

    bool passed(double rel_tolerance) const {
        bool all_checked = true;
        for (const auto& e : params)
            if (e.checked == 0) all_checked = false;
        return all_checked && max_rel_err < rel_tolerance && max_small_abs_err <= abs_tolerance;
    }
};

// Central differences (h = 1e-5, meant for T = double) against the analytic
// gradients of `loss_fn`, a deterministic scalar function of the listed
// parameters.
//
// Two numerical realities shape the verdicts. A probe whose +/-h interval
// flips any relu unit straddles a kink, where the quotient approximates no
// derivative: such entries are skipped (detected via the activation-pattern
// hash) and replacements drawn, so every tensor keeps checked entries.
// Entries whose gradient magnitude sits under `rel_floor` are below what the
// quotient can resolve at this h (noise is about ulp(loss)/2h); they must
// agree within abs_tol instead, which still catches any wrong gradient.
// Tensors up to `max_entries` are swept exhaustively; larger ones on a seeded
// sample. Failures are reported, never thrown.
template <typename T>
GradCheckReport grad_check(const std::vector<std::pair<std::string, Tensor<T>*>>& params,
                           const std::function<Tensor<T>()>& loss_fn, double h = 1e-5,
                           std::size_t max_entries = 0, std::uint64_t sample_seed = 0,
                           double rel_floor = 1e-6, double abs_tol = 1e-9) {
    for (auto& [name, t] : params) t->zero_grad();
    Tensor<T> loss = loss_fn();
    loss.backward();

    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, t] : params) analytic.push_back(t->grad());

    auto eval_hashed = [&](std::uint64_t& hash) {
        ReluMarginProbe probe;
        relu_margin_probe() = &probe;
        const double value = static_cast<double>(loss_fn().item());
        relu_margin_probe() = nullptr;
        hash = probe.sign_hash;
        return value;
    };

    GradCheckReport report;
    report.abs_tolerance = abs_tol;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>* t = params[pi].second;
        const std::size_t n = t->numel();
        std::vector<std::size_t> candidates(n);
        for (std::size_t i = 0; i < n; ++i) candidates[i] = i;
        std::size_t want = n;
        if (max_entries != 0 && n > max_entries) {
            SplitMix64 rng = substream(sample_seed, pi);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                std::size_t j = i + rng.next_u64() % (n - i);
                std::swap(candidates[i], candidates[j]);
            }
            want = max_entries;
        }

        GradCheckEntry entry;
        entry.name = params[pi].first;
        entry.total = n;
        auto& vals = t->values();
        for (std::size_t ci = 0; ci < candidates.size() && entry.checked < want; ++ci) {
            const std::size_t idx = candidates[ci];
            const T saved = vals[idx];
            bool smooth = false;
            double numeric = 0.0, floor_here = rel_floor;
            // A probe that flips a relu is retried at h/10, where the window
            // is ten times less likely to straddle the kink; the resolution
            // floor rises accordingly since quotient noise scales with 1/h.
            for (double h_level : {h, 0.1 * h}) {
                std::uint64_t hash_plus = 0, hash_minus = 0;
                vals[idx] = saved + static_cast<T>(h_level);
                const double f_plus = eval_hashed(hash_plus);
                vals[idx] = saved - static_cast<T>(h_level);
                const double f_minus = eval_hashed(hash_minus);
                vals[idx] = saved;
                if (hash_plus == hash_minus) {
                    smooth = true;
                    numeric = (f_plus - f_minus) / (2.0 * h_level);
                    floor_here = rel_floor * (h / h_level);
                    break;
                }
            }
            if (!smooth) {
                ++entry.skipped_nonsmooth;
                continue;
            }
            ++entry.checked;
            const double a = static_cast<double>(analytic[pi][idx]);
            if (std::max(std::abs(a), std::abs(numeric)) >= floor_here) {
                const double rel =
                    std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
                entry.max_rel_err = std::max(entry.max_rel_err, rel);
            } else {
                ++entry.below_resolution;
                entry.max_small_abs_err = std::max(entry.max_small_abs_err, std::abs(a - numeric));
            }
        }
        if (entry.max_rel_err > report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = entry.name;
        }
        report.max_small_abs_err = std::max(report.max_small_abs_err, entry.max_small_abs_err);
        report.params.push_back(std::move(entry));
    }
    for (auto& [name, t] : params) t->zero_grad();
    return report;
}

}  // namespace memlane
