#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "memlane/errors.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

// Procedural road-video scene: an AR(1) curvature and a lateral random walk
// drive a quadratic centerline that narrows toward the horizon.
struct SceneParams {
    std::uint64_t seed = 0;
    int num_sequences = 1;
    int frames_per_sequence = 30;
    int image_size = 64;
    double curvature_ar_coeff = 0.9;   // rho
    double curvature_noise_std = 0.05;
    double lateral_drift_std = 0.01;   // in image-width units per frame
    double road_base_width = 0.45;     // of image width at the bottom row
    double perspective_taper = 0.8;    // linear width shrink toward horizon
    double horizon_frac = 0.35;        // horizon row = horizon_frac * H from top
    double noise_amplitude = 0.08;

    int horizon_row() const { return static_cast<int>(horizon_frac * image_size); }

    void validate() const {
        if (num_sequences < 1) throw ArgumentError("scene: need at least 1 sequence");
        if (frames_per_sequence < 1) throw ArgumentError("scene: need at least 1 frame");
        if (image_size < 8) throw ArgumentError("scene: image_size must be >= 8");
        if (curvature_ar_coeff < 0.0 || curvature_ar_coeff >= 1.0)
            throw ArgumentError("scene: curvature_ar_coeff must be in [0,1)");
        if (curvature_noise_std < 0.0 || lateral_drift_std < 0.0 || road_base_width < 0.0 ||
            noise_amplitude < 0.0)
            throw ArgumentError("scene: std/width parameters must be >= 0");
        if (horizon_row() <= 0 || horizon_row() >= image_size - 1)
            throw ArgumentError("scene: horizon row outside image");
    }
};

struct SequenceSample {
    std::vector<Tensor<float>> frames;  // [3,H,W] in [0,1]
    std::vector<Tensor<float>> masks;   // [1,H,W] binary
    std::uint64_t seed = 0;
    int sequence_index = 0;
};

namespace detail {

// Road-fraction and consecutive-overlap limits a usable sequence must meet.
constexpr double kMinRoadFraction = 0.05;
constexpr double kMaxRoadFraction = 0.70;
constexpr double kMinConsecutiveIoU = 0.6;
constexpr int kMaxGenerationRetries = 100;

inline double binary_mask_iou(const std::vector<float>& a, const std::vector<float>& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        bool pa = a[i] > 0.5f, pb = b[i] > 0.5f;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool sequence_valid(const SequenceSample& s) {
    const std::size_t pixels = s.masks.front().numel();
    for (const auto& m : s.masks) {
        std::size_t road = 0;
        for (float v : m.values()) road += v > 0.5f;
        double frac = static_cast<double>(road) / static_cast<double>(pixels);
        if (frac < kMinRoadFraction || frac > kMaxRoadFraction) return false;
    }
    for (std::size_t t = 0; t + 1 < s.masks.size(); ++t) {
        if (binary_mask_iou(s.masks[t].values(), s.masks[t + 1].values()) < kMinConsecutiveIoU)
            return false;
    }
    return true;
}

inline SequenceSample build_sequence(const SceneParams& p, int index, SplitMix64& rng) {
    const int H = p.image_size, W = p.image_size;
    const int hr = p.horizon_row();
    SequenceSample sample;
    sample.seed = p.seed;
    sample.sequence_index = index;
    sample.frames.reserve(static_cast<std::size_t>(p.frames_per_sequence));
    sample.masks.reserve(static_cast<std::size_t>(p.frames_per_sequence));

    // Stationary AR(1) start for curvature; a modest spread for the lateral
    // offset. Both collapse to zero when the noise parameters are zero.
    const double stationary =
        p.curvature_noise_std / std::sqrt(1.0 - p.curvature_ar_coeff * p.curvature_ar_coeff);
    double k = stationary * rng.gaussian();
    double c = 5.0 * p.lateral_drift_std * rng.gaussian();

    for (int t = 0; t < p.frames_per_sequence; ++t) {
        if (t > 0) {
            k = p.curvature_ar_coeff * k + p.curvature_noise_std * rng.gaussian();
            c = c + p.lateral_drift_std * rng.gaussian();
        }
        Tensor<float> frame = Tensor<float>::zeros({3, H, W});
        Tensor<float> mask = Tensor<float>::zeros({1, H, W});
        auto& fv = frame.values();
        auto& mv = mask.values();
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        for (int r = 0; r < H; ++r) {
            const bool sky = r <= hr;
            double center = 0.0, halfw = -1.0;
            if (!sky) {
                const double u = static_cast<double>(r - hr) / static_cast<double>(H - hr);
                center = W * (0.5 + c + k * u * u);
                halfw = 0.5 * p.road_base_width * W *
                        (1.0 - p.perspective_taper * static_cast<double>(H - r) /
                                   static_cast<double>(H - hr));
            }
            for (int col = 0; col < W; ++col) {
                const std::size_t px = static_cast<std::size_t>(r) * W + col;
                double red, green, blue;
                if (sky) {
                    red = 0.60, green = 0.75, blue = 0.92;
                } else if (std::abs(col + 0.5 - center) <= halfw) {
                    red = 0.45, green = 0.45, blue = 0.47;
                    mv[px] = 1.0f;
                } else {
                    red = 0.32, green = 0.42, blue = 0.20;
                }
                fv[px] = static_cast<float>(
                    std::clamp(red + rng.uniform(-p.noise_amplitude, p.noise_amplitude), 0.0, 1.0));
                fv[plane + px] = static_cast<float>(
                    std::clamp(green + rng.uniform(-p.noise_amplitude, p.noise_amplitude), 0.0, 1.0));
                fv[2 * plane + px] = static_cast<float>(
                    std::clamp(blue + rng.uniform(-p.noise_amplitude, p.noise_amplitude), 0.0, 1.0));
            }
        }
        sample.frames.push_back(std::move(frame));
        sample.masks.push_back(std::move(mask));
    }
    return sample;
}

}  // namespace detail

// Deterministic generation; each (sequence, retry) pair owns an independent
// splitmix substream, so sequences do not perturb one another.
inline std::vector<SequenceSample> generate(const SceneParams& params) {
    params.validate();
    std::vector<SequenceSample> out;
    out.reserve(static_cast<std::size_t>(params.num_sequences));
    for (int i = 0; i < params.num_sequences; ++i) {
        bool emitted = false;
        for (int attempt = 0; attempt < detail::kMaxGenerationRetries; ++attempt) {
            SplitMix64 rng = substream(params.seed,
                                       static_cast<std::uint64_t>(i) * 1000003ULL +
                                           static_cast<std::uint64_t>(attempt));
            SequenceSample s = detail::build_sequence(params, i, rng);
            if (detail::sequence_valid(s)) {
                out.push_back(std::move(s));
                emitted = true;
                break;
            }
        }
        if (!emitted) {
            std::ostringstream os;
            os << "generate: sequence " << i << " violated scene invariants after "
               << detail::kMaxGenerationRetries << " retries (seed=" << params.seed
               << ", image_size=" << params.image_size
               << ", road_base_width=" << params.road_base_width
               << ", curvature_noise_std=" << params.curvature_noise_std
               << ", lateral_drift_std=" << params.lateral_drift_std << ")";
            throw GenerationError(os.str());
        }
    }
    return out;
}

namespace detail {

inline Tensor<float> mirror_width(const Tensor<float>& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    Tensor<float> out = Tensor<float>::zeros(t.shape());
    const auto& src = t.values();
    auto& dst = out.values();
    for (int ch = 0; ch < C; ++ch)
        for (int r = 0; r < H; ++r) {
            const std::size_t row = (static_cast<std::size_t>(ch) * H + r) * W;
            for (int col = 0; col < W; ++col) dst[row + col] = src[row + (W - 1 - col)];
        }
    return out;
}

}  // namespace detail

// Append horizontally mirrored copies: |output| == 2 * |input|.
inline std::vector<SequenceSample> flip_augment(const std::vector<SequenceSample>& samples) {
    std::vector<SequenceSample> out = samples;
    out.reserve(samples.size() * 2);
    for (const auto& s : samples) {
        SequenceSample flipped;
        flipped.seed = s.seed;
        flipped.sequence_index = s.sequence_index;
        for (const auto& f : s.frames) flipped.frames.push_back(detail::mirror_width(f));
        for (const auto& m : s.masks) flipped.masks.push_back(detail::mirror_width(m));
        out.push_back(std::move(flipped));
    }
    return out;
}

}  // namespace memlane
