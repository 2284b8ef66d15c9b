#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "memlane/datagen.hpp"
#include "memlane/errors.hpp"
#include "memlane/inference.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

struct MetricsRow {
    std::string name;
    std::string strategy;
    double avg_iou = 0.0;
    double avg_fps = 0.0;
    double temporal_consistency = 0.0;
};

// Intersection-over-union of the prediction binarized at strict > threshold
// against a binary ground truth. Empty-vs-empty counts as a perfect 1.0.
inline double iou(const Tensor<float>& pred, const Tensor<float>& gt, double threshold = 0.5) {
    require_same_shape("iou", pred, gt);
    const auto& pv = pred.values();
    const auto& gv = gt.values();
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const bool p = pv[i] > threshold;
        const bool g = gv[i] > 0.5f;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct TemporalConsistency {
    double value = 0.0;
    bool degenerate_gt = false;  // ground-truth pairs had no overlap signal
};

// Mean consecutive-prediction IoU normalized by mean consecutive-ground-truth
// IoU; isolates model jitter from scene motion.
inline TemporalConsistency temporal_consistency(const std::vector<Tensor<float>>& preds,
                                                const std::vector<Tensor<float>>& gts,
                                                double threshold = 0.5) {
    if (preds.size() != gts.size())
        throw ArgumentError("temporal_consistency: " + std::to_string(preds.size()) +
                            " predictions vs " + std::to_string(gts.size()) + " ground truths");
    if (preds.size() < 2)
        throw ArgumentError("temporal_consistency: need at least 2 frames");
    double pred_acc = 0.0, gt_acc = 0.0;
    const std::size_t pairs = preds.size() - 1;
    for (std::size_t t = 0; t < pairs; ++t) {
        pred_acc += iou(preds[t], preds[t + 1], threshold);
        gt_acc += iou(gts[t], gts[t + 1], threshold);
    }
    const double pred_mean = pred_acc / static_cast<double>(pairs);
    const double gt_mean = gt_acc / static_cast<double>(pairs);
    TemporalConsistency tc;
    if (gt_mean < 1e-6) {
        tc.value = pred_mean;
        tc.degenerate_gt = true;
    } else {
        tc.value = pred_mean / gt_mean;
    }
    return tc;
}

// Stream every sequence (fresh memory per sequence), average per-frame IoU
// over all frames, throughput over all forward latencies, and TC per
// sequence.
inline MetricsRow evaluate(ModelParams<float>& params, const std::vector<SequenceSample>& samples,
                           const Policy& policy, const std::string& model_name) {
    if (samples.empty()) throw ArgumentError("evaluate: empty dataset split");
    double iou_acc = 0.0;
    std::size_t frame_count = 0;
    double latency_acc = 0.0;
    double tc_acc = 0.0;
    std::size_t tc_count = 0;
    for (const auto& sample : samples) {
        StreamResult r = run_stream(sample.frames, params, policy);
        for (std::size_t t = 0; t < r.masks.size(); ++t) {
            iou_acc += iou(r.masks[t], sample.masks[t]);
            latency_acc += r.schedule[t].latency_s;
            ++frame_count;
        }
        if (sample.frames.size() >= 2) {
            tc_acc += temporal_consistency(r.masks, sample.masks).value;
            ++tc_count;
        }
    }
    MetricsRow row;
    row.name = model_name;
    row.strategy = policy.descriptor();
    row.avg_iou = iou_acc / static_cast<double>(frame_count);
    row.avg_fps = static_cast<double>(frame_count) / latency_acc;
    row.temporal_consistency = tc_count ? tc_acc / static_cast<double>(tc_count) : 0.0;
    return row;
}

}  // namespace memlane
