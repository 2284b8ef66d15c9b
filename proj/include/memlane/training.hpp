#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "memlane/datagen.hpp"
#include "memlane/errors.hpp"
#include "memlane/model.hpp"
#include "memlane/nn.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

enum class Pipeline { Batched, Sequential };

inline Pipeline parse_pipeline(const std::string& text) {
    if (text == "batched") return Pipeline::Batched;
    if (text == "sequential") return Pipeline::Sequential;
    throw ArgumentError("pipeline: expected 'batched' or 'sequential', got '" + text + "'");
}

struct TrainConfig {
    Pipeline pipeline = Pipeline::Sequential;
    int seq_len = 6;
    double p_slow = 0.7;
    int epochs = 30;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;  // 0 disables clipping

    void validate() const {
        if (seq_len < 2) throw ArgumentError("train: seq_len must be >= 2");
        if (p_slow < 0.0 || p_slow > 1.0) throw ArgumentError("train: p-slow must be in [0,1]");
        if (epochs < 0) throw ArgumentError("train: epochs must be >= 0");
        if (lr <= 0.0) throw ArgumentError("train: lr must be positive");
        if (clip_norm < 0.0) throw ArgumentError("train: clip-norm must be >= 0");
    }
};

// Slow iff the uniform draw falls under p_slow; a biased coin from the
// training stream.
inline ExtractorKind sample_extractor(SplitMix64& rng, double p_slow) {
    if (p_slow < 0.0 || p_slow > 1.0)
        throw ArgumentError("sample_extractor: p_slow must be in [0,1]");
    return rng.uniform() < p_slow ? ExtractorKind::Slow : ExtractorKind::Fast;
}

// Batched: one frame duplicated seq_len times. Sequential: seq_len
// consecutive frames from the clip.
inline std::vector<std::pair<Tensor<float>, Tensor<float>>> make_training_sequence(
    const SequenceSample& sample, Pipeline pipeline, int start, int seq_len) {
    const int T = static_cast<int>(sample.frames.size());
    std::vector<std::pair<Tensor<float>, Tensor<float>>> seq;
    seq.reserve(static_cast<std::size_t>(seq_len));
    if (pipeline == Pipeline::Batched) {
        if (start < 0 || start >= T)
            throw ArgumentError("make_training_sequence: frame " + std::to_string(start) +
                                " out of range [0," + std::to_string(T) + ")");
        for (int i = 0; i < seq_len; ++i)
            seq.emplace_back(sample.frames[static_cast<std::size_t>(start)],
                             sample.masks[static_cast<std::size_t>(start)]);
    } else {
        if (start < 0 || start + seq_len > T)
            throw ArgumentError("make_training_sequence: window [" + std::to_string(start) + "," +
                                std::to_string(start + seq_len) + ") exceeds sequence length " +
                                std::to_string(T));
        for (int i = 0; i < seq_len; ++i)
            seq.emplace_back(sample.frames[static_cast<std::size_t>(start + i)],
                             sample.masks[static_cast<std::size_t>(start + i)]);
    }
    return seq;
}

struct TrainHooks {
    // Observes the freshly cleared memory at each sequence start.
    std::function<void(const MemoryState<float>&)> on_sequence_start;
};

// One optimizer step over one unrolled sequence: clear memory, sample an
// extractor per frame, thread the state, attach the loss to the final frame
// only, backpropagate through all steps, update, zero grads.
inline float train_sequence(const std::vector<std::pair<Tensor<float>, Tensor<float>>>& seq,
                            ModelParams<float>& params, AdamState<float>& opt, SplitMix64& rng,
                            double p_slow, double clip_norm = 0.0,
                            const TrainHooks* hooks = nullptr) {
    if (seq.empty()) throw ArgumentError("train_sequence: empty sequence");
    params.zero_grads();  // frames may skip an extractor entirely; Adam wants every buffer
    MemoryState<float> state = MemoryState<float>::zeros(params.config);
    if (hooks && hooks->on_sequence_start) hooks->on_sequence_start(state);
    Tensor<float> last_logits;
    for (const auto& [frame, mask] : seq) {
        ExtractorKind kind = sample_extractor(rng, p_slow);
        auto [logits, next] = forward_frame(frame, kind, state, params);
        state = next;
        last_logits = logits;
    }
    Tensor<float> loss = bce_with_logits(last_logits, seq.back().second);
    loss.backward();
    auto param_list = params.parameter_list();
    if (clip_norm > 0.0) clip_grad_norm(param_list, clip_norm);
    adam_step(param_list, opt);
    params.zero_grads();
    return loss.item();
}

struct TrainResult {
    ModelParams<float> params;
    std::vector<double> epoch_losses;  // mean loss per epoch
};

// Called after each epoch; wired to checkpoint emission by the CLI.
using EpochCallback = std::function<void(int epoch, double mean_loss, ModelParams<float>&)>;

// Epochs over all windows of all sequences, visit order shuffled by the
// seeded training stream. Sequential windows are non-overlapping (stride
// seq_len); batched windows cover every frame.
inline TrainResult train(const std::vector<SequenceSample>& dataset, const TrainConfig& config,
                         const ArchitectureConfig& arch, const EpochCallback& on_epoch = {}) {
    config.validate();
    arch.validate();
    if (dataset.empty()) throw ArgumentError("train: empty dataset");

    std::vector<std::pair<int, int>> windows;  // (sample index, start frame)
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const int T = static_cast<int>(dataset[s].frames.size());
        if (config.pipeline == Pipeline::Batched) {
            for (int f = 0; f < T; ++f) windows.emplace_back(static_cast<int>(s), f);
        } else {
            for (int f = 0; f + config.seq_len <= T; f += config.seq_len)
                windows.emplace_back(static_cast<int>(s), f);
        }
    }
    if (windows.empty())
        throw ArgumentError("train: no usable windows (sequences shorter than seq-len " +
                            std::to_string(config.seq_len) + ")");

    TrainResult result;
    result.params = init_params<float>(arch, config.seed);
    AdamState<float> opt = AdamState<float>::init(result.params.parameter_list(), config.lr);
    SplitMix64 rng = substream(config.seed, 0x747261696eULL);  // "train"

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::pair<int, int>> order = windows;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }
        double acc = 0.0;
        for (const auto& [s, start] : order) {
            auto seq = make_training_sequence(dataset[static_cast<std::size_t>(s)],
                                              config.pipeline, start, config.seq_len);
            acc += train_sequence(seq, result.params, opt, rng, config.p_slow, config.clip_norm);
        }
        const double mean_loss = acc / static_cast<double>(order.size());
        result.epoch_losses.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch + 1, mean_loss, result.params);
    }
    return result;
}

}  // namespace memlane
