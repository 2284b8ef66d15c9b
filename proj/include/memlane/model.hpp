#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "memlane/errors.hpp"
#include "memlane/nn.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

enum class ExtractorKind : int { Fast = 0, Slow = 1 };

inline const char* extractor_name(ExtractorKind k) {
    return k == ExtractorKind::Fast ? "fast" : "slow";
}

struct ArchitectureConfig {
    int input_size = 64;        // H == W
    int feature_channels = 32;  // shared feature space width F
    int memory_channels = 16;   // ConvLSTM channels
    int downsample = 8;         // spatial reduction, power of two
    static constexpr int gate_kernel = 3;

    static ArchitectureConfig desk() { return {}; }

    static ArchitectureConfig paper_scale() {
        ArchitectureConfig c;
        c.input_size = 224;
        c.feature_channels = 512;
        c.memory_channels = 128;
        c.downsample = 32;
        return c;
    }

    int depth() const {
        int d = 0, v = downsample;
        while (v > 1) {
            v >>= 1;
            ++d;
        }
        return d;
    }

    int feature_size() const { return input_size / downsample; }

    void validate() const {
        if (feature_channels < 1 || memory_channels < 1)
            throw ArgumentError("architecture: channel counts must be >= 1");
        if (downsample < 2 || (downsample & (downsample - 1)) != 0)
            throw ArgumentError("architecture: downsample must be a power of two >= 2, got " +
                                std::to_string(downsample));
        if (input_size < downsample || input_size % downsample != 0)
            throw ArgumentError("architecture: input_size " + std::to_string(input_size) +
                                " not divisible by downsample " + std::to_string(downsample));
    }

    bool operator==(const ArchitectureConfig&) const = default;
};

// Static description of one conv stage, used for construction and MAC math.
struct LayerSpec {
    int in_ch, out_ch, kernel, stride, padding;
};

inline std::vector<LayerSpec> fast_extractor_spec(const ArchitectureConfig& cfg) {
    std::vector<LayerSpec> layers;
    int in_ch = 3;
    for (int k = 0; k < cfg.depth(); ++k) {
        int out_ch = 8 << k;
        layers.push_back({in_ch, out_ch, 3, 2, 1});
        in_ch = out_ch;
    }
    layers.push_back({in_ch, cfg.feature_channels, 1, 1, 0});
    return layers;
}

inline std::vector<LayerSpec> slow_extractor_spec(const ArchitectureConfig& cfg) {
    std::vector<LayerSpec> layers;
    layers.push_back({3, 16, 3, 1, 1});
    int ch = 16;
    for (int k = 0; k < cfg.depth(); ++k) {
        layers.push_back({ch, ch * 2, 3, 2, 1});
        layers.push_back({ch * 2, ch * 2, 3, 1, 1});
        ch *= 2;
    }
    layers.push_back({ch, cfg.feature_channels, 1, 1, 0});
    return layers;
}

inline std::vector<LayerSpec> decoder_spec(const ArchitectureConfig& cfg) {
    std::vector<LayerSpec> layers;
    int ch = cfg.memory_channels;
    for (int k = 0; k < cfg.depth(); ++k) {
        int out_ch = ch / 2 < 4 ? 4 : ch / 2;
        layers.push_back({ch, out_ch, 4, 2, 1});  // transposed
        ch = out_ch;
    }
    layers.push_back({ch, 1, 1, 1, 0});  // logit head
    return layers;
}

// Multiply-accumulate count of an extractor forward pass; the analytic proxy
// for the fast/slow cost asymmetry.
inline std::uint64_t extractor_macs(ExtractorKind kind, const ArchitectureConfig& cfg) {
    cfg.validate();
    auto layers = kind == ExtractorKind::Fast ? fast_extractor_spec(cfg) : slow_extractor_spec(cfg);
    std::uint64_t total = 0;
    int size = cfg.input_size;
    for (const auto& l : layers) {
        size = (size + 2 * l.padding - l.kernel) / l.stride + 1;
        total += static_cast<std::uint64_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel *
                 static_cast<std::uint64_t>(size) * size;
    }
    return total;
}

// ConvLSTM hidden/cell pair carried across frames, stored NCHW with N=1.
template <typename T>
struct MemoryState {
    Tensor<T> h;
    Tensor<T> c;

    static MemoryState zeros(const ArchitectureConfig& cfg) {
        const int fs = cfg.feature_size();
        MemoryState s;
        s.h = Tensor<T>::zeros({1, cfg.memory_channels, fs, fs});
        s.c = Tensor<T>::zeros({1, cfg.memory_channels, fs, fs});
        return s;
    }

    void clear() {
        h = Tensor<T>::zeros(h.shape());
        c = Tensor<T>::zeros(c.shape());
    }

    bool is_zero() const {
        for (T v : h.values())
            if (v != T(0)) return false;
        for (T v : c.values())
            if (v != T(0)) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// ModelParams: every trainable tensor of the pipeline under canonical names
// ("slow.conv3.weight", "lstm.gate_i.bias", "decoder.up1.weight", ...).
// ---------------------------------------------------------------------------
template <typename T>
struct ModelParams {
    ArchitectureConfig config;
    std::vector<ConvLayer<T>> fast;
    std::vector<ConvLayer<T>> slow;
    ConvLayer<T> gate_i, gate_f, gate_o, gate_g;
    std::vector<ConvLayer<T>> decoder_up;
    ConvLayer<T> decoder_final;

    // Canonical enumeration order; serialization, Adam and gradcheck all key
    // off this ordering.
    void for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
        auto layer = [&](const std::string& prefix, ConvLayer<T>& l) {
            fn(prefix + ".weight", l.weight);
            fn(prefix + ".bias", l.bias);
        };
        for (std::size_t i = 0; i < fast.size(); ++i)
            layer("fast.conv" + std::to_string(i + 1), fast[i]);
        for (std::size_t i = 0; i < slow.size(); ++i)
            layer("slow.conv" + std::to_string(i + 1), slow[i]);
        layer("lstm.gate_i", gate_i);
        layer("lstm.gate_f", gate_f);
        layer("lstm.gate_o", gate_o);
        layer("lstm.gate_g", gate_g);
        for (std::size_t i = 0; i < decoder_up.size(); ++i)
            layer("decoder.up" + std::to_string(i + 1), decoder_up[i]);
        layer("decoder.final", decoder_final);
    }

    std::vector<Tensor<T>*> parameter_list() {
        std::vector<Tensor<T>*> out;
        for_each([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
        return out;
    }

    std::vector<std::string> parameter_names() {
        std::vector<std::string> out;
        for_each([&](const std::string& n, Tensor<T>&) { out.push_back(n); });
        return out;
    }

    Tensor<T>* find(const std::string& name) {
        Tensor<T>* hit = nullptr;
        for_each([&](const std::string& n, Tensor<T>& t) {
            if (n == name) hit = &t;
        });
        return hit;
    }

    void zero_grads() {
        for_each([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
    }

    template <typename U>
    ModelParams<U> cast() {
        ModelParams<U> out;
        out.config = config;
        auto conv_cast = [](const ConvLayer<T>& l) {
            ConvLayer<U> c;
            c.weight = l.weight.template cast<U>();
            c.bias = l.bias.template cast<U>();
            c.stride = l.stride;
            c.padding = l.padding;
            c.transposed = l.transposed;
            return c;
        };
        for (const auto& l : fast) out.fast.push_back(conv_cast(l));
        for (const auto& l : slow) out.slow.push_back(conv_cast(l));
        out.gate_i = conv_cast(gate_i);
        out.gate_f = conv_cast(gate_f);
        out.gate_o = conv_cast(gate_o);
        out.gate_g = conv_cast(gate_g);
        for (const auto& l : decoder_up) out.decoder_up.push_back(conv_cast(l));
        out.decoder_final = conv_cast(decoder_final);
        return out;
    }
};

// He-normal conv weights from the seeded stream, zero biases, forget-gate
// bias +1. A pure function of (config, seed).
template <typename T>
ModelParams<T> init_params(const ArchitectureConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SplitMix64 rng = substream(seed, 0x6d656d6c616e65ULL);  // "memlane"
    ModelParams<T> p;
    p.config = cfg;
    for (const auto& l : fast_extractor_spec(cfg))
        p.fast.push_back(make_conv_layer<T>(rng, l.in_ch, l.out_ch, l.kernel, l.stride, l.padding));
    for (const auto& l : slow_extractor_spec(cfg))
        p.slow.push_back(make_conv_layer<T>(rng, l.in_ch, l.out_ch, l.kernel, l.stride, l.padding));
    const int gate_in = cfg.feature_channels + cfg.memory_channels;
    p.gate_i = make_conv_layer<T>(rng, gate_in, cfg.memory_channels, ArchitectureConfig::gate_kernel, 1, 1);
    p.gate_f = make_conv_layer<T>(rng, gate_in, cfg.memory_channels, ArchitectureConfig::gate_kernel, 1, 1);
    p.gate_o = make_conv_layer<T>(rng, gate_in, cfg.memory_channels, ArchitectureConfig::gate_kernel, 1, 1);
    p.gate_g = make_conv_layer<T>(rng, gate_in, cfg.memory_channels, ArchitectureConfig::gate_kernel, 1, 1);
    std::fill(p.gate_f.bias.values().begin(), p.gate_f.bias.values().end(), T(1));
    auto dec = decoder_spec(cfg);
    for (std::size_t i = 0; i + 1 < dec.size(); ++i) {
        const auto& l = dec[i];
        p.decoder_up.push_back(
            make_conv_layer<T>(rng, l.in_ch, l.out_ch, l.kernel, l.stride, l.padding, true));
    }
    const auto& head = dec.back();
    p.decoder_final = make_conv_layer<T>(rng, head.in_ch, head.out_ch, head.kernel, head.stride,
                                         head.padding);
    return p;
}

namespace detail {

template <typename T>
Tensor<T> run_extractor(const char* which, const std::vector<ConvLayer<T>>& layers,
                        const Tensor<T>& image, const ArchitectureConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.input_size ||
        image.dim(2) != cfg.input_size) {
        throw ShapeError(std::string(which) + ": expected image [3," +
                         std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) +
                         "], got " + shape_str(image.shape()));
    }
    Tensor<T> x = reshape(image, {1, 3, cfg.input_size, cfg.input_size});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(x);
        if (i + 1 < layers.size()) x = relu(x);  // no activation after the 1x1 projection
    }
    const int fs = cfg.feature_size();
    return reshape(x, {cfg.feature_channels, fs, fs});
}

}  // namespace detail

// Low-capacity extractor: depth() stride-2 3x3 stages, then 1x1 into the
// shared feature space.
template <typename T>
Tensor<T> extract_fast(const Tensor<T>& image, ModelParams<T>& params) {
    return detail::run_extractor("extract_fast", params.fast, image, params.config);
}

// High-capacity extractor: stride-1 head plus (stride-2, stride-1) pairs per
// stage; same output geometry as extract_fast by construction.
template <typename T>
Tensor<T> extract_slow(const Tensor<T>& image, ModelParams<T>& params) {
    return detail::run_extractor("extract_slow", params.slow, image, params.config);
}

template <typename T>
Tensor<T> extract(const Tensor<T>& image, ExtractorKind kind, ModelParams<T>& params) {
    return kind == ExtractorKind::Fast ? extract_fast(image, params) : extract_slow(image, params);
}

// One ConvLSTM step over the concatenation [feat; h]:
//   i,f,o = sigmoid(conv(cat)), g = tanh(conv(cat)),
//   c' = f*c + i*g, h' = o*tanh(c'). Returns (h', new state).
template <typename T>
std::pair<Tensor<T>, MemoryState<T>> convlstm_step(const Tensor<T>& feat,
                                                   const MemoryState<T>& state,
                                                   ModelParams<T>& params) {
    const auto& cfg = params.config;
    const int fs = cfg.feature_size();
    if (feat.rank() != 3 || feat.dim(0) != cfg.feature_channels || feat.dim(1) != fs ||
        feat.dim(2) != fs) {
        throw ShapeError("convlstm_step: expected features [" +
                         std::to_string(cfg.feature_channels) + "," + std::to_string(fs) + "," +
                         std::to_string(fs) + "], got " + shape_str(feat.shape()));
    }
    if (state.h.shape() != Shape{1, cfg.memory_channels, fs, fs} ||
        state.c.shape() != state.h.shape()) {
        throw ShapeError("convlstm_step: state geometry " + shape_str(state.h.shape()) +
                         " incompatible with features " + shape_str(feat.shape()));
    }
    Tensor<T> x = reshape(feat, {1, cfg.feature_channels, fs, fs});
    Tensor<T> cat = concat_channels(x, state.h);
    Tensor<T> gi = sigmoid(params.gate_i.forward(cat));
    Tensor<T> gf = sigmoid(params.gate_f.forward(cat));
    Tensor<T> go = sigmoid(params.gate_o.forward(cat));
    Tensor<T> gg = tanh(params.gate_g.forward(cat));
    Tensor<T> c_next = add(mul(gf, state.c), mul(gi, gg));
    Tensor<T> h_next = mul(go, tanh(c_next));
    MemoryState<T> next;
    next.h = h_next;
    next.c = c_next;
    return {reshape(h_next, {cfg.memory_channels, fs, fs}), next};
}

// Upsampling head: depth() transposed convs (kernel 4, stride 2, pad 1,
// ReLU after each), then a 1x1 conv to a single logit channel.
template <typename T>
Tensor<T> decode(const Tensor<T>& mem_out, ModelParams<T>& params) {
    const auto& cfg = params.config;
    const int fs = cfg.feature_size();
    if (mem_out.rank() != 3 || mem_out.dim(0) != cfg.memory_channels || mem_out.dim(1) != fs ||
        mem_out.dim(2) != fs) {
        throw ShapeError("decode: expected memory output [" + std::to_string(cfg.memory_channels) +
                         "," + std::to_string(fs) + "," + std::to_string(fs) + "], got " +
                         shape_str(mem_out.shape()));
    }
    Tensor<T> x = reshape(mem_out, {1, cfg.memory_channels, fs, fs});
    for (const auto& up : params.decoder_up) x = relu(up.forward(x));
    x = params.decoder_final.forward(x);
    return reshape(x, {1, cfg.input_size, cfg.input_size});
}

// Full per-frame pipeline: extractor -> ConvLSTM -> decoder, threading state.
template <typename T>
std::pair<Tensor<T>, MemoryState<T>> forward_frame(const Tensor<T>& image, ExtractorKind kind,
                                                   const MemoryState<T>& state,
                                                   ModelParams<T>& params) {
    Tensor<T> feat = extract(image, kind, params);
    auto [mem_out, next] = convlstm_step(feat, state, params);
    Tensor<T> logits = decode(mem_out, params);
    return {logits, next};
}

}  // namespace memlane
