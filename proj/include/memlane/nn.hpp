#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "memlane/errors.hpp"
#include "memlane/rng.hpp"
#include "memlane/tensor.hpp"

namespace memlane {

// One parameterized convolution stage. `transposed` selects the upsampling
// map; the weight layout follows the op ([Co,Ci,kh,kw] vs [Ci,Co,kh,kw]).
template <typename T>
struct ConvLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    int stride = 1;
    int padding = 0;
    bool transposed = false;

    Tensor<T> forward(const Tensor<T>& x) const {
        return transposed ? conv_transpose2d(x, weight, bias, stride, padding)
                          : conv2d(x, weight, bias, stride, padding);
    }
};

// He-normal weights (std = sqrt(2 / fan_in)), zero bias.
template <typename T>
ConvLayer<T> make_conv_layer(SplitMix64& rng, int in_ch, int out_ch, int k, int stride,
                             int padding, bool transposed = false) {
    if (k < 1) throw ArgumentError("make_conv_layer: kernel size must be >= 1");
    Shape wshape = transposed ? Shape{in_ch, out_ch, k, k} : Shape{out_ch, in_ch, k, k};
    std::vector<T> w(shape_numel(wshape));
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    for (auto& v : w) v = static_cast<T>(std_dev * rng.gaussian());
    ConvLayer<T> layer;
    layer.weight = Tensor<T>::from_vector(std::move(wshape), std::move(w)).set_requires_grad(true);
    layer.bias = Tensor<T>::zeros({out_ch}).set_requires_grad(true);
    layer.stride = stride;
    layer.padding = padding;
    layer.transposed = transposed;
    return layer;
}

// ---------------------------------------------------------------------------
// Adam with bias correction over an ordered parameter list.
// ---------------------------------------------------------------------------
template <typename T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_stab = 1e-8;
    long long step_count = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    static AdamState init(const std::vector<Tensor<T>*>& params, double lr = 1e-3) {
        AdamState s;
        s.lr = lr;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor<T>* p : params) {
            s.m.emplace_back(p->numel(), T(0));
            s.v.emplace_back(p->numel(), T(0));
        }
        return s;
    }
};

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, AdamState<T>& state) {
    if (params.size() != state.m.size()) {
        throw ArgumentError("adam_step: state tracks " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->has_grad()) {
            throw ArgumentError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        }
    }
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& vals = params[i]->values();
        const auto& grad = params[i]->grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double g = static_cast<double>(grad[j]);
            const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * g;
            const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = state.lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.eps_stab);
            vals[j] = static_cast<T>(static_cast<double>(vals[j]) - update);
        }
    }
}

// Global L2 clip across all listed parameters; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<Tensor<T>*>& params, double max_norm) {
    double sq = 0.0;
    for (const Tensor<T>* p : params) {
        if (!p->has_grad()) throw ArgumentError("clip_grad_norm: parameter has no gradient");
        for (T g : p->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / norm);
        for (Tensor<T>* p : params)
            for (T& g : p->grad_mut()) g *= scale;
    }
    return norm;
}

}  // namespace memlane
