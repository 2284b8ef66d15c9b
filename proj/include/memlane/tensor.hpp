#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "memlane/errors.hpp"

namespace memlane {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) n *= static_cast<std::size_t>(e);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Row-major flat offset: ((n*C + c)*H + h)*W + w and its generalization.
inline std::size_t flat_index(const Shape& shape, const std::vector<int>& idx) {
    if (idx.size() != shape.size()) throw ArgumentError("flat_index: rank mismatch");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= shape[k]) throw ArgumentError("flat_index: index out of bounds");
        flat = flat * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(idx[k]);
    }
    return flat;
}

inline std::vector<int> unflatten_index(const Shape& shape, std::size_t flat) {
    std::vector<int> idx(shape.size(), 0);
    for (std::size_t k = shape.size(); k-- > 0;) {
        idx[k] = static_cast<int>(flat % static_cast<std::size_t>(shape[k]));
        flat /= static_cast<std::size_t>(shape[k]);
    }
    return idx;
}

// Inner-kernel thread count, default 1 (the benchmark configuration).
// Partitioned matrix products are deterministic at any count; single-thread
// runs are additionally bitwise stable.
inline int& kernel_threads() {
    static int n = 1;
    return n;
}

inline void set_kernel_threads(int n) { kernel_threads() = n < 1 ? 1 : n; }

// Thread-local gradient mode; streams disable tape recording for inference.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool saved;
    NoGradGuard() : saved(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = saved; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Diagnostic hook: when set, relu() tracks the preactivation closest to zero
// and folds the activation sign pattern into a hash. Finite-difference checks
// use it to detect probes that straddle a kink.
struct ReluMarginProbe {
    double min_abs = 1e300;
    std::uint64_t sign_hash = 1469598103934665603ULL;  // FNV offset basis

    void observe(bool positive, double magnitude) {
        sign_hash = (sign_hash ^ (positive ? 0x9E3779B9ULL : 0x85EBCA6BULL)) * 1099511628211ULL;
        if (magnitude < min_abs) min_abs = magnitude;
    }
};

inline ReluMarginProbe*& relu_margin_probe() {
    thread_local ReluMarginProbe* slot = nullptr;
    return slot;
}

template <typename T>
void check_finite(const char* op, const std::vector<T>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            std::ostringstream os;
            os << op << ": non-finite value " << v[i] << " at flat index " << i;
            throw NumericError(os.str());
        }
    }
}

// ---------------------------------------------------------------------------
// Tensor: a shared handle over a tape node. Each forward op that touches a
// grad-requiring input records its inputs and a pull-back closure; backward
// walks the recorded graph once in reverse topological order.
// ---------------------------------------------------------------------------
template <typename T>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<T> values;
        bool requires_grad = false;
        std::vector<T> grad;                           // sized lazily
        std::vector<std::shared_ptr<Node>> parents;    // grad-requiring inputs only
        std::function<void(Node&)> backprop;           // pull self.grad into parents

        std::size_t numel() const { return values.size(); }
        void ensure_grad() {
            if (grad.size() != values.size()) grad.assign(values.size(), T(0));
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return from_vector(std::move(shape), {}, true);
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.values().begin(), t.values().end(), value);
        return t;
    }

    static Tensor scalar(T value) { return full({1}, value); }

    static Tensor from_vector(Shape shape, std::vector<T> data, bool allow_empty = false) {
        for (int e : shape) {
            if (e <= 0) throw ShapeError("tensor: nonpositive extent in shape " + shape_str(shape));
        }
        auto node = std::make_shared<Node>();
        std::size_t n = shape_numel(shape);
        node->shape = std::move(shape);
        if (data.empty() && allow_empty) {
            node->values.assign(n, T(0));
        } else {
            if (data.size() != n) {
                throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(node->shape));
            }
            node->values = std::move(data);
        }
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node()->shape; }
    int rank() const { return static_cast<int>(node()->shape.size()); }
    int dim(int i) const { return node()->shape.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return node()->values.size(); }

    std::vector<T>& values() { return node()->values; }
    const std::vector<T>& values() const { return node()->values; }

    T at(const std::vector<int>& idx) const { return node()->values[flat_index(shape(), idx)]; }

    T item() const {
        if (numel() != 1) throw ArgumentError("item: tensor has " + std::to_string(numel()) + " elements");
        return node()->values[0];
    }

    bool requires_grad() const { return node()->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node()->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node()->grad.size() == node()->values.size(); }
    const std::vector<T>& grad() const { return node()->grad; }
    std::vector<T>& grad_mut() { return node()->grad; }
    void zero_grad() { node()->grad.assign(node()->values.size(), T(0)); }

    // Deep copy of values, detached from any graph.
    Tensor clone() const {
        Tensor t = from_vector(shape(), values());
        t.node_->requires_grad = node()->requires_grad;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> data(numel());
        const auto& v = values();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<U>(v[i]);
        Tensor<U> t = Tensor<U>::from_vector(shape(), std::move(data));
        t.set_requires_grad(requires_grad());
        return t;
    }

    // Reverse-mode sweep from a scalar root. Interior grads are reset per
    // call; leaf grads accumulate additively across calls.
    void backward() const {
        if (numel() != 1) {
            throw ArgumentError("backward: root must be scalar, got shape " + shape_str(shape()));
        }
        std::vector<Node*> order;
        topo_order(order);
        for (Node* n : order) {
            if (n->backprop) {
                n->grad.assign(n->values.size(), T(0));
            } else {
                n->ensure_grad();
            }
        }
        node()->ensure_grad();
        node()->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop(**it);
        }
    }

    std::shared_ptr<Node>& node_handle() { return node_; }
    const std::shared_ptr<Node>& node_handle() const { return node_; }

private:
    std::shared_ptr<Node> node_;

    Node* node() const {
        if (!node_) throw ArgumentError("tensor: use of undefined tensor");
        return node_.get();
    }

    // Iterative post-order DFS over parents; each node visited exactly once.
    void topo_order(std::vector<Node*>& order) const {
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(node(), 0);
        seen.insert(node());
        while (!stack.empty()) {
            auto& [cur, next_child] = stack.back();
            if (next_child < cur->parents.size()) {
                Node* p = cur->parents[next_child++].get();
                if (seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(cur);
                stack.pop_back();
            }
        }
    }
};

namespace detail {

// C[m,n] = A[m,k] * B[k,n], row-major. Columns of C are partitioned across
// kernel_threads(); each element is produced by exactly one thread with the
// same inner order, so results match the single-thread run.
template <typename T>
void matmul_rm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Idx = Eigen::Index;
    Eigen::Map<const Mat> A(a, static_cast<Idx>(m), static_cast<Idx>(k));
    Eigen::Map<const Mat> B(b, static_cast<Idx>(k), static_cast<Idx>(n));
    Eigen::Map<Mat> C(c, static_cast<Idx>(m), static_cast<Idx>(n));
    int threads = kernel_threads();
    if (threads <= 1 || n < 64 || m * k * n < (1u << 18)) {
        C.noalias() = A * B;
        return;
    }
    std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
    std::vector<std::thread> pool;
    for (std::size_t j0 = 0; j0 < n; j0 += chunk) {
        std::size_t nc = std::min(chunk, n - j0);
        pool.emplace_back([&, j0, nc] {
            C.middleCols(static_cast<Idx>(j0), static_cast<Idx>(nc)).noalias() =
                A * B.middleCols(static_cast<Idx>(j0), static_cast<Idx>(nc));
        });
    }
    for (auto& t : pool) t.join();
}

// As above but C += A * B.
template <typename T>
void matmul_rm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Idx = Eigen::Index;
    Eigen::Map<const Mat> A(a, static_cast<Idx>(m), static_cast<Idx>(k));
    Eigen::Map<const Mat> B(b, static_cast<Idx>(k), static_cast<Idx>(n));
    Eigen::Map<Mat> C(c, static_cast<Idx>(m), static_cast<Idx>(n));
    C.noalias() += A * B;
}

struct ConvGeom {
    int batch, in_ch, in_h, in_w;
    int out_ch, kh, kw, stride, pad;
    int out_h, out_w;
};

// Patch matrix: cols[(ci*kh + i)*kw + j, oh*out_w + ow] = x[ci, oh*s - p + i, ow*s - p + j].
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int out_h, int out_w, T* cols) {
    std::size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                for (int oh = 0; oh < out_h; ++oh) {
                    int h = oh * stride - pad + i;
                    if (h < 0 || h >= H) {
                        for (int ow = 0; ow < out_w; ++ow) cols[idx++] = T(0);
                        continue;
                    }
                    const T* row = x + (static_cast<std::size_t>(c) * H + h) * W;
                    for (int ow = 0; ow < out_w; ++ow) {
                        int w = ow * stride - pad + j;
                        cols[idx++] = (w >= 0 && w < W) ? row[w] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint scatter of im2col: x[ci, oh*s - p + i, ow*s - p + j] += cols[...].
template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int out_h, int out_w, T* x) {
    std::size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                for (int oh = 0; oh < out_h; ++oh) {
                    int h = oh * stride - pad + i;
                    if (h < 0 || h >= H) {
                        idx += static_cast<std::size_t>(out_w);
                        continue;
                    }
                    T* row = x + (static_cast<std::size_t>(c) * H + h) * W;
                    for (int ow = 0; ow < out_w; ++ow) {
                        int w = ow * stride - pad + j;
                        if (w >= 0 && w < W) row[w] += cols[idx];
                        ++idx;
                    }
                }
            }
        }
    }
}

// y[n] = Wm[out_ch, in_ch*kh*kw] * im2col(x[n]) (+ bias), written fresh.
template <typename T>
void conv_fwd_raw(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y,
                  bool accumulate = false) {
    const std::size_t patch = static_cast<std::size_t>(g.in_ch) * g.kh * g.kw;
    const std::size_t spatial = static_cast<std::size_t>(g.out_h) * g.out_w;
    const std::size_t in_sz = static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(g.out_ch) * spatial;
    std::vector<T> cols(patch * spatial);
    for (int n = 0; n < g.batch; ++n) {
        im2col(x + n * in_sz, g.in_ch, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad,
               g.out_h, g.out_w, cols.data());
        T* yn = y + n * out_sz;
        if (accumulate) {
            matmul_rm_acc(w, cols.data(), yn, static_cast<std::size_t>(g.out_ch), patch, spatial);
        } else {
            matmul_rm(w, cols.data(), yn, static_cast<std::size_t>(g.out_ch), patch, spatial);
        }
        if (bias) {
            for (int co = 0; co < g.out_ch; ++co) {
                T b = bias[co];
                T* row = yn + co * spatial;
                for (std::size_t s = 0; s < spatial; ++s) row[s] += b;
            }
        }
    }
}

// dx[n] += col2im(Wm^T * dy[n]); also the transposed-convolution forward map.
template <typename T>
void conv_bwd_input_raw(const ConvGeom& g, const T* dy, const T* w, T* dx) {
    const std::size_t patch = static_cast<std::size_t>(g.in_ch) * g.kh * g.kw;
    const std::size_t spatial = static_cast<std::size_t>(g.out_h) * g.out_w;
    const std::size_t in_sz = static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(g.out_ch) * spatial;
    std::vector<T> wt(patch * static_cast<std::size_t>(g.out_ch));
    // Wm^T, materialized once per call.
    for (int co = 0; co < g.out_ch; ++co)
        for (std::size_t p = 0; p < patch; ++p)
            wt[p * static_cast<std::size_t>(g.out_ch) + co] = w[co * patch + p];
    std::vector<T> cols(patch * spatial);
    for (int n = 0; n < g.batch; ++n) {
        matmul_rm(wt.data(), dy + n * out_sz, cols.data(), patch,
                  static_cast<std::size_t>(g.out_ch), spatial);
        col2im_add(cols.data(), g.in_ch, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad,
                   g.out_h, g.out_w, dx + n * in_sz);
    }
}

// dW[out_ch, in_ch*kh*kw] += sum_n dy[n] * im2col(x[n])^T.
template <typename T>
void conv_wgrad_raw(const ConvGeom& g, const T* x, const T* dy, T* dw) {
    const std::size_t patch = static_cast<std::size_t>(g.in_ch) * g.kh * g.kw;
    const std::size_t spatial = static_cast<std::size_t>(g.out_h) * g.out_w;
    const std::size_t in_sz = static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(g.out_ch) * spatial;
    std::vector<T> cols(patch * spatial);
    std::vector<T> colsT(spatial * patch);
    for (int n = 0; n < g.batch; ++n) {
        im2col(x + n * in_sz, g.in_ch, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad,
               g.out_h, g.out_w, cols.data());
        for (std::size_t p = 0; p < patch; ++p)
            for (std::size_t s = 0; s < spatial; ++s)
                colsT[s * patch + p] = cols[p * spatial + s];
        matmul_rm_acc(dy + n * out_sz, colsT.data(), dw,
                      static_cast<std::size_t>(g.out_ch), spatial, patch);
    }
}

template <typename T>
void bias_grad_raw(const T* dy, int batch, int ch, std::size_t spatial, T* db) {
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < ch; ++c) {
            const T* row = dy + (static_cast<std::size_t>(n) * ch + c) * spatial;
            T acc = T(0);
            for (std::size_t s = 0; s < spatial; ++s) acc += row[s];
            db[c] += acc;
        }
}

template <typename T>
T stable_sigmoid(T z) {
    if (z >= T(0)) {
        return T(1) / (T(1) + std::exp(-z));
    }
    T e = std::exp(z);
    return e / (T(1) + e);
}

template <typename T>
void attach(Tensor<T>& out, std::vector<typename Tensor<T>::Node*>,
            std::function<void(typename Tensor<T>::Node&)>);

}  // namespace detail

// --- elementwise ops -------------------------------------------------------

template <typename T, typename F, typename DF>
Tensor<T> unary_elementwise(const char* name, const Tensor<T>& x, F fwd, DF dval) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
    check_finite(name, ov);
    if (grad_mode() && x.requires_grad()) {
        out.set_requires_grad(true);
        auto xn = x.node_handle();
        out.node_handle()->parents = {xn};
        out.node_handle()->backprop = [xn, dval](typename Tensor<T>::Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += dval(xn->values[i], self.values[i]) * self.grad[i];
        };
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    if (ReluMarginProbe* probe = relu_margin_probe()) {
        for (T v : x.values())
            probe->observe(v > T(0), std::abs(static_cast<double>(v)));
    }
    return unary_elementwise(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T xv, T) { return xv > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_elementwise(
        "sigmoid", x, [](T v) { return detail::stable_sigmoid(v); },
        [](T, T yv) { return yv * (T(1) - yv); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary_elementwise(
        "tanh", x, [](T v) { return std::tanh(v); },
        [](T, T yv) { return T(1) - yv * yv; });
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    check_finite("add", ov);
    if (grad_mode() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node_handle();
        auto bn = b.node_handle();
        auto& node = out.node_handle();
        if (a.requires_grad()) node->parents.push_back(an);
        if (b.requires_grad()) node->parents.push_back(bn);
        node->backprop = [an, bn](typename Tensor<T>::Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a, b);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    check_finite("mul", ov);
    if (grad_mode() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node_handle();
        auto bn = b.node_handle();
        auto& node = out.node_handle();
        if (a.requires_grad()) node->parents.push_back(an);
        if (b.requires_grad()) node->parents.push_back(bn);
        node->backprop = [an, bn](typename Tensor<T>::Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += bn->values[i] * self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += an->values[i] * self.grad[i];
            }
        };
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.values()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    check_finite("sum", out.values());
    if (grad_mode() && x.requires_grad()) {
        out.set_requires_grad(true);
        auto xn = x.node_handle();
        out.node_handle()->parents = {xn};
        out.node_handle()->backprop = [xn](typename Tensor<T>::Node& self) {
            xn->ensure_grad();
            T g = self.grad[0];
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
        };
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor<T> out = Tensor<T>::from_vector(std::move(shape), x.values());
    if (grad_mode() && x.requires_grad()) {
        out.set_requires_grad(true);
        auto xn = x.node_handle();
        out.node_handle()->parents = {xn};
        out.node_handle()->backprop = [xn](typename Tensor<T>::Node& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        };
    }
    return out;
}

// Concatenate two NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 4 || b.rank() != 4) {
        throw ShapeError("concat_channels: expected rank-4 inputs, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    }
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: geometry mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> out = Tensor<T>::zeros({n, ca + cb, h, w});
    auto& ov = out.values();
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < n; ++i) {
        std::copy_n(av.begin() + i * ca * plane, ca * plane, ov.begin() + i * (ca + cb) * plane);
        std::copy_n(bv.begin() + i * cb * plane, cb * plane,
                    ov.begin() + (i * (ca + cb) + ca) * plane);
    }
    if (grad_mode() && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto an = a.node_handle();
        auto bn = b.node_handle();
        auto& node = out.node_handle();
        if (a.requires_grad()) node->parents.push_back(an);
        if (b.requires_grad()) node->parents.push_back(bn);
        node->backprop = [an, bn, n, ca, cb, plane](typename Tensor<T>::Node& self) {
            for (int i = 0; i < n; ++i) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    for (std::size_t k = 0; k < ca * plane; ++k)
                        an->grad[i * ca * plane + k] += self.grad[i * (ca + cb) * plane + k];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::size_t k = 0; k < cb * plane; ++k)
                        bn->grad[i * cb * plane + k] +=
                            self.grad[(i * (ca + cb) + ca) * plane + k];
                }
            }
        };
    }
    return out;
}

// --- convolution -----------------------------------------------------------

// Cross-correlation with zero padding: out[n,co,oh,ow] =
//   bias[co] + sum_{ci,i,j} x[n,ci,oh*s-p+i,ow*s-p+j] * w[co,ci,i,j].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 4) throw ShapeError("conv2d: weight must be [Co,Ci,kh,kw], got " + shape_str(w.shape()));
    if (stride <= 0) throw ArgumentError("conv2d: stride must be positive, got " + std::to_string(stride));
    if (padding < 0) throw ArgumentError("conv2d: padding must be nonnegative, got " + std::to_string(padding));
    detail::ConvGeom g;
    g.batch = x.dim(0);
    g.in_ch = x.dim(1);
    g.in_h = x.dim(2);
    g.in_w = x.dim(3);
    g.out_ch = w.dim(0);
    g.kh = w.dim(2);
    g.kw = w.dim(3);
    g.stride = stride;
    g.pad = padding;
    if (w.dim(1) != g.in_ch) {
        throw ShapeError("conv2d: input has " + std::to_string(g.in_ch) + " channels but weight " +
                         shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)));
    }
    if (b.rank() != 1 || b.dim(0) != g.out_ch) {
        throw ShapeError("conv2d: bias must be [" + std::to_string(g.out_ch) + "], got " +
                         shape_str(b.shape()));
    }
    if (g.in_h + 2 * padding < g.kh || g.in_w + 2 * padding < g.kw) {
        throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                         " exceeds padded input " + shape_str(x.shape()) + " with padding " +
                         std::to_string(padding));
    }
    g.out_h = (g.in_h + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.in_w + 2 * padding - g.kw) / stride + 1;

    Tensor<T> out = Tensor<T>::zeros({g.batch, g.out_ch, g.out_h, g.out_w});
    detail::conv_fwd_raw(g, x.values().data(), w.values().data(), b.values().data(),
                         out.values().data());
    check_finite("conv2d", out.values());

    if (grad_mode() && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node_handle();
        auto wn = w.node_handle();
        auto bn = b.node_handle();
        auto& node = out.node_handle();
        if (x.requires_grad()) node->parents.push_back(xn);
        if (w.requires_grad()) node->parents.push_back(wn);
        if (b.requires_grad()) node->parents.push_back(bn);
        node->backprop = [xn, wn, bn, g](typename Tensor<T>::Node& self) {
            const T* dy = self.grad.data();
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::conv_wgrad_raw(g, xn->values.data(), dy, wn->grad.data());
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                detail::bias_grad_raw(dy, g.batch, g.out_ch,
                                      static_cast<std::size_t>(g.out_h) * g.out_w, bn->grad.data());
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::conv_bwd_input_raw(g, dy, wn->values.data(), xn->grad.data());
            }
        };
    }
    return out;
}

// Exact adjoint of conv2d's forward map; weight layout [Ci,Co,kh,kw].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                           int padding) {
    if (x.rank() != 4) throw ShapeError("conv_transpose2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 4) throw ShapeError("conv_transpose2d: weight must be [Ci,Co,kh,kw], got " + shape_str(w.shape()));
    if (stride <= 0) throw ArgumentError("conv_transpose2d: stride must be positive, got " + std::to_string(stride));
    if (padding < 0) throw ArgumentError("conv_transpose2d: padding must be nonnegative, got " + std::to_string(padding));
    const int in_ch = x.dim(1), out_ch = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(0) != in_ch) {
        throw ShapeError("conv_transpose2d: input has " + std::to_string(in_ch) +
                         " channels but weight " + shape_str(w.shape()) + " expects " +
                         std::to_string(w.dim(0)));
    }
    if (b.rank() != 1 || b.dim(0) != out_ch) {
        throw ShapeError("conv_transpose2d: bias must be [" + std::to_string(out_ch) + "], got " +
                         shape_str(b.shape()));
    }
    const int out_h = (x.dim(2) - 1) * stride - 2 * padding + kh;
    const int out_w = (x.dim(3) - 1) * stride - 2 * padding + kw;
    if (out_h < 1 || out_w < 1) {
        throw ShapeError("conv_transpose2d: output geometry collapses for input " +
                         shape_str(x.shape()) + " with kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + ", stride " + std::to_string(stride) + ", padding " +
                         std::to_string(padding));
    }

    // The underlying correlation maps the *output* grid back onto the input.
    detail::ConvGeom g;
    g.batch = x.dim(0);
    g.in_ch = out_ch;   // conv-role input channels
    g.in_h = out_h;
    g.in_w = out_w;
    g.out_ch = in_ch;   // conv-role output channels
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = padding;
    g.out_h = x.dim(2);
    g.out_w = x.dim(3);

    Tensor<T> out = Tensor<T>::zeros({g.batch, out_ch, out_h, out_w});
    detail::conv_bwd_input_raw(g, x.values().data(), w.values().data(), out.values().data());
    auto& ov = out.values();
    const auto& bv = b.values();
    const std::size_t spatial = static_cast<std::size_t>(out_h) * out_w;
    for (int n = 0; n < g.batch; ++n)
        for (int co = 0; co < out_ch; ++co) {
            T bias_v = bv[co];
            T* row = ov.data() + (static_cast<std::size_t>(n) * out_ch + co) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) row[s] += bias_v;
        }
    check_finite("conv_transpose2d", ov);

    if (grad_mode() && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        auto xn = x.node_handle();
        auto wn = w.node_handle();
        auto bn = b.node_handle();
        auto& node = out.node_handle();
        if (x.requires_grad()) node->parents.push_back(xn);
        if (w.requires_grad()) node->parents.push_back(wn);
        if (b.requires_grad()) node->parents.push_back(bn);
        const int batch = g.batch;
        node->backprop = [xn, wn, bn, g, batch, out_ch, spatial](typename Tensor<T>::Node& self) {
            const T* dy = self.grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                detail::bias_grad_raw(dy, batch, out_ch, spatial, bn->grad.data());
            }
            if (wn->requires_grad) {
                // dW[ci,co,i,j] = sum x[n,ci,h,w] * dy[n,co,h*s-p+i,w*s-p+j]:
                // the weight-grad kernel with dy as image and x as positions.
                wn->ensure_grad();
                detail::conv_wgrad_raw(g, dy, xn->values.data(), wn->grad.data());
            }
            if (xn->requires_grad) {
                // Adjoint of the adjoint: a plain forward correlation of dy.
                xn->ensure_grad();
                detail::conv_fwd_raw(g, dy, wn->values.data(), static_cast<const T*>(nullptr),
                                     xn->grad.data(), /*accumulate=*/true);
            }
        };
    }
    return out;
}

// --- losses ----------------------------------------------------------------

// Mean of max(z,0) - z*t + log1p(exp(-|z|)) over all elements; the
// log-sum-exp form never overflows. Compensated summation keeps the scalar
// reproducible enough for tight finite-difference comparison.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
    require_same_shape("bce_with_logits", logits, targets);
    const auto& zv = logits.values();
    const auto& tv = targets.values();
    for (std::size_t i = 0; i < tv.size(); ++i) {
        if (!(tv[i] >= T(0) && tv[i] <= T(1))) {
            throw ArgumentError("bce_with_logits: target " + std::to_string(tv[i]) +
                                " at flat index " + std::to_string(i) + " outside [0,1]");
        }
    }
    double acc = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < zv.size(); ++i) {
        double z = static_cast<double>(zv[i]);
        double t = static_cast<double>(tv[i]);
        double term = std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        double y = term - comp;
        double s = acc + y;
        comp = (s - acc) - y;
        acc = s;
    }
    const T inv_n = T(1) / static_cast<T>(zv.size());
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(zv.size())));
    check_finite("bce_with_logits", out.values());
    if (grad_mode() && logits.requires_grad()) {
        out.set_requires_grad(true);
        auto zn = logits.node_handle();
        auto tn = targets.node_handle();
        out.node_handle()->parents = {zn};
        out.node_handle()->backprop = [zn, tn, inv_n](typename Tensor<T>::Node& self) {
            zn->ensure_grad();
            T g = self.grad[0] * inv_n;
            for (std::size_t i = 0; i < zn->grad.size(); ++i)
                zn->grad[i] += (detail::stable_sigmoid(zn->values[i]) - tn->values[i]) * g;
        };
    }
    return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    loss.backward();
}

}  // namespace memlane
