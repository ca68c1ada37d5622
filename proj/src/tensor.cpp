#include "tempagg/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tempagg/kernels.hpp"

namespace tempagg {

namespace {

thread_local bool g_grad_enabled = true;

std::int64_t product(const std::vector<std::int64_t>& shape) {
    std::int64_t p = 1;
    for (const auto e : shape) p *= e;
    return p;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Exponent-bits test, branch-free so the scan vectorizes.
inline bool all_finite(const float* v, std::size_t n) {
    std::uint32_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(v[i]);
        bad |= static_cast<std::uint32_t>((bits & 0x7F800000u) == 0x7F800000u);
    }
    return bad == 0;
}

inline bool all_finite(const double* v, std::size_t n) {
    std::uint64_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(v[i]);
        bad |= static_cast<std::uint64_t>((bits & 0x7FF0000000000000ull) == 0x7FF0000000000000ull);
    }
    return bad == 0;
}

template <typename T>
void ensure_finite(const std::vector<T>& values, const char* op) {
    if (!all_finite(values.data(), values.size())) {
        fail("non-finite", std::string(op) + " produced a non-finite value");
    }
}

template <typename T>
void require_rank(const TensorPtrT<T>& t, std::size_t rank, const char* op, const char* role) {
    if (t->shape.size() != rank) {
        fail("shape", std::string(op) + ": " + role + " must have rank " + std::to_string(rank) +
                          ", got shape " + shape_str(t->shape));
    }
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

template <typename T>
TensorT<T>::TensorT(std::vector<std::int64_t> shape_in, std::vector<T> data_in, bool req_grad)
    : shape(std::move(shape_in)), data(std::move(data_in)), requires_grad(req_grad) {
    for (const auto e : shape) {
        if (e <= 0) fail("shape", "tensor extents must be positive, got " + shape_str(shape));
    }
    if (product(shape) != size()) {
        fail("shape", "tensor data length " + std::to_string(size()) + " does not match shape " +
                          shape_str(shape));
    }
}

template <typename T>
T TensorT<T>::scalar_value() const {
    if (size() != 1) fail("shape", "scalar_value on tensor of shape " + shape_str(shape));
    return data[0];
}

template <typename T>
void TensorT<T>::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
}

template <typename T>
void TensorT<T>::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void TensorT<T>::backward() {
    if (size() != 1) fail("autograd", "backward requires a scalar tensor");
    if (parents.empty()) fail("autograd", "backward called on a tensor with no recorded history");

    // post-order DFS over the recorded graph
    std::vector<TensorT<T>*> order;
    std::unordered_set<TensorT<T>*> visited;
    std::vector<std::pair<TensorT<T>*, std::size_t>> stack;
    stack.emplace_back(this, 0);
    visited.insert(this);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorT<T>* parent = node->parents[next].get();
            ++next;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are per-pass scratch; only leaves accumulate across
    // backward calls.
    for (TensorT<T>* node : order) {
        if (!node->parents.empty()) {
            node->ensure_grad();
            std::fill(node->grad.begin(), node->grad.end(), T(0));
        }
    }
    grad[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

template <typename T>
TensorPtrT<T> make_tensor(std::vector<std::int64_t> shape, std::vector<T> data, bool requires_grad) {
    auto t = std::make_shared<TensorT<T>>(std::move(shape), std::move(data), requires_grad);
    ensure_finite(t->data, "make_tensor");
    return t;
}

template <typename T>
TensorPtrT<T> zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    const auto n = static_cast<std::size_t>(product(shape));
    return std::make_shared<TensorT<T>>(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
TensorPtrT<T> full(std::vector<std::int64_t> shape, T value, bool requires_grad) {
    const auto n = static_cast<std::size_t>(product(shape));
    return make_tensor<T>(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
TensorPtrT<T> uniform_tensor(std::vector<std::int64_t> shape, Rng& rng, T lo, T hi,
                             bool requires_grad) {
    const auto n = static_cast<std::size_t>(product(shape));
    std::vector<T> data(n);
    for (auto& v : data) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return make_tensor<T>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorPtrT<T> randn_tensor(std::vector<std::int64_t> shape, Rng& rng, bool requires_grad) {
    const auto n = static_cast<std::size_t>(product(shape));
    std::vector<T> data(n);
    for (auto& v : data) v = static_cast<T>(rng.normal());
    return make_tensor<T>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
BatchNormStateT<T> make_batchnorm_state(std::int64_t channels) {
    BatchNormStateT<T> st;
    st.gamma = full<T>({channels}, T(1), true);
    st.beta = zeros<T>({channels}, true);
    st.running_mean = zeros<T>({channels}, false);
    st.running_var = full<T>({channels}, T(1), false);
    return st;
}

// ---- conv2d ---------------------------------------------------------------

template <typename T>
TensorPtrT<T> conv2d(const TensorPtrT<T>& x, const TensorPtrT<T>& w, const TensorPtrT<T>& bias,
                     std::int64_t stride, std::int64_t padding) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(w, 4, "conv2d", "weight");
    require_rank(bias, 1, "conv2d", "bias");
    if (stride < 1) fail("shape", "conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) fail("shape", "conv2d: padding must be >= 0, got " + std::to_string(padding));

    const std::int64_t batch = x->extent(0), cin = x->extent(1), h = x->extent(2), wd = x->extent(3);
    const std::int64_t cout = w->extent(0), kh = w->extent(2), kw = w->extent(3);
    if (w->extent(1) != cin) {
        fail("shape", "conv2d: weight expects " + std::to_string(w->extent(1)) +
                          " input channels but input has " + std::to_string(cin));
    }
    if (bias->extent(0) != cout) {
        fail("shape", "conv2d: bias length " + std::to_string(bias->extent(0)) +
                          " does not match " + std::to_string(cout) + " output channels");
    }
    if (kh > h + 2 * padding) {
        fail("shape", "conv2d: kernel height " + std::to_string(kh) +
                          " exceeds padded input height " + std::to_string(h + 2 * padding));
    }
    if (kw > wd + 2 * padding) {
        fail("shape", "conv2d: kernel width " + std::to_string(kw) +
                          " exceeds padded input width " + std::to_string(wd + 2 * padding));
    }

    const std::int64_t ho = (h + 2 * padding - kh) / stride + 1;
    const std::int64_t wo = (wd + 2 * padding - kw) / stride + 1;

    auto out = zeros<T>({batch, cout, ho, wo});
    kern::conv2d_forward(x->data.data(), w->data.data(), bias->data.data(), out->data.data(),
                         batch, cin, h, wd, cout, kh, kw, stride, padding, ho, wo);
    ensure_finite(out->data, "conv2d");

    if (grad_enabled() && (x->requires_grad || w->requires_grad || bias->requires_grad)) {
        out->requires_grad = true;
        out->parents = {x, w, bias};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, w, bias, self, batch, cin, h, wd, cout, kh, kw, stride, padding, ho,
                            wo]() {
            self->ensure_grad();
            const T* gy = self->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                kern::conv2d_backward_input(w->data.data(), gy, x->grad.data(), batch, cin, h, wd,
                                            cout, kh, kw, stride, padding, ho, wo);
                ensure_finite(x->grad, "conv2d backward (input)");
            }
            if (w->requires_grad) {
                w->ensure_grad();
                kern::conv2d_backward_weight(x->data.data(), gy, w->grad.data(), batch, cin, h, wd,
                                             cout, kh, kw, stride, padding, ho, wo);
                ensure_finite(w->grad, "conv2d backward (weight)");
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                kern::conv2d_backward_bias(gy, bias->grad.data(), batch, cout, ho, wo);
                ensure_finite(bias->grad, "conv2d backward (bias)");
            }
        };
    }
    return out;
}

// ---- maxpool2d ------------------------------------------------------------

template <typename T>
TensorPtrT<T> maxpool2d(const TensorPtrT<T>& x, std::int64_t k, std::int64_t stride) {
    require_rank(x, 4, "maxpool2d", "input");
    if (k < 1) fail("shape", "maxpool2d: window must be >= 1, got " + std::to_string(k));
    if (stride < 1) fail("shape", "maxpool2d: stride must be >= 1, got " + std::to_string(stride));

    const std::int64_t batch = x->extent(0), ch = x->extent(1), h = x->extent(2), wd = x->extent(3);
    if (k > h || k > wd) {
        fail("shape", "maxpool2d: window " + std::to_string(k) + " exceeds spatial extent " +
                          std::to_string(h) + "x" + std::to_string(wd));
    }
    const std::int64_t ho = (h - k) / stride + 1;
    const std::int64_t wo = (wd - k) / stride + 1;

    auto out = zeros<T>({batch, ch, ho, wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(batch * ch * ho * wo));
    kern::maxpool2d_forward(x->data.data(), out->data.data(), argmax->data(), batch, ch, h, wd, k,
                            stride, ho, wo);
    ensure_finite(out->data, "maxpool2d");

    if (grad_enabled() && x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, self, argmax, batch, ch, ho, wo]() {
            self->ensure_grad();
            x->ensure_grad();
            kern::maxpool2d_backward(self->grad.data(), argmax->data(), x->grad.data(), batch, ch,
                                     ho, wo);
            ensure_finite(x->grad, "maxpool2d backward");
        };
    }
    return out;
}

// ---- relu -----------------------------------------------------------------

template <typename T>
TensorPtrT<T> relu(const TensorPtrT<T>& x) {
    auto out = zeros<T>(x->shape);
    kern::relu_forward(x->data.data(), out->data.data(), x->size());

    if (grad_enabled() && x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, self]() {
            self->ensure_grad();
            x->ensure_grad();
            kern::relu_backward(x->data.data(), self->grad.data(), x->grad.data(), x->size());
        };
    }
    return out;
}

// ---- batchnorm2d ----------------------------------------------------------

template <typename T>
TensorPtrT<T> batchnorm2d(const TensorPtrT<T>& x, BatchNormStateT<T>& state, Phase phase) {
    require_rank(x, 4, "batchnorm2d", "input");
    const std::int64_t batch = x->extent(0), ch = x->extent(1), h = x->extent(2), wd = x->extent(3);
    if (state.gamma->size() != ch || state.beta->size() != ch ||
        state.running_mean->size() != ch || state.running_var->size() != ch) {
        fail("shape", "batchnorm2d: state holds " + std::to_string(state.gamma->size()) +
                          " channels but input has " + std::to_string(ch));
    }

    std::vector<T> mean(static_cast<std::size_t>(ch));
    std::vector<T> invstd(static_cast<std::size_t>(ch));
    const bool training = phase == Phase::kTrain;

    if (training) {
        if (batch * h * wd < 2) {
            fail("shape", "batchnorm2d: training mode needs at least 2 values per channel, got " +
                              std::to_string(batch * h * wd));
        }
        std::vector<T> var(static_cast<std::size_t>(ch));
        kern::batchnorm_stats(x->data.data(), mean.data(), var.data(), batch, ch, h, wd);
        for (std::int64_t c = 0; c < ch; ++c) {
            invstd[c] = T(1) / std::sqrt(var[c] + state.eps);
            state.running_mean->data[c] =
                (T(1) - state.momentum) * state.running_mean->data[c] + state.momentum * mean[c];
            state.running_var->data[c] =
                (T(1) - state.momentum) * state.running_var->data[c] + state.momentum * var[c];
        }
    } else {
        for (std::int64_t c = 0; c < ch; ++c) {
            const T rv = state.running_var->data[c];
            if (!(rv > T(0))) {
                fail("state", "batchnorm2d: running variance must be strictly positive, channel " +
                                  std::to_string(c) + " holds " + std::to_string(rv));
            }
            mean[c] = state.running_mean->data[c];
            invstd[c] = T(1) / std::sqrt(rv + state.eps);
        }
    }

    const bool tape = grad_enabled() && (x->requires_grad || state.gamma->requires_grad ||
                                         state.beta->requires_grad);
    auto out = zeros<T>(x->shape);
    std::shared_ptr<std::vector<T>> xhat;
    if (tape) xhat = std::make_shared<std::vector<T>>(x->data.size());
    kern::batchnorm_apply(x->data.data(), mean.data(), invstd.data(), state.gamma->data.data(),
                          state.beta->data.data(), out->data.data(), tape ? xhat->data() : nullptr,
                          batch, ch, h, wd);
    ensure_finite(out->data, "batchnorm2d");

    if (tape) {
        auto gamma = state.gamma;
        auto beta = state.beta;
        auto invstd_keep = std::make_shared<std::vector<T>>(std::move(invstd));
        out->requires_grad = true;
        out->parents = {x, gamma, beta};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, gamma, beta, self, xhat, invstd_keep, batch, ch, h, wd, training]() {
            self->ensure_grad();
            T* gx = nullptr;
            T* ggamma = nullptr;
            T* gbeta = nullptr;
            if (x->requires_grad) {
                x->ensure_grad();
                gx = x->grad.data();
            }
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                ggamma = gamma->grad.data();
            }
            if (beta->requires_grad) {
                beta->ensure_grad();
                gbeta = beta->grad.data();
            }
            kern::batchnorm_backward(xhat->data(), invstd_keep->data(), gamma->data.data(),
                                     self->grad.data(), gx, ggamma, gbeta, batch, ch, h, wd,
                                     training);
            if (gx) ensure_finite(x->grad, "batchnorm2d backward (input)");
            if (ggamma) ensure_finite(gamma->grad, "batchnorm2d backward (gamma)");
            if (gbeta) ensure_finite(beta->grad, "batchnorm2d backward (beta)");
        };
    }
    return out;
}

// ---- linear ---------------------------------------------------------------

template <typename T>
TensorPtrT<T> linear(const TensorPtrT<T>& x, const TensorPtrT<T>& w, const TensorPtrT<T>& bias) {
    require_rank(x, 2, "linear", "input");
    require_rank(w, 2, "linear", "weight");
    require_rank(bias, 1, "linear", "bias");
    const std::int64_t batch = x->extent(0), in_f = x->extent(1), out_f = w->extent(0);
    if (w->extent(1) != in_f) {
        fail("shape", "linear: weight expects " + std::to_string(w->extent(1)) +
                          " input features but input has " + std::to_string(in_f));
    }
    if (bias->extent(0) != out_f) {
        fail("shape", "linear: bias length " + std::to_string(bias->extent(0)) +
                          " does not match " + std::to_string(out_f) + " outputs");
    }

    auto out = zeros<T>({batch, out_f});
    kern::linear_forward(x->data.data(), w->data.data(), bias->data.data(), out->data.data(),
                         batch, in_f, out_f);
    ensure_finite(out->data, "linear");

    if (grad_enabled() && (x->requires_grad || w->requires_grad || bias->requires_grad)) {
        out->requires_grad = true;
        out->parents = {x, w, bias};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, w, bias, self, batch, in_f, out_f]() {
            self->ensure_grad();
            T* gx = nullptr;
            T* gw = nullptr;
            T* gb = nullptr;
            if (x->requires_grad) {
                x->ensure_grad();
                gx = x->grad.data();
            }
            if (w->requires_grad) {
                w->ensure_grad();
                gw = w->grad.data();
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                gb = bias->grad.data();
            }
            kern::linear_backward(x->data.data(), w->data.data(), self->grad.data(), gx, gw, gb,
                                  batch, in_f, out_f);
            if (gx) ensure_finite(x->grad, "linear backward (input)");
            if (gw) ensure_finite(w->grad, "linear backward (weight)");
            if (gb) ensure_finite(bias->grad, "linear backward (bias)");
        };
    }
    return out;
}

// ---- softmax --------------------------------------------------------------

template <typename T>
TensorPtrT<T> softmax(const TensorPtrT<T>& x) {
    require_rank(x, 2, "softmax", "input");
    const std::int64_t batch = x->extent(0), k = x->extent(1);

    auto out = zeros<T>(x->shape);
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* row = x->data.data() + b * k;
        T* yrow = out->data.data() + b * k;
        T mx = row[0];
        for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        T sum = T(0);
        for (std::int64_t i = 0; i < k; ++i) {
            yrow[i] = std::exp(row[i] - mx);
            sum += yrow[i];
        }
        const T inv = T(1) / sum;
        for (std::int64_t i = 0; i < k; ++i) yrow[i] *= inv;
    }
    ensure_finite(out->data, "softmax");

    if (grad_enabled() && x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, self, batch, k]() {
            self->ensure_grad();
            x->ensure_grad();
            for (std::int64_t b = 0; b < batch; ++b) {
                const T* p = self->data.data() + b * k;
                const T* gy = self->grad.data() + b * k;
                T* gx = x->grad.data() + b * k;
                T dot = T(0);
                for (std::int64_t i = 0; i < k; ++i) dot += gy[i] * p[i];
                for (std::int64_t i = 0; i < k; ++i) gx[i] += p[i] * (gy[i] - dot);
            }
            ensure_finite(x->grad, "softmax backward");
        };
    }
    return out;
}

// ---- cross entropy --------------------------------------------------------

template <typename T>
TensorPtrT<T> cross_entropy(const TensorPtrT<T>& probs, const std::vector<std::int64_t>& labels) {
    require_rank(probs, 2, "cross_entropy", "probabilities");
    const std::int64_t batch = probs->extent(0), k = probs->extent(1);
    if (static_cast<std::int64_t>(labels.size()) != batch) {
        fail("shape", "cross_entropy: got " + std::to_string(labels.size()) + " labels for batch " +
                          std::to_string(batch));
    }
    for (std::int64_t b = 0; b < batch; ++b) {
        if (labels[b] < 0 || labels[b] >= k) {
            fail("shape", "cross_entropy: label " + std::to_string(labels[b]) + " at row " +
                              std::to_string(b) + " outside [0, " + std::to_string(k) + ")");
        }
    }

    constexpr T kClamp = T(1e-12);
    T loss = T(0);
    for (std::int64_t b = 0; b < batch; ++b) {
        const T p = probs->data[b * k + labels[b]];
        loss += -std::log(std::max(p, kClamp));
    }
    loss /= static_cast<T>(batch);

    auto out = make_tensor<T>({}, {loss});
    if (grad_enabled() && probs->requires_grad) {
        out->requires_grad = true;
        out->parents = {probs};
        TensorT<T>* self = out.get();
        out->backward_fn = [probs, self, labels, batch, k, kClamp]() {
            self->ensure_grad();
            probs->ensure_grad();
            const T gl = self->grad[0] / static_cast<T>(batch);
            for (std::int64_t b = 0; b < batch; ++b) {
                const T p = probs->data[b * k + labels[b]];
                if (p >= kClamp) probs->grad[b * k + labels[b]] += -gl / p;
            }
            ensure_finite(probs->grad, "cross_entropy backward");
        };
    }
    return out;
}

// ---- global average pool --------------------------------------------------

template <typename T>
TensorPtrT<T> global_avg_pool(const TensorPtrT<T>& x) {
    require_rank(x, 4, "global_avg_pool", "input");
    const std::int64_t batch = x->extent(0), ch = x->extent(1);
    const std::int64_t plane = x->extent(2) * x->extent(3);
    const T inv = T(1) / static_cast<T>(plane);

    auto out = zeros<T>({batch, ch});
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const T* xp = x->data.data() + (b * ch + c) * plane;
            T acc = T(0);
            for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
            out->data[b * ch + c] = acc * inv;
        }
    }
    ensure_finite(out->data, "global_avg_pool");

    if (grad_enabled() && x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, self, batch, ch, plane, inv]() {
            self->ensure_grad();
            x->ensure_grad();
            for (std::int64_t b = 0; b < batch; ++b) {
                for (std::int64_t c = 0; c < ch; ++c) {
                    const T g = self->grad[b * ch + c] * inv;
                    T* gx = x->grad.data() + (b * ch + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gx[i] += g;
                }
            }
        };
    }
    return out;
}

// ---- concat (dim 1) -------------------------------------------------------

template <typename T>
TensorPtrT<T> concat_cols(const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    require_rank(a, 2, "concat_cols", "lhs");
    require_rank(b, 2, "concat_cols", "rhs");
    if (a->extent(0) != b->extent(0)) {
        fail("shape", "concat_cols: batch extents differ, " + std::to_string(a->extent(0)) +
                          " vs " + std::to_string(b->extent(0)));
    }
    const std::int64_t batch = a->extent(0), fa = a->extent(1), fb = b->extent(1);

    auto out = zeros<T>({batch, fa + fb});
    for (std::int64_t r = 0; r < batch; ++r) {
        std::copy_n(a->data.data() + r * fa, fa, out->data.data() + r * (fa + fb));
        std::copy_n(b->data.data() + r * fb, fb, out->data.data() + r * (fa + fb) + fa);
    }

    if (grad_enabled() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        out->parents = {a, b};
        TensorT<T>* self = out.get();
        out->backward_fn = [a, b, self, batch, fa, fb]() {
            self->ensure_grad();
            for (std::int64_t r = 0; r < batch; ++r) {
                const T* g = self->grad.data() + r * (fa + fb);
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::int64_t i = 0; i < fa; ++i) a->grad[r * fa + i] += g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::int64_t i = 0; i < fb; ++i) b->grad[r * fb + i] += g[fa + i];
                }
            }
        };
    }
    return out;
}

// ---- add / scale ----------------------------------------------------------

template <typename T>
TensorPtrT<T> add(const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    if (a->shape != b->shape) {
        fail("shape",
             "add: shapes differ, " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    auto out = zeros<T>(a->shape);
    for (std::int64_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    ensure_finite(out->data, "add");

    if (grad_enabled() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        out->parents = {a, b};
        TensorT<T>* self = out.get();
        out->backward_fn = [a, b, self]() {
            self->ensure_grad();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += self->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t i = 0; i < b->size(); ++i) b->grad[i] += self->grad[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> scale(const TensorPtrT<T>& a, T factor) {
    auto out = zeros<T>(a->shape);
    for (std::int64_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * factor;
    ensure_finite(out->data, "scale");

    if (grad_enabled() && a->requires_grad) {
        out->requires_grad = true;
        out->parents = {a};
        TensorT<T>* self = out.get();
        out->backward_fn = [a, self, factor]() {
            self->ensure_grad();
            a->ensure_grad();
            for (std::int64_t i = 0; i < a->size(); ++i) a->grad[i] += factor * self->grad[i];
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> weighted_sum(const TensorPtrT<T>& x, const std::vector<T>& weights) {
    if (static_cast<std::int64_t>(weights.size()) != x->size()) {
        fail("shape", "weighted_sum: got " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(x->size()) + " elements");
    }
    T acc = T(0);
    for (std::int64_t i = 0; i < x->size(); ++i) acc += x->data[i] * weights[i];

    auto out = make_tensor<T>({}, {acc});
    if (grad_enabled() && x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* self = out.get();
        out->backward_fn = [x, self, weights]() {
            self->ensure_grad();
            x->ensure_grad();
            const T g = self->grad[0];
            for (std::int64_t i = 0; i < x->size(); ++i) x->grad[i] += g * weights[i];
        };
    }
    return out;
}

// ---- instantiations -------------------------------------------------------

#define TEMPAGG_INSTANTIATE_TENSOR(T)                                                        \
    template struct TensorT<T>;                                                              \
    template TensorPtrT<T> make_tensor<T>(std::vector<std::int64_t>, std::vector<T>, bool);  \
    template TensorPtrT<T> zeros<T>(std::vector<std::int64_t>, bool);                        \
    template TensorPtrT<T> full<T>(std::vector<std::int64_t>, T, bool);                      \
    template TensorPtrT<T> uniform_tensor<T>(std::vector<std::int64_t>, Rng&, T, T, bool);   \
    template TensorPtrT<T> randn_tensor<T>(std::vector<std::int64_t>, Rng&, bool);           \
    template BatchNormStateT<T> make_batchnorm_state<T>(std::int64_t);                       \
    template TensorPtrT<T> conv2d<T>(const TensorPtrT<T>&, const TensorPtrT<T>&,             \
                                     const TensorPtrT<T>&, std::int64_t, std::int64_t);      \
    template TensorPtrT<T> maxpool2d<T>(const TensorPtrT<T>&, std::int64_t, std::int64_t);   \
    template TensorPtrT<T> relu<T>(const TensorPtrT<T>&);                                    \
    template TensorPtrT<T> batchnorm2d<T>(const TensorPtrT<T>&, BatchNormStateT<T>&, Phase); \
    template TensorPtrT<T> linear<T>(const TensorPtrT<T>&, const TensorPtrT<T>&,             \
                                     const TensorPtrT<T>&);                                  \
    template TensorPtrT<T> softmax<T>(const TensorPtrT<T>&);                                 \
    template TensorPtrT<T> cross_entropy<T>(const TensorPtrT<T>&,                            \
                                            const std::vector<std::int64_t>&);               \
    template TensorPtrT<T> global_avg_pool<T>(const TensorPtrT<T>&);                         \
    template TensorPtrT<T> concat_cols<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);       \
    template TensorPtrT<T> add<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);               \
    template TensorPtrT<T> scale<T>(const TensorPtrT<T>&, T);                                \
    template TensorPtrT<T> weighted_sum<T>(const TensorPtrT<T>&, const std::vector<T>&);

TEMPAGG_INSTANTIATE_TENSOR(float)
TEMPAGG_INSTANTIATE_TENSOR(double)

#undef TEMPAGG_INSTANTIATE_TENSOR

} // namespace tempagg
