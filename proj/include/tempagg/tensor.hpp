#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tempagg/error.hpp"
#include "tempagg/rng.hpp"

namespace tempagg {

enum class Phase { kTrain, kEval };

template <typename T>
struct TensorT;

template <typename T>
using TensorPtrT = std::shared_ptr<TensorT<T>>;

// Dense row-major n-d tensor with an optional gradient buffer and a recorded
// backward closure (reverse-mode tape). float is the training type; double
// exists for gradient checking.
template <typename T>
struct TensorT : std::enable_shared_from_this<TensorT<T>> {
    std::vector<std::int64_t> shape;
    std::vector<T> data;
    std::vector<T> grad; // same length as data once touched, else empty
    bool requires_grad = false;

    std::vector<TensorPtrT<T>> parents;
    std::function<void()> backward_fn;

    TensorT(std::vector<std::int64_t> shape_in, std::vector<T> data_in, bool req_grad);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t extent(std::size_t dim) const { return shape.at(dim); }

    T scalar_value() const;

    void ensure_grad();
    void zero_grad();

    // Runs reverse-mode accumulation from this scalar through the recorded
    // tape. Gradients add up across calls until zero_grad().
    void backward();
};

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;
using DTensor = TensorT<double>;
using DTensorPtr = TensorPtrT<double>;

// Thread-local autograd switch; forwards run identically either way, only
// tape recording is skipped while disabled.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

template <typename T>
TensorPtrT<T> make_tensor(std::vector<std::int64_t> shape, std::vector<T> data,
                          bool requires_grad = false);

template <typename T>
TensorPtrT<T> zeros(std::vector<std::int64_t> shape, bool requires_grad = false);

template <typename T>
TensorPtrT<T> full(std::vector<std::int64_t> shape, T value, bool requires_grad = false);

template <typename T>
TensorPtrT<T> uniform_tensor(std::vector<std::int64_t> shape, Rng& rng, T lo, T hi,
                             bool requires_grad = false);

template <typename T>
TensorPtrT<T> randn_tensor(std::vector<std::int64_t> shape, Rng& rng,
                           bool requires_grad = false);

// Running statistics live outside the tape; gamma/beta are learnable.
template <typename T>
struct BatchNormStateT {
    TensorPtrT<T> gamma;
    TensorPtrT<T> beta;
    TensorPtrT<T> running_mean;
    TensorPtrT<T> running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);
};

using BatchNormState = BatchNormStateT<float>;

template <typename T>
BatchNormStateT<T> make_batchnorm_state(std::int64_t channels);

// ---- operators -----------------------------------------------------------

template <typename T>
TensorPtrT<T> conv2d(const TensorPtrT<T>& x, const TensorPtrT<T>& w, const TensorPtrT<T>& bias,
                     std::int64_t stride, std::int64_t padding);

template <typename T>
TensorPtrT<T> maxpool2d(const TensorPtrT<T>& x, std::int64_t k, std::int64_t stride);

template <typename T>
TensorPtrT<T> relu(const TensorPtrT<T>& x);

// Training mode normalizes with batch statistics over (B,H,W) per channel and
// updates running stats as running <- (1-momentum)*running + momentum*batch;
// eval mode normalizes with the running stats.
template <typename T>
TensorPtrT<T> batchnorm2d(const TensorPtrT<T>& x, BatchNormStateT<T>& state, Phase phase);

template <typename T>
TensorPtrT<T> linear(const TensorPtrT<T>& x, const TensorPtrT<T>& w, const TensorPtrT<T>& bias);

template <typename T>
TensorPtrT<T> softmax(const TensorPtrT<T>& x);

// Mean over the batch of -log(p[label]), p clamped below at 1e-12.
template <typename T>
TensorPtrT<T> cross_entropy(const TensorPtrT<T>& probs, const std::vector<std::int64_t>& labels);

template <typename T>
TensorPtrT<T> global_avg_pool(const TensorPtrT<T>& x);

template <typename T>
TensorPtrT<T> concat_cols(const TensorPtrT<T>& a, const TensorPtrT<T>& b);

template <typename T>
TensorPtrT<T> add(const TensorPtrT<T>& a, const TensorPtrT<T>& b);

template <typename T>
TensorPtrT<T> scale(const TensorPtrT<T>& a, T factor);

// Scalar sum_i x_i * weights_i with a fixed summation order.
template <typename T>
TensorPtrT<T> weighted_sum(const TensorPtrT<T>& x, const std::vector<T>& weights);

} // namespace tempagg
