#pragma once

#include <cstdint>

// Dense NCHW kernels behind the tensor ops. Two implementations with
// identical signatures and identical per-accumulator summation order:
//
//   tempagg::kern — OpenMP-parallel production path. Parallelism is only
//                   over disjoint output regions (batch entries, channels,
//                   output planes), so results are bitwise equal to the
//                   serial path for any thread count.
//   tempagg::ref  — plain-loop serial reference, kept for testing and for
//                   the kernel benchmark.
//
// Backward kernels accumulate (+=) into caller-zeroed buffers; null yields
// skip that gradient.

namespace tempagg::kern {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                    std::int64_t cout, std::int64_t kh, std::int64_t kw,
                    std::int64_t stride, std::int64_t pad,
                    std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_input(const T* w, const T* gy, T* gx,
                           std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                           std::int64_t cout, std::int64_t kh, std::int64_t kw,
                           std::int64_t stride, std::int64_t pad,
                           std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_weight(const T* x, const T* gy, T* gw,
                            std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                            std::int64_t cout, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, std::int64_t pad,
                            std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_bias(const T* gy, T* gb,
                          std::int64_t batch, std::int64_t cout, std::int64_t ho, std::int64_t wo);

template <typename T>
void maxpool2d_forward(const T* x, T* y, std::int64_t* argmax,
                       std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                       std::int64_t k, std::int64_t stride, std::int64_t ho, std::int64_t wo);

template <typename T>
void maxpool2d_backward(const T* gy, const std::int64_t* argmax, T* gx,
                        std::int64_t batch, std::int64_t ch, std::int64_t ho, std::int64_t wo);

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n);

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::int64_t n);

// Per-channel mean and biased variance over (batch, h, w).
template <typename T>
void batchnorm_stats(const T* x, T* mean, T* var,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd);

// y = xhat * gamma + beta with xhat = (x - mean) * invstd; xhat buffer is
// optional (pass null when no backward will run).
template <typename T>
void batchnorm_apply(const T* x, const T* mean, const T* invstd,
                     const T* gamma, const T* beta, T* y, T* xhat,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd);

// batch_stats=true: gradient through the batch statistics (training mode);
// false: statistics treated as constants (inference mode).
template <typename T>
void batchnorm_backward(const T* xhat, const T* invstd, const T* gamma, const T* gy,
                        T* gx, T* ggamma, T* gbeta,
                        std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                        bool batch_stats);

// y[b,o] = sum_f x[b,f] * w[o,f] + bias[o]
template <typename T>
void linear_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t in_f, std::int64_t out_f);

template <typename T>
void linear_backward(const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb,
                     std::int64_t batch, std::int64_t in_f, std::int64_t out_f);

} // namespace tempagg::kern

namespace tempagg::ref {

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                    std::int64_t cout, std::int64_t kh, std::int64_t kw,
                    std::int64_t stride, std::int64_t pad,
                    std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_input(const T* w, const T* gy, T* gx,
                           std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                           std::int64_t cout, std::int64_t kh, std::int64_t kw,
                           std::int64_t stride, std::int64_t pad,
                           std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_weight(const T* x, const T* gy, T* gw,
                            std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                            std::int64_t cout, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, std::int64_t pad,
                            std::int64_t ho, std::int64_t wo);

template <typename T>
void conv2d_backward_bias(const T* gy, T* gb,
                          std::int64_t batch, std::int64_t cout, std::int64_t ho, std::int64_t wo);

template <typename T>
void maxpool2d_forward(const T* x, T* y, std::int64_t* argmax,
                       std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                       std::int64_t k, std::int64_t stride, std::int64_t ho, std::int64_t wo);

template <typename T>
void maxpool2d_backward(const T* gy, const std::int64_t* argmax, T* gx,
                        std::int64_t batch, std::int64_t ch, std::int64_t ho, std::int64_t wo);

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n);

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::int64_t n);

template <typename T>
void batchnorm_stats(const T* x, T* mean, T* var,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd);

template <typename T>
void batchnorm_apply(const T* x, const T* mean, const T* invstd,
                     const T* gamma, const T* beta, T* y, T* xhat,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd);

template <typename T>
void batchnorm_backward(const T* xhat, const T* invstd, const T* gamma, const T* gy,
                        T* gx, T* ggamma, T* gbeta,
                        std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                        bool batch_stats);

template <typename T>
void linear_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t in_f, std::int64_t out_f);

template <typename T>
void linear_backward(const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb,
                     std::int64_t batch, std::int64_t in_f, std::int64_t out_f);

} // namespace tempagg::ref
