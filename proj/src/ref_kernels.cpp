#include "tempagg/kernels.hpp"

// Serial reference path. Math and per-accumulator term order match
// tempagg::kern exactly; tests assert elementwise equality and the kernel
// benchmark compares the two.

namespace tempagg::ref {

namespace {

// same striped summation scheme as kern::conv2d_backward_weight
template <typename T>
inline void striped_dot_rows(const T* a, const T* b, std::int64_t lo, std::int64_t hi, T lanes[8],
                             T& tail) {
    std::int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    for (; i < hi; ++i) tail += a[i] * b[i];
}

template <typename T>
inline T combine_lanes(const T lanes[8], T tail) {
    return (((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))) +
           tail;
}

} // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                    std::int64_t cout, std::int64_t kh, std::int64_t kw,
                    std::int64_t stride, std::int64_t pad,
                    std::int64_t ho, std::int64_t wo) {
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t co = 0; co < cout; ++co) {
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow) {
                    T acc = bias ? bias[co] : T(0);
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        for (std::int64_t fh = 0; fh < kh; ++fh) {
                            const std::int64_t ih = oh * stride - pad + fh;
                            if (ih < 0 || ih >= h) continue;
                            for (std::int64_t fw = 0; fw < kw; ++fw) {
                                const std::int64_t iw = ow * stride - pad + fw;
                                if (iw < 0 || iw >= wd) continue;
                                acc += w[((co * cin + ci) * kh + fh) * kw + fw] *
                                       x[((n * cin + ci) * h + ih) * wd + iw];
                            }
                        }
                    }
                    y[((n * cout + co) * ho + oh) * wo + ow] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* w, const T* gy, T* gx,
                           std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                           std::int64_t cout, std::int64_t kh, std::int64_t kw,
                           std::int64_t stride, std::int64_t pad,
                           std::int64_t ho, std::int64_t wo) {
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            for (std::int64_t ih = 0; ih < h; ++ih) {
                for (std::int64_t iw = 0; iw < wd; ++iw) {
                    T acc = T(0);
                    for (std::int64_t co = 0; co < cout; ++co) {
                        for (std::int64_t fh = 0; fh < kh; ++fh) {
                            const std::int64_t t = ih - fh + pad;
                            if (t < 0 || t % stride != 0) continue;
                            const std::int64_t oh = t / stride;
                            if (oh >= ho) continue;
                            for (std::int64_t fw = 0; fw < kw; ++fw) {
                                const std::int64_t u = iw - fw + pad;
                                if (u < 0 || u % stride != 0) continue;
                                const std::int64_t ow = u / stride;
                                if (ow >= wo) continue;
                                acc += w[((co * cin + ci) * kh + fh) * kw + fw] *
                                       gy[((n * cout + co) * ho + oh) * wo + ow];
                            }
                        }
                    }
                    gx[((n * cin + ci) * h + ih) * wd + iw] += acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight(const T* x, const T* gy, T* gw,
                            std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                            std::int64_t cout, std::int64_t kh, std::int64_t kw,
                            std::int64_t stride, std::int64_t pad,
                            std::int64_t ho, std::int64_t wo) {
    for (std::int64_t co = 0; co < cout; ++co) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            for (std::int64_t fh = 0; fh < kh; ++fh) {
                for (std::int64_t fw = 0; fw < kw; ++fw) {
                    std::int64_t lo = 0;
                    while (lo < wo && lo * stride - pad + fw < 0) ++lo;
                    std::int64_t hi = wo;
                    while (hi > lo && (hi - 1) * stride - pad + fw >= wd) --hi;
                    T lanes[8] = {};
                    T tail = T(0);
                    T acc = T(0);
                    for (std::int64_t n = 0; n < batch; ++n) {
                        for (std::int64_t oh = 0; oh < ho; ++oh) {
                            const std::int64_t ih = oh * stride - pad + fh;
                            if (ih < 0 || ih >= h) continue;
                            const T* xoff = x + ((n * cin + ci) * h + ih) * wd - pad + fw;
                            const T* gyrow = gy + ((n * cout + co) * ho + oh) * wo;
                            if (stride == 1) {
                                striped_dot_rows(xoff, gyrow, lo, hi, lanes, tail);
                            } else {
                                for (std::int64_t ow = lo; ow < hi; ++ow)
                                    acc += xoff[ow * stride] * gyrow[ow];
                            }
                        }
                    }
                    gw[((co * cin + ci) * kh + fh) * kw + fw] +=
                        combine_lanes(lanes, tail) + acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_bias(const T* gy, T* gb,
                          std::int64_t batch, std::int64_t cout, std::int64_t ho, std::int64_t wo) {
    const std::int64_t plane = ho * wo;
    for (std::int64_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (std::int64_t n = 0; n < batch; ++n) {
            const T* gyplane = gy + (n * cout + co) * plane;
            for (std::int64_t i = 0; i < plane; ++i) acc += gyplane[i];
        }
        gb[co] += acc;
    }
}

template <typename T>
void maxpool2d_forward(const T* x, T* y, std::int64_t* argmax,
                       std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                       std::int64_t k, std::int64_t stride, std::int64_t ho, std::int64_t wo) {
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const std::int64_t plane_base = (n * ch + c) * h * wd;
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow) {
                    const std::int64_t ih0 = oh * stride;
                    const std::int64_t iw0 = ow * stride;
                    T best = x[plane_base + ih0 * wd + iw0];
                    std::int64_t best_idx = ih0 * wd + iw0;
                    for (std::int64_t fh = 0; fh < k; ++fh) {
                        for (std::int64_t fw = 0; fw < k; ++fw) {
                            const T v = x[plane_base + (ih0 + fh) * wd + iw0 + fw];
                            if (v > best) {
                                best = v;
                                best_idx = (ih0 + fh) * wd + iw0 + fw;
                            }
                        }
                    }
                    const std::int64_t out_idx = ((n * ch + c) * ho + oh) * wo + ow;
                    y[out_idx] = best;
                    argmax[out_idx] = plane_base + best_idx;
                }
            }
        }
    }
}

template <typename T>
void maxpool2d_backward(const T* gy, const std::int64_t* argmax, T* gx,
                        std::int64_t batch, std::int64_t ch, std::int64_t ho, std::int64_t wo) {
    const std::int64_t total = batch * ch * ho * wo;
    for (std::int64_t i = 0; i < total; ++i) gx[argmax[i]] += gy[i];
}

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename T>
void batchnorm_stats(const T* x, T* mean, T* var,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd) {
    const std::int64_t plane = h * wd;
    const T inv_m = T(1) / static_cast<T>(batch * plane);
    for (std::int64_t c = 0; c < ch; ++c) {
        T sum = T(0);
        for (std::int64_t n = 0; n < batch; ++n) {
            const T* xplane = x + (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) sum += xplane[i];
        }
        const T mu = sum * inv_m;
        T sq = T(0);
        for (std::int64_t n = 0; n < batch; ++n) {
            const T* xplane = x + (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T d = xplane[i] - mu;
                sq += d * d;
            }
        }
        mean[c] = mu;
        var[c] = sq * inv_m;
    }
}

template <typename T>
void batchnorm_apply(const T* x, const T* mean, const T* invstd,
                     const T* gamma, const T* beta, T* y, T* xhat,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd) {
    const std::int64_t plane = h * wd;
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const std::int64_t off = (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T xn = (x[off + i] - mean[c]) * invstd[c];
                if (xhat) xhat[off + i] = xn;
                y[off + i] = xn * gamma[c] + beta[c];
            }
        }
    }
}

template <typename T>
void batchnorm_backward(const T* xhat, const T* invstd, const T* gamma, const T* gy,
                        T* gx, T* ggamma, T* gbeta,
                        std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd,
                        bool batch_stats) {
    const std::int64_t plane = h * wd;
    const T m = static_cast<T>(batch * plane);
    for (std::int64_t c = 0; c < ch; ++c) {
        T sum_dy = T(0);
        T sum_dy_xhat = T(0);
        for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t off = (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                sum_dy += gy[off + i];
                sum_dy_xhat += gy[off + i] * xhat[off + i];
            }
        }
        if (gbeta) gbeta[c] += sum_dy;
        if (ggamma) ggamma[c] += sum_dy_xhat;
        if (gx) {
            const T g_is = gamma[c] * invstd[c];
            if (batch_stats) {
                const T scale = g_is / m;
                for (std::int64_t n = 0; n < batch; ++n) {
                    const std::int64_t off = (n * ch + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        gx[off + i] += scale * (m * gy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
                    }
                }
            } else {
                for (std::int64_t n = 0; n < batch; ++n) {
                    const std::int64_t off = (n * ch + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gx[off + i] += g_is * gy[off + i];
                }
            }
        }
    }
}

template <typename T>
void linear_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t in_f, std::int64_t out_f) {
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t o = 0; o < out_f; ++o) {
            T acc = bias ? bias[o] : T(0);
            for (std::int64_t f = 0; f < in_f; ++f) acc += x[b * in_f + f] * w[o * in_f + f];
            y[b * out_f + o] = acc;
        }
    }
}

template <typename T>
void linear_backward(const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb,
                     std::int64_t batch, std::int64_t in_f, std::int64_t out_f) {
    if (gx) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t o = 0; o < out_f; ++o) {
                const T g = gy[b * out_f + o];
                for (std::int64_t f = 0; f < in_f; ++f) gx[b * in_f + f] += g * w[o * in_f + f];
            }
        }
    }
    if (gw) {
        for (std::int64_t o = 0; o < out_f; ++o) {
            for (std::int64_t b = 0; b < batch; ++b) {
                const T g = gy[b * out_f + o];
                for (std::int64_t f = 0; f < in_f; ++f) gw[o * in_f + f] += g * x[b * in_f + f];
            }
        }
    }
    if (gb) {
        for (std::int64_t o = 0; o < out_f; ++o) {
            T acc = T(0);
            for (std::int64_t b = 0; b < batch; ++b) acc += gy[b * out_f + o];
            gb[o] += acc;
        }
    }
}

#define TEMPAGG_INSTANTIATE_KERNELS(T)                                                             \
    template void conv2d_forward<T>(const T*, const T*, const T*, T*, std::int64_t, std::int64_t,  \
                                    std::int64_t, std::int64_t, std::int64_t, std::int64_t,        \
                                    std::int64_t, std::int64_t, std::int64_t, std::int64_t,        \
                                    std::int64_t);                                                 \
    template void conv2d_backward_input<T>(const T*, const T*, T*, std::int64_t, std::int64_t,     \
                                           std::int64_t, std::int64_t, std::int64_t, std::int64_t, \
                                           std::int64_t, std::int64_t, std::int64_t, std::int64_t, \
                                           std::int64_t);                                          \
    template void conv2d_backward_weight<T>(const T*, const T*, T*, std::int64_t, std::int64_t,    \
                                            std::int64_t, std::int64_t, std::int64_t,              \
                                            std::int64_t, std::int64_t, std::int64_t,              \
                                            std::int64_t, std::int64_t, std::int64_t);             \
    template void conv2d_backward_bias<T>(const T*, T*, std::int64_t, std::int64_t, std::int64_t,  \
                                          std::int64_t);                                           \
    template void maxpool2d_forward<T>(const T*, T*, std::int64_t*, std::int64_t, std::int64_t,    \
                                       std::int64_t, std::int64_t, std::int64_t, std::int64_t,     \
                                       std::int64_t, std::int64_t);                                \
    template void maxpool2d_backward<T>(const T*, const std::int64_t*, T*, std::int64_t,           \
                                        std::int64_t, std::int64_t, std::int64_t);                 \
    template void relu_forward<T>(const T*, T*, std::int64_t);                                     \
    template void relu_backward<T>(const T*, const T*, T*, std::int64_t);                          \
    template void batchnorm_stats<T>(const T*, T*, T*, std::int64_t, std::int64_t, std::int64_t,   \
                                     std::int64_t);                                                \
    template void batchnorm_apply<T>(const T*, const T*, const T*, const T*, const T*, T*, T*,     \
                                     std::int64_t, std::int64_t, std::int64_t, std::int64_t);      \
    template void batchnorm_backward<T>(const T*, const T*, const T*, const T*, T*, T*, T*,        \
                                        std::int64_t, std::int64_t, std::int64_t, std::int64_t,    \
                                        bool);                                                     \
    template void linear_forward<T>(const T*, const T*, const T*, T*, std::int64_t, std::int64_t,  \
                                    std::int64_t);                                                 \
    template void linear_backward<T>(const T*, const T*, const T*, T*, T*, T*, std::int64_t,       \
                                     std::int64_t, std::int64_t);

TEMPAGG_INSTANTIATE_KERNELS(float)
TEMPAGG_INSTANTIATE_KERNELS(double)

#undef TEMPAGG_INSTANTIATE_KERNELS

} // namespace tempagg::ref
