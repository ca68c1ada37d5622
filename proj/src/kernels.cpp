#include "tempagg/kernels.hpp"

#include <algorithm>

namespace tempagg::kern {

namespace {

// Eight-lane striped dot product. The lane split and the final pairwise
// combine define the summation order; ref:: uses the identical scheme so the
// two paths agree bitwise.
template <typename T>
inline T striped_dot_rows(const T* a, const T* b, std::int64_t lo, std::int64_t hi, T lanes[8],
                          T& tail) {
    std::int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    for (; i < hi; ++i) tail += a[i] * b[i];
    return T(0);
}

template <typename T>
inline T combine_lanes(const T lanes[8], T tail) {
    return (((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
            ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))) +
           tail;
}

inline std::int64_t ceil_div_pos(std::int64_t a, std::int64_t b) {
    return (a + b - 1) / b;
}

// First/last output index whose input coordinate i = o*stride - pad + k
// stays inside [0, extent).
inline std::int64_t out_lo(std::int64_t k, std::int64_t stride, std::int64_t pad) {
    const std::int64_t need = pad - k;
    return need <= 0 ? 0 : ceil_div_pos(need, stride);
}

inline std::int64_t out_hi(std::int64_t k, std::int64_t stride, std::int64_t pad,
                           std::int64_t extent, std::int64_t out_extent) {
    return std::min(out_extent, ceil_div_pos(extent + pad - k, stride));
}

} // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y,
                    std::int64_t batch, std::int64_t cin, std::int64_t h, std::int64_t wd,
                    std::int64_t cout, std::int64_t kh, std::int64_t kw,
                    std::int64_t stride, std::int64_t pad,
                    std::int64_t ho, std::int64_t wo) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t co = 0; co < cout; ++co) {
            const T bias_val = bias ? bias[co] : T(0);
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                T* yrow = y + ((n * cout + co) * ho + oh) * wo;
                for (std::int64_t ow = 0; ow < wo; ++ow) yrow[ow] = bias_val;
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                    const T* xplane = x + (n * cin + ci) * h * wd;
                    const T* wplane = w + (co * cin + ci) * kh * kw;
                    for (std::int64_t fh = 0; fh < kh; ++fh) {
                        const std::int64_t ih = oh * stride - pad + fh;
                        if (ih < 0 || ih >= h) continue;
                        const T* xrow = xplane + ih * wd;
                        const T* wrow = wplane + fh * kw;
                        for (std::int64_t fw = 0; fw < kw; ++fw) {
                            const T wv = wrow[fw];
                            const std::int64_t lo = out_lo(fw, stride, pad);
                            const std::int64_t hi = out_hi(fw, stride, pad, wd, wo);
                            const T* xoff = xrow - pad + fw;
                            if (stride == 1) {
                                for (std::int64_t ow = lo; ow < hi; ++ow)
                                    yrow[ow] += wv * xoff[ow];
                            } else {
                                for (std::int64_t ow = lo; ow < hi; ++ow)
                                    yrow[ow] += wv * xoff[ow * stride];
                            }
                        }
                    }
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
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            T* gxplane = gx + (n * cin + ci) * h * wd;
            for (std::int64_t ih = 0; ih < h; ++ih) {
                T* gxrow = gxplane + ih * wd;
                for (std::int64_t co = 0; co < cout; ++co) {
                    const T* gyplane = gy + (n * cout + co) * ho * wo;
                    const T* wplane = w + (co * cin + ci) * kh * kw;
                    for (std::int64_t fh = 0; fh < kh; ++fh) {
                        const std::int64_t t = ih - fh + pad;
                        if (t < 0 || t % stride != 0) continue;
                        const std::int64_t oh = t / stride;
                        if (oh >= ho) continue;
                        const T* gyrow = gyplane + oh * wo;
                        const T* wrow = wplane + fh * kw;
                        for (std::int64_t fw = 0; fw < kw; ++fw) {
                            const T wv = wrow[fw];
                            if (stride == 1) {
                                // iw - fw + pad is the contributing output column
                                const std::int64_t lo = std::max<std::int64_t>(0, fw - pad);
                                const std::int64_t hi = std::min(wd, wo + fw - pad);
                                const T* gyoff = gyrow - fw + pad;
                                for (std::int64_t iw = lo; iw < hi; ++iw)
                                    gxrow[iw] += wv * gyoff[iw];
                            } else {
                                for (std::int64_t iw = 0; iw < wd; ++iw) {
                                    const std::int64_t u = iw - fw + pad;
                                    if (u < 0 || u % stride != 0) continue;
                                    const std::int64_t ow = u / stride;
                                    if (ow >= wo) continue;
                                    gxrow[iw] += wv * gyrow[ow];
                                }
                            }
                        }
                    }
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
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t co = 0; co < cout; ++co) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            T* gwplane = gw + (co * cin + ci) * kh * kw;
            for (std::int64_t fh = 0; fh < kh; ++fh) {
                for (std::int64_t fw = 0; fw < kw; ++fw) {
                    const std::int64_t lo = out_lo(fw, stride, pad);
                    const std::int64_t hi = out_hi(fw, stride, pad, wd, wo);
                    T lanes[8] = {};
                    T tail = T(0);
                    T acc = T(0);
                    for (std::int64_t n = 0; n < batch; ++n) {
                        const T* xplane = x + (n * cin + ci) * h * wd;
                        const T* gyplane = gy + (n * cout + co) * ho * wo;
                        for (std::int64_t oh = 0; oh < ho; ++oh) {
                            const std::int64_t ih = oh * stride - pad + fh;
                            if (ih < 0 || ih >= h) continue;
                            const T* xoff = xplane + ih * wd - pad + fw;
                            const T* gyrow = gyplane + oh * wo;
                            if (stride == 1) {
                                striped_dot_rows(xoff, gyrow, lo, hi, lanes, tail);
                            } else {
                                for (std::int64_t ow = lo; ow < hi; ++ow)
                                    acc += xoff[ow * stride] * gyrow[ow];
                            }
                        }
                    }
                    gwplane[fh * kw + fw] += combine_lanes(lanes, tail) + acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_bias(const T* gy, T* gb,
                          std::int64_t batch, std::int64_t cout, std::int64_t ho, std::int64_t wo) {
    const std::int64_t plane = ho * wo;
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const std::int64_t plane_base = (n * ch + c) * h * wd;
            const T* xplane = x + plane_base;
            for (std::int64_t oh = 0; oh < ho; ++oh) {
                for (std::int64_t ow = 0; ow < wo; ++ow) {
                    const std::int64_t ih0 = oh * stride;
                    const std::int64_t iw0 = ow * stride;
                    T best = xplane[ih0 * wd + iw0];
                    std::int64_t best_idx = ih0 * wd + iw0;
                    for (std::int64_t fh = 0; fh < k; ++fh) {
                        const T* xrow = xplane + (ih0 + fh) * wd;
                        for (std::int64_t fw = 0; fw < k; ++fw) {
                            const T v = xrow[iw0 + fw];
                            // strict > keeps the first occurrence on ties
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
    const std::int64_t plane = ho * wo;
    // one thread per (n, c) plane: windows of one plane may overlap, planes never do
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const std::int64_t base = (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) gx[argmax[base + i]] += gy[base + i];
        }
    }
}

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename T>
void batchnorm_stats(const T* x, T* mean, T* var,
                     std::int64_t batch, std::int64_t ch, std::int64_t h, std::int64_t wd) {
    const std::int64_t plane = h * wd;
    const T inv_m = T(1) / static_cast<T>(batch * plane);
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < batch; ++n) {
        for (std::int64_t c = 0; c < ch; ++c) {
            const std::int64_t off = (n * ch + c) * plane;
            const T mu = mean[c];
            const T is = invstd[c];
            const T g = gamma[c];
            const T b = beta[c];
            if (xhat) {
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T xn = (x[off + i] - mu) * is;
                    xhat[off + i] = xn;
                    y[off + i] = xn * g + b;
                }
            } else {
                for (std::int64_t i = 0; i < plane; ++i)
                    y[off + i] = (x[off + i] - mu) * is * g + b;
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
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < ch; ++c) {
        T sum_dy = T(0);
        T sum_dy_xhat = T(0);
        for (std::int64_t n = 0; n < batch; ++n) {
            const std::int64_t off = (n * ch + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T dy = gy[off + i];
                sum_dy += dy;
                sum_dy_xhat += dy * xhat[off + i];
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
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t o = 0; o < out_f; ++o) {
            const T* xrow = x + b * in_f;
            const T* wrow = w + o * in_f;
            T acc = bias ? bias[o] : T(0);
            for (std::int64_t f = 0; f < in_f; ++f) acc += xrow[f] * wrow[f];
            y[b * out_f + o] = acc;
        }
    }
}

template <typename T>
void linear_backward(const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb,
                     std::int64_t batch, std::int64_t in_f, std::int64_t out_f) {
    if (gx) {
#pragma omp parallel for schedule(static)
        for (std::int64_t b = 0; b < batch; ++b) {
            T* gxrow = gx + b * in_f;
            const T* gyrow = gy + b * out_f;
            for (std::int64_t o = 0; o < out_f; ++o) {
                const T g = gyrow[o];
                const T* wrow = w + o * in_f;
                for (std::int64_t f = 0; f < in_f; ++f) gxrow[f] += g * wrow[f];
            }
        }
    }
    if (gw) {
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < out_f; ++o) {
            T* gwrow = gw + o * in_f;
            for (std::int64_t b = 0; b < batch; ++b) {
                const T g = gy[b * out_f + o];
                const T* xrow = x + b * in_f;
                for (std::int64_t f = 0; f < in_f; ++f) gwrow[f] += g * xrow[f];
            }
        }
    }
    if (gb) {
#pragma omp parallel for schedule(static)
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

} // namespace tempagg::kern
