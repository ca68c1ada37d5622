#include <doctest.h>

#include <vector>

#include "tempagg/kernels.hpp"
#include "tempagg/rng.hpp"

// The OpenMP kernels must match the serial reference elementwise-exactly for
// any thread count; parallelism only splits disjoint output regions.

using namespace tempagg;

namespace {

std::vector<float> random_buf(std::int64_t n, Rng& rng) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

struct ConvCase {
    std::int64_t b, cin, h, w, cout, kh, kw, stride, pad;
};

} // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("conv2d forward/backward match the serial reference exactly") {
    Rng rng(77);
    const ConvCase cases[] = {
        {2, 3, 8, 8, 4, 3, 3, 1, 0},
        {1, 1, 5, 7, 2, 3, 3, 1, 1},
        {3, 2, 9, 6, 3, 2, 4, 2, 1},
        {1, 4, 4, 4, 8, 1, 1, 1, 0},
        {2, 1, 6, 6, 1, 3, 3, 2, 0},
    };
    for (const auto& c : cases) {
        const std::int64_t ho = (c.h + 2 * c.pad - c.kh) / c.stride + 1;
        const std::int64_t wo = (c.w + 2 * c.pad - c.kw) / c.stride + 1;
        const auto x = random_buf(c.b * c.cin * c.h * c.w, rng);
        const auto w = random_buf(c.cout * c.cin * c.kh * c.kw, rng);
        const auto bias = random_buf(c.cout, rng);
        const auto gy = random_buf(c.b * c.cout * ho * wo, rng);

        std::vector<float> y_kern(gy.size(), 0.0f), y_ref(gy.size(), 0.0f);
        kern::conv2d_forward(x.data(), w.data(), bias.data(), y_kern.data(), c.b, c.cin, c.h, c.w,
                             c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        ref::conv2d_forward(x.data(), w.data(), bias.data(), y_ref.data(), c.b, c.cin, c.h, c.w,
                            c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        CHECK(y_kern == y_ref);

        std::vector<float> gx_kern(x.size(), 0.0f), gx_ref(x.size(), 0.0f);
        kern::conv2d_backward_input(w.data(), gy.data(), gx_kern.data(), c.b, c.cin, c.h, c.w,
                                    c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        ref::conv2d_backward_input(w.data(), gy.data(), gx_ref.data(), c.b, c.cin, c.h, c.w,
                                   c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        CHECK(gx_kern == gx_ref);

        std::vector<float> gw_kern(w.size(), 0.0f), gw_ref(w.size(), 0.0f);
        kern::conv2d_backward_weight(x.data(), gy.data(), gw_kern.data(), c.b, c.cin, c.h, c.w,
                                     c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        ref::conv2d_backward_weight(x.data(), gy.data(), gw_ref.data(), c.b, c.cin, c.h, c.w,
                                    c.cout, c.kh, c.kw, c.stride, c.pad, ho, wo);
        CHECK(gw_kern == gw_ref);

        std::vector<float> gb_kern(bias.size(), 0.0f), gb_ref(bias.size(), 0.0f);
        kern::conv2d_backward_bias(gy.data(), gb_kern.data(), c.b, c.cout, ho, wo);
        ref::conv2d_backward_bias(gy.data(), gb_ref.data(), c.b, c.cout, ho, wo);
        CHECK(gb_kern == gb_ref);
    }
}

TEST_CASE("maxpool2d matches the serial reference exactly") {
    Rng rng(78);
    const std::int64_t b = 2, c = 3, h = 9, w = 7, k = 2, stride = 1;
    const std::int64_t ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
    const auto x = random_buf(b * c * h * w, rng);
    const auto gy = random_buf(b * c * ho * wo, rng);

    std::vector<float> y_kern(gy.size()), y_ref(gy.size());
    std::vector<std::int64_t> am_kern(gy.size()), am_ref(gy.size());
    kern::maxpool2d_forward(x.data(), y_kern.data(), am_kern.data(), b, c, h, w, k, stride, ho, wo);
    ref::maxpool2d_forward(x.data(), y_ref.data(), am_ref.data(), b, c, h, w, k, stride, ho, wo);
    CHECK(y_kern == y_ref);
    CHECK(am_kern == am_ref);

    std::vector<float> gx_kern(x.size(), 0.0f), gx_ref(x.size(), 0.0f);
    kern::maxpool2d_backward(gy.data(), am_kern.data(), gx_kern.data(), b, c, ho, wo);
    ref::maxpool2d_backward(gy.data(), am_ref.data(), gx_ref.data(), b, c, ho, wo);
    CHECK(gx_kern == gx_ref);
}

TEST_CASE("batchnorm kernels match the serial reference exactly") {
    Rng rng(79);
    const std::int64_t b = 4, c = 5, h = 6, w = 3;
    const auto x = random_buf(b * c * h * w, rng);
    const auto gamma = random_buf(c, rng);
    const auto beta = random_buf(c, rng);
    const auto gy = random_buf(b * c * h * w, rng);

    std::vector<float> mean_k(c), var_k(c), mean_r(c), var_r(c);
    kern::batchnorm_stats(x.data(), mean_k.data(), var_k.data(), b, c, h, w);
    ref::batchnorm_stats(x.data(), mean_r.data(), var_r.data(), b, c, h, w);
    CHECK(mean_k == mean_r);
    CHECK(var_k == var_r);

    std::vector<float> invstd(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < c; ++i) invstd[i] = 1.0f / std::sqrt(var_k[i] + 1e-5f);

    std::vector<float> y_k(x.size()), y_r(x.size()), xhat_k(x.size()), xhat_r(x.size());
    kern::batchnorm_apply(x.data(), mean_k.data(), invstd.data(), gamma.data(), beta.data(),
                          y_k.data(), xhat_k.data(), b, c, h, w);
    ref::batchnorm_apply(x.data(), mean_r.data(), invstd.data(), gamma.data(), beta.data(),
                         y_r.data(), xhat_r.data(), b, c, h, w);
    CHECK(y_k == y_r);
    CHECK(xhat_k == xhat_r);

    std::vector<float> gx_k(x.size(), 0.0f), gg_k(gamma.size(), 0.0f), gb_k(beta.size(), 0.0f);
    std::vector<float> gx_r(x.size(), 0.0f), gg_r(gamma.size(), 0.0f), gb_r(beta.size(), 0.0f);
    kern::batchnorm_backward(xhat_k.data(), invstd.data(), gamma.data(), gy.data(), gx_k.data(),
                             gg_k.data(), gb_k.data(), b, c, h, w, true);
    ref::batchnorm_backward(xhat_r.data(), invstd.data(), gamma.data(), gy.data(), gx_r.data(),
                            gg_r.data(), gb_r.data(), b, c, h, w, true);
    CHECK(gx_k == gx_r);
    CHECK(gg_k == gg_r);
    CHECK(gb_k == gb_r);
}

TEST_CASE("linear kernels match the serial reference exactly") {
    Rng rng(80);
    const std::int64_t b = 7, f = 33, o = 9;
    const auto x = random_buf(b * f, rng);
    const auto w = random_buf(o * f, rng);
    const auto bias = random_buf(o, rng);
    const auto gy = random_buf(b * o, rng);

    std::vector<float> y_k(static_cast<std::size_t>(b * o)), y_r(static_cast<std::size_t>(b * o));
    kern::linear_forward(x.data(), w.data(), bias.data(), y_k.data(), b, f, o);
    ref::linear_forward(x.data(), w.data(), bias.data(), y_r.data(), b, f, o);
    CHECK(y_k == y_r);

    std::vector<float> gx_k(x.size(), 0.0f), gw_k(w.size(), 0.0f), gb_k(bias.size(), 0.0f);
    std::vector<float> gx_r(x.size(), 0.0f), gw_r(w.size(), 0.0f), gb_r(bias.size(), 0.0f);
    kern::linear_backward(x.data(), w.data(), gy.data(), gx_k.data(), gw_k.data(), gb_k.data(), b,
                          f, o);
    ref::linear_backward(x.data(), w.data(), gy.data(), gx_r.data(), gw_r.data(), gb_r.data(), b,
                         f, o);
    CHECK(gx_k == gx_r);
    CHECK(gw_k == gw_r);
    CHECK(gb_k == gb_r);
}

TEST_SUITE_END();
