#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tempagg/rng.hpp"
#include "tempagg/tensor.hpp"

// Central finite-difference gradient oracle, 64-bit only. Analytic gradients
// come from the tape; numeric ones from re-running the forward with perturbed
// inputs, step h, on the scalar loss sum(output * R) for a fixed random R.
// Stays independent of the backward path it checks.
namespace tempagg::testsupport {

using Forward = std::function<DTensorPtr(const std::vector<DTensorPtr>&)>;

struct GradCheck {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
};

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline GradCheck check_gradients(const Forward& forward, const std::vector<DTensorPtr>& inputs,
                                 Rng& rng, double step = 1e-4) {
    auto out = forward(inputs);
    std::vector<double> probe(static_cast<std::size_t>(out->size()));
    for (auto& v : probe) v = rng.uniform(-1.0, 1.0);
    auto loss = weighted_sum(out, probe);
    loss->backward();

    const auto loss_at = [&]() {
        NoGradGuard ng;
        auto y = forward(inputs);
        double acc = 0.0;
        for (std::int64_t i = 0; i < y->size(); ++i) acc += y->data[i] * probe[i];
        return acc;
    };

    GradCheck result;
    for (const auto& input : inputs) {
        if (!input->requires_grad) continue;
        for (std::int64_t i = 0; i < input->size(); ++i) {
            const double saved = input->data[i];
            input->data[i] = saved + step;
            const double up = loss_at();
            input->data[i] = saved - step;
            const double down = loss_at();
            input->data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = input->grad.empty() ? 0.0 : input->grad[i];
            result.max_rel_err = std::max(result.max_rel_err, rel_err(analytic, numeric));
            ++result.checked;
        }
    }
    return result;
}

} // namespace tempagg::testsupport
