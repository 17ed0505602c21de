#pragma once

#include <cmath>
#include <utility>

#include "msid/tensor.hpp"

namespace msid {

// Central-difference gradient estimate of a scalar function, one coordinate at
// a time: (f(x + h e_i) - f(x - h e_i)) / (2h). Independent of the reverse-mode
// path; used as the gradient oracle throughout the test suites.
template <typename F>
Tensor finite_difference_gradient(F&& f, const Tensor& x, double h = 1e-6) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe.at(i);
        probe.at(i) = saved + h;
        const double hi = f(static_cast<const Tensor&>(probe));
        probe.at(i) = saved - h;
        const double lo = f(static_cast<const Tensor&>(probe));
        probe.at(i) = saved;
        grad.at(i) = (hi - lo) / (2.0 * h);
    }
    return grad;
}

// Largest relative disagreement between two gradients. The denominator is
// floored so that near-zero coordinates compare absolutely.
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-4) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a.at(i)), std::fabs(b.at(i)), floor});
        worst = std::max(worst, std::fabs(a.at(i) - b.at(i)) / denom);
    }
    return worst;
}

}  // namespace msid
