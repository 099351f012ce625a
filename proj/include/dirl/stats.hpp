#pragma once

#include "dirl/types.hpp"

#include <cmath>
#include <vector>

namespace dirl {

/// Standard normal quantile via the rational approximations of Wichura's
/// algorithm AS 241 (PPND16); absolute error below 1e-15 on (0, 1).
Real normal_quantile(Real p);

inline Real mean_of(const std::vector<Real>& x) {
    Real acc = 0.0;
    for (Real v : x) acc += v;
    return acc / static_cast<Real>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline Real sample_sd(const std::vector<Real>& x) {
    const Real m = mean_of(x);
    Real acc = 0.0;
    for (Real v : x) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<Real>(x.size() - 1));
}

/// Population variance (n denominator); pairs with the exact
/// rmse^2 = bias^2 + variance decomposition.
inline Real population_variance(const std::vector<Real>& x) {
    const Real m = mean_of(x);
    Real acc = 0.0;
    for (Real v : x) acc += (v - m) * (v - m);
    return acc / static_cast<Real>(x.size());
}

/// Least-squares slope of log|y| against log(x); used by the remainder
/// order checks.
Real loglog_slope(const std::vector<Real>& x, const std::vector<Real>& y);

}  // namespace dirl
