#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

namespace spce::stats {

/// P(Z > z) for standard normal Z.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double two_sided_normal_p(double z) { return std::min(1.0, 2.0 * normal_sf(std::abs(z))); }

/// P(X > x) for X ~ chi-square(dof).
inline double chi_square_sf(double x, double dof) {
    if (x <= 0.0) {
        return 1.0;
    }
    return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

} // namespace spce::stats
