#pragma once

#include "surfot/errors.hpp"
#include "surfot/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace surfot {

/// Real roots of x^3 + b x^2 + c x + d, each refined by Newton steps.
/// Uses the trigonometric form when all three roots are real and Cardano's
/// formula otherwise. Returned in ascending order; repeated roots may appear
/// once or twice depending on round-off.
inline std::vector<double> solve_monic_cubic(double b, double c, double d)
{
    const double shift = b / 3.0;
    const double p = c - b * shift;
    const double q = (2.0 * b * b * b) / 27.0 - b * c / 3.0 + d;
    const double half_q = 0.5 * q;
    const double third_p = p / 3.0;
    const double disc = half_q * half_q + third_p * third_p * third_p;

    std::vector<double> roots;
    if (disc > 0.0) {
        // One real root. Pick the cube-root branch that avoids cancellation.
        const double u = std::cbrt(-half_q - std::copysign(std::sqrt(disc), half_q));
        const double t = u != 0.0 ? u - third_p / u : 0.0;
        roots.push_back(t - shift);
    } else if (p == 0.0) {
        roots.push_back(-shift);
    } else {
        const double m = 2.0 * std::sqrt(-third_p);
        const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) - shift);
    }

    for (double& x : roots) {
        for (int it = 0; it < 4; ++it) {
            const double f = ((x + b) * x + c) * x + d;
            const double df = (3.0 * x + 2.0 * b) * x + c;
            if (df == 0.0 || !std::isfinite(f)) break;
            const double step = f / df;
            if (!std::isfinite(step)) break;
            x -= step;
            if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(x))) break;
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

/// Point of A = {(a, b) : a + |b|^2/2 <= 0} closest to (alpha, beta).
struct ProjectedPoint {
    double a = 0.0;
    Vec3 b = Vec3::Zero();
    double multiplier = 0.0; // lambda >= 0; zero when the input already lies in A
};

namespace detail {

inline double projection_distance2(double alpha, const Vec3& beta, double lambda)
{
    const double da = lambda;
    const double scale = lambda / (1.0 + lambda);
    return da * da + scale * scale * beta.squaredNorm();
}

/// Fallback: bisection on the strictly decreasing alpha - l + s/(1+l)^2 over [0, alpha + s].
inline double bisect_multiplier(double alpha, double s)
{
    double lo = 0.0;
    double hi = alpha + s;
    auto phi = [&](double l) { return alpha - l + s / ((1.0 + l) * (1.0 + l)); };
    if (!(phi(hi) <= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (phi(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Projection onto A. Outside A, the multiplier solves
///   -l^3 + (alpha-2) l^2 + (2 alpha-1) l + alpha + |beta|^2/2 = 0,
/// and the result is (alpha - l, beta / (1 + l)). The returned `a` is set
/// to -|b|^2/2, which equals alpha - l at the root and keeps the output
/// exactly on the boundary of A.
inline ProjectedPoint project_onto_A(double alpha, const Vec3& beta)
{
    const double s = 0.5 * beta.squaredNorm();
    if (!std::isfinite(alpha) || !std::isfinite(s)) throw NoRootFound("projection input is not finite");
    if (alpha + s <= 0.0) return {alpha, beta, 0.0};

    // Monic form of the cubic above: l^3 + (2-alpha) l^2 + (1-2 alpha) l - (alpha + s).
    const auto roots = solve_monic_cubic(2.0 - alpha, 1.0 - 2.0 * alpha, -(alpha + s));
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_dist = std::numeric_limits<double>::infinity();
    for (double root : roots) {
        if (!(root >= -1e-14)) continue;
        const double l = std::max(root, 0.0);
        const double dist = detail::projection_distance2(alpha, beta, l);
        if (dist < best_dist) {
            best_dist = dist;
            best = l;
        }
    }
    if (!std::isfinite(best)) best = detail::bisect_multiplier(alpha, s);
    if (!std::isfinite(best)) throw NoRootFound("no nonnegative root of the projection cubic");

    ProjectedPoint out;
    out.multiplier = best;
    out.b = beta / (1.0 + best);
    out.a = -0.5 * out.b.squaredNorm();
    return out;
}

} // namespace surfot
