#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

namespace refh {

/// x reduced to [0, L). A non-finite or non-positive L means no wrapping.
inline double wrap(double x, double L) {
    if (!(L > 0.0) || !std::isfinite(L)) return x;
    double y = std::fmod(x, L);
    if (y < 0.0) y += L;
    return y >= L ? 0.0 : y;
}

/// d reduced to [-L/2, L/2): the shortest signed displacement on the circle.
inline double signed_wrap(double d, double L) {
    if (!(L > 0.0) || !std::isfinite(L)) return d;
    return wrap(d + 0.5 * L, L) - 0.5 * L;
}

/// Shortest distance on the circle; exactly symmetric in a and b.
inline double circular_distance(double a, double b, double L) {
    if (!(L > 0.0) || !std::isfinite(L)) return std::abs(a - b);
    const double d = std::fmod(std::abs(a - b), L);
    return std::min(d, L - d);
}

/// Weighted center of mass of `centers`. On a circle of length L it is the
/// phase of the resultant vector; with L infinite, the ordinary weighted mean.
/// Returns nullopt when the weights sum to zero. A vanishing resultant (e.g.
/// uniform weights over evenly spaced centers) yields the middle L/2.
inline std::optional<double> center_of_mass(const Eigen::VectorXd& weights, const Eigen::VectorXd& centers, double L) {
    if (weights.size() != centers.size()) throw std::invalid_argument("center_of_mass: size mismatch");
    if ((weights.array() < 0.0).any() || !weights.allFinite()) throw std::invalid_argument("center_of_mass: weights must be finite and nonnegative");
    const double total = weights.sum();
    if (!(total > 0.0)) return std::nullopt;
    if (!(L > 0.0) || !std::isfinite(L)) return weights.dot(centers) / total;

    const double k = 2.0 * std::numbers::pi / L;
    double c = 0.0, s = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        c += weights(i) * std::cos(k * centers(i));
        s += weights(i) * std::sin(k * centers(i));
    }
    if (std::hypot(c, s) <= 1e-12 * total) return 0.5 * L;
    return wrap(std::atan2(s, c) / k, L);
}

}  // namespace refh
