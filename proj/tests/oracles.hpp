#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include "refh/baselines.hpp"

namespace refh::oracle {

// Brute-force Bayes filter/smoother for x' = a x + N(0, q), z ~ N(x, R) on a
// uniform grid. Prediction maps the density through x -> a x by linear
// interpolation, then convolves with a truncated Gaussian kernel.
struct GridOracle {
    double lo, hi, a, q;
    int n;
    std::vector<double> x;
    std::vector<double> kernel;  // offsets -half..half
    int half;

    GridOracle(double lo_, double hi_, int n_, double a_, double q_) : lo(lo_), hi(hi_), a(a_), q(q_), n(n_) {
        const double dx = (hi - lo) / n;
        for (int i = 0; i < n; ++i) x.push_back(lo + (i + 0.5) * dx);
        half = static_cast<int>(std::ceil(7.0 * std::sqrt(q) / dx));
        for (int k = -half; k <= half; ++k) kernel.push_back(std::exp(-0.5 * (k * dx) * (k * dx) / q));
    }

    double dx() const { return (hi - lo) / n; }

    double interp(const std::vector<double>& f, double y) const {
        const double u = (y - lo) / dx() - 0.5;
        const int i = static_cast<int>(std::floor(u));
        if (i < 0 || i + 1 >= n) return 0.0;
        const double w = u - i;
        return (1 - w) * f[static_cast<std::size_t>(i)] + w * f[static_cast<std::size_t>(i + 1)];
    }

    std::vector<double> convolve(const std::vector<double>& f) const {
        std::vector<double> out(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) {
            const int k0 = std::max(-half, -j), k1 = std::min(half, n - 1 - j);
            double acc = 0.0;
            for (int k = k0; k <= k1; ++k) acc += kernel[static_cast<std::size_t>(k + half)] * f[static_cast<std::size_t>(j + k)];
            out[static_cast<std::size_t>(j)] = acc;
        }
        return out;
    }

    std::vector<double> predict(const std::vector<double>& p) const {
        std::vector<double> scaled(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) scaled[static_cast<std::size_t>(j)] = interp(p, x[static_cast<std::size_t>(j)] / a) / std::abs(a);
        return normalize(convolve(scaled));
    }

    // Backward message: b(x) = int N(x'; a x, q) g(x') dx'.
    std::vector<double> pull_back(const std::vector<double>& g) const {
        const auto c = convolve(g);
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = interp(c, a * x[static_cast<std::size_t>(i)]);
        return normalize(out);
    }

    std::vector<double> likelihood(const PseudoObs& o) const {
        std::vector<double> l(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double d = o.z - x[static_cast<std::size_t>(i)];
            l[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / o.R);
        }
        return l;
    }

    static std::vector<double> normalize(std::vector<double> f) {
        double s = 0.0;
        for (double v : f) s += v;
        for (double& v : f) v /= s;
        return f;
    }

    double mean(const std::vector<double>& p) const {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += p[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        return m;
    }

    double var(const std::vector<double>& p) const {
        const double m = mean(p);
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += p[static_cast<std::size_t>(i)] * (x[static_cast<std::size_t>(i)] - m) * (x[static_cast<std::size_t>(i)] - m);
        return v;
    }
};

inline std::vector<PseudoObs> simulate_scalar(double a, double q, double R, std::size_t T, Rng& rng, double x0 = 0.0) {
    std::vector<PseudoObs> out;
    double x = x0;
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) x = a * x + std::sqrt(q) * rng.normal();
        out.push_back({x + std::sqrt(R) * rng.normal(), R});
    }
    return out;
}

inline LdsModel<1> scalar_model(double a, double q, double init_var) {
    LdsModel<1> m;
    m.A(0, 0) = a;
    m.Q(0, 0) = q;
    m.init_cov(0, 0) = init_var;
    return m;
}

}  // namespace refh::oracle
