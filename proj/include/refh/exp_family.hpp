#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "refh/rng.hpp"

namespace refh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class UnitFamily { Bernoulli, Poisson };

inline std::string_view to_string(UnitFamily f) {
    return f == UnitFamily::Bernoulli ? "bernoulli" : "poisson";
}

inline UnitFamily unit_family_from_string(std::string_view s) {
    if (s == "bernoulli") return UnitFamily::Bernoulli;
    if (s == "poisson") return UnitFamily::Poisson;
    throw std::invalid_argument("unknown unit family: " + std::string(s));
}

// Poisson means are clamped to this range before sampling.
inline constexpr double kPoissonMeanFloor = 1e-8;
inline constexpr double kPoissonMeanCeil = 1e4;

struct LayerBlock {
    UnitFamily family;
    std::size_t count;

    friend bool operator==(const LayerBlock&, const LayerBlock&) = default;
};

/// Ordered list of unit blocks. Block order fixes the vector layout: the
/// first block occupies rows [0, count0), the next [count0, count0+count1)...
/// An empty spec denotes an absent layer (a static EFH has no recurrent block).
class LayerSpec {
public:
    LayerSpec() = default;

    explicit LayerSpec(std::vector<LayerBlock> blocks) : blocks_(std::move(blocks)) {
        for (const auto& b : blocks_) {
            if (b.count == 0) throw std::invalid_argument("LayerSpec: block with zero units");
        }
    }

    static LayerSpec uniform(UnitFamily family, std::size_t count) {
        if (count == 0) return LayerSpec{};
        return LayerSpec({{family, count}});
    }

    std::size_t size() const {
        return std::accumulate(blocks_.begin(), blocks_.end(), std::size_t{0},
                               [](std::size_t acc, const LayerBlock& b) { return acc + b.count; });
    }

    bool empty() const { return blocks_.empty(); }
    const std::vector<LayerBlock>& blocks() const { return blocks_; }

    /// Row ranges (offset, count) of every block of the given family.
    std::vector<std::pair<std::size_t, std::size_t>> ranges(UnitFamily family) const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        std::size_t offset = 0;
        for (const auto& b : blocks_) {
            if (b.family == family) out.emplace_back(offset, b.count);
            offset += b.count;
        }
        return out;
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;

private:
    std::vector<LayerBlock> blocks_;
};

inline double logistic(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double mean_from_natural(UnitFamily family, double eta) {
    if (!std::isfinite(eta)) throw std::invalid_argument("mean_from_natural: non-finite natural parameter");
    return family == UnitFamily::Bernoulli ? logistic(eta) : std::exp(eta);
}

/// Derivative of the mean with respect to the natural parameter, expressed
/// through the mean itself.
inline double mean_derivative(UnitFamily family, double mean) {
    return family == UnitFamily::Bernoulli ? mean * (1.0 - mean) : mean;
}

namespace detail {

inline long long poisson_inversion(double mean, Rng& rng) {
    const double u = rng.uniform();
    double p = std::exp(-mean);
    double cdf = p;
    long long k = 0;
    // Tail cut far beyond any mean handled by this branch.
    while (u > cdf && k < 1000) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

// Transformed rejection with squeeze (Hormann, PTRS).
inline long long poisson_ptrs(double mean, Rng& rng) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<long long>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * loglam - std::lgamma(k + 1.0)) {
            return static_cast<long long>(k);
        }
    }
}

}  // namespace detail

inline double sample_poisson(double mean, Rng& rng) {
    const double m = std::clamp(mean, kPoissonMeanFloor, kPoissonMeanCeil);
    return static_cast<double>(m < 30.0 ? detail::poisson_inversion(m, rng) : detail::poisson_ptrs(m, rng));
}

inline double sample_unit(UnitFamily family, double mean, Rng& rng) {
    if (family == UnitFamily::Bernoulli) {
        if (!(mean >= 0.0 && mean <= 1.0)) throw std::invalid_argument("sample_unit: Bernoulli mean outside [0,1]");
        return rng.uniform() < mean ? 1.0 : 0.0;
    }
    if (!(mean >= 0.0)) throw std::invalid_argument("sample_unit: negative or NaN Poisson mean");
    return sample_poisson(mean, rng);
}

/// Replaces natural parameters (rows laid out per `spec`) by means, in place.
template <typename Derived>
void apply_mean_inplace(const LayerSpec& spec, Eigen::MatrixBase<Derived>& natural) {
    if (static_cast<std::size_t>(natural.rows()) != spec.size()) {
        throw std::invalid_argument("apply_mean_inplace: row count does not match layer spec");
    }
    if (!natural.allFinite()) throw std::invalid_argument("mean_from_natural: non-finite natural parameter");
    Eigen::Index offset = 0;
    for (const auto& block : spec.blocks()) {
        const auto n = static_cast<Eigen::Index>(block.count);
        auto rows = natural.middleRows(offset, n);
        if (block.family == UnitFamily::Bernoulli) {
            rows = rows.unaryExpr([](double e) { return logistic(e); });
        } else {
            rows = rows.array().exp().matrix();
        }
        offset += n;
    }
}

/// Samples every entry of `means`; column-major order (frame by frame, unit
/// by unit), which fixes the random-stream consumption order.
inline Matrix sample_layer(const LayerSpec& spec, const Matrix& means, Rng& rng) {
    if (static_cast<std::size_t>(means.rows()) != spec.size()) {
        throw std::invalid_argument("sample_layer: row count does not match layer spec");
    }
    Matrix out(means.rows(), means.cols());
    std::vector<UnitFamily> family_of_row;
    family_of_row.reserve(spec.size());
    for (const auto& b : spec.blocks()) family_of_row.insert(family_of_row.end(), b.count, b.family);
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
        for (Eigen::Index i = 0; i < means.rows(); ++i) {
            out(i, j) = sample_unit(family_of_row[static_cast<std::size_t>(i)], means(i, j), rng);
        }
    }
    return out;
}

}  // namespace refh
