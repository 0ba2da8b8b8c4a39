#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <Eigen/Dense>

#include "refh/circular.hpp"
#include "refh/harmonium.hpp"
#include "refh/temporal.hpp"
#include "refh/worldgen.hpp"

namespace refh {

// ---------------------------------------------------------------------------
// Decoding and error metrics

namespace detail {
inline Matrix poisson_rows(const HarmoniumParams& p, const Matrix& obs_means, std::size_t expected) {
    const auto ranges = p.obs_spec.ranges(UnitFamily::Poisson);
    std::size_t total = 0;
    for (auto [off, n] : ranges) total += n;
    if (total != expected) throw std::invalid_argument("decode_position: Poisson block does not match the codec");
    Matrix out(static_cast<Eigen::Index>(total), obs_means.cols());
    Eigen::Index row = 0;
    for (auto [off, n] : ranges) {
        out.middleRows(row, static_cast<Eigen::Index>(n)) = obs_means.middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(n));
        row += static_cast<Eigen::Index>(n);
    }
    return out;
}
}  // namespace detail

/// Center of mass of the Poisson means of a downward pass from r.
inline std::optional<double> decode_position(const HarmoniumParams& p, const RecurrentState& r, const PpcCodec& codec) {
    const Matrix means = detail::poisson_rows(p, down_pass_obs(p, Matrix(r.r)), codec.n_units);
    return center_of_mass(means.col(0), codec.centers(), codec.length);
}

/// decode_position for every column of `states`; undecodable columns map to
/// the middle of the interval and are counted in `n_failed`.
inline std::vector<double> decode_positions(const HarmoniumParams& p, const Matrix& states, const PpcCodec& codec,
                                            std::size_t* n_failed = nullptr) {
    const Matrix means = detail::poisson_rows(p, down_pass_obs(p, states), codec.n_units);
    const Eigen::VectorXd centers = codec.centers();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(states.cols()));
    for (Eigen::Index t = 0; t < means.cols(); ++t) {
        const auto z = center_of_mass(means.col(t), centers, codec.length);
        if (!z && n_failed) ++*n_failed;
        out.push_back(z.value_or(0.5 * codec.length));
    }
    return out;
}

inline double mse_position(const std::vector<double>& estimates, const std::vector<double>& truths, double L) {
    if (estimates.size() != truths.size()) throw std::invalid_argument("mse_position: length mismatch");
    if (estimates.empty()) throw std::invalid_argument("mse_position: empty sequences");
    double acc = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double d = circular_distance(estimates[i], truths[i], L);
        acc += d * d;
    }
    return acc / static_cast<double>(estimates.size());
}

/// Mean over frames and pixels of the squared prediction error.
inline double next_frame_mse(const Matrix& predictions, const Matrix& truths) {
    if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols()) {
        throw std::invalid_argument("next_frame_mse: shape mismatch");
    }
    if (predictions.size() == 0) throw std::invalid_argument("next_frame_mse: empty input");
    return (predictions - truths).squaredNorm() / static_cast<double>(predictions.size());
}

struct EvalReport {
    std::string model_id;
    std::vector<double> per_trajectory_mse;
    double aggregate_mse = 0.0;
    std::size_t n_steps = 0;
};

/// Aggregate is the mean over all steps; with equal-length trajectories it
/// equals the mean of the per-trajectory MSEs.
inline EvalReport make_report(std::string id, const std::vector<double>& per_traj, const std::vector<std::size_t>& steps) {
    EvalReport r{std::move(id), per_traj, 0.0, 0};
    double acc = 0.0;
    for (std::size_t i = 0; i < per_traj.size(); ++i) {
        acc += per_traj[i] * static_cast<double>(steps[i]);
        r.n_steps += steps[i];
    }
    r.aggregate_mse = r.n_steps ? acc / static_cast<double>(r.n_steps) : 0.0;
    return r;
}

/// Filter every test trajectory, decode each r_t, compare to the true positions.
inline EvalReport evaluate_lds(const HarmoniumParams& p, const LdsDataset& test, const PpcCodec& codec,
                               std::string id = "model") {
    std::vector<double> per;
    std::vector<std::size_t> steps;
    const auto states = filter_trajectories(p, test.observations());
    for (std::size_t i = 0; i < test.trajectories.size(); ++i) {
        const auto est = decode_positions(p, states[i], codec);
        const auto& pos = test.trajectories[i].position;
        per.push_back(mse_position(est, std::vector<double>(pos.data(), pos.data() + pos.size()), codec.length));
        steps.push_back(est.size());
    }
    return make_report(std::move(id), per, steps);
}

/// Next-frame predictions for t = 0..T-2 from the filtered states r_t,
/// scored against frames 1..T-1.
inline EvalReport evaluate_next_frame(const HarmoniumParams& p, const std::vector<Matrix>& test, Rng& rng,
                                      const PredictOptions& opts = {}, std::string id = "model") {
    std::vector<double> per;
    std::vector<std::size_t> steps;
    const auto states = filter_trajectories(p, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Eigen::Index T = test[i].cols();
        if (T < 2) throw std::invalid_argument("evaluate_next_frame: trajectories need at least two frames");
        const Matrix pred = predict_next_frames(p, states[i].leftCols(T - 1), rng, opts);
        per.push_back(next_frame_mse(pred, test[i].rightCols(T - 1)));
        steps.push_back(static_cast<std::size_t>(T - 1));
    }
    return make_report(std::move(id), per, steps);
}

/// Zeroth-order predictor: the next frame equals the current one.
inline EvalReport evaluate_copy_frame(const std::vector<Matrix>& test, std::string id = "copy") {
    std::vector<double> per;
    std::vector<std::size_t> steps;
    for (const auto& f : test) {
        const Eigen::Index T = f.cols();
        if (T < 2) throw std::invalid_argument("evaluate_copy_frame: trajectories need at least two frames");
        per.push_back(next_frame_mse(f.leftCols(T - 1), f.rightCols(T - 1)));
        steps.push_back(static_cast<std::size_t>(T - 1));
    }
    return make_report(std::move(id), per, steps);
}

// ---------------------------------------------------------------------------
// Identifiability

using BigInt = boost::multiprecision::cpp_int;

enum class Identifiability { Identifiable, NotShown };

inline std::string to_string(Identifiability v) { return v == Identifiability::Identifiable ? "identifiable" : "not-shown"; }

/// One side of the partition: how many units of each cardinality it holds.
struct PartitionPart {
    std::size_t n_units_n = 0;  // units with cardinality n (recurrent)
    std::size_t n_units_m = 0;  // units with cardinality m (observation)
    BigInt kappa = 1;
};

struct IdentifiabilityResult {
    Identifiability verdict = Identifiability::NotShown;
    PartitionPart s1, s2, s3;
    BigInt r;            // n^N hidden states
    BigInt lhs;          // min(r,k1) + min(r,k2) + min(r,k3)
    BigInt rhs;          // 2r + 2
    bool approx_condition = false;  // n^N < m^M
};

namespace detail {
inline BigInt ipow(std::size_t base, std::size_t e) { return boost::multiprecision::pow(BigInt(base), static_cast<unsigned>(e)); }

inline BigInt min_sum(const BigInt& r, const BigInt& a, const BigInt& b, const BigInt& c) {
    return std::min(r, a) + std::min(r, b) + std::min(r, c);
}
}  // namespace detail

/// Sufficient condition for generic identifiability of an EFH whose hidden
/// layer has N units of cardinality n and whose visible layer has N recurrent
/// units of cardinality n and M observation units of cardinality m:
///   min(r,k1) + min(r,k2) + min(r,k3) >= 2r + 2,  r = n^N,
/// for a partition of the visible units with k_i the product of
/// cardinalities in part i. S3 holds one unit; the split of the rest into S1
/// and S2 is searched exactly over unit counts. Exact integer arithmetic.
inline IdentifiabilityResult identifiability_check(std::size_t n, std::size_t N, std::size_t m, std::size_t M) {
    if (n < 2 || m < 2) throw std::invalid_argument("identifiability_check: cardinalities must be >= 2");
    if (N < 1 || M < 1) throw std::invalid_argument("identifiability_check: unit counts must be >= 1");
    if (N > 100000 || M > 100000) throw std::invalid_argument("identifiability_check: unit counts too large");
    IdentifiabilityResult best;
    best.r = detail::ipow(n, N);
    best.rhs = 2 * best.r + 2;
    best.approx_condition = best.r < detail::ipow(m, M);
    best.lhs = -1;
    const BigInt& r = best.r;

    for (int s3_is_m = 0; s3_is_m < 2; ++s3_is_m) {
        PartitionPart s3;
        s3.n_units_n = s3_is_m ? 0 : 1;
        s3.n_units_m = s3_is_m ? 1 : 0;
        s3.kappa = s3_is_m ? BigInt(m) : BigInt(n);
        const std::size_t Nr = N - s3.n_units_n;
        const std::size_t Mr = M - s3.n_units_m;
        const BigInt total_m = detail::ipow(m, Mr);
        for (std::size_t a = 0; a <= Nr; ++a) {
            const BigInt na = detail::ipow(n, a);
            const BigInt nrest = detail::ipow(n, Nr - a);
            // k1 rises and k2 falls with b; the optimum over b sits at an end
            // of the range or next to the points where k1 or k2 crosses r.
            auto k1_of = [&](std::size_t b) { return na * detail::ipow(m, b); };
            auto k2_of = [&](std::size_t b) { return nrest * (total_m / detail::ipow(m, b)); };
            std::size_t lo = 0, hi = Mr + 1;  // first b with k1 >= r
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (k1_of(mid) >= r) hi = mid; else lo = mid + 1;
            }
            const std::size_t b1 = lo;
            lo = 0;
            hi = Mr + 1;  // first b with k2 < r
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (k2_of(mid) < r) hi = mid; else lo = mid + 1;
            }
            const std::size_t b2 = lo;
            std::vector<std::size_t> cands = {0, Mr};
            for (std::size_t c : {b1, b2}) {
                if (c >= 1) cands.push_back(c - 1);
                cands.push_back(c);
            }
            for (std::size_t b : cands) {
                if (b > Mr) continue;
                const BigInt k1 = k1_of(b);
                const BigInt k2 = k2_of(b);
                const BigInt lhs = detail::min_sum(r, k1, k2, s3.kappa);
                if (lhs > best.lhs) {
                    best.lhs = lhs;
                    best.s1 = {a, b, k1};
                    best.s2 = {Nr - a, Mr - b, k2};
                    best.s3 = s3;
                }
            }
        }
    }
    best.verdict = best.lhs >= best.rhs ? Identifiability::Identifiable : Identifiability::NotShown;
    return best;
}

}  // namespace refh
