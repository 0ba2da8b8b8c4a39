#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "refh/circular.hpp"
#include "refh/rng.hpp"
#include "refh/worldgen.hpp"

namespace refh {

/// Gaussian reading of a population response: position z with variance R.
/// R is +infinity when there were no spikes.
struct PseudoObs {
    double z = 0.0;
    double R = std::numeric_limits<double>::infinity();

    bool informative() const { return std::isfinite(R); }
};

/// Center of mass of the counts and tuning width over total spike count.
inline PseudoObs ppc_pseudo_obs(const PpcCodec& codec, const Eigen::VectorXd& counts) {
    if (static_cast<std::size_t>(counts.size()) != codec.n_units) throw std::invalid_argument("ppc_pseudo_obs: wrong number of units");
    const double total = counts.sum();
    const auto z = center_of_mass(counts, codec.centers(), codec.length);
    if (!z) return {0.5 * codec.length, std::numeric_limits<double>::infinity()};
    const double s = codec.sigma_tc();
    return {*z, s * s / total};
}

/// Pseudo-observations of one trajectory with z shifted so that the middle
/// of the stimulus interval is 0 and z lies in [-L/2, L/2).
inline std::vector<PseudoObs> centered_pseudo_obs(const PpcCodec& codec, const Matrix& counts) {
    std::vector<PseudoObs> out;
    out.reserve(static_cast<std::size_t>(counts.cols()));
    for (Eigen::Index t = 0; t < counts.cols(); ++t) {
        PseudoObs o = ppc_pseudo_obs(codec, counts.col(t));
        o.z = signed_wrap(o.z - 0.5 * codec.length, codec.length);
        out.push_back(o);
    }
    return out;
}

/// Removes wrap-around jumps (|dz| > L/2) so the sequence is continuous.
inline std::vector<PseudoObs> unwrap_pseudo_obs(std::vector<PseudoObs> obs, double L) {
    bool have = false;
    double prev = 0.0;
    for (auto& o : obs) {
        if (!o.informative()) continue;
        if (have) o.z = prev + signed_wrap(o.z - prev, L);
        prev = o.z;
        have = true;
    }
    return obs;
}

/// Linear-Gaussian state-space model of order K with scalar emission C x;
/// the emission noise is supplied per step by the pseudo-observations.
template <int K>
struct LdsModel {
    using Mat = Eigen::Matrix<double, K, K>;
    using Vec = Eigen::Matrix<double, K, 1>;
    using Row = Eigen::Matrix<double, 1, K>;

    Mat A = Mat::Identity();
    Row C = Row::Unit(0);
    Mat Q = Mat::Identity() * 1e-4;
    Vec init_mean = Vec::Zero();
    Mat init_cov = Mat::Identity() * 1e6;
    /// Circular innovations and a wrapped position mean when positive.
    double wrap_length = 0.0;

    static constexpr int order = K;

    void validate() const {
        if (!A.allFinite() || !Q.allFinite() || !init_cov.allFinite() || !init_mean.allFinite()) {
            throw std::invalid_argument("LdsModel: non-finite parameter");
        }
        auto psd = [](const Mat& m) {
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) return false;
            Eigen::SelfAdjointEigenSolver<Mat> es(m);
            return es.eigenvalues().minCoeff() >= -1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
        };
        if (!psd(Q) || !psd(init_cov)) throw std::invalid_argument("LdsModel: covariance not symmetric PSD");
    }
};

template <int K>
struct KalmanBelief {
    Eigen::Matrix<double, K, 1> mean;
    Eigen::Matrix<double, K, K> cov;
};

template <int K>
struct FilterResult {
    std::vector<KalmanBelief<K>> filtered;
    std::vector<KalmanBelief<K>> predicted;  // prior at each step; predicted[0] is the initial prior
    double log_likelihood = 0.0;
};

namespace detail {
template <typename M>
M symmetrize(const M& m) {
    return 0.5 * (m + m.transpose());
}
}  // namespace detail

/// Predict/update recursion. The first step updates the initial prior
/// directly; steps with R = infinity only predict.
template <int K>
FilterResult<K> kalman_filter(const LdsModel<K>& model, const std::vector<PseudoObs>& obs) {
    model.validate();
    using Vec = typename LdsModel<K>::Vec;
    using Mat = typename LdsModel<K>::Mat;
    FilterResult<K> out;
    out.filtered.reserve(obs.size());
    out.predicted.reserve(obs.size());
    Vec m = model.init_mean;
    Mat P = model.init_cov;
    long double ll = 0.0L;
    const double L = model.wrap_length;
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (t > 0) {
            m = model.A * m;
            P = detail::symmetrize<Mat>(model.A * P * model.A.transpose() + model.Q);
        }
        out.predicted.push_back({m, P});
        const PseudoObs& o = obs[t];
        if (o.informative()) {
            if (!(o.R > 0.0)) throw std::invalid_argument("kalman_filter: nonpositive observation variance");
            const double pred = model.C * m;
            const double innov = L > 0.0 ? signed_wrap(o.z - pred, L) : o.z - pred;
            const Vec PCt = P * model.C.transpose();
            const double S = model.C * PCt + o.R;
            const Vec G = PCt / S;
            m += G * innov;
            // Joseph form keeps P symmetric PSD under rounding.
            const Mat IKC = Mat::Identity() - G * model.C;
            P = detail::symmetrize<Mat>(IKC * P * IKC.transpose() + o.R * G * G.transpose());
            ll += -0.5L * static_cast<long double>(std::log(2.0 * std::numbers::pi * S) + innov * innov / S);
            if (L > 0.0) m(0) = signed_wrap(m(0), L);
        }
        out.filtered.push_back({m, P});
    }
    out.log_likelihood = static_cast<double>(ll);
    return out;
}

template <int K>
struct SmoothedStep {
    Eigen::Matrix<double, K, 1> mean;
    Eigen::Matrix<double, K, K> cov;
    Eigen::Matrix<double, K, K> lag_one_cov;  // Cov(x_t, x_{t-1} | all); zero at t = 0
};

template <int K>
struct SmootherResult {
    std::vector<SmoothedStep<K>> steps;
    double log_likelihood = 0.0;
};

/// Rauch-Tung-Striebel smoother on top of kalman_filter. Intended for
/// unwrapped models (wrap_length 0).
template <int K>
SmootherResult<K> kalman_smoother(const LdsModel<K>& model, const std::vector<PseudoObs>& obs) {
    using Mat = typename LdsModel<K>::Mat;
    const FilterResult<K> f = kalman_filter(model, obs);
    SmootherResult<K> out;
    out.log_likelihood = f.log_likelihood;
    const std::size_t T = obs.size();
    out.steps.resize(T);
    if (T == 0) return out;
    out.steps[T - 1] = {f.filtered[T - 1].mean, f.filtered[T - 1].cov, Mat::Zero()};
    for (std::size_t k = T - 1; k-- > 0;) {
        const auto& filt = f.filtered[k];
        const auto& pred = f.predicted[k + 1];
        const Mat J = pred.cov.ldlt().solve(model.A * filt.cov).transpose();  // P_k A' P_{k+1|k}^{-1}
        auto& next = out.steps[k + 1];
        out.steps[k].mean = filt.mean + J * (next.mean - pred.mean);
        out.steps[k].cov = detail::symmetrize<Mat>(filt.cov + J * (next.cov - pred.cov) * J.transpose());
        next.lag_one_cov = next.cov * J.transpose();
        out.steps[k].lag_one_cov = Mat::Zero();
    }
    return out;
}

/// Zeroth-order baseline: the estimate is the pseudo-observation itself; a
/// step without spikes repeats the previous estimate (initially `initial`).
inline std::vector<double> kf0(const std::vector<PseudoObs>& obs, double initial = 0.0) {
    std::vector<double> out;
    out.reserve(obs.size());
    double est = initial;
    for (const auto& o : obs) {
        if (o.informative()) est = o.z;
        out.push_back(est);
    }
    return out;
}

template <int K>
struct EmRestart {
    LdsModel<K> model;
    std::vector<double> log_likelihood;  // after each E-step; entry 0 is the initial model
    bool degenerate = false;
};

template <int K>
struct EmResult {
    std::vector<EmRestart<K>> restarts;
    std::size_t best = 0;

    const LdsModel<K>& model() const { return restarts.at(best).model; }
    const std::vector<double>& trace() const { return restarts.at(best).log_likelihood; }
};

struct EmOptions {
    std::size_t n_iters = 200;
    std::size_t n_restarts = 20;
    /// Stop a restart once an iteration gains less than this (relative to |LL|).
    double rel_tol = 1e-10;
    double init_noise = 0.01;
    double init_q = 1e-4;
    double init_cov = 1e6;
    int max_jitter_retries = 5;
};

/// One EM iteration's M-step. A and Q are re-estimated; C, the per-step
/// emission variances and the initial prior stay fixed.
template <int K>
bool em_m_step(LdsModel<K>& model, const std::vector<SmootherResult<K>>& smoothed) {
    using Mat = typename LdsModel<K>::Mat;
    Mat S00 = Mat::Zero(), S10 = Mat::Zero(), S11 = Mat::Zero();
    double n = 0.0;
    for (const auto& sr : smoothed) {
        for (std::size_t t = 1; t < sr.steps.size(); ++t) {
            const auto& cur = sr.steps[t];
            const auto& prev = sr.steps[t - 1];
            S11 += cur.cov + cur.mean * cur.mean.transpose();
            S00 += prev.cov + prev.mean * prev.mean.transpose();
            S10 += cur.lag_one_cov + cur.mean * prev.mean.transpose();
            n += 1.0;
        }
    }
    if (n < 1.0) return false;
    const Mat A = S00.ldlt().solve(S10.transpose()).transpose();
    const Mat Q = detail::symmetrize<Mat>((S11 - A * S10.transpose()) / n);
    if (!A.allFinite() || !Q.allFinite()) return false;
    Eigen::SelfAdjointEigenSolver<Mat> es(Q);
    if (!(es.eigenvalues().minCoeff() > 0.0)) return false;
    model.A = A;
    model.Q = Q;
    return true;
}

/// EM for order-K models on unwrapped pseudo-observation sequences. Each
/// restart starts from A = I + noise, Q = init_q I; a restart that becomes
/// degenerate is retried with fresh noise. The best restart is the one with
/// the highest final log-likelihood (ties: lowest index).
template <int K>
EmResult<K> em_fit(const std::vector<std::vector<PseudoObs>>& data, const EmOptions& opts, Rng& rng) {
    using Mat = typename LdsModel<K>::Mat;
    if (data.empty()) throw std::invalid_argument("em_fit: empty dataset");
    if (opts.n_restarts == 0) throw std::invalid_argument("em_fit: need at least one restart");
    EmResult<K> result;
    auto total_ll = [&](const LdsModel<K>& m, std::vector<SmootherResult<K>>* sm) {
        long double ll = 0.0L;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto s = kalman_smoother(m, data[i]);
            ll += s.log_likelihood;
            if (sm) (*sm)[i] = std::move(s);
        }
        return static_cast<double>(ll);
    };
    for (std::size_t r = 0; r < opts.n_restarts; ++r) {
        EmRestart<K> rs;
        for (int attempt = 0; attempt <= opts.max_jitter_retries; ++attempt) {
            rs = EmRestart<K>{};
            LdsModel<K> m;
            m.A = Mat::Identity();
            for (int i = 0; i < K; ++i)
                for (int j = 0; j < K; ++j) m.A(i, j) += opts.init_noise * rng.normal();
            m.Q = Mat::Identity() * opts.init_q;
            m.init_cov = Mat::Identity() * opts.init_cov;
            std::vector<SmootherResult<K>> sm(data.size());
            double ll = total_ll(m, &sm);
            rs.log_likelihood.push_back(ll);
            bool ok = std::isfinite(ll);
            for (std::size_t it = 0; ok && it < opts.n_iters; ++it) {
                LdsModel<K> next = m;
                if (!em_m_step(next, sm)) {
                    ok = false;
                    break;
                }
                const double ll_next = total_ll(next, &sm);
                if (!std::isfinite(ll_next)) {
                    ok = false;
                    break;
                }
                m = next;
                rs.log_likelihood.push_back(ll_next);
                const double gain = ll_next - ll;
                ll = ll_next;
                if (gain >= 0.0 && gain < opts.rel_tol * std::abs(ll)) break;
            }
            rs.model = m;
            rs.degenerate = !ok;
            if (ok) break;
        }
        result.restarts.push_back(std::move(rs));
    }
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < result.restarts.size(); ++r) {
        const auto& rs = result.restarts[r];
        if (rs.degenerate) continue;
        if (rs.log_likelihood.back() > best_ll) {
            best_ll = rs.log_likelihood.back();
            result.best = r;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Baseline suite on population-code data

/// Filtering MSE (circular) of a model on a test set, in the uncentered
/// coordinates of the data. The model works on centered pseudo-observations.
template <int K>
double kalman_mse(const LdsModel<K>& model, const PpcCodec& codec, const LdsDataset& test) {
    const double L = codec.length;
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& tr : test.trajectories) {
        const auto f = kalman_filter(model, centered_pseudo_obs(codec, tr.counts));
        for (std::size_t t = 0; t < f.filtered.size(); ++t) {
            const double est = wrap(f.filtered[t].mean(0) + 0.5 * L, L);
            const double d = circular_distance(est, tr.position(static_cast<Eigen::Index>(t)), L);
            acc += d * d;
            ++n;
        }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

inline double kf0_mse(const PpcCodec& codec, const LdsDataset& test) {
    const double L = codec.length;
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& tr : test.trajectories) {
        const auto est = kf0(centered_pseudo_obs(codec, tr.counts));
        for (std::size_t t = 0; t < est.size(); ++t) {
            const double d = circular_distance(wrap(est[t] + 0.5 * L, L), tr.position(static_cast<Eigen::Index>(t)), L);
            acc += d * d;
            ++n;
        }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

/// The true oscillator as a second-order filter: position and velocity
/// state, prior matching the world's initial-state distribution.
inline LdsModel<2> true_model(const LdsWorld& world) {
    LdsModel<2> m;
    m.A = world.A();
    m.Q = world.sigma_trans;
    m.init_mean.setZero();
    m.init_cov = Eigen::Vector2d(world.length * world.length / 12.0,
                                 std::max(world.init_velocity_std * world.init_velocity_std, 1e-12)).asDiagonal();
    m.wrap_length = world.length;
    return m;
}

inline std::vector<std::vector<PseudoObs>> em_training_data(const PpcCodec& codec, const LdsDataset& train) {
    std::vector<std::vector<PseudoObs>> out;
    out.reserve(train.trajectories.size());
    for (const auto& tr : train.trajectories) out.push_back(unwrap_pseudo_obs(centered_pseudo_obs(codec, tr.counts), codec.length));
    return out;
}

struct BaselineSuite {
    double kf0 = 0.0;
    double kfopt = 0.0;
    std::vector<double> kf1;  // test MSE per EM restart
    std::vector<double> kf2;
    std::size_t best1 = 0;    // restart with the highest training log-likelihood
    std::size_t best2 = 0;
};

/// KF0, KFopt and EM-fitted first- and second-order filters. EM runs on
/// `train`; every restart is scored on `test`.
inline BaselineSuite run_lds_baselines(const LdsWorld& world, const PpcCodec& codec, const LdsDataset& train,
                                       const LdsDataset& test, const EmOptions& opts, std::uint64_t seed) {
    BaselineSuite s;
    s.kf0 = kf0_mse(codec, test);
    s.kfopt = kalman_mse(true_model(world), codec, test);
    const auto data = em_training_data(codec, train);
    Rng rng1 = Rng::derive(seed, 1);
    const auto em1 = em_fit<1>(data, opts, rng1);
    for (auto rs : em1.restarts) {
        rs.model.wrap_length = codec.length;
        s.kf1.push_back(kalman_mse(rs.model, codec, test));
    }
    s.best1 = em1.best;
    Rng rng2 = Rng::derive(seed, 2);
    const auto em2 = em_fit<2>(data, opts, rng2);
    for (auto rs : em2.restarts) {
        rs.model.wrap_length = codec.length;
        s.kf2.push_back(kalman_mse(rs.model, codec, test));
    }
    s.best2 = em2.best;
    return s;
}

}  // namespace refh
