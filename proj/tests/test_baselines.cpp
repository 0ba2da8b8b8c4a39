#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "refh/baselines.hpp"
#include "oracles.hpp"

using namespace refh;
using namespace refh::oracle;

namespace {

template <int K>
double min_eig(const Eigen::Matrix<double, K, K>& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, K, K>>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST(PseudoObs, OneHotCount) {
    const PpcCodec c;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(15);
    counts(4) = 1.0;
    const auto o = ppc_pseudo_obs(c, counts);
    EXPECT_NEAR(o.z, c.centers()(4), 1e-12);
    EXPECT_NEAR(o.R, c.sigma_tc() * c.sigma_tc(), 1e-15);
}

TEST(PseudoObs, AdjacentPairGivesMidpoint) {
    const PpcCodec c;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(15);
    counts(6) = 3.0;
    counts(7) = 3.0;
    const auto o = ppc_pseudo_obs(c, counts);
    EXPECT_NEAR(o.z, 0.5 * (c.centers()(6) + c.centers()(7)), 1e-12);
    EXPECT_NEAR(o.R, c.sigma_tc() * c.sigma_tc() / 6.0, 1e-15);

    counts.setZero();
    counts(0) = 2.0;
    counts(14) = 2.0;
    EXPECT_NEAR(ppc_pseudo_obs(c, counts).z, 0.0, 1e-12);  // straddles the wrap point
}

TEST(PseudoObs, ZeroCountsAreUninformative) {
    const PpcCodec c;
    const auto o = ppc_pseudo_obs(c, Eigen::VectorXd::Zero(15));
    EXPECT_FALSE(o.informative());
    EXPECT_THROW(ppc_pseudo_obs(c, Eigen::VectorXd::Zero(14)), std::invalid_argument);
}

TEST(PseudoObs, StandardizedResidualsHaveUnitVariance) {
    const PpcCodec c;
    Rng rng(3);
    double acc = 0.0;
    int n = 0;
    for (int k = 0; k < 200'000; ++k) {
        const double x = rng.uniform();
        const auto o = ppc_pseudo_obs(c, ppc_encode(c, x, sample_gain(c, rng), rng));
        if (!o.informative()) continue;
        const double r = signed_wrap(o.z - x, 1.0) / std::sqrt(o.R);
        acc += r * r;
        ++n;
    }
    EXPECT_NEAR(acc / n, 1.0, 0.15);
}

TEST(PseudoObs, UnwrapRemovesJumps) {
    std::vector<PseudoObs> o{{0.45, 1.0}, {-0.48, 1.0}, {0.0, std::numeric_limits<double>::infinity()}, {-0.40, 1.0}};
    const auto u = unwrap_pseudo_obs(o, 1.0);
    EXPECT_NEAR(u[1].z, 0.52, 1e-12);
    EXPECT_NEAR(u[3].z, 0.60, 1e-12);
}

TEST(KalmanFilter, RepeatedObservationsFuse) {
    auto m = scalar_model(1.0, 0.0, 1e6);
    const double R = 0.01;
    std::vector<PseudoObs> obs(25, PseudoObs{0.3, R});
    const auto f = kalman_filter(m, obs);
    for (std::size_t t = 0; t < obs.size(); ++t) {
        // Posterior of n equal readings under a N(0, 1e6) prior.
        const double n = t + 1.0, shrink = n / (n + R / 1e6);
        EXPECT_NEAR(f.filtered[t].cov(0, 0), R / n * shrink, 1e-12 * R);
        EXPECT_NEAR(f.filtered[t].mean(0), 0.3 * shrink, 1e-12);
    }
}

TEST(KalmanFilter, UninformativeStepsOnlyPredict) {
    auto m = scalar_model(0.9, 0.1, 1.0);
    std::vector<PseudoObs> obs{{0.5, 0.1}, {0.0, std::numeric_limits<double>::infinity()}};
    const auto f = kalman_filter(m, obs);
    EXPECT_NEAR(f.filtered[1].mean(0), 0.9 * f.filtered[0].mean(0), 1e-15);
    EXPECT_NEAR(f.filtered[1].cov(0, 0), 0.81 * f.filtered[0].cov(0, 0) + 0.1, 1e-15);
}

TEST(KalmanFilter, MatchesGridBayesFilter) {
    const double a = 0.95, q = 0.0025, R = 0.01, P0 = 0.02;
    Rng rng(5);
    const auto obs = simulate_scalar(a, q, R, 100, rng);
    const auto f = kalman_filter(scalar_model(a, q, P0), obs);

    const GridOracle g(-1.5, 1.5, 10'000, a, q);
    std::vector<double> p(g.x.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(-0.5 * g.x[i] * g.x[i] / P0);
    p = GridOracle::normalize(p);
    double max_err = 0.0;
    double ll = 0.0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (t > 0) p = g.predict(p);
        const auto l = g.likelihood(obs[t]);
        double evidence = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] *= l[i];
            evidence += p[i];
        }
        ll += std::log(evidence / std::sqrt(2 * std::numbers::pi * R));
        p = GridOracle::normalize(p);
        max_err = std::max(max_err, std::abs(g.mean(p) - f.filtered[t].mean(0)));
        EXPECT_NEAR(g.var(p), f.filtered[t].cov(0, 0), 1e-3 * f.filtered[t].cov(0, 0)) << t;
    }
    EXPECT_LT(max_err, 1e-3);
    EXPECT_NEAR(ll, f.log_likelihood, 1e-3 * std::abs(f.log_likelihood));
}

TEST(KalmanSmoother, MatchesGridSmoother) {
    const double a = 0.95, q = 0.0025, R = 0.01, P0 = 0.02;
    Rng rng(6);
    const auto obs = simulate_scalar(a, q, R, 60, rng);
    const auto s = kalman_smoother(scalar_model(a, q, P0), obs);
    const GridOracle g(-1.5, 1.5, 10'000, a, q);

    std::vector<std::vector<double>> alpha(obs.size());
    std::vector<double> p(g.x.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(-0.5 * g.x[i] * g.x[i] / P0);
    p = GridOracle::normalize(p);
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (t > 0) p = g.predict(p);
        const auto l = g.likelihood(obs[t]);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] *= l[i];
        p = GridOracle::normalize(p);
        alpha[t] = p;
    }
    std::vector<double> beta(g.x.size(), 1.0);
    for (std::size_t k = obs.size(); k-- > 0;) {
        std::vector<double> post(g.x.size());
        for (std::size_t i = 0; i < post.size(); ++i) post[i] = alpha[k][i] * beta[i];
        post = GridOracle::normalize(post);
        EXPECT_NEAR(g.mean(post), s.steps[k].mean(0), 1e-3) << k;
        EXPECT_NEAR(g.var(post), s.steps[k].cov(0, 0), 1e-3 * s.steps[k].cov(0, 0)) << k;
        const auto l = g.likelihood(obs[k]);
        std::vector<double> lb(g.x.size());
        for (std::size_t i = 0; i < lb.size(); ++i) lb[i] = l[i] * beta[i];
        beta = g.pull_back(lb);
    }
}

// Second-order model, short sequence: the smoother against the exact joint
// Gaussian posterior built from the stacked precision matrix.
TEST(KalmanSmoother, MatchesBatchGaussianPosterior) {
    LdsModel<2> m;
    m.A << 1.0, 0.1, -0.2, 0.9;
    m.Q << 0.01, 0.002, 0.002, 0.02;
    m.init_mean << 0.1, -0.05;
    m.init_cov << 0.5, 0.1, 0.1, 0.3;
    const std::vector<PseudoObs> obs{{0.2, 0.05}, {0.25, 0.02}, {0.0, std::numeric_limits<double>::infinity()},
                                     {0.4, 0.1}, {0.35, 0.03}, {0.3, 0.05}};
    const int T = static_cast<int>(obs.size());
    const auto s = kalman_smoother(m, obs);

    // Prior precision of the stacked states, then the observation terms.
    const Eigen::Matrix2d Qi = m.Q.inverse();
    Matrix prior_prec = Matrix::Zero(2 * T, 2 * T);
    prior_prec.block<2, 2>(0, 0) += m.init_cov.inverse();
    for (int t = 1; t < T; ++t) {
        prior_prec.block<2, 2>(2 * t, 2 * t) += Qi;
        prior_prec.block<2, 2>(2 * t - 2, 2 * t - 2) += m.A.transpose() * Qi * m.A;
        prior_prec.block<2, 2>(2 * t, 2 * t - 2) -= Qi * m.A;
        prior_prec.block<2, 2>(2 * t - 2, 2 * t) -= m.A.transpose() * Qi;
    }
    Vector prior_mean(2 * T);
    Eigen::Vector2d mm = m.init_mean;
    for (int t = 0; t < T; ++t) {
        prior_mean.segment<2>(2 * t) = mm;
        mm = m.A * mm;
    }
    Matrix lambda = prior_prec;
    Vector eta = prior_prec * prior_mean;
    for (int t = 0; t < T; ++t) {
        if (!obs[static_cast<std::size_t>(t)].informative()) continue;
        const double R = obs[static_cast<std::size_t>(t)].R;
        lambda(2 * t, 2 * t) += 1.0 / R;
        eta(2 * t) += obs[static_cast<std::size_t>(t)].z / R;
    }
    const Matrix sigma = lambda.inverse();
    const Vector mu = sigma * eta;
    for (int t = 0; t < T; ++t) {
        EXPECT_TRUE(s.steps[static_cast<std::size_t>(t)].mean.isApprox(mu.segment<2>(2 * t), 1e-10)) << t;
        EXPECT_TRUE(s.steps[static_cast<std::size_t>(t)].cov.isApprox(sigma.block<2, 2>(2 * t, 2 * t), 1e-10)) << t;
        if (t > 0) {
            EXPECT_TRUE(s.steps[static_cast<std::size_t>(t)].lag_one_cov.isApprox(sigma.block<2, 2>(2 * t, 2 * t - 2), 1e-10)) << t;
        }
    }

    // Marginal likelihood of the informative observations.
    const Matrix prior_cov = prior_prec.inverse();
    std::vector<int> idx;
    for (int t = 0; t < T; ++t)
        if (obs[static_cast<std::size_t>(t)].informative()) idx.push_back(t);
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix S(n, n);
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r(i) = obs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].z - prior_mean(2 * idx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < n; ++j) S(i, j) = prior_cov(2 * idx[static_cast<std::size_t>(i)], 2 * idx[static_cast<std::size_t>(j)]);
        S(i, i) += obs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].R;
    }
    const double ll = -0.5 * (n * std::log(2 * std::numbers::pi) + std::log(S.determinant()) + r.dot(S.ldlt().solve(r)));
    EXPECT_NEAR(s.log_likelihood, ll, 1e-9 * std::abs(ll));
}

TEST(KalmanSmoother, SingleStepEqualsFilterAndVarianceShrinks) {
    const auto m = scalar_model(0.9, 0.05, 1.0);
    const std::vector<PseudoObs> one{{0.3, 0.1}};
    const auto f1 = kalman_filter(m, one);
    const auto s1 = kalman_smoother(m, one);
    EXPECT_EQ(s1.steps[0].mean, f1.filtered[0].mean);
    EXPECT_EQ(s1.steps[0].cov, f1.filtered[0].cov);

    Rng rng(2);
    const auto obs = simulate_scalar(0.9, 0.05, 0.1, 80, rng);
    const auto f = kalman_filter(m, obs);
    const auto s = kalman_smoother(m, obs);
    for (std::size_t t = 0; t < obs.size(); ++t) EXPECT_LE(s.steps[t].cov(0, 0), f.filtered[t].cov(0, 0) + 1e-15);
}

TEST(KalmanFilter, CovariancesStayPsdOnPopulationData) {
    const LdsWorld w;
    const PpcCodec c;
    const auto ds = generate_lds_dataset(w, c, 2, 1000, std::uint64_t{3});
    const auto model = true_model(w);
    for (const auto& tr : ds.trajectories) {
        const auto obs = centered_pseudo_obs(c, tr.counts);
        const auto f = kalman_filter(model, obs);
        for (const auto& b : f.filtered) {
            EXPECT_GT(min_eig<2>(b.cov), -1e-10);
            EXPECT_EQ(b.cov, b.cov.transpose());
        }
        LdsModel<2> unwrapped = model;
        unwrapped.wrap_length = 0.0;
        const auto s = kalman_smoother(unwrapped, unwrap_pseudo_obs(obs, 1.0));
        for (const auto& st : s.steps) EXPECT_GT(min_eig<2>(st.cov), -1e-10);
    }
}

TEST(LdsModel, ValidateRejectsNonPsd) {
    LdsModel<2> m;
    m.Q(0, 0) = -1.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m = LdsModel<2>{};
    m.init_cov(0, 1) = 5.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Kf0, RepeatsLastInformativeEstimate) {
    const double inf = std::numeric_limits<double>::infinity();
    const auto est = kf0({{0.2, 1.0}, {0.0, inf}, {-0.1, 1.0}}, 0.05);
    EXPECT_EQ(est, (std::vector<double>{0.2, 0.2, -0.1}));
    EXPECT_EQ(kf0({{0.0, inf}}, 0.05).front(), 0.05);
}

TEST(EmFit, LogLikelihoodMonotone) {
    Rng data_rng(7);
    std::vector<std::vector<PseudoObs>> data;
    for (int k = 0; k < 10; ++k) data.push_back(simulate_scalar(0.9, 0.01, 0.02, 200, data_rng));
    EmOptions opts;
    opts.n_iters = 100;
    opts.n_restarts = 3;
    Rng rng(1);
    const auto r1 = em_fit<1>(data, opts, rng);
    const auto r2 = em_fit<2>(data, opts, rng);
    for (const auto& rs : r1.restarts) {
        ASSERT_FALSE(rs.degenerate);
        for (std::size_t i = 1; i < rs.log_likelihood.size(); ++i)
            EXPECT_GE(rs.log_likelihood[i] - rs.log_likelihood[i - 1], -1e-8) << i;
    }
    for (const auto& rs : r2.restarts) {
        if (rs.degenerate) continue;
        for (std::size_t i = 1; i < rs.log_likelihood.size(); ++i)
            EXPECT_GE(rs.log_likelihood[i] - rs.log_likelihood[i - 1], -1e-8) << i;
    }
}

TEST(EmFit, RecoversFirstOrderDynamics) {
    const double a = 0.95, q = 0.002;
    Rng data_rng(8);
    std::vector<std::vector<PseudoObs>> data;
    for (int k = 0; k < 20; ++k) data.push_back(simulate_scalar(a, q, 0.005, 500, data_rng, 0.3 * data_rng.normal()));
    EmOptions opts;
    opts.n_iters = 300;
    opts.n_restarts = 2;
    Rng rng(2);
    const auto res = em_fit<1>(data, opts, rng);
    EXPECT_NEAR(res.model().A(0, 0), a, 0.05);
    EXPECT_NEAR(res.model().Q(0, 0), q, 0.3 * q);
}

TEST(EmFit, BestRestartHasHighestLikelihood) {
    Rng data_rng(9);
    std::vector<std::vector<PseudoObs>> data{simulate_scalar(0.8, 0.01, 0.02, 100, data_rng)};
    EmOptions opts;
    opts.n_iters = 5;
    opts.n_restarts = 4;
    Rng rng(3);
    const auto res = em_fit<2>(data, opts, rng);
    for (const auto& rs : res.restarts) {
        if (!rs.degenerate) EXPECT_LE(rs.log_likelihood.back(), res.trace().back());
    }
    EXPECT_THROW(em_fit<1>({}, opts, rng), std::invalid_argument);
}

TEST(EmMStep, ClosedFormOnSyntheticSufficientStatistics) {
    // Two deterministic steps with zero covariance: A = S10 S00^{-1}.
    SmootherResult<1> sr;
    sr.steps.resize(3);
    const double xs[3] = {1.0, 0.5, 0.3};
    for (int t = 0; t < 3; ++t) {
        sr.steps[static_cast<std::size_t>(t)].mean(0) = xs[t];
        sr.steps[static_cast<std::size_t>(t)].cov(0, 0) = 0.01;
        sr.steps[static_cast<std::size_t>(t)].lag_one_cov(0, 0) = t ? 0.004 : 0.0;
    }
    LdsModel<1> m;
    ASSERT_TRUE(em_m_step<1>(m, {sr}));
    const double S00 = 0.01 * 2 + 1.0 + 0.25;
    const double S10 = 0.008 + 0.5 + 0.15;
    const double S11 = 0.01 * 2 + 0.25 + 0.09;
    EXPECT_NEAR(m.A(0, 0), S10 / S00, 1e-15);
    EXPECT_NEAR(m.Q(0, 0), (S11 - S10 / S00 * S10) / 2.0, 1e-15);
}

TEST(Baselines, TrueModelOrdering) {
    const LdsWorld w;
    const PpcCodec c;
    const auto test = generate_lds_dataset(w, c, 10, 1000, std::uint64_t{11});
    const double k0 = kf0_mse(c, test);
    const double kopt = kalman_mse(true_model(w), c, test);
    EXPECT_LT(kopt, k0);
    EXPECT_GT(kopt, 0.0);
}
