#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "refh/exp_family.hpp"
#include "refh/harmonium.hpp"
#include "refh/rng.hpp"
#include "refh/schedule.hpp"

namespace refh {

/// Hidden-unit posterior means carried from one time step to the next.
struct RecurrentState {
    Vector r;
};

enum class ModelKind { REFH, TRBM, RTRBM };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::REFH: return "refh";
        case ModelKind::TRBM: return "trbm";
        case ModelKind::RTRBM: return "rtrbm";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "refh") return ModelKind::REFH;
    if (s == "trbm") return ModelKind::TRBM;
    if (s == "rtrbm") return ModelKind::RTRBM;
    throw std::invalid_argument("unknown model kind: " + s);
}

// ---------------------------------------------------------------------------
// Filtering

/// r_t = E[h_t | r_{t-1}, s_t] for every column s_t of `obs_seq`; r_{-1} is
/// `r_init`, or zero when `r_init` is empty. Column t of the result is r_t.
inline Matrix filter_pass(const HarmoniumParams& p, const Matrix& obs_seq, const Vector& r_init = Vector()) {
    if (static_cast<std::size_t>(obs_seq.rows()) != p.n_obs()) throw std::invalid_argument("filter_pass: observation dimension mismatch");
    if (p.n_rcrnt() != p.n_hid()) throw std::invalid_argument("filter_pass: recurrent layer must mirror the hidden layer");
    Matrix r = r_init.size() == 0 ? Matrix(Matrix::Zero(p.n_rcrnt(), 1)) : Matrix(r_init);
    if (r.rows() != static_cast<Eigen::Index>(p.n_rcrnt())) throw std::invalid_argument("filter_pass: r_init dimension mismatch");
    Matrix out(p.n_hid(), obs_seq.cols());
    for (Eigen::Index t = 0; t < obs_seq.cols(); ++t) {
        r = up_pass(p, r, Matrix(obs_seq.col(t)));
        out.col(t) = r.col(0);
    }
    return out;
}

/// filter_pass over several trajectories; equal-length trajectories are
/// advanced together as one batch per time step.
inline std::vector<Matrix> filter_trajectories(const HarmoniumParams& p, const std::vector<Matrix>& trajectories) {
    std::vector<Matrix> out;
    if (trajectories.empty()) return out;
    const Eigen::Index T = trajectories.front().cols();
    bool equal = true;
    for (const auto& tr : trajectories) equal = equal && tr.cols() == T && tr.rows() == trajectories.front().rows();
    if (!equal) {
        for (const auto& tr : trajectories) out.push_back(filter_pass(p, tr));
        return out;
    }
    if (p.n_rcrnt() != p.n_hid()) throw std::invalid_argument("filter_pass: recurrent layer must mirror the hidden layer");
    const auto B = static_cast<Eigen::Index>(trajectories.size());
    out.assign(trajectories.size(), Matrix(p.n_hid(), T));
    Matrix r = Matrix::Zero(p.n_rcrnt(), B);
    Matrix s(trajectories.front().rows(), B);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index b = 0; b < B; ++b) s.col(b) = trajectories[static_cast<std::size_t>(b)].col(t);
        r = up_pass(p, r, s);
        for (Eigen::Index b = 0; b < B; ++b) out[static_cast<std::size_t>(b)].col(t) = r.col(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backprop through time

/// Generic backward recursion y_t = J_t (direct_t + U' y_{t+1}), y_{T+1} = 0,
/// where direct_t is minus the partial derivative of the loss with respect to
/// m_t and J_t the (diagonal) Jacobian of the hidden nonlinearity at step t.
/// Then -dL/dU = sum_t y_t m_{t-1}', -dL/dW = sum_t y_t s_t', -dL/db_hid = sum_t y_t.
inline Matrix bptt_backward_direct(const HarmoniumParams& p, const Matrix& m_seq, const Matrix& direct) {
    if (m_seq.cols() != direct.cols() || m_seq.rows() != direct.rows()) {
        throw std::invalid_argument("bptt_backward: misaligned sequences");
    }
    if (static_cast<std::size_t>(m_seq.rows()) != p.n_hid() || p.n_rcrnt() != p.n_hid()) {
        throw std::invalid_argument("bptt_backward: hidden dimension mismatch");
    }
    const Eigen::Index T = m_seq.cols();
    Matrix y = Matrix::Zero(m_seq.rows(), T);
    Vector next = Vector::Zero(m_seq.rows());
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        Vector jac(m_seq.rows());
        Eigen::Index off = 0;
        for (const auto& b : p.hid_spec.blocks()) {
            for (std::size_t i = 0; i < b.count; ++i, ++off) jac(off) = mean_derivative(b.family, m_seq(off, t));
        }
        Vector in = direct.col(t);
        in.noalias() += p.U.transpose() * next;
        y.col(t) = jac.cwiseProduct(in);
        next = y.col(t);
    }
    return y;
}

/// RTRBM recursion y_t = J_t U' (g_t + y_{t+1}), where g_t (column t of
/// `hidbias_grads`) is the gradient of log q(s_{t+1} | m_t) with respect to
/// the hidden biases. Column t of the result is y_t.
inline Matrix bptt_backward(const HarmoniumParams& p, const Matrix& m_seq, const Matrix& s_seq,
                            const Matrix& hidbias_grads) {
    if (m_seq.cols() != s_seq.cols() || m_seq.cols() != hidbias_grads.cols() || hidbias_grads.rows() != m_seq.rows()) {
        throw std::invalid_argument("bptt_backward: misaligned sequences");
    }
    if (static_cast<std::size_t>(s_seq.rows()) != p.n_obs()) throw std::invalid_argument("bptt_backward: observation dimension mismatch");
    if (static_cast<std::size_t>(m_seq.rows()) != p.n_hid() || p.n_rcrnt() != p.n_hid()) {
        throw std::invalid_argument("bptt_backward: hidden dimension mismatch");
    }
    const Matrix direct = p.U.transpose() * hidbias_grads;
    return bptt_backward_direct(p, m_seq, direct);
}

/// Sums y_t r_{t-1}', y_t s_t' and y_t into the U, W and hidden-bias blocks.
/// Column t of `r_prev` is the recurrent input at step t.
inline GradientSet bptt_terms(const HarmoniumParams& p, const Matrix& y, const Matrix& r_prev, const Matrix& s_seq) {
    GradientSet g = GradientSet::zeros_like(p);
    g.dW.noalias() = y * s_seq.transpose();
    g.dU.noalias() = y * r_prev.transpose();
    g.db_hid = y.rowwise().sum();
    return g;
}

// ---------------------------------------------------------------------------
// Training

using TrajectorySource = std::function<std::vector<Matrix>(std::size_t index)>;

struct MetricRow {
    std::size_t epoch;
    std::size_t batch;
    std::string metric;
    double value;
};

/// Everything needed to resume training at a renewal boundary.
struct TrainState {
    HarmoniumParams params;
    GradientSet velocity;
    std::uint64_t seed = 0;
    std::size_t pretrain_done = 0;
    std::size_t next_renewal = 0;

    static TrainState start(HarmoniumParams p, std::uint64_t seed) {
        TrainState s;
        s.velocity = GradientSet::zeros_like(p);
        s.params = std::move(p);
        s.seed = seed;
        return s;
    }
};

struct TrainHooks {
    std::function<void(const MetricRow&)> on_metric;
    std::function<void(const TrainState&)> on_renewal;
    /// Stop after this many renewals in the current call (resumption tests).
    std::size_t max_renewals = static_cast<std::size_t>(-1);
};

struct TrainOptions {
    /// RTRBM only; when false the backward terms are dropped and the update
    /// is exactly the TRBM update.
    bool bptt = true;
    CdOptions cd;
};

/// Heavy-ball update: v <- rho v + lr (g - decay * w); w <- w + v. Weight
/// decay applies to the two weight matrices only.
inline void momentum_step(HarmoniumParams& p, GradientSet& v, const GradientSet& g, const BlockRates& lr, double rho,
                          double weight_decay) {
    v.dW = rho * v.dW + lr.obs_weights * (g.dW - weight_decay * p.W);
    v.dU = rho * v.dU + lr.rcrnt_weights * (g.dU - weight_decay * p.U);
    v.db_hid = rho * v.db_hid + lr.biases * g.db_hid;
    v.db_obs = rho * v.db_obs + lr.biases * g.db_obs;
    v.db_rcrnt = rho * v.db_rcrnt + lr.biases * g.db_rcrnt;
    p.W += v.dW;
    p.U += v.dU;
    p.b_hid += v.db_hid;
    p.b_obs += v.db_obs;
    p.b_rcrnt += v.db_rcrnt;
}

struct SegmentGradient {
    GradientSet gradient;
    double reconstruction_error = 0.0;
};

/// Gradient for one contiguous segment of a trajectory. Hidden means are
/// recomputed through the segment with the current parameters, starting from
/// `r_init`. TRBM and RTRBM share the CD part exactly; the RTRBM adds the
/// backward terms, averaged over the segment like the CD statistics.
inline SegmentGradient segment_gradient(ModelKind kind, const HarmoniumParams& p, const Matrix& segment,
                                        const Vector& r_init, int n_cd, bool sample_recurrent, Rng& rng,
                                        const TrainOptions& opts = {}) {
    const Eigen::Index L = segment.cols();
    const Matrix m = filter_pass(p, segment, r_init);
    FrameBatch batch;
    batch.s = segment;
    batch.r_prev.resize(p.n_rcrnt(), L);
    batch.r_prev.col(0) = r_init.size() == 0 ? Vector(Vector::Zero(p.n_rcrnt())) : r_init;
    if (L > 1) batch.r_prev.rightCols(L - 1) = m.leftCols(L - 1);
    if (sample_recurrent) batch.r_prev = sample_layer(p.rcrnt_spec, batch.r_prev, rng);

    const CdMode mode = kind == ModelKind::REFH ? CdMode::REFH : CdMode::TRBM;
    CdPhases phases = cd_phases(p, batch, n_cd, mode, rng, opts.cd);
    SegmentGradient out{phases.gradient(), phases.reconstruction_error};
    if (kind == ModelKind::RTRBM && opts.bptt && L > 1) {
        Matrix g = Matrix::Zero(p.n_hid(), L);
        g.leftCols(L - 1) = (phases.hidden_pos - phases.hidden_neg).rightCols(L - 1);
        const Matrix y = bptt_backward(p, m, segment, g);
        GradientSet extra = bptt_terms(p, y, batch.r_prev, segment);
        extra *= 1.0 / static_cast<double>(L);
        out.gradient += extra;
    }
    return out;
}

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
}

inline void check_trajectories(const HarmoniumParams& p, const std::vector<Matrix>& trajs) {
    if (trajs.empty()) throw std::invalid_argument("train: data source yielded no trajectories");
    for (const auto& t : trajs) {
        if (static_cast<std::size_t>(t.rows()) != p.n_obs()) throw std::invalid_argument("train: observation dimension mismatch");
        if (t.cols() == 0) throw std::invalid_argument("train: empty trajectory");
    }
}

struct EpochStats {
    double recon = 0.0;
    double grad_norm = 0.0;
    std::size_t n = 0;
};

// One pass over `trajs` with the recurrent inputs zeroed (static pretraining)
// or filtered (`zero_recurrent` false).
inline EpochStats run_epoch(ModelKind kind, HarmoniumParams& p, GradientSet& vel, const std::vector<Matrix>& trajs,
                            const std::vector<Matrix>& frozen, bool zero_recurrent, const TrainSchedule& sched,
                            int n_cd, const BlockRates& lr, double rho, Rng& rng, const TrainOptions& opts) {
    EpochStats stats;
    const CdMode mode = kind == ModelKind::REFH ? CdMode::REFH : CdMode::TRBM;
    const auto nr = static_cast<Eigen::Index>(p.n_rcrnt());

    if (sched.minibatch.kind == MinibatchScheme::Kind::AcrossTrajectories) {
        if (kind == ModelKind::RTRBM) throw std::invalid_argument("train: the RTRBM needs contiguous minibatches");
        const Eigen::Index T = trajs.front().cols();
        for (const auto& t : trajs) {
            if (t.cols() != T) throw std::invalid_argument("train: across-trajectory minibatches need equal lengths");
        }
        const std::size_t group = sched.minibatch.size;
        const std::size_t n_groups = (trajs.size() + group - 1) / group;
        std::vector<std::size_t> order(static_cast<std::size_t>(T) * n_groups);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_indices(order, rng);
        for (std::size_t item : order) {
            const auto t = static_cast<Eigen::Index>(item / n_groups);
            const std::size_t g0 = (item % n_groups) * group;
            const std::size_t g1 = std::min(trajs.size(), g0 + group);
            const auto B = static_cast<Eigen::Index>(g1 - g0);
            FrameBatch batch{Matrix::Zero(nr, B), Matrix(p.n_obs(), B)};
            for (std::size_t k = g0; k < g1; ++k) {
                const auto j = static_cast<Eigen::Index>(k - g0);
                batch.s.col(j) = trajs[k].col(t);
                if (!zero_recurrent && t > 0) batch.r_prev.col(j) = frozen[k].col(t - 1);
            }
            if (!zero_recurrent && sched.sample_recurrent) batch.r_prev = sample_layer(p.rcrnt_spec, batch.r_prev, rng);
            CdPhases ph = cd_phases(p, batch, n_cd, mode, rng, opts.cd);
            const GradientSet grad = ph.gradient();
            momentum_step(p, vel, grad, lr, rho, sched.weight_decay);
            stats.recon += ph.reconstruction_error;
            stats.grad_norm += std::sqrt(grad.squared_norm());
            ++stats.n;
        }
        return stats;
    }

    // Contiguous segments.
    const auto L = static_cast<Eigen::Index>(sched.minibatch.size);
    std::vector<std::pair<std::size_t, Eigen::Index>> segments;
    for (std::size_t k = 0; k < trajs.size(); ++k)
        for (Eigen::Index s = 0; s < trajs[k].cols(); s += L) segments.emplace_back(k, s);
    std::vector<std::size_t> order(segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);
    for (std::size_t item : order) {
        const auto [k, start] = segments[item];
        const Eigen::Index len = std::min(L, trajs[k].cols() - start);
        const Matrix seg = trajs[k].middleCols(start, len);
        SegmentGradient sg;
        if (zero_recurrent) {
            FrameBatch batch{Matrix::Zero(nr, len), seg};
            CdPhases ph = cd_phases(p, batch, n_cd, mode, rng, opts.cd);
            sg = {ph.gradient(), ph.reconstruction_error};
        } else {
            const Vector r0 = start == 0 ? Vector(Vector::Zero(nr)) : Vector(frozen[k].col(start - 1));
            sg = segment_gradient(kind, p, seg, r0, n_cd, sched.sample_recurrent, rng, opts);
        }
        momentum_step(p, vel, sg.gradient, lr, rho, sched.weight_decay);
        stats.recon += sg.reconstruction_error;
        stats.grad_norm += std::sqrt(sg.gradient.squared_norm());
        ++stats.n;
    }
    return stats;
}

inline void emit(const TrainHooks& hooks, std::size_t epoch, std::size_t batch, const char* name, double value) {
    if (hooks.on_metric) hooks.on_metric({epoch, batch, name, value});
}

}  // namespace detail

/// Runs (or resumes) training from `state`. Batches are requested from
/// `source` by index: pretraining batch k is index k, training renewal j is
/// index n_pretrain + j; the random stream of each index is derived from
/// state.seed, so a resumed run reproduces an uninterrupted one.
///
/// Within a renewal the recurrent inputs of across-trajectory minibatches are
/// frozen at the renewal's filter pass; contiguous segments recompute them
/// with the current parameters.
inline void train(ModelKind kind, TrainState& state, const TrajectorySource& source, const TrainSchedule& sched,
                  const TrainHooks& hooks = {}, const TrainOptions& opts = {}) {
    sched.validate();
    state.params.validate();
    if (state.params.n_rcrnt() != state.params.n_hid()) throw std::invalid_argument("train: recurrent layer must mirror the hidden layer");
    if (!source) throw std::invalid_argument("train: empty data source");
    const std::size_t n_pre = sched.pretrain ? sched.pretrain->n_batches : 0;
    std::size_t budget = hooks.max_renewals;

    while (state.pretrain_done < n_pre && budget > 0) {
        const std::size_t k = state.pretrain_done;
        Rng rng = Rng::derive(state.seed, k);
        const auto trajs = source(k);
        detail::check_trajectories(state.params, trajs);
        const auto stats = detail::run_epoch(kind, state.params, state.velocity, trajs, {}, true, sched,
                                             sched.pretrain->cd_steps, sched.learning_rate.at(0, sched.epochs),
                                             sched.momentum.at(0), rng, opts);
        detail::emit(hooks, 0, k, "pretrain_reconstruction_error", stats.recon / static_cast<double>(stats.n));
        ++state.pretrain_done;
        --budget;
        if (hooks.on_renewal) hooks.on_renewal(state);
    }

    const std::size_t n_ren = sched.n_renewals();
    while (state.pretrain_done == n_pre && state.next_renewal < n_ren && budget > 0) {
        const std::size_t j = state.next_renewal;
        const std::size_t index = n_pre + j;
        Rng rng = Rng::derive(state.seed, index);
        const auto trajs = source(index);
        detail::check_trajectories(state.params, trajs);
        const std::size_t e0 = j * sched.batch.renewal_period;
        const std::size_t e1 = std::min(sched.epochs, e0 + sched.batch.renewal_period);
        const std::vector<Matrix> frozen = filter_trajectories(state.params, trajs);
        for (std::size_t e = e0; e < e1; ++e) {
            const BlockRates lr = sched.learning_rate.at(e, sched.epochs);
            const double rho = sched.momentum.at(e);
            const auto stats = detail::run_epoch(kind, state.params, state.velocity, trajs, frozen, false, sched,
                                                 sched.cd_steps, lr, rho, rng, opts);
            const double n = static_cast<double>(stats.n);
            detail::emit(hooks, e, index, "reconstruction_error", stats.recon / n);
            detail::emit(hooks, e, index, "gradient_norm", stats.grad_norm / n);
            detail::emit(hooks, e, index, "lr_obs_weights", lr.obs_weights);
            detail::emit(hooks, e, index, "lr_rcrnt_weights", lr.rcrnt_weights);
            detail::emit(hooks, e, index, "lr_biases", lr.biases);
            detail::emit(hooks, e, index, "momentum", rho);
        }
        if (!state.params.W.allFinite() || !state.params.U.allFinite()) throw std::runtime_error("train: parameters diverged");
        ++state.next_renewal;
        --budget;
        if (hooks.on_renewal) hooks.on_renewal(state);
    }
}

namespace detail {
inline HarmoniumParams train_with(ModelKind kind, HarmoniumParams params, const TrajectorySource& source,
                                  const TrainSchedule& sched, Rng& rng, const TrainOptions& opts = {}) {
    TrainState st = TrainState::start(std::move(params), rng.next_u64());
    train(kind, st, source, sched, {}, opts);
    return std::move(st.params);
}
}  // namespace detail

/// Recurrent EFH: previous hidden means are visible data, CD in REFH mode.
inline HarmoniumParams train_refh(HarmoniumParams params, const TrajectorySource& source, const TrainSchedule& sched,
                                  Rng& rng) {
    return detail::train_with(ModelKind::REFH, std::move(params), source, sched, rng);
}

/// TRBM: previous hidden means are a dynamic bias, clamped in the negative phase.
inline HarmoniumParams train_trbm(HarmoniumParams params, const TrajectorySource& source, const TrainSchedule& sched,
                                  Rng& rng) {
    return detail::train_with(ModelKind::TRBM, std::move(params), source, sched, rng);
}

/// RTRBM: TRBM gradients plus backprop-through-time terms.
inline HarmoniumParams train_rtrbm(HarmoniumParams params, const TrajectorySource& source, const TrainSchedule& sched,
                                   Rng& rng, const TrainOptions& opts = {}) {
    return detail::train_with(ModelKind::RTRBM, std::move(params), source, sched, rng, opts);
}

// ---------------------------------------------------------------------------
// Generation and prediction

struct PassCounts {
    std::size_t up = 0;
    std::size_t down = 0;

    std::size_t total() const { return up + down; }
};

struct GeneratedSequence {
    Matrix frames;  // obs x T, forward time order
    PassCounts passes;
};

/// Reverse-time generation: from each hidden vector one downward pass yields
/// both the current observation means and the previous hidden means; the
/// latter (sampled, unless `sample_hidden` is false) is the next hidden
/// vector. No Gibbs iteration. Emits observation means.
inline GeneratedSequence generate_reverse_refh(const HarmoniumParams& p, std::size_t T, const Vector& seed_hidden,
                                               Rng& rng, bool sample_hidden = true) {
    if (static_cast<std::size_t>(seed_hidden.size()) != p.n_hid()) throw std::invalid_argument("generate_reverse_refh: seed dimension mismatch");
    if (p.n_rcrnt() != p.n_hid()) throw std::invalid_argument("generate_reverse_refh: model has no recurrent conditional");
    GeneratedSequence out;
    out.frames.resize(p.n_obs(), static_cast<Eigen::Index>(T));
    Matrix h = seed_hidden;
    for (std::size_t k = 0; k < T; ++k) {
        const auto t = static_cast<Eigen::Index>(T - 1 - k);
        out.frames.col(t) = down_pass_obs(p, h).col(0);
        ++out.passes.down;
        const Matrix r = down_pass_rcrnt(p, h);
        ++out.passes.down;
        h = sample_hidden ? sample_layer(p.rcrnt_spec, r, rng) : r;
    }
    return out;
}

/// Forward generation by clamped Gibbs sampling: at each step, `n_gibbs`
/// down/up cycles with the recurrent input fixed at the current state; the
/// last visible sample is emitted and the last up pass is the next state.
inline GeneratedSequence generate_forward_gibbs(const HarmoniumParams& p, std::size_t T, int n_gibbs, Rng& rng) {
    if (n_gibbs < 1) throw std::invalid_argument("generate_forward_gibbs: n_gibbs must be >= 1");
    GeneratedSequence out;
    out.frames.resize(p.n_obs(), static_cast<Eigen::Index>(T));
    Matrix r = Matrix::Zero(p.n_rcrnt(), 1);
    for (std::size_t t = 0; t < T; ++t) {
        Matrix h = p.n_rcrnt() == p.n_hid() ? sample_layer(p.hid_spec, r, rng) : Matrix(Matrix::Zero(p.n_hid(), 1));
        Matrix s;
        Matrix hmean;
        for (int k = 0; k < n_gibbs; ++k) {
            s = sample_layer(p.obs_spec, down_pass_obs(p, h), rng);
            ++out.passes.down;
            hmean = up_pass(p, r, s);
            ++out.passes.up;
            if (k + 1 < n_gibbs) h = sample_layer(p.hid_spec, hmean, rng);
        }
        out.frames.col(static_cast<Eigen::Index>(t)) = s.col(0);
        r = hmean;
    }
    return out;
}

struct PredictOptions {
    int n_steps = 50;
    int n_average = 25;
};

/// E[s_{t+1} | r_t] for every column r_t of `states`, estimated by Gibbs
/// sampling with the recurrent input clamped; the observation means of the
/// last `n_average` of `n_steps` down passes are averaged.
inline Matrix predict_next_frames(const HarmoniumParams& p, const Matrix& states, Rng& rng,
                                  const PredictOptions& opts = {}) {
    if (opts.n_steps < 1 || opts.n_average < 1 || opts.n_average > opts.n_steps) {
        throw std::invalid_argument("predict_next_frame: need 1 <= n_average <= n_steps");
    }
    if (static_cast<std::size_t>(states.rows()) != p.n_rcrnt() || p.n_rcrnt() != p.n_hid()) {
        throw std::invalid_argument("predict_next_frame: state dimension mismatch");
    }
    Matrix h = sample_layer(p.hid_spec, states, rng);
    Matrix acc = Matrix::Zero(p.n_obs(), states.cols());
    for (int k = 0; k < opts.n_steps; ++k) {
        const Matrix smean = down_pass_obs(p, h);
        if (k >= opts.n_steps - opts.n_average) acc += smean;
        if (k + 1 == opts.n_steps) break;
        const Matrix s = sample_layer(p.obs_spec, smean, rng);
        h = sample_layer(p.hid_spec, up_pass(p, states, s), rng);
    }
    return acc / static_cast<double>(opts.n_average);
}

inline Vector predict_next_frame(const HarmoniumParams& p, const RecurrentState& state, Rng& rng,
                                 const PredictOptions& opts = {}) {
    return predict_next_frames(p, Matrix(state.r), rng, opts).col(0);
}

}  // namespace refh
