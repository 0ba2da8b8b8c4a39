#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "refh/exp_family.hpp"
#include "refh/rng.hpp"

namespace refh {

/// Parameters of one exponential-family harmonium whose visible layer is the
/// concatenation [recurrent block, observation block].
///
/// The hidden natural parameter is W*s + U*r + b_hid; the observation and
/// recurrent natural parameters are W'*h + b_obs and U'*h + b_rcrnt. A static
/// EFH is the special case of an empty recurrent spec.
struct HarmoniumParams {
    LayerSpec obs_spec;
    LayerSpec rcrnt_spec;
    LayerSpec hid_spec;

    Matrix W;        // hidden x obs
    Matrix U;        // hidden x rcrnt
    Vector b_hid;
    Vector b_obs;
    Vector b_rcrnt;

    std::size_t n_obs() const { return obs_spec.size(); }
    std::size_t n_rcrnt() const { return rcrnt_spec.size(); }
    std::size_t n_hid() const { return hid_spec.size(); }

    static HarmoniumParams zeros(LayerSpec obs, LayerSpec rcrnt, LayerSpec hid) {
        if (obs.empty() || hid.empty()) throw std::invalid_argument("HarmoniumParams: observation and hidden layers must be nonempty");
        HarmoniumParams p;
        const auto no = static_cast<Eigen::Index>(obs.size());
        const auto nr = static_cast<Eigen::Index>(rcrnt.size());
        const auto nh = static_cast<Eigen::Index>(hid.size());
        p.obs_spec = std::move(obs);
        p.rcrnt_spec = std::move(rcrnt);
        p.hid_spec = std::move(hid);
        p.W = Matrix::Zero(nh, no);
        p.U = Matrix::Zero(nh, nr);
        p.b_hid = Vector::Zero(nh);
        p.b_obs = Vector::Zero(no);
        p.b_rcrnt = Vector::Zero(nr);
        return p;
    }

    /// Weights i.i.d. N(0, weight_std^2), biases zero.
    static HarmoniumParams random(LayerSpec obs, LayerSpec rcrnt, LayerSpec hid, Rng& rng,
                                  double weight_std = 0.01) {
        HarmoniumParams p = zeros(std::move(obs), std::move(rcrnt), std::move(hid));
        for (Eigen::Index j = 0; j < p.W.cols(); ++j)
            for (Eigen::Index i = 0; i < p.W.rows(); ++i) p.W(i, j) = weight_std * rng.normal();
        for (Eigen::Index j = 0; j < p.U.cols(); ++j)
            for (Eigen::Index i = 0; i < p.U.rows(); ++i) p.U(i, j) = weight_std * rng.normal();
        return p;
    }

    /// Recurrent harmonium: the recurrent block mirrors the hidden layer.
    static HarmoniumParams recurrent(LayerSpec obs, std::size_t n_hidden, Rng& rng, double weight_std = 0.01) {
        return random(std::move(obs), LayerSpec::uniform(UnitFamily::Bernoulli, n_hidden),
                      LayerSpec::uniform(UnitFamily::Bernoulli, n_hidden), rng, weight_std);
    }

    void validate() const {
        const auto nh = static_cast<Eigen::Index>(n_hid());
        const auto no = static_cast<Eigen::Index>(n_obs());
        const auto nr = static_cast<Eigen::Index>(n_rcrnt());
        if (W.rows() != nh || W.cols() != no || U.rows() != nh || U.cols() != nr || b_hid.size() != nh ||
            b_obs.size() != no || b_rcrnt.size() != nr) {
            throw std::invalid_argument("HarmoniumParams: matrix shapes inconsistent with layer specs");
        }
        if (!W.allFinite() || !U.allFinite() || !b_hid.allFinite() || !b_obs.allFinite() || !b_rcrnt.allFinite()) {
            throw std::invalid_argument("HarmoniumParams: non-finite entry");
        }
    }

    friend bool operator==(const HarmoniumParams& a, const HarmoniumParams& b) {
        return a.obs_spec == b.obs_spec && a.rcrnt_spec == b.rcrnt_spec && a.hid_spec == b.hid_spec &&
               a.W == b.W && a.U == b.U && a.b_hid == b.b_hid && a.b_obs == b.b_obs && a.b_rcrnt == b.b_rcrnt;
    }
};

/// Per-block gradient (or velocity) with the shapes of HarmoniumParams.
struct GradientSet {
    Matrix dW;
    Matrix dU;
    Vector db_hid;
    Vector db_obs;
    Vector db_rcrnt;

    static GradientSet zeros_like(const HarmoniumParams& p) {
        return {Matrix::Zero(p.W.rows(), p.W.cols()), Matrix::Zero(p.U.rows(), p.U.cols()),
                Vector::Zero(p.b_hid.size()), Vector::Zero(p.b_obs.size()), Vector::Zero(p.b_rcrnt.size())};
    }

    GradientSet& operator+=(const GradientSet& o) {
        dW += o.dW;
        dU += o.dU;
        db_hid += o.db_hid;
        db_obs += o.db_obs;
        db_rcrnt += o.db_rcrnt;
        return *this;
    }

    GradientSet& operator-=(const GradientSet& o) {
        dW -= o.dW;
        dU -= o.dU;
        db_hid -= o.db_hid;
        db_obs -= o.db_obs;
        db_rcrnt -= o.db_rcrnt;
        return *this;
    }

    GradientSet& operator*=(double s) {
        dW *= s;
        dU *= s;
        db_hid *= s;
        db_obs *= s;
        db_rcrnt *= s;
        return *this;
    }

    double squared_norm() const {
        return dW.squaredNorm() + dU.squaredNorm() + db_hid.squaredNorm() + db_obs.squaredNorm() +
               db_rcrnt.squaredNorm();
    }

    bool all_finite() const {
        return dW.allFinite() && dU.allFinite() && db_hid.allFinite() && db_obs.allFinite() && db_rcrnt.allFinite();
    }

    friend bool operator==(const GradientSet&, const GradientSet&) = default;
};

inline GradientSet operator-(GradientSet a, const GradientSet& b) { return a -= b; }
inline GradientSet operator+(GradientSet a, const GradientSet& b) { return a += b; }

/// Augmented observation [r_prev, s] for a single time step.
struct AugmentedFrame {
    Vector r_prev;
    Vector s;
};

/// Column-stacked augmented frames; column j is one frame.
struct FrameBatch {
    Matrix r_prev;  // rcrnt x B
    Matrix s;       // obs x B

    Eigen::Index size() const { return s.cols(); }

    static FrameBatch from_frames(const std::vector<AugmentedFrame>& frames) {
        if (frames.empty()) return {};
        FrameBatch b;
        const auto B = static_cast<Eigen::Index>(frames.size());
        b.r_prev.resize(frames.front().r_prev.size(), B);
        b.s.resize(frames.front().s.size(), B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& f = frames[static_cast<std::size_t>(j)];
            if (f.r_prev.size() != b.r_prev.rows() || f.s.size() != b.s.rows()) {
                throw std::invalid_argument("FrameBatch: frames of differing dimensions");
            }
            b.r_prev.col(j) = f.r_prev;
            b.s.col(j) = f.s;
        }
        return b;
    }

    AugmentedFrame frame(Eigen::Index j) const { return {r_prev.col(j), s.col(j)}; }
};

namespace detail {

inline void check_batch(const HarmoniumParams& p, const Matrix& r, const Matrix& s) {
    if (static_cast<std::size_t>(s.rows()) != p.n_obs()) throw std::invalid_argument("observation dimension mismatch");
    if (static_cast<std::size_t>(r.rows()) != p.n_rcrnt()) throw std::invalid_argument("recurrent dimension mismatch");
    if (r.cols() != s.cols()) throw std::invalid_argument("recurrent/observation batch sizes differ");
}

inline void check_hidden(const HarmoniumParams& p, const Matrix& h) {
    if (static_cast<std::size_t>(h.rows()) != p.n_hid()) throw std::invalid_argument("hidden dimension mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic passes

inline Matrix hidden_natural(const HarmoniumParams& p, const Matrix& r, const Matrix& s) {
    detail::check_batch(p, r, s);
    Matrix eta = p.W * s;
    if (p.n_rcrnt() > 0) eta.noalias() += p.U * r;
    eta.colwise() += p.b_hid;
    return eta;
}

/// Hidden means E[h | r, s] for every column.
inline Matrix up_pass(const HarmoniumParams& p, const Matrix& r, const Matrix& s) {
    Matrix eta = hidden_natural(p, r, s);
    apply_mean_inplace(p.hid_spec, eta);
    return eta;
}

inline Matrix up_pass(const HarmoniumParams& p, const FrameBatch& b) { return up_pass(p, b.r_prev, b.s); }

inline Vector up_pass(const HarmoniumParams& p, const AugmentedFrame& f) {
    Matrix r = f.r_prev;
    Matrix s = f.s;
    return up_pass(p, r, s).col(0);
}

inline Matrix obs_natural(const HarmoniumParams& p, const Matrix& h) {
    detail::check_hidden(p, h);
    Matrix eta = p.W.transpose() * h;
    eta.colwise() += p.b_obs;
    return eta;
}

inline Matrix rcrnt_natural(const HarmoniumParams& p, const Matrix& h) {
    detail::check_hidden(p, h);
    Matrix eta = p.U.transpose() * h;
    eta.colwise() += p.b_rcrnt;
    return eta;
}

/// Observation means E[s | h].
inline Matrix down_pass_obs(const HarmoniumParams& p, const Matrix& h) {
    Matrix eta = obs_natural(p, h);
    apply_mean_inplace(p.obs_spec, eta);
    return eta;
}

inline Vector down_pass_obs(const HarmoniumParams& p, const Vector& h) {
    return down_pass_obs(p, Matrix(h)).col(0);
}

/// Recurrent means E[r | h]; the conditional the (R)TRBM does not define.
inline Matrix down_pass_rcrnt(const HarmoniumParams& p, const Matrix& h) {
    Matrix eta = rcrnt_natural(p, h);
    if (eta.rows() > 0) apply_mean_inplace(p.rcrnt_spec, eta);
    return eta;
}

inline Vector down_pass_rcrnt(const HarmoniumParams& p, const Vector& h) {
    return down_pass_rcrnt(p, Matrix(h)).col(0);
}

/// log of the unnormalized joint density of (h, r, s), base measures included.
inline double log_unnormalized(const HarmoniumParams& p, const Vector& h, const Vector& r, const Vector& s) {
    double e = h.dot(p.W * s + p.b_hid) + p.b_obs.dot(s);
    if (p.n_rcrnt() > 0) e += h.dot(p.U * r) + p.b_rcrnt.dot(r);
    auto base = [](const LayerSpec& spec, const Vector& x) {
        double acc = 0.0;
        for (auto [off, n] : spec.ranges(UnitFamily::Poisson))
            for (std::size_t i = off; i < off + n; ++i) acc -= std::lgamma(x(static_cast<Eigen::Index>(i)) + 1.0);
        return acc;
    };
    return e + base(p.hid_spec, h) + base(p.obs_spec, s) + base(p.rcrnt_spec, r);
}

// ---------------------------------------------------------------------------
// Sampling

struct ChainOptions {
    /// Use means instead of samples for the visible layer on the final step.
    bool final_visible_means = false;
};

struct ChainResult {
    FrameBatch visible;      // final visible state (samples, or means if requested)
    Matrix obs_means;        // E[s | h] from the final down pass
    Matrix hidden_means;     // up pass of the final visible state
};

/// n_steps full Gibbs steps started from `init`. Each step: hidden sample,
/// down pass, visible sample, up pass. With `clamp_rcrnt` the recurrent
/// subvector stays at its initial value throughout.
inline ChainResult gibbs_chain(const HarmoniumParams& p, const FrameBatch& init, int n_steps, bool clamp_rcrnt,
                               Rng& rng, const ChainOptions& opts = {}) {
    if (n_steps < 1) throw std::invalid_argument("gibbs_chain: n_steps must be >= 1");
    ChainResult out;
    Matrix hmean = up_pass(p, init);
    Matrix r = init.r_prev;
    for (int k = 1; k <= n_steps; ++k) {
        const bool last = k == n_steps;
        const Matrix h = sample_layer(p.hid_spec, hmean, rng);
        out.obs_means = down_pass_obs(p, h);
        Matrix s = (last && opts.final_visible_means) ? out.obs_means : sample_layer(p.obs_spec, out.obs_means, rng);
        if (!clamp_rcrnt && p.n_rcrnt() > 0) {
            const Matrix rmean = down_pass_rcrnt(p, h);
            r = (last && opts.final_visible_means) ? rmean : sample_layer(p.rcrnt_spec, rmean, rng);
        }
        hmean = up_pass(p, r, s);
        if (last) out.visible = {std::move(r), std::move(s)};
    }
    out.hidden_means = std::move(hmean);
    return out;
}

inline ChainResult gibbs_chain(const HarmoniumParams& p, const AugmentedFrame& init, int n_steps, bool clamp_rcrnt,
                               Rng& rng, const ChainOptions& opts = {}) {
    return gibbs_chain(p, FrameBatch::from_frames({init}), n_steps, clamp_rcrnt, rng, opts);
}

// ---------------------------------------------------------------------------
// Contrastive divergence

/// REFH: the recurrent subvector is visible data and is resampled in the
/// negative phase. TRBM: it is a dynamic bias, clamped in the negative phase.
enum class CdMode { REFH, TRBM };

struct CdOptions {
    /// Negative-phase visible statistics from reconstruction means instead of samples.
    bool negative_visible_means = false;
};

/// Both phases of a CD-n estimate plus the per-frame matrices they came from.
struct CdPhases {
    GradientSet positive;
    GradientSet negative;
    Matrix hidden_pos;    // up pass of the data (hid x B)
    Matrix hidden_neg;    // up pass of the final fantasy (hid x B)
    FrameBatch fantasy;   // final negative visible state
    Matrix obs_means;     // final reconstruction means
    double reconstruction_error = 0.0;  // mean over frames of ||s - E[s|h]||^2

    GradientSet gradient() const { return positive - negative; }
};

namespace detail {

inline GradientSet phase_statistics(const Matrix& h, const Matrix& r, const Matrix& s) {
    const double inv_b = 1.0 / static_cast<double>(h.cols());
    GradientSet g;
    g.dW.noalias() = h * s.transpose() * inv_b;
    if (r.rows() > 0) {
        g.dU.noalias() = h * r.transpose() * inv_b;
        g.db_rcrnt = r.rowwise().mean();
    } else {
        g.dU = Matrix::Zero(h.rows(), 0);
        g.db_rcrnt = Vector::Zero(0);
    }
    g.db_hid = h.rowwise().mean();
    g.db_obs = s.rowwise().mean();
    return g;
}

}  // namespace detail

inline CdPhases cd_phases(const HarmoniumParams& p, const FrameBatch& batch, int n_cd, CdMode mode, Rng& rng,
                          const CdOptions& opts = {}) {
    if (batch.size() == 0) throw std::invalid_argument("cd_gradients: empty batch");
    if (n_cd < 1) throw std::invalid_argument("cd_gradients: n_cd must be >= 1");
    CdPhases out;
    out.hidden_pos = up_pass(p, batch);
    out.positive = detail::phase_statistics(out.hidden_pos, batch.r_prev, batch.s);

    const bool clamp = mode == CdMode::TRBM;
    ChainResult chain = gibbs_chain(p, batch, n_cd, clamp, rng, {opts.negative_visible_means});
    out.hidden_neg = std::move(chain.hidden_means);
    out.fantasy = std::move(chain.visible);
    out.obs_means = std::move(chain.obs_means);
    out.negative = detail::phase_statistics(out.hidden_neg, out.fantasy.r_prev, out.fantasy.s);
    if (clamp) out.negative.db_rcrnt = out.positive.db_rcrnt;  // clamped r: no recurrent-bias signal
    out.reconstruction_error = (batch.s - out.obs_means).colwise().squaredNorm().mean();
    return out;
}

/// Batch-averaged positive-minus-negative statistics of CD-n.
inline GradientSet cd_gradients(const HarmoniumParams& p, const FrameBatch& batch, int n_cd, CdMode mode, Rng& rng,
                                const CdOptions& opts = {}) {
    return cd_phases(p, batch, n_cd, mode, rng, opts).gradient();
}

inline GradientSet cd_gradients(const HarmoniumParams& p, const std::vector<AugmentedFrame>& batch, int n_cd,
                                CdMode mode, Rng& rng, const CdOptions& opts = {}) {
    if (batch.empty()) throw std::invalid_argument("cd_gradients: empty batch");
    return cd_gradients(p, FrameBatch::from_frames(batch), n_cd, mode, rng, opts);
}

}  // namespace refh
