#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "refh/circular.hpp"
#include "refh/exp_family.hpp"
#include "refh/rng.hpp"

namespace refh {

// ---------------------------------------------------------------------------
// Damped oscillator

/// Mass-spring-damper with Euler discretization. The state is the
/// displacement from the middle of the stimulus interval [0, L) and the
/// velocity; positions leaving the interval wrap to the opposite side.
struct LdsWorld {
    double mass = 5.0;
    double damping = 0.25;
    double stiffness = 3.0;
    double dt = 0.05;
    Eigen::Matrix2d sigma_trans = Eigen::Vector2d(5e-7, 5e-5).asDiagonal();
    double length = 1.0;
    double init_velocity_std = 1e-3;

    Eigen::Matrix2d A() const {
        Eigen::Matrix2d a;
        a << 1.0, dt, -(stiffness / mass) * dt, 1.0 - (damping / mass) * dt;
        return a;
    }

    double spectral_radius() const { return A().eigenvalues().cwiseAbs().maxCoeff(); }

    void validate() const {
        if (!(mass > 0.0) || !(dt > 0.0) || damping < 0.0 || stiffness < 0.0 || !(length > 0.0)) {
            throw std::invalid_argument("LdsWorld: nonpositive physical constant");
        }
        if ((sigma_trans - sigma_trans.transpose()).cwiseAbs().maxCoeff() > 0.0) {
            throw std::invalid_argument("LdsWorld: asymmetric process covariance");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sigma_trans);
        if (es.eigenvalues().minCoeff() < 0.0) throw std::invalid_argument("LdsWorld: process covariance not PSD");
        if (init_velocity_std < 0.0) throw std::invalid_argument("LdsWorld: negative init_velocity_std");
    }
};

struct LdsState {
    double position = 0.0;  // in [0, L)
    double velocity = 0.0;
};

namespace detail {
inline Eigen::Vector2d correlated_normal(const Eigen::Matrix2d& cov, Rng& rng) {
    // Cholesky with a PSD fallback for singular covariances.
    Eigen::LDLT<Eigen::Matrix2d> ldlt(cov);
    const Eigen::Vector2d z(rng.normal(), rng.normal());
    const Eigen::Vector2d d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Eigen::Vector2d w = ldlt.matrixL() * d.cwiseProduct(z);
    return ldlt.transpositionsP().transpose() * w;
}
}  // namespace detail

/// T states starting from `x0`; x0.position is an absolute position in [0, L).
inline std::vector<LdsState> simulate_lds_from(const LdsWorld& world, LdsState x0, std::size_t T, Rng& rng) {
    world.validate();
    if (T < 1) throw std::invalid_argument("simulate_lds: T must be >= 1");
    const Eigen::Matrix2d A = world.A();
    const double L = world.length;
    std::vector<LdsState> out;
    out.reserve(T);
    Eigen::Vector2d x(signed_wrap(x0.position - 0.5 * L, L), x0.velocity);
    out.push_back({wrap(x(0) + 0.5 * L, L), x(1)});
    for (std::size_t t = 1; t < T; ++t) {
        x = A * x + detail::correlated_normal(world.sigma_trans, rng);
        x(0) = signed_wrap(x(0), L);
        out.push_back({wrap(x(0) + 0.5 * L, L), x(1)});
    }
    return out;
}

/// Initial position uniform on [0, L), initial velocity N(0, init_velocity_std^2).
inline std::vector<LdsState> simulate_lds(const LdsWorld& world, std::size_t T, Rng& rng) {
    LdsState x0;
    x0.position = world.length * rng.uniform();
    x0.velocity = world.init_velocity_std * rng.normal();
    return simulate_lds_from(world, x0, T, rng);
}

// ---------------------------------------------------------------------------
// Population code

/// Poisson neurons with Gaussian tuning curves (wrap-aware distance) whose
/// centers tile [0, L) evenly; FWHM is L/6.
struct PpcCodec {
    std::size_t n_units = 15;
    double length = 1.0;
    double gain_lo = 6.4;
    double gain_hi = 9.6;

    Eigen::VectorXd centers() const {
        Eigen::VectorXd c(static_cast<Eigen::Index>(n_units));
        for (std::size_t i = 0; i < n_units; ++i) c(static_cast<Eigen::Index>(i)) = (static_cast<double>(i) + 0.5) * length / static_cast<double>(n_units);
        return c;
    }

    double sigma_tc() const { return (length / 6.0) / (2.0 * std::sqrt(2.0 * std::numbers::ln2)); }

    /// Unit-gain tuning curves evaluated at x.
    Eigen::VectorXd tuning(double x) const {
        const Eigen::VectorXd c = centers();
        const double s2 = sigma_tc() * sigma_tc();
        Eigen::VectorXd out(c.size());
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            const double d = signed_wrap(x - c(i), length);
            out(i) = std::exp(-d * d / (2.0 * s2));
        }
        return out;
    }

    void validate() const {
        if (n_units == 0 || !(length > 0.0) || !(gain_lo > 0.0) || !(gain_hi >= gain_lo)) {
            throw std::invalid_argument("PpcCodec: invalid configuration");
        }
    }
};

inline Eigen::VectorXd ppc_encode(const PpcCodec& codec, double x, double gain, Rng& rng) {
    if (!(gain >= 0.0)) throw std::invalid_argument("ppc_encode: negative gain");
    const Eigen::VectorXd rates = gain * codec.tuning(x);
    Eigen::VectorXd counts(rates.size());
    for (Eigen::Index i = 0; i < rates.size(); ++i) counts(i) = rates(i) > 0.0 ? sample_poisson(rates(i), rng) : 0.0;
    return counts;
}

inline double sample_gain(const PpcCodec& codec, Rng& rng) {
    return codec.gain_lo + (codec.gain_hi - codec.gain_lo) * rng.uniform();
}

struct LdsTrajectory {
    Matrix counts;           // n_units x T spike counts
    Eigen::VectorXd position;
    Eigen::VectorXd velocity;
    Eigen::VectorXd gain;

    std::size_t length() const { return static_cast<std::size_t>(counts.cols()); }
};

/// Latent sequences are kept for evaluation; trainers see only `counts`.
struct LdsDataset {
    std::vector<LdsTrajectory> trajectories;

    std::vector<Matrix> observations() const {
        std::vector<Matrix> out;
        out.reserve(trajectories.size());
        for (const auto& t : trajectories) out.push_back(t.counts);
        return out;
    }
};

inline LdsTrajectory generate_lds_trajectory(const LdsWorld& world, const PpcCodec& codec, std::size_t T, Rng& rng) {
    codec.validate();
    const auto states = simulate_lds(world, T, rng);
    LdsTrajectory tr;
    const auto n = static_cast<Eigen::Index>(T);
    tr.counts.resize(static_cast<Eigen::Index>(codec.n_units), n);
    tr.position.resize(n);
    tr.velocity.resize(n);
    tr.gain.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto& s = states[static_cast<std::size_t>(t)];
        tr.position(t) = s.position;
        tr.velocity(t) = s.velocity;
        tr.gain(t) = sample_gain(codec, rng);
        tr.counts.col(t) = ppc_encode(codec, s.position, tr.gain(t), rng);
    }
    return tr;
}

/// Trajectory i is drawn from stream i of `seed`.
inline LdsDataset generate_lds_dataset(const LdsWorld& world, const PpcCodec& codec, std::size_t n_traj, std::size_t T,
                                       std::uint64_t seed) {
    LdsDataset ds;
    ds.trajectories.reserve(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng = Rng::derive(seed, i);
        ds.trajectories.push_back(generate_lds_trajectory(world, codec, T, rng));
    }
    return ds;
}

inline LdsDataset generate_lds_dataset(const LdsWorld& world, const PpcCodec& codec, std::size_t n_traj, std::size_t T,
                                       Rng& rng) {
    return generate_lds_dataset(world, codec, n_traj, T, rng.next_u64());
}

// ---------------------------------------------------------------------------
// Bouncing balls

/// Equal-mass balls in a square box with elastic walls and collisions.
struct BounceWorld {
    std::size_t patch_size = 30;
    std::size_t n_balls = 3;
    double radius = 2.0;
    double speed_lo = 0.3;  // px/frame
    double speed_hi = 0.9;
    int substeps = 10;
    int placement_tries = 1000;

    std::size_t n_pixels() const { return patch_size * patch_size; }

    void validate() const {
        if (patch_size == 0 || !(radius > 0.0) || 2.0 * radius >= static_cast<double>(patch_size)) {
            throw std::invalid_argument("BounceWorld: ball does not fit in the patch");
        }
        if (speed_lo < 0.0 || speed_hi < speed_lo) throw std::invalid_argument("BounceWorld: invalid speed range");
        if (substeps < 1 || placement_tries < 1) throw std::invalid_argument("BounceWorld: substeps and placement_tries must be >= 1");
    }
};

struct Ball {
    Eigen::Vector2d pos;
    Eigen::Vector2d vel;
};

inline double kinetic_energy(const std::vector<Ball>& balls) {
    double e = 0.0;
    for (const auto& b : balls) e += 0.5 * b.vel.squaredNorm();
    return e;
}

/// Non-overlapping random placement; throws after `placement_tries` failures.
inline std::vector<Ball> place_balls(const BounceWorld& w, Rng& rng) {
    w.validate();
    const double lo = w.radius;
    const double hi = static_cast<double>(w.patch_size) - w.radius;
    for (int attempt = 0; attempt < w.placement_tries; ++attempt) {
        std::vector<Ball> balls;
        bool ok = true;
        for (std::size_t i = 0; i < w.n_balls && ok; ++i) {
            Ball b;
            b.pos = {lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform()};
            for (const auto& o : balls) ok = ok && (o.pos - b.pos).norm() >= 2.0 * w.radius;
            const double speed = w.speed_lo + (w.speed_hi - w.speed_lo) * rng.uniform();
            const double angle = 2.0 * std::numbers::pi * rng.uniform();
            b.vel = speed * Eigen::Vector2d(std::cos(angle), std::sin(angle));
            balls.push_back(b);
        }
        if (ok) return balls;
    }
    throw std::runtime_error("place_balls: could not place balls without overlap");
}

namespace detail {

inline void reflect_walls(const BounceWorld& w, Ball& b) {
    const double lo = w.radius;
    const double hi = static_cast<double>(w.patch_size) - w.radius;
    for (int k = 0; k < 2; ++k) {
        if (b.pos(k) < lo) {
            b.pos(k) = 2.0 * lo - b.pos(k);
            b.vel(k) = std::abs(b.vel(k));
        } else if (b.pos(k) > hi) {
            b.pos(k) = 2.0 * hi - b.pos(k);
            b.vel(k) = -std::abs(b.vel(k));
        }
        b.pos(k) = std::clamp(b.pos(k), lo, hi);
    }
}

// Equal masses: exchange the velocity components along the line of centers,
// then separate the pair symmetrically.
inline void collide(const BounceWorld& w, Ball& a, Ball& b) {
    Eigen::Vector2d d = b.pos - a.pos;
    const double dist = d.norm();
    const double min_dist = 2.0 * w.radius;
    if (dist >= min_dist) return;
    const Eigen::Vector2d n = dist > 0.0 ? Eigen::Vector2d(d / dist) : Eigen::Vector2d(1.0, 0.0);
    const double va = a.vel.dot(n);
    const double vb = b.vel.dot(n);
    if (va - vb > 0.0) {  // approaching
        a.vel += (vb - va) * n;
        b.vel += (va - vb) * n;
    }
    const double push = 0.5 * (min_dist - dist);
    a.pos -= push * n;
    b.pos += push * n;
}

}  // namespace detail

/// Advances the balls by one frame in `substeps` sub-steps.
inline void step_balls(const BounceWorld& w, std::vector<Ball>& balls) {
    const double h = 1.0 / static_cast<double>(w.substeps);
    for (int s = 0; s < w.substeps; ++s) {
        for (auto& b : balls) b.pos += h * b.vel;
        for (std::size_t i = 0; i < balls.size(); ++i)
            for (std::size_t j = i + 1; j < balls.size(); ++j) detail::collide(w, balls[i], balls[j]);
        for (auto& b : balls) detail::reflect_walls(w, b);
    }
}

/// Binary frame, row-major; pixel (i, j) is on iff its center (j+0.5, i+0.5)
/// lies within `radius` of some ball center.
inline Eigen::VectorXd rasterize(const BounceWorld& w, const std::vector<Ball>& balls) {
    const auto P = static_cast<Eigen::Index>(w.patch_size);
    Eigen::VectorXd frame = Eigen::VectorXd::Zero(P * P);
    const double r2 = w.radius * w.radius;
    for (const auto& b : balls) {
        const auto i0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(b.pos(1) - w.radius)));
        const auto i1 = std::min<Eigen::Index>(P - 1, static_cast<Eigen::Index>(std::ceil(b.pos(1) + w.radius)));
        const auto j0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(b.pos(0) - w.radius)));
        const auto j1 = std::min<Eigen::Index>(P - 1, static_cast<Eigen::Index>(std::ceil(b.pos(0) + w.radius)));
        for (Eigen::Index i = i0; i <= i1; ++i) {
            for (Eigen::Index j = j0; j <= j1; ++j) {
                const double dx = static_cast<double>(j) + 0.5 - b.pos(0);
                const double dy = static_cast<double>(i) + 0.5 - b.pos(1);
                if (dx * dx + dy * dy <= r2) frame(i * P + j) = 1.0;
            }
        }
    }
    return frame;
}

/// n_pixels x T binary frames.
inline Matrix simulate_bounce(const BounceWorld& w, std::size_t T, Rng& rng) {
    if (T < 1) throw std::invalid_argument("simulate_bounce: T must be >= 1");
    auto balls = place_balls(w, rng);
    Matrix frames(static_cast<Eigen::Index>(w.n_pixels()), static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) step_balls(w, balls);
        frames.col(static_cast<Eigen::Index>(t)) = rasterize(w, balls);
    }
    return frames;
}

/// Trajectory i is drawn from stream i of `seed`.
inline std::vector<Matrix> generate_bounce_dataset(const BounceWorld& w, std::size_t n_traj, std::size_t T,
                                                   std::uint64_t seed) {
    std::vector<Matrix> out;
    out.reserve(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng = Rng::derive(seed, i);
        out.push_back(simulate_bounce(w, T, rng));
    }
    return out;
}

}  // namespace refh
