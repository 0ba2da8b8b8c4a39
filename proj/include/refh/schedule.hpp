#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

namespace refh {

/// Learning rates for the three parameter blocks.
struct BlockRates {
    double obs_weights = 0.0;    // W, observation-to-hidden
    double rcrnt_weights = 0.0;  // U, recurrent-to-hidden
    double biases = 0.0;

    BlockRates scaled(double f) const { return {obs_weights * f, rcrnt_weights * f, biases * f}; }
    friend bool operator==(const BlockRates&, const BlockRates&) = default;
};

struct LearningRateSchedule {
    enum class Kind { Linear, Exponential };
    Kind kind = Kind::Linear;
    BlockRates start;
    BlockRates end;            // Linear only: value reached at the final epoch
    double decay_base = 1.1;   // Exponential only: rate = start * decay_base^(-epoch)

    static LearningRateSchedule linear(BlockRates start, BlockRates end = {}) {
        return {Kind::Linear, start, end, 1.0};
    }
    static LearningRateSchedule exponential(BlockRates start, double decay_base) {
        return {Kind::Exponential, start, {}, decay_base};
    }

    BlockRates at(std::size_t epoch, std::size_t n_epochs) const {
        if (kind == Kind::Exponential) return start.scaled(std::pow(decay_base, -static_cast<double>(epoch)));
        const double f = n_epochs == 0 ? 0.0 : static_cast<double>(epoch) / static_cast<double>(n_epochs);
        auto lerp = [f](double a, double b) { return a + (b - a) * f; };
        return {lerp(start.obs_weights, end.obs_weights), lerp(start.rcrnt_weights, end.rcrnt_weights),
                lerp(start.biases, end.biases)};
    }

    friend bool operator==(const LearningRateSchedule&, const LearningRateSchedule&) = default;
};

struct MomentumSchedule {
    enum class Kind { Constant, Approach };
    Kind kind = Kind::Constant;
    double limit = 0.9;        // Constant value, or the asymptote for Approach
    double amplitude = 0.0;    // Approach: rho = limit - amplitude * decay_base^(-epoch)
    double decay_base = 1.1;

    static MomentumSchedule constant(double rho) { return {Kind::Constant, rho, 0.0, 1.0}; }
    static MomentumSchedule approach(double limit, double amplitude, double decay_base) {
        return {Kind::Approach, limit, amplitude, decay_base};
    }

    double at(std::size_t epoch) const {
        if (kind == Kind::Constant) return limit;
        return limit - amplitude * std::pow(decay_base, -static_cast<double>(epoch));
    }

    friend bool operator==(const MomentumSchedule&, const MomentumSchedule&) = default;
};

struct MinibatchScheme {
    enum class Kind {
        Contiguous,           // consecutive time steps of one trajectory
        AcrossTrajectories,   // the same time step of several trajectories
    };
    Kind kind = Kind::AcrossTrajectories;
    std::size_t size = 40;     // time steps (Contiguous) or trajectories (AcrossTrajectories)

    friend bool operator==(const MinibatchScheme&, const MinibatchScheme&) = default;
};

/// A batch of fresh trajectories, renewed every `renewal_period` epochs.
struct BatchPlan {
    std::size_t n_trajectories = 40;
    std::size_t trajectory_length = 1000;
    std::size_t renewal_period = 5;

    friend bool operator==(const BatchPlan&, const BatchPlan&) = default;
};

/// Static pretraining with the recurrent activities held at zero.
struct Pretraining {
    std::size_t n_batches = 30;
    int cd_steps = 5;

    friend bool operator==(const Pretraining&, const Pretraining&) = default;
};

struct TrainSchedule {
    std::size_t epochs = 90;
    int cd_steps = 1;
    LearningRateSchedule learning_rate;
    MomentumSchedule momentum;
    double weight_decay = 0.0;
    MinibatchScheme minibatch;
    BatchPlan batch;
    std::optional<Pretraining> pretrain;
    /// Feed Bernoulli samples of the previous hidden means instead of the means.
    bool sample_recurrent = false;

    std::size_t n_renewals() const {
        return batch.renewal_period == 0 ? 0 : (epochs + batch.renewal_period - 1) / batch.renewal_period;
    }

    void validate() const {
        if (cd_steps < 1) throw std::invalid_argument("TrainSchedule: cd_steps must be >= 1");
        if (weight_decay < 0.0) throw std::invalid_argument("TrainSchedule: negative weight decay");
        if (batch.renewal_period == 0 || batch.n_trajectories == 0 || batch.trajectory_length == 0) {
            throw std::invalid_argument("TrainSchedule: empty batch plan");
        }
        if (minibatch.size == 0) throw std::invalid_argument("TrainSchedule: zero minibatch size");
        if (minibatch.kind == MinibatchScheme::Kind::AcrossTrajectories && minibatch.size > batch.n_trajectories) {
            throw std::invalid_argument("TrainSchedule: minibatch spans more trajectories than the batch holds");
        }
        const auto& s = learning_rate.start;
        if (s.obs_weights < 0.0 || s.rcrnt_weights < 0.0 || s.biases < 0.0) {
            throw std::invalid_argument("TrainSchedule: negative learning rate");
        }
        if (pretrain && pretrain->cd_steps < 1) throw std::invalid_argument("TrainSchedule: pretraining cd_steps < 1");
    }

    friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

namespace schedules {

/// rEFH on the oscillator data: CD-1, 90 epochs, exponentially decaying
/// per-block rates, momentum rising toward 0.98, minibatches of 40 trajectories.
inline TrainSchedule lds_refh() {
    TrainSchedule s;
    s.epochs = 90;
    s.cd_steps = 1;
    s.learning_rate = LearningRateSchedule::exponential({1.0 / 500.0, 1.0 / 50.0, 1.0 / 120.0}, 1.1);
    s.momentum = MomentumSchedule::approach(0.98, 0.5, 1.1);
    s.weight_decay = 0.001;
    s.minibatch = {MinibatchScheme::Kind::AcrossTrajectories, 40};
    s.batch = {40, 1000, 5};
    return s;
}

/// TRBM/RTRBM scheme: CD-25, momentum 0.9, rate falling linearly to zero over
/// 250 epochs, 100-step single-trajectory minibatches, 30 pretraining batches.
inline TrainSchedule sequential(double initial_rate) {
    TrainSchedule s;
    s.epochs = 250;
    s.cd_steps = 25;
    s.learning_rate = LearningRateSchedule::linear({initial_rate, initial_rate, initial_rate});
    s.momentum = MomentumSchedule::constant(0.9);
    s.weight_decay = 0.0;
    s.minibatch = {MinibatchScheme::Kind::Contiguous, 100};
    s.batch = {400, 100, 5};
    s.pretrain = Pretraining{30, 5};
    return s;
}

inline TrainSchedule lds_trbm_rtrbm() { return sequential(1.0 / 1500.0); }
inline TrainSchedule balls() { return sequential(1.0 / 100.0); }

}  // namespace schedules

}  // namespace refh
