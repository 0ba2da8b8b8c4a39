// Trains a small rEFH on oscillator data observed through a Poisson
// population code, then compares its decoded position error with the
// zeroth-order and true-parameter Kalman filters.

#include <cstdio>

#include "refh/refh.hpp"

int main() {
    using namespace refh;
    const LdsWorld world;
    const PpcCodec codec;

    TrainSchedule sched = schedules::lds_refh();
    sched.epochs = 20;
    sched.batch = {40, 500, 5};

    Rng init(1);
    HarmoniumParams params = HarmoniumParams::recurrent(LayerSpec::uniform(UnitFamily::Poisson, codec.n_units), 60, init);
    TrajectorySource source = [&](std::size_t index) {
        return generate_lds_dataset(world, codec, sched.batch.n_trajectories, sched.batch.trajectory_length,
                                    stream_seed(11, index)).observations();
    };
    Rng rng(2);
    params = train_refh(std::move(params), source, sched, rng);

    const LdsDataset test = generate_lds_dataset(world, codec, 10, 1000, std::uint64_t{99});
    const EvalReport r = evaluate_lds(params, test, codec, "refh-60");
    std::printf("rEFH (60 hidden, 20 epochs)  MSE %.3g\n", r.aggregate_mse);
    std::printf("KF0 (no dynamics)            MSE %.3g\n", kf0_mse(codec, test));
    std::printf("KFopt (true parameters)      MSE %.3g\n", kalman_mse(true_model(world), codec, test));
}
