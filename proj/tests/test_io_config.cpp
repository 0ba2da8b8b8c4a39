#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "refh/config.hpp"
#include "refh/io.hpp"

using namespace refh;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("refh_io_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

bool bit_equal(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (std::memcmp(a.data() + i, b.data() + i, sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST(Fmt, ShortestRoundTrip) {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.uniform() * 40) - 20);
        EXPECT_EQ(io::parse_double(io::fmt(v)), v);
    }
    EXPECT_EQ(io::fmt(0.5), "0.5");
    EXPECT_EQ(io::parse_double(io::fmt(std::numeric_limits<double>::denorm_min())), std::numeric_limits<double>::denorm_min());
    EXPECT_THROW(io::parse_double("1.5x"), std::exception);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir dir;
    Rng rng(11);
    auto p = HarmoniumParams::recurrent(LayerSpec::uniform(UnitFamily::Poisson, 15), 7, rng, 0.3);
    p.b_obs(2) = 1.0 / 3.0;
    p.W(1, 1) = -std::numeric_limits<double>::min();
    io::Checkpoint c{ModelKind::RTRBM, TrainState::start(p, 987654321987654321ULL)};
    c.state.pretrain_done = 3;
    c.state.next_renewal = 12;
    c.state.velocity.dW.setConstant(std::nextafter(1e-3, 1.0));
    c.state.velocity.db_rcrnt(4) = -2.5e-300;

    const fs::path f = dir.path / "ck.json";
    io::save_checkpoint(f, c);
    EXPECT_FALSE(fs::exists(f.string() + ".tmp"));
    const auto back = io::load_checkpoint(f);
    EXPECT_EQ(back.kind, ModelKind::RTRBM);
    EXPECT_EQ(back.state.seed, c.state.seed);
    EXPECT_EQ(back.state.pretrain_done, 3u);
    EXPECT_EQ(back.state.next_renewal, 12u);
    EXPECT_TRUE(back.state.params == c.state.params);
    EXPECT_TRUE(bit_equal(back.state.params.W, p.W));
    EXPECT_TRUE(bit_equal(back.state.params.U, p.U));
    EXPECT_TRUE(back.state.velocity == c.state.velocity);
}

TEST(Checkpoint, RejectsOtherVersions) {
    TempDir dir;
    Rng rng(1);
    io::Checkpoint c{ModelKind::REFH, TrainState::start(HarmoniumParams::recurrent(LayerSpec::uniform(UnitFamily::Bernoulli, 3), 2, rng, 0.1), 1)};
    auto j = io::to_json(c);
    j["format_version"] = 2;
    EXPECT_THROW(io::checkpoint_from_json(j), std::runtime_error);
}

TEST(Rle, RoundTrip) {
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        const auto n = static_cast<Eigen::Index>(1 + rng.uniform() * 60);
        Eigen::VectorXd f(n);
        const double density = rng.uniform();
        for (Eigen::Index i = 0; i < n; ++i) f(i) = rng.uniform() < density ? 1.0 : 0.0;
        const auto runs = io::rle_encode(f);
        std::size_t total = 0;
        for (auto r : runs) total += r;
        EXPECT_EQ(total, static_cast<std::size_t>(n));
        EXPECT_EQ(io::rle_decode(runs, static_cast<std::size_t>(n)), f);
    }
    Eigen::VectorXd on = Eigen::VectorXd::Ones(4);
    EXPECT_EQ(io::rle_encode(on), (std::vector<std::size_t>{0, 4}));
    EXPECT_THROW(io::rle_decode({2, 3}, 4), std::runtime_error);
    EXPECT_THROW(io::rle_decode({1, 1}, 4), std::runtime_error);
    Eigen::VectorXd bad(2);
    bad << 0.0, 0.5;
    EXPECT_THROW(io::rle_encode(bad), std::invalid_argument);
}

TEST(Datasets, LdsRoundTrip) {
    TempDir dir;
    const auto ds = generate_lds_dataset(LdsWorld{}, PpcCodec{}, 3, 17, std::uint64_t{42});
    io::save_lds_dataset(dir.path, ds, {"lds", 42, json{{"note", "x"}}});
    io::DatasetHeader h;
    const auto back = io::load_lds_dataset(dir.path, &h);
    EXPECT_EQ(h.kind, "lds");
    EXPECT_EQ(h.seed, 42u);
    EXPECT_EQ(h.config.at("note"), "x");
    ASSERT_EQ(back.trajectories.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_TRUE(bit_equal(back.trajectories[k].counts, ds.trajectories[k].counts));
        EXPECT_TRUE(bit_equal(back.trajectories[k].position, ds.trajectories[k].position));
        EXPECT_TRUE(bit_equal(back.trajectories[k].velocity, ds.trajectories[k].velocity));
        EXPECT_TRUE(bit_equal(back.trajectories[k].gain, ds.trajectories[k].gain));
    }
}

TEST(Datasets, BounceRoundTrip) {
    TempDir dir;
    BounceWorld w;
    w.patch_size = 12;
    w.n_balls = 2;
    const auto ds = generate_bounce_dataset(w, 4, 9, std::uint64_t{8});
    io::save_bounce_dataset(dir.path, ds, w.patch_size, {"balls", 8, json::object()});
    std::size_t P = 0;
    const auto back = io::load_bounce_dataset(dir.path, &P);
    EXPECT_EQ(P, 12u);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) EXPECT_EQ(back[k], ds[k]);
}

TEST(Datasets, KindMismatchThrows) {
    TempDir dir;
    const auto ds = generate_lds_dataset(LdsWorld{}, PpcCodec{}, 1, 3, std::uint64_t{1});
    io::save_lds_dataset(dir.path, ds, {"lds", 1, json::object()});
    EXPECT_THROW(io::load_bounce_dataset(dir.path), std::exception);
    EXPECT_THROW(io::load_lds_dataset(dir.path / "missing"), std::exception);
}

TEST(Metrics, AppendKeepsSingleHeader) {
    TempDir dir;
    const fs::path f = dir.path / "m.csv";
    {
        io::MetricsWriter w(f);
        w.write({0, 0, "recon", 0.25});
    }
    {
        io::MetricsWriter w(f, true);
        w.write({1, 1, "recon", 0.125});
    }
    EXPECT_EQ(io::read_text(f), "epoch,batch,metric,value\n0,0,recon,0.25\n1,1,recon,0.125\n");
}

TEST(Presets, EchoScheduleConstants) {
    const auto r = presets::lds_refh();
    EXPECT_EQ(r.hidden, 240u);
    EXPECT_EQ(r.schedule, schedules::lds_refh());
    EXPECT_EQ(r.schedule.epochs, 90u);
    EXPECT_EQ(r.schedule.cd_steps, 1);
    EXPECT_DOUBLE_EQ(r.schedule.learning_rate.start.obs_weights, 1.0 / 500.0);
    EXPECT_DOUBLE_EQ(r.schedule.learning_rate.start.rcrnt_weights, 1.0 / 50.0);
    EXPECT_DOUBLE_EQ(r.schedule.learning_rate.start.biases, 1.0 / 120.0);
    EXPECT_DOUBLE_EQ(r.schedule.weight_decay, 0.001);
    EXPECT_EQ(r.schedule.minibatch.size, 40u);
    EXPECT_EQ(r.schedule.batch, (BatchPlan{40, 1000, 5}));

    const auto s = presets::lds_trbm_rtrbm();
    EXPECT_EQ(s.model, ModelKind::RTRBM);
    EXPECT_EQ(s.schedule.epochs, 250u);
    EXPECT_EQ(s.schedule.cd_steps, 25);
    EXPECT_EQ(s.schedule.minibatch.kind, MinibatchScheme::Kind::Contiguous);
    EXPECT_EQ(s.schedule.minibatch.size, 100u);
    ASSERT_TRUE(s.schedule.pretrain);
    EXPECT_EQ(*s.schedule.pretrain, (Pretraining{30, 5}));

    const auto b = presets::balls();
    EXPECT_EQ(b.world, WorldKind::Balls);
    EXPECT_EQ(b.hidden, 400u);
    EXPECT_EQ(b.bounce.patch_size, 30u);
    EXPECT_EQ(b.bounce.n_balls, 3u);

    for (const auto& name : presets::names()) {
        const auto c = presets::by_name(name);
        EXPECT_EQ(c.preset, name);
        EXPECT_NO_THROW(c.validate()) << name;
    }
    EXPECT_THROW(presets::by_name("nope"), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
    for (const auto& name : presets::names()) {
        const auto c = presets::by_name(name);
        const json j = to_json(c);
        EXPECT_EQ(to_json(config_from_json(j)), j) << name;
        EXPECT_EQ(config_from_json(j).schedule, c.schedule) << name;
    }
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(resolve_config(json{{"bogus", 1}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json{{"model", {{"hiddn", 10}}}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json{{"schedule", {{"batch", {{"size", 3}}}}}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json{{"world", {{"kind", "pendulum"}}}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json::array()), std::invalid_argument);
}

TEST(Config, ResolveMergesOverPreset) {
    const auto c = resolve_config(json{{"preset", "lds-trbm-rtrbm"}, {"model", {{"hidden", 12}}}, {"schedule", {{"epochs", 3}}}});
    EXPECT_EQ(c.preset, "lds-trbm-rtrbm");
    EXPECT_EQ(c.hidden, 12u);
    EXPECT_EQ(c.schedule.epochs, 3u);
    EXPECT_EQ(c.schedule.cd_steps, 25);  // untouched keys keep the preset value
    EXPECT_EQ(c.model, ModelKind::RTRBM);

    const auto d = resolve_config(nullptr);
    EXPECT_EQ(d.preset, "lds-refh");
    EXPECT_EQ(to_json(d).dump(), to_json(presets::lds_refh()).dump());

    // The command-line preset wins over the one in the file.
    EXPECT_EQ(resolve_config(json{{"preset", "balls"}}, "lds-test").preset, "lds-test");
}

TEST(Config, ValidationCatchesInconsistentSettings) {
    EXPECT_THROW(resolve_config(json{{"model", {{"kind", "rtrbm"}}}}), std::invalid_argument);  // across-trajectory minibatches
    EXPECT_THROW(resolve_config(json{{"model", {{"hidden", 0}}}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json{{"predict", {{"n_steps", 2}, {"n_average", 3}}}}), std::invalid_argument);
    EXPECT_THROW(resolve_config(json{{"world", {{"codec", {{"length", 2.0}}}}}}), std::invalid_argument);
}
