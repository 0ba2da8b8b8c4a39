#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "refh/baselines.hpp"
#include "refh/config.hpp"
#include "refh/eval.hpp"
#include "refh/io.hpp"
#include "refh/temporal.hpp"
#include "refh/worldgen.hpp"

namespace refh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommandOptions {
    json user_config;  // null when no --config was given
    std::string preset;
    std::optional<std::uint64_t> seed;
    fs::path out = ".";
    fs::path dataset;
    fs::path checkpoint;
    bool with_baselines = false;
    bool resume = false;
    std::string direction = "reverse";
    std::size_t steps = 100;
    int n_gibbs = 50;
};

// Independent random streams under the configured seed.
enum Stream : std::uint64_t {
    kDataStream = 1,
    kTrainStream = 2,
    kInitStream = 3,
    kEvalStream = 4,
    kBaselineDataStream = 5,
    kBaselineEmStream = 6,
    kGenerateStream = 7,
};

inline ExperimentConfig load_config(const CommandOptions& o) {
    ExperimentConfig c = resolve_config(o.user_config, o.preset);
    if (o.seed) c.seed = *o.seed;
    return c;
}

inline void write_resolved_config(const fs::path& dir, const ExperimentConfig& c) {
    auto out = io::open_out(dir / "config.resolved.json");
    out << to_json(c).dump(2) << '\n';
}

inline LayerSpec observation_spec(const ExperimentConfig& c) {
    if (c.world == WorldKind::Lds) return LayerSpec::uniform(UnitFamily::Poisson, c.codec.n_units);
    return LayerSpec::uniform(UnitFamily::Bernoulli, c.bounce.n_pixels());
}

inline io::DatasetHeader dataset_header(const ExperimentConfig& c, std::uint64_t seed) {
    json cfg = to_json(c);
    return {c.world == WorldKind::Lds ? "lds" : "balls", seed, cfg["world"]};
}

inline std::string dataset_seed_note(std::uint64_t seed) { return "seed " + std::to_string(seed); }

// ---------------------------------------------------------------------------

inline int cmd_generate(const CommandOptions& o, std::ostream& log) {
    const ExperimentConfig c = load_config(o);
    const std::uint64_t seed = stream_seed(c.seed, kDataStream);
    if (c.world == WorldKind::Lds) {
        const auto ds = generate_lds_dataset(c.lds, c.codec, c.data.n_trajectories, c.data.length, seed);
        io::save_lds_dataset(o.out, ds, dataset_header(c, c.seed));
    } else {
        const auto ds = generate_bounce_dataset(c.bounce, c.data.n_trajectories, c.data.length, seed);
        io::save_bounce_dataset(o.out, ds, c.bounce.patch_size, dataset_header(c, c.seed));
    }
    write_resolved_config(o.out, c);
    log << "generated " << (c.world == WorldKind::Lds ? "lds" : "balls") << " dataset: " << c.data.n_trajectories
        << " trajectories x " << c.data.length << " steps, " << dataset_seed_note(c.seed) << ", in " << o.out.string()
        << '\n';
    return 0;
}

/// Training batches: chunks of a stored dataset when one is given, else
/// fresh trajectories drawn from the configured world per batch index.
inline TrajectorySource make_source(const ExperimentConfig& c, const fs::path& dataset) {
    const std::size_t n = c.schedule.batch.n_trajectories;
    const std::size_t T = c.schedule.batch.trajectory_length;
    if (!dataset.empty()) {
        std::vector<Matrix> pool;
        if (c.world == WorldKind::Lds) pool = io::load_lds_dataset(dataset).observations();
        else pool = io::load_bounce_dataset(dataset);
        if (pool.empty()) throw std::invalid_argument("train: dataset is empty");
        return [pool = std::move(pool), n](std::size_t index) {
            std::vector<Matrix> out;
            out.reserve(n);
            for (std::size_t i = 0; i < n; ++i) out.push_back(pool[(index * n + i) % pool.size()]);
            return out;
        };
    }
    const std::uint64_t base = stream_seed(c.seed, kDataStream + 100);
    if (c.world == WorldKind::Lds) {
        return [world = c.lds, codec = c.codec, n, T, base](std::size_t index) {
            return generate_lds_dataset(world, codec, n, T, stream_seed(base, index)).observations();
        };
    }
    return [world = c.bounce, n, T, base](std::size_t index) {
        return generate_bounce_dataset(world, n, T, stream_seed(base, index));
    };
}

namespace detail {
// Keeps the header and the rows of batches before `first_dropped`.
inline void truncate_metrics(const fs::path& path, std::size_t first_dropped) {
    if (!fs::exists(path)) return;
    const std::string text = io::read_text(path);
    std::istringstream in(text);
    std::ostringstream kept;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            kept << line << '\n';
            header = false;
            continue;
        }
        const auto cells = io::split(line, ',');
        if (cells.size() == 4 && static_cast<std::size_t>(io::parse_double(cells[1])) < first_dropped) kept << line << '\n';
    }
    auto out = io::open_out(path);
    out << kept.str();
}
}  // namespace detail

inline int cmd_train(const CommandOptions& o, std::ostream& log) {
    const ExperimentConfig c = load_config(o);
    const fs::path latest = o.out / "checkpoint_latest.json";
    const fs::path metrics_path = o.out / "metrics.csv";

    io::Checkpoint ck;
    ck.kind = c.model;
    bool resumed = false;
    if (o.resume && fs::exists(latest)) {
        ck = io::load_checkpoint(latest);
        if (ck.kind != c.model) throw std::invalid_argument("train: checkpoint model kind differs from config");
        if (!(ck.state.params.obs_spec == observation_spec(c)) || ck.state.params.n_hid() != c.hidden) {
            throw std::invalid_argument("train: checkpoint shape differs from config");
        }
        resumed = true;
    } else {
        Rng init = Rng::derive(c.seed, kInitStream);
        HarmoniumParams p = HarmoniumParams::recurrent(observation_spec(c), c.hidden, init, c.init_std);
        ck.state = TrainState::start(std::move(p), stream_seed(c.seed, kTrainStream));
    }
    fs::create_directories(o.out);
    write_resolved_config(o.out, c);
    if (resumed) detail::truncate_metrics(metrics_path, ck.state.pretrain_done + ck.state.next_renewal);
    io::MetricsWriter metrics(metrics_path, resumed);

    TrainHooks hooks;
    hooks.on_metric = [&](const MetricRow& r) { metrics.write(r); };
    hooks.on_renewal = [&](const TrainState& s) {
        metrics.flush();
        io::save_checkpoint(latest, {c.model, s});
    };
    TrainOptions topts;
    topts.bptt = c.bptt;
    const TrajectorySource source = make_source(c, o.dataset);
    train(c.model, ck.state, source, c.schedule, hooks, topts);
    metrics.flush();
    io::save_checkpoint(o.out / "checkpoint.json", ck);
    io::save_checkpoint(latest, ck);
    log << "trained " << to_string(c.model) << " (" << c.hidden << " hidden) for " << c.schedule.epochs << " epochs"
        << (resumed ? " (resumed)" : "") << "; checkpoint in " << (o.out / "checkpoint.json").string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

inline LdsDataset baseline_training_data(const ExperimentConfig& c) {
    return generate_lds_dataset(c.lds, c.codec, c.benchmark.train_trajectories, c.benchmark.train_length,
                                stream_seed(c.seed, kBaselineDataStream));
}

inline BaselineSuite baselines_for(const ExperimentConfig& c, const LdsDataset& test) {
    EmOptions em;
    em.n_restarts = c.benchmark.restarts;
    em.n_iters = c.benchmark.em_iters;
    return run_lds_baselines(c.lds, c.codec, baseline_training_data(c), test, em, stream_seed(c.seed, kBaselineEmStream));
}

inline void write_report_rows(std::ostream& out, const EvalReport& r) {
    for (std::size_t i = 0; i < r.per_trajectory_mse.size(); ++i) out << r.model_id << ',' << i << ',' << io::fmt(r.per_trajectory_mse[i]) << '\n';
    out << r.model_id << ",all," << io::fmt(r.aggregate_mse) << '\n';
}

inline int cmd_evaluate(const CommandOptions& o, std::ostream& log) {
    const ExperimentConfig c = load_config(o);
    if (o.checkpoint.empty() || o.dataset.empty()) throw std::invalid_argument("evaluate: --checkpoint and --dataset are required");
    const io::Checkpoint ck = io::load_checkpoint(o.checkpoint);
    const HarmoniumParams& p = ck.state.params;
    fs::create_directories(o.out);
    write_resolved_config(o.out, c);
    auto out = io::open_out(o.out / "eval.csv");
    out << "model,trajectory,mse\n";
    const std::string id = to_string(ck.kind);
    if (c.world == WorldKind::Lds) {
        const LdsDataset test = io::load_lds_dataset(o.dataset);
        const EvalReport r = evaluate_lds(p, test, c.codec, id);
        write_report_rows(out, r);
        log << id << " position MSE " << r.aggregate_mse << " over " << r.n_steps << " steps\n";
        if (o.with_baselines) {
            const BaselineSuite b = baselines_for(c, test);
            out << "KF0,all," << io::fmt(b.kf0) << '\n';
            out << "KFopt,all," << io::fmt(b.kfopt) << '\n';
            out << "KF1,all," << io::fmt(b.kf1[b.best1]) << '\n';
            out << "KF2,all," << io::fmt(b.kf2[b.best2]) << '\n';
            log << "KF0 " << b.kf0 << "  KF1 " << b.kf1[b.best1] << "  KF2 " << b.kf2[b.best2] << "  KFopt " << b.kfopt << '\n';
        }
    } else {
        const auto test = io::load_bounce_dataset(o.dataset);
        Rng rng = Rng::derive(c.seed, kEvalStream);
        const EvalReport r = evaluate_next_frame(p, test, rng, c.predict, id);
        write_report_rows(out, r);
        log << id << " next-frame MSE " << r.aggregate_mse << '\n';
        if (o.with_baselines) {
            const EvalReport copy = evaluate_copy_frame(test, "copy");
            write_report_rows(out, copy);
            log << "copy-frame MSE " << copy.aggregate_mse << '\n';
        }
    }
    return 0;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

inline int cmd_benchmark(const CommandOptions& o, std::ostream& log) {
    const ExperimentConfig c = load_config(o);
    if (c.world != WorldKind::Lds) throw std::invalid_argument("benchmark: Kalman baselines need the LDS world");
    if (o.dataset.empty()) throw std::invalid_argument("benchmark: --dataset is required");
    const LdsDataset test = io::load_lds_dataset(o.dataset);
    const BaselineSuite b = baselines_for(c, test);
    fs::create_directories(o.out);
    write_resolved_config(o.out, c);
    auto out = io::open_out(o.out / "benchmark.csv");
    out << "model,restart,test_mse\n";
    out << "KF0,0," << io::fmt(b.kf0) << '\n';
    out << "KFopt,0," << io::fmt(b.kfopt) << '\n';
    for (std::size_t r = 0; r < b.kf1.size(); ++r) out << "KF1," << r << ',' << io::fmt(b.kf1[r]) << '\n';
    for (std::size_t r = 0; r < b.kf2.size(); ++r) out << "KF2," << r << ',' << io::fmt(b.kf2[r]) << '\n';
    const double m1 = median(b.kf1), m2 = median(b.kf2);
    const bool ordered = b.kfopt <= m2 && m2 <= m1 && m1 <= b.kf0;
    out << "# medians: KFopt=" << io::fmt(b.kfopt) << " KF2=" << io::fmt(m2) << " KF1=" << io::fmt(m1)
        << " KF0=" << io::fmt(b.kf0) << "; ordering KFopt<=KF2<=KF1<=KF0: " << (ordered ? "holds" : "violated") << '\n';
    log << "KF0 " << b.kf0 << "  KF1(median) " << m1 << "  KF2(median) " << m2 << "  KFopt " << b.kfopt
        << (ordered ? "" : "  [ordering violated]") << '\n';
    return 0;
}

inline int cmd_gen_traj(const CommandOptions& o, std::ostream& log) {
    const ExperimentConfig c = load_config(o);
    if (o.checkpoint.empty()) throw std::invalid_argument("gen-traj: --checkpoint is required");
    if (o.direction != "reverse" && o.direction != "forward") throw std::invalid_argument("gen-traj: --direction must be reverse or forward");
    if (o.steps == 0) throw std::invalid_argument("gen-traj: --steps must be positive");
    const HarmoniumParams p = io::load_checkpoint(o.checkpoint).state.params;
    Rng rng = Rng::derive(c.seed, kGenerateStream);
    GeneratedSequence g;
    if (o.direction == "reverse") {
        const Matrix seed_hidden = sample_layer(p.hid_spec, Matrix::Constant(static_cast<Eigen::Index>(p.n_hid()), 1, 0.5), rng);
        g = generate_reverse_refh(p, o.steps, seed_hidden.col(0), rng);
    } else {
        g = generate_forward_gibbs(p, o.steps, o.n_gibbs, rng);
    }
    fs::create_directories(o.out);
    write_resolved_config(o.out, c);
    auto frames = io::open_out(o.out / "frames.csv");
    frames << 't';
    for (Eigen::Index i = 0; i < g.frames.rows(); ++i) frames << ",v" << i;
    frames << '\n';
    for (Eigen::Index t = 0; t < g.frames.cols(); ++t) {
        frames << t;
        for (Eigen::Index i = 0; i < g.frames.rows(); ++i) frames << ',' << io::fmt(g.frames(i, t));
        frames << '\n';
    }
    auto passes = io::open_out(o.out / "passes.csv");
    passes << "direction,steps,n_gibbs,up_passes,down_passes,total_passes\n";
    passes << o.direction << ',' << o.steps << ',' << (o.direction == "forward" ? o.n_gibbs : 0) << ',' << g.passes.up << ','
           << g.passes.down << ',' << g.passes.total() << '\n';
    log << o.direction << " generation: " << o.steps << " steps, " << g.passes.total() << " layer passes\n";
    return 0;
}

}  // namespace refh::cli
