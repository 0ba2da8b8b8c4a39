#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "refh/schedule.hpp"
#include "refh/temporal.hpp"
#include "refh/worldgen.hpp"

namespace refh {

using nlohmann::json;

enum class WorldKind { Lds, Balls };

struct DataPlan {
    std::size_t n_trajectories = 40;
    std::size_t length = 1000;
};

struct BenchmarkPlan {
    std::size_t restarts = 20;
    std::size_t em_iters = 200;
    std::size_t train_trajectories = 40;
    std::size_t train_length = 1000;
};

struct ExperimentConfig {
    std::string preset;
    WorldKind world = WorldKind::Lds;
    LdsWorld lds;
    PpcCodec codec;
    BounceWorld bounce;
    ModelKind model = ModelKind::REFH;
    std::size_t hidden = 240;
    double init_std = 0.01;
    bool bptt = true;
    TrainSchedule schedule = schedules::lds_refh();
    DataPlan data;
    PredictOptions predict;
    BenchmarkPlan benchmark;
    std::uint64_t seed = 0;

    void validate() const {
        schedule.validate();
        if (hidden == 0) throw std::invalid_argument("config: model.hidden must be positive");
        if (!(init_std >= 0.0)) throw std::invalid_argument("config: model.init_std must be nonnegative");
        if (data.n_trajectories == 0 || data.length == 0) throw std::invalid_argument("config: empty data plan");
        if (predict.n_steps < 1 || predict.n_average < 1 || predict.n_average > predict.n_steps) {
            throw std::invalid_argument("config: need 1 <= predict.n_average <= predict.n_steps");
        }
        if (benchmark.restarts == 0) throw std::invalid_argument("config: benchmark.restarts must be positive");
        lds.validate();
        codec.validate();
        bounce.validate();
        if (lds.length != codec.length) throw std::invalid_argument("config: world and codec lengths differ");
        if (model == ModelKind::RTRBM && schedule.minibatch.kind != MinibatchScheme::Kind::Contiguous) {
            throw std::invalid_argument("config: the RTRBM needs contiguous minibatches");
        }
    }
};

namespace config_detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace config_detail

inline json to_json(const BlockRates& r) {
    return {{"obs_weights", r.obs_weights}, {"rcrnt_weights", r.rcrnt_weights}, {"biases", r.biases}};
}

inline BlockRates block_rates_from_json(const json& j, const std::string& where) {
    config_detail::check_keys(j, {"obs_weights", "rcrnt_weights", "biases"}, where);
    BlockRates r;
    config_detail::get(j, "obs_weights", r.obs_weights);
    config_detail::get(j, "rcrnt_weights", r.rcrnt_weights);
    config_detail::get(j, "biases", r.biases);
    return r;
}

inline json to_json(const TrainSchedule& s) {
    const bool expo = s.learning_rate.kind == LearningRateSchedule::Kind::Exponential;
    const bool approach = s.momentum.kind == MomentumSchedule::Kind::Approach;
    json j = {
        {"epochs", s.epochs},
        {"cd_steps", s.cd_steps},
        {"learning_rate",
         {{"kind", expo ? "exponential" : "linear"},
          {"start", to_json(s.learning_rate.start)},
          {"end", to_json(s.learning_rate.end)},
          {"decay_base", s.learning_rate.decay_base}}},
        {"momentum",
         {{"kind", approach ? "approach" : "constant"},
          {"limit", s.momentum.limit},
          {"amplitude", s.momentum.amplitude},
          {"decay_base", s.momentum.decay_base}}},
        {"weight_decay", s.weight_decay},
        {"minibatch",
         {{"kind", s.minibatch.kind == MinibatchScheme::Kind::Contiguous ? "contiguous" : "across_trajectories"},
          {"size", s.minibatch.size}}},
        {"batch",
         {{"n_trajectories", s.batch.n_trajectories},
          {"trajectory_length", s.batch.trajectory_length},
          {"renewal_period", s.batch.renewal_period}}},
        {"pretrain", s.pretrain ? json{{"n_batches", s.pretrain->n_batches}, {"cd_steps", s.pretrain->cd_steps}} : json(nullptr)},
        {"sample_recurrent", s.sample_recurrent},
    };
    return j;
}

inline TrainSchedule schedule_from_json(const json& j) {
    using config_detail::check_keys;
    using config_detail::get;
    check_keys(j, {"epochs", "cd_steps", "learning_rate", "momentum", "weight_decay", "minibatch", "batch", "pretrain",
                   "sample_recurrent"},
               "schedule");
    TrainSchedule s;
    get(j, "epochs", s.epochs);
    get(j, "cd_steps", s.cd_steps);
    get(j, "weight_decay", s.weight_decay);
    get(j, "sample_recurrent", s.sample_recurrent);
    if (j.contains("learning_rate")) {
        const auto& lr = j.at("learning_rate");
        check_keys(lr, {"kind", "start", "end", "decay_base"}, "schedule.learning_rate");
        const std::string kind = lr.value("kind", "linear");
        if (kind == "linear") s.learning_rate.kind = LearningRateSchedule::Kind::Linear;
        else if (kind == "exponential") s.learning_rate.kind = LearningRateSchedule::Kind::Exponential;
        else throw std::invalid_argument("config: unknown learning_rate.kind '" + kind + "'");
        if (lr.contains("start")) s.learning_rate.start = block_rates_from_json(lr.at("start"), "schedule.learning_rate.start");
        if (lr.contains("end")) s.learning_rate.end = block_rates_from_json(lr.at("end"), "schedule.learning_rate.end");
        get(lr, "decay_base", s.learning_rate.decay_base);
    }
    if (j.contains("momentum")) {
        const auto& m = j.at("momentum");
        check_keys(m, {"kind", "limit", "amplitude", "decay_base"}, "schedule.momentum");
        const std::string kind = m.value("kind", "constant");
        if (kind == "constant") s.momentum.kind = MomentumSchedule::Kind::Constant;
        else if (kind == "approach") s.momentum.kind = MomentumSchedule::Kind::Approach;
        else throw std::invalid_argument("config: unknown momentum.kind '" + kind + "'");
        get(m, "limit", s.momentum.limit);
        get(m, "amplitude", s.momentum.amplitude);
        get(m, "decay_base", s.momentum.decay_base);
    }
    if (j.contains("minibatch")) {
        const auto& mb = j.at("minibatch");
        check_keys(mb, {"kind", "size"}, "schedule.minibatch");
        const std::string kind = mb.value("kind", "across_trajectories");
        if (kind == "contiguous") s.minibatch.kind = MinibatchScheme::Kind::Contiguous;
        else if (kind == "across_trajectories") s.minibatch.kind = MinibatchScheme::Kind::AcrossTrajectories;
        else throw std::invalid_argument("config: unknown minibatch.kind '" + kind + "'");
        get(mb, "size", s.minibatch.size);
    }
    if (j.contains("batch")) {
        const auto& b = j.at("batch");
        check_keys(b, {"n_trajectories", "trajectory_length", "renewal_period"}, "schedule.batch");
        get(b, "n_trajectories", s.batch.n_trajectories);
        get(b, "trajectory_length", s.batch.trajectory_length);
        get(b, "renewal_period", s.batch.renewal_period);
    }
    if (j.contains("pretrain") && !j.at("pretrain").is_null()) {
        const auto& p = j.at("pretrain");
        check_keys(p, {"n_batches", "cd_steps"}, "schedule.pretrain");
        Pretraining pt;
        get(p, "n_batches", pt.n_batches);
        get(p, "cd_steps", pt.cd_steps);
        s.pretrain = pt;
    }
    return s;
}

inline json to_json(const ExperimentConfig& c) {
    return {
        {"preset", c.preset},
        {"world",
         {{"kind", c.world == WorldKind::Lds ? "lds" : "balls"},
          {"lds",
           {{"mass", c.lds.mass},
            {"damping", c.lds.damping},
            {"stiffness", c.lds.stiffness},
            {"dt", c.lds.dt},
            {"sigma_trans", {{c.lds.sigma_trans(0, 0), c.lds.sigma_trans(0, 1)}, {c.lds.sigma_trans(1, 0), c.lds.sigma_trans(1, 1)}}},
            {"length", c.lds.length},
            {"init_velocity_std", c.lds.init_velocity_std}}},
          {"codec", {{"n_units", c.codec.n_units}, {"length", c.codec.length}, {"gain_lo", c.codec.gain_lo}, {"gain_hi", c.codec.gain_hi}}},
          {"bounce",
           {{"patch_size", c.bounce.patch_size},
            {"n_balls", c.bounce.n_balls},
            {"radius", c.bounce.radius},
            {"speed_lo", c.bounce.speed_lo},
            {"speed_hi", c.bounce.speed_hi},
            {"substeps", c.bounce.substeps},
            {"placement_tries", c.bounce.placement_tries}}}}},
        {"model", {{"kind", to_string(c.model)}, {"hidden", c.hidden}, {"init_std", c.init_std}, {"bptt", c.bptt}}},
        {"schedule", to_json(c.schedule)},
        {"data", {{"n_trajectories", c.data.n_trajectories}, {"length", c.data.length}}},
        {"predict", {{"n_steps", c.predict.n_steps}, {"n_average", c.predict.n_average}}},
        {"benchmark",
         {{"restarts", c.benchmark.restarts},
          {"em_iters", c.benchmark.em_iters},
          {"train_trajectories", c.benchmark.train_trajectories},
          {"train_length", c.benchmark.train_length}}},
        {"seed", c.seed},
    };
}

inline ExperimentConfig config_from_json(const json& j) {
    using config_detail::check_keys;
    using config_detail::get;
    check_keys(j, {"preset", "world", "model", "schedule", "data", "predict", "benchmark", "seed"}, "config");
    ExperimentConfig c;
    get(j, "preset", c.preset);
    get(j, "seed", c.seed);
    if (j.contains("world")) {
        const auto& w = j.at("world");
        check_keys(w, {"kind", "lds", "codec", "bounce"}, "world");
        const std::string kind = w.value("kind", "lds");
        if (kind == "lds") c.world = WorldKind::Lds;
        else if (kind == "balls") c.world = WorldKind::Balls;
        else throw std::invalid_argument("config: unknown world.kind '" + kind + "'");
        if (w.contains("lds")) {
            const auto& l = w.at("lds");
            check_keys(l, {"mass", "damping", "stiffness", "dt", "sigma_trans", "length", "init_velocity_std"}, "world.lds");
            get(l, "mass", c.lds.mass);
            get(l, "damping", c.lds.damping);
            get(l, "stiffness", c.lds.stiffness);
            get(l, "dt", c.lds.dt);
            get(l, "length", c.lds.length);
            get(l, "init_velocity_std", c.lds.init_velocity_std);
            if (l.contains("sigma_trans")) {
                const auto& s = l.at("sigma_trans");
                if (!s.is_array() || s.size() != 2 || s[0].size() != 2 || s[1].size() != 2) {
                    throw std::invalid_argument("config: world.lds.sigma_trans must be 2x2");
                }
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) c.lds.sigma_trans(a, b) = s[a][b].get<double>();
            }
        }
        if (w.contains("codec")) {
            const auto& p = w.at("codec");
            check_keys(p, {"n_units", "length", "gain_lo", "gain_hi"}, "world.codec");
            get(p, "n_units", c.codec.n_units);
            get(p, "length", c.codec.length);
            get(p, "gain_lo", c.codec.gain_lo);
            get(p, "gain_hi", c.codec.gain_hi);
        }
        if (w.contains("bounce")) {
            const auto& b = w.at("bounce");
            check_keys(b, {"patch_size", "n_balls", "radius", "speed_lo", "speed_hi", "substeps", "placement_tries"}, "world.bounce");
            get(b, "patch_size", c.bounce.patch_size);
            get(b, "n_balls", c.bounce.n_balls);
            get(b, "radius", c.bounce.radius);
            get(b, "speed_lo", c.bounce.speed_lo);
            get(b, "speed_hi", c.bounce.speed_hi);
            get(b, "substeps", c.bounce.substeps);
            get(b, "placement_tries", c.bounce.placement_tries);
        }
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"kind", "hidden", "init_std", "bptt"}, "model");
        if (m.contains("kind")) c.model = model_kind_from_string(m.at("kind").get<std::string>());
        get(m, "hidden", c.hidden);
        get(m, "init_std", c.init_std);
        get(m, "bptt", c.bptt);
    }
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"n_trajectories", "length"}, "data");
        get(d, "n_trajectories", c.data.n_trajectories);
        get(d, "length", c.data.length);
    }
    if (j.contains("predict")) {
        const auto& p = j.at("predict");
        check_keys(p, {"n_steps", "n_average"}, "predict");
        get(p, "n_steps", c.predict.n_steps);
        get(p, "n_average", c.predict.n_average);
    }
    if (j.contains("benchmark")) {
        const auto& b = j.at("benchmark");
        check_keys(b, {"restarts", "em_iters", "train_trajectories", "train_length"}, "benchmark");
        get(b, "restarts", c.benchmark.restarts);
        get(b, "em_iters", c.benchmark.em_iters);
        get(b, "train_trajectories", c.benchmark.train_trajectories);
        get(b, "train_length", c.benchmark.train_length);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Presets

namespace presets {

inline ExperimentConfig lds_base(std::string name) {
    ExperimentConfig c;
    c.preset = std::move(name);
    c.world = WorldKind::Lds;
    return c;
}

/// rEFH, 240 hidden units, oscillator data, 90-epoch CD-1 schedule.
inline ExperimentConfig lds_refh() {
    ExperimentConfig c = lds_base("lds-refh");
    c.model = ModelKind::REFH;
    c.hidden = 240;
    c.schedule = schedules::lds_refh();
    c.data = {40, 1000};
    return c;
}

/// RTRBM (set model.kind to "trbm" for the TRBM) under the sequential schedule.
inline ExperimentConfig lds_trbm_rtrbm() {
    ExperimentConfig c = lds_base("lds-trbm-rtrbm");
    c.model = ModelKind::RTRBM;
    c.hidden = 240;
    c.schedule = schedules::lds_trbm_rtrbm();
    c.data = {400, 100};
    return c;
}

/// The test protocol: 40 trajectories of 1000 steps.
inline ExperimentConfig lds_test() {
    ExperimentConfig c = lds_refh();
    c.preset = "lds-test";
    c.data = {40, 1000};
    return c;
}

/// TRBM trained with the rEFH schedule, so only the learning rule differs.
inline ExperimentConfig lds_trbm_desk() {
    ExperimentConfig c = lds_refh();
    c.preset = "lds-trbm-desk";
    c.model = ModelKind::TRBM;
    return c;
}

inline ExperimentConfig balls() {
    ExperimentConfig c;
    c.preset = "balls";
    c.world = WorldKind::Balls;
    c.model = ModelKind::REFH;
    c.hidden = 400;
    c.schedule = schedules::balls();
    c.data = {400, 100};
    return c;
}

/// Reduced bouncing-ball run: 25 epochs of CD-1 on 20-frame segments, so a
/// small budget still buys many updates.
inline ExperimentConfig balls_desk() {
    ExperimentConfig c = balls();
    c.preset = "balls-desk";
    c.schedule.epochs = 25;
    c.schedule.cd_steps = 1;
    c.schedule.learning_rate = LearningRateSchedule::linear({0.02, 0.02, 0.02});
    c.schedule.minibatch = {MinibatchScheme::Kind::Contiguous, 20};
    c.schedule.batch = {120, 100, 5};
    c.schedule.pretrain = Pretraining{5, 5};
    c.data = {120, 100};
    return c;
}

inline std::vector<std::string> names() {
    return {"lds-refh", "lds-trbm-rtrbm", "lds-test", "lds-trbm-desk", "balls", "balls-desk"};
}

inline ExperimentConfig by_name(const std::string& name) {
    if (name == "lds-refh") return lds_refh();
    if (name == "lds-trbm-rtrbm") return lds_trbm_rtrbm();
    if (name == "lds-test") return lds_test();
    if (name == "lds-trbm-desk") return lds_trbm_desk();
    if (name == "balls") return balls();
    if (name == "balls-desk") return balls_desk();
    throw std::invalid_argument("unknown preset: " + name);
}

}  // namespace presets

/// Preset (named by `preset_override`, else by the user's "preset" key, else
/// lds-refh) with the user's JSON merged over it.
inline ExperimentConfig resolve_config(const json& user, const std::string& preset_override = "") {
    std::string name = preset_override;
    if (name.empty() && user.is_object() && user.contains("preset")) name = user.at("preset").get<std::string>();
    if (name.empty()) name = "lds-refh";
    json merged = to_json(presets::by_name(name));
    if (!user.is_null()) {
        if (!user.is_object()) throw std::invalid_argument("config: top level must be an object");
        merged.merge_patch(user);
    }
    merged["preset"] = name;
    ExperimentConfig c = config_from_json(merged);
    c.validate();
    return c;
}

}  // namespace refh
