// Experiment runner: generate | train | evaluate | benchmark | gen-traj.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "refh/commands.hpp"

int main(int argc, char** argv) {
    using namespace refh::cli;
    CLI::App app{"Recurrent exponential-family harmoniums: data, training, evaluation, baselines"};
    app.require_subcommand(1);

    CommandOptions opts;
    std::string config_path;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config merged over the preset")->check(CLI::ExistingFile);
        sub->add_option("--preset", opts.preset, "named preset (lds-refh, lds-trbm-rtrbm, lds-test, lds-trbm-desk, balls, balls-desk)");
        sub->add_option("--seed", seed, "global seed (overrides the config)");
        sub->add_option("--out", opts.out, "output directory");
    };

    auto* gen = app.add_subcommand("generate", "write a dataset");
    common(gen);

    auto* tr = app.add_subcommand("train", "train a model; checkpoints and metrics.csv in --out");
    common(tr);
    tr->add_option("--dataset", opts.dataset, "draw training batches from this dataset instead of the world");
    tr->add_flag("--resume", opts.resume, "continue from --out/checkpoint_latest.json if present");

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a test dataset");
    common(ev);
    ev->add_option("--checkpoint", opts.checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--dataset", opts.dataset)->required()->check(CLI::ExistingDirectory);
    ev->add_flag("--with-baselines", opts.with_baselines, "add Kalman (LDS) or copy-frame (balls) rows");

    auto* bm = app.add_subcommand("benchmark", "Kalman baselines on a test dataset");
    common(bm);
    bm->add_option("--dataset", opts.dataset)->required()->check(CLI::ExistingDirectory);

    auto* gt = app.add_subcommand("gen-traj", "generate sequences from a checkpoint");
    common(gt);
    gt->add_option("--checkpoint", opts.checkpoint)->required()->check(CLI::ExistingFile);
    gt->add_option("--direction", opts.direction)->check(CLI::IsMember({"reverse", "forward"}));
    gt->add_option("--steps", opts.steps);
    gt->add_option("--n-gibbs", opts.n_gibbs);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) opts.user_config = nlohmann::json::parse(refh::io::read_text(config_path));
        for (auto* sub : {gen, tr, ev, bm, gt}) {
            if (sub->count("--seed") > 0) opts.seed = seed;
        }
        if (*gen) return cmd_generate(opts, std::cout);
        if (*tr) return cmd_train(opts, std::cout);
        if (*ev) return cmd_evaluate(opts, std::cout);
        if (*bm) return cmd_benchmark(opts, std::cout);
        if (*gt) return cmd_gen_traj(opts, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
