// Command-line front end: gen-toy, compress, pareto, apply, eval.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evocollapse/cli.hpp"

namespace ec = evocollapse;
namespace cli = evocollapse::cli;

namespace {

struct SearchFlags {
    std::string config, checkpoint, calibration, out_dir, fitness;
    std::size_t population = 0, max_evaluations = 0, n_calibration = 0, calib_max_len = 0;
    double crossover_prob = 0, crossover_eta = 0, mutation_prob = 0, mutation_eta = 0, target_ratio = 0;
    int repair_trials = 0, workers = 1, repeats = 1;
    std::uint64_t seed = 1, calib_seed = 7;
    std::vector<CLI::Option*> opts;
};

void add_search_flags(CLI::App* sub, SearchFlags& f, bool with_target) {
    auto add = [&](CLI::Option* o) { f.opts.push_back(o); };
    sub->add_option("--config", f.config, "JSON run configuration; flags override its values");
    add(sub->add_option("--checkpoint", f.checkpoint, "Input checkpoint directory"));
    add(sub->add_option("--calibration", f.calibration, "Calibration text, one sentence per line"));
    add(sub->add_option("--out-dir", f.out_dir, "Output directory"));
    add(sub->add_option("--fitness", f.fitness, "similarity | kl | perplexity"));
    add(sub->add_option("--population", f.population, "Population size (even, >= 4)"));
    add(sub->add_option("--max-evaluations", f.max_evaluations, "Fitness evaluation budget"));
    add(sub->add_option("--crossover-prob", f.crossover_prob, "SBX probability"));
    add(sub->add_option("--crossover-eta", f.crossover_eta, "SBX distribution index"));
    add(sub->add_option("--mutation-prob", f.mutation_prob, "Per-variable mutation probability (default 1/(3L))"));
    add(sub->add_option("--mutation-eta", f.mutation_eta, "Polynomial mutation distribution index"));
    if (with_target) {
        add(sub->add_option("--target-ratio", f.target_ratio, "Fraction of layers to remove"));
        add(sub->add_option("--repair-trials", f.repair_trials, "Repair edit rounds before penalty"));
    }
    add(sub->add_option("--seed", f.seed, "Master seed"));
    add(sub->add_option("--workers", f.workers, "Parallel evaluation threads"));
    add(sub->add_option("--repeats", f.repeats, "Independent runs with seeds seed, seed+1, ..."));
    add(sub->add_option("--n-calibration", f.n_calibration, "Calibration sentences to sample"));
    add(sub->add_option("--calib-max-len", f.calib_max_len, "Token cap per sentence (0 = model max_seq_len)"));
    add(sub->add_option("--calib-seed", f.calib_seed, "Seed for calibration sampling"));
}

cli::RunConfig resolve(const SearchFlags& f) {
    cli::RunConfig cfg;
    if (!f.config.empty()) cfg = cli::load_run_config(f.config);
    auto given = [&](const char* name) {
        for (auto* o : f.opts)
            if (o->get_name() == name) return o->count() > 0;
        return false;
    };
    if (given("--checkpoint")) cfg.checkpoint = f.checkpoint;
    if (given("--calibration")) cfg.calibration = f.calibration;
    if (given("--out-dir")) cfg.out_dir = f.out_dir;
    if (given("--fitness")) cfg.kind = ec::parse_fitness_kind(f.fitness);
    if (given("--population")) cfg.population = f.population;
    if (given("--max-evaluations")) cfg.max_evaluations = f.max_evaluations;
    if (given("--crossover-prob")) cfg.crossover_prob = f.crossover_prob;
    if (given("--crossover-eta")) cfg.crossover_eta = f.crossover_eta;
    if (given("--mutation-prob")) cfg.mutation_prob = f.mutation_prob;
    if (given("--mutation-eta")) cfg.mutation_eta = f.mutation_eta;
    if (given("--target-ratio")) cfg.target_ratio = f.target_ratio;
    if (given("--repair-trials")) cfg.repair_trials = f.repair_trials;
    if (given("--seed")) cfg.seed = f.seed;
    if (given("--workers")) cfg.workers = f.workers;
    if (given("--repeats")) cfg.repeats = f.repeats;
    if (given("--n-calibration")) cfg.n_calibration = f.n_calibration;
    if (given("--calib-max-len")) cfg.calib_max_len = f.calib_max_len;
    if (given("--calib-seed")) cfg.calib_seed = f.calib_seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolutionary layer-collapse compression for decoder-only transformers"};
    app.require_subcommand(1);

    // gen-toy
    auto* gen = app.add_subcommand("gen-toy", "Write a random toy checkpoint");
    ec::ModelConfig toy;
    std::uint64_t toy_seed = 1;
    std::string toy_out;
    gen->add_option("--n-layers", toy.n_layers, "Decoder layers")->capture_default_str();
    gen->add_option("--d-model", toy.d_model, "Model width")->capture_default_str();
    gen->add_option("--n-heads", toy.n_heads, "Attention heads")->capture_default_str();
    gen->add_option("--d-ff", toy.d_ff, "FFN width")->capture_default_str();
    gen->add_option("--max-seq-len", toy.max_seq_len, "Maximum sequence length")->capture_default_str();
    gen->add_option("--rope-theta", toy.rope_theta, "Rotary base")->capture_default_str();
    gen->add_option("--rms-eps", toy.rms_eps, "RMSNorm epsilon")->capture_default_str();
    gen->add_option("--seed", toy_seed, "Weight seed")->capture_default_str();
    gen->add_option("--out-dir", toy_out, "Checkpoint directory")->required();

    SearchFlags compress_flags, pareto_flags;
    auto* compress = app.add_subcommand("compress", "Search for the best plan at a fixed compression ratio");
    add_search_flags(compress, compress_flags, true);
    auto* pareto = app.add_subcommand("pareto", "Search the compression/fitness Pareto front");
    add_search_flags(pareto, pareto_flags, false);

    auto* apply = app.add_subcommand("apply", "Apply a plan file to a checkpoint");
    std::string apply_ckpt, apply_plan, apply_out;
    apply->add_option("--checkpoint", apply_ckpt, "Input checkpoint")->required();
    apply->add_option("--plan", apply_plan, "Plan JSON")->required();
    apply->add_option("--out-dir", apply_out, "Output checkpoint directory")->required();

    auto* eval = app.add_subcommand("eval", "Score checkpoint b against checkpoint a");
    cli::EvalOptions eval_opts;
    std::string eval_a, eval_b, eval_plan, eval_calib, eval_out;
    std::vector<std::string> eval_kinds;
    eval->add_option("--checkpoint-a", eval_a, "Reference checkpoint")->required();
    eval->add_option("--checkpoint-b", eval_b, "Compared checkpoint")->required();
    eval->add_option("--plan", eval_plan, "Plan that maps a's layers onto b's");
    eval->add_option("--calibration", eval_calib, "Calibration text")->required();
    eval->add_option("--kinds", eval_kinds, "Subset of similarity, kl, perplexity");
    eval->add_option("--n-calibration", eval_opts.n_calibration, "Calibration sentences")->capture_default_str();
    eval->add_option("--calib-max-len", eval_opts.calib_max_len, "Token cap per sentence");
    eval->add_option("--calib-seed", eval_opts.calib_seed, "Calibration sampling seed")->capture_default_str();
    eval->add_option("--workers", eval_opts.workers, "Parallel threads")->capture_default_str();
    eval->add_option("--out-dir", eval_out, "Report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << ec::error_class_name(ec::ErrorClass::InvalidArgument) << ": " << e.what() << "\n";
        return 2;
    }

    try {
        if (*gen) {
            const auto r = cli::cmd_gen_toy(toy, toy_seed, toy_out);
            std::cout << "wrote " << r["n_layers"] << "-layer checkpoint to " << toy_out << "\n";
        } else if (*compress) {
            const auto r = cli::cmd_compress(resolve(compress_flags));
            std::cout << r.dump(2) << "\n";
        } else if (*pareto) {
            const auto r = cli::cmd_pareto(resolve(pareto_flags));
            std::cout << r.dump(2) << "\n";
        } else if (*apply) {
            const auto r = cli::cmd_apply(apply_ckpt, apply_plan, apply_out);
            std::cout << "layers: " << r["layers_before"] << " -> " << r["layers_after"] << ", ratio " << r["ratio"]
                      << "\n";
        } else if (*eval) {
            eval_opts.checkpoint_a = eval_a;
            eval_opts.checkpoint_b = eval_b;
            if (!eval_plan.empty()) eval_opts.plan = eval_plan;
            eval_opts.calibration = eval_calib;
            eval_opts.out_dir = eval_out;
            if (!eval_kinds.empty()) {
                eval_opts.kinds.clear();
                for (const auto& k : eval_kinds) eval_opts.kinds.push_back(ec::parse_fitness_kind(k));
            }
            const auto r = cli::cmd_eval(eval_opts);
            std::cout << r.dump(2) << "\n";
        }
    } catch (const ec::Error& e) {
        std::cerr << "error: " << ec::error_class_name(e.error_class()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
