#include "evocollapse/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "evocollapse/checkpoint.hpp"
#include "evocollapse/collapse.hpp"

namespace evocollapse::cli {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorClass::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

void require_exists(const fs::path& p, const std::string& what) {
    if (p.empty()) fail(ErrorClass::InvalidArgument, what + " path is required");
    if (!fs::exists(p)) fail(ErrorClass::Io, what + " not found: " + p.string());
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorClass::Io, "cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorClass::Io, "short write to " + path.string());
}

void write_history(const fs::path& path, const std::vector<GenerationRecord>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorClass::Io, "cannot write " + path.string());
    for (const auto& r : history) {
        const json line = {{"generation", r.generation},       {"evaluations_used", r.evaluations_used},
                           {"best_fitness", r.best_fitness},   {"mean_fitness", r.mean_fitness},
                           {"cache_hits", r.cache_hits},       {"cache_misses", r.cache_misses}};
        out << line.dump() << "\n";
    }
    if (!out) fail(ErrorClass::Io, "short write to " + path.string());
}

/// Shortest round-trip decimal form, shared by JSON and CSV outputs.
std::string num(double x) { return json(x).dump(); }

json cache_json(const FitnessCache::Stats& s) {
    return {{"hits", s.hits}, {"misses", s.misses}, {"hit_rate", s.hit_rate()}, {"entries", s.entries}};
}

/// Wall-clock data lives apart from the reproducible outputs.
void write_timings(const fs::path& path, int workers, double search_seconds, const FitnessCache::Stats& s,
                   const std::vector<GenerationRecord>& history, const std::vector<EvaluationRecord>& records) {
    json generations = json::array();
    for (const auto& r : history) generations.push_back({{"generation", r.generation}, {"elapsed_seconds", r.elapsed_seconds}});
    // One [cached, seconds] pair per fitness evaluation, in evaluation order.
    json evaluations = json::array();
    for (const auto& r : records) evaluations.push_back({r.cached ? 1 : 0, r.seconds});
    write_json(path, {{"workers", workers},
                      {"search_seconds", search_seconds},
                      {"mean_hit_seconds", s.hits ? s.hit_seconds / static_cast<double>(s.hits) : 0.0},
                      {"mean_miss_seconds", s.misses ? s.miss_seconds / static_cast<double>(s.misses) : 0.0},
                      {"hit_seconds", s.hit_seconds},
                      {"miss_seconds", s.miss_seconds},
                      {"generations", std::move(generations)},
                      {"evaluations", std::move(evaluations)}});
}

std::size_t calib_len(std::size_t requested, const Model& model) {
    const auto max = static_cast<std::size_t>(model.config.max_seq_len);
    if (requested == 0) return max;
    if (requested > max)
        fail(ErrorClass::InvalidArgument, "calibration max length " + std::to_string(requested) +
                                              " exceeds the model's max_seq_len " + std::to_string(max));
    return requested;
}

std::pair<double, double> mean_stddev(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return {mean, sd};
}

struct Inputs {
    Model model;
    CalibrationSet calibration;
};

Inputs load_inputs(const RunConfig& cfg) {
    require_exists(cfg.checkpoint, "checkpoint");
    require_exists(cfg.calibration, "calibration file");
    if (cfg.out_dir.empty()) fail(ErrorClass::InvalidArgument, "--out-dir is required");
    if (cfg.repeats < 1) fail(ErrorClass::InvalidArgument, "repeats must be >= 1");
    Inputs in{load_checkpoint(cfg.checkpoint), {}};
    in.calibration = load_calibration(cfg.calibration, cfg.n_calibration, calib_len(cfg.calib_max_len, in.model),
                                      cfg.calib_seed);
    return in;
}

json compress_once(const RunConfig& cfg, const Inputs& in, std::uint64_t seed, const fs::path& out_dir) {
    ensure_dir(out_dir);
    GAConfig ga = cfg.ga_config();
    ga.seed = seed;
    FitnessCache cache;
    FitnessEvaluator evaluator(in.model, in.calibration, cache, cfg.workers);
    const auto t0 = Clock::now();
    const GAResult result = run_ga(evaluator, cfg.kind, ga);
    const double search_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    const Model compressed = apply_plan(in.model, result.best.plan);
    save_checkpoint(compressed, out_dir / "compressed");
    write_plan_file(result.best.plan, out_dir / "plan.json");
    write_history(out_dir / "history.jsonl", result.history);

    const Index L = in.model.n_layers();
    json report = {
        {"command", "compress"},
        {"config", run_config_json(cfg, "compress")},
        {"seed", seed},
        {"best",
         {{"fitness", result.best.fitness},
          {"ratio", result.best.ratio},
          {"removed_layers", result.best.plan.removed_count},
          {"final_layers", result.best.plan.final_layer_count},
          {"target_removed", ga.target_removed(L)},
          {"canonical_key", result.best.key},
          {"genome", result.best.genome.vars()}}},
        {"evaluations", result.evaluations},
        {"generations", result.history.size()},
        {"cache", cache_json(cache.stats())},
        {"model_constructions", evaluator.model_constructions()},
        {"artifacts",
         {{"checkpoint", "compressed"},
          {"plan", "plan.json"},
          {"history", "history.jsonl"},
          {"report", "report.json"},
          {"timings", "timings.json"}}}};
    write_json(out_dir / "report.json", report);
    write_timings(out_dir / "timings.json", cfg.workers, search_seconds, cache.stats(), result.history,
                  evaluator.records());
    return report;
}

json pareto_once(const RunConfig& cfg, const Inputs& in, std::uint64_t seed, const fs::path& out_dir) {
    ensure_dir(out_dir / "plans");
    MOConfig mo = cfg.mo_config();
    mo.seed = seed;
    FitnessCache cache;
    FitnessEvaluator evaluator(in.model, in.calibration, cache, cfg.workers);
    const auto t0 = Clock::now();
    const ParetoResult result = run_nsga2(evaluator, cfg.kind, mo);
    const double search_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    std::ofstream csv(out_dir / "front.csv", std::ios::trunc);
    if (!csv) fail(ErrorClass::Io, "cannot write " + (out_dir / "front.csv").string());
    csv << "ratio,fitness,removed_layers,canonical_key,plan_file\n";
    json front = json::array();
    for (std::size_t i = 0; i < result.front.size(); ++i) {
        const auto& m = result.front[i];
        char name[32];
        std::snprintf(name, sizeof name, "plans/plan_%03zu.json", i);
        write_plan_file(m.plan, out_dir / name);
        csv << num(m.ratio) << "," << num(m.fitness) << "," << m.plan.removed_count << "," << m.key << "," << name
            << "\n";
        front.push_back({{"ratio", m.ratio},
                         {"fitness", m.fitness},
                         {"removed_layers", m.plan.removed_count},
                         {"canonical_key", m.key},
                         {"plan_file", name}});
    }
    if (!csv) fail(ErrorClass::Io, "short write to " + (out_dir / "front.csv").string());
    write_history(out_dir / "history.jsonl", result.history);

    json report = {{"command", "pareto"},
                   {"config", run_config_json(cfg, "pareto")},
                   {"seed", seed},
                   {"front", front},
                   {"front_size", result.front.size()},
                   {"evaluations", result.evaluations},
                   {"generations", result.history.size()},
                   {"cache", cache_json(cache.stats())},
                   {"model_constructions", evaluator.model_constructions()},
                   {"artifacts", {{"front", "front.csv"}, {"plans", "plans"}, {"history", "history.jsonl"},
                                  {"report", "report.json"}, {"timings", "timings.json"}}}};
    write_json(out_dir / "report.json", report);
    write_timings(out_dir / "timings.json", cfg.workers, search_seconds, cache.stats(), result.history,
                  evaluator.records());
    return report;
}

}  // namespace

// ---------------------------------------------------------------------------

GAConfig RunConfig::ga_config() const {
    GAConfig g;
    g.population = population.value_or(100);
    g.max_evaluations = max_evaluations.value_or(10000);
    g.crossover_prob = crossover_prob;
    g.crossover_eta = crossover_eta;
    g.mutation_prob = mutation_prob;
    g.mutation_eta = mutation_eta;
    g.target_ratio = target_ratio;
    g.repair_trials = repair_trials;
    g.seed = seed;
    return g;
}

MOConfig RunConfig::mo_config() const {
    MOConfig m;
    m.population = population.value_or(200);
    m.max_evaluations = max_evaluations.value_or(30000);
    m.crossover_prob = crossover_prob;
    m.crossover_eta = crossover_eta;
    m.mutation_prob = mutation_prob;
    m.mutation_eta = mutation_eta;
    m.seed = seed;
    return m;
}

void merge_run_config(RunConfig& cfg, const json& j) {
    if (!j.is_object()) fail(ErrorClass::InvalidArgument, "run config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "checkpoint") cfg.checkpoint = v.get<std::string>();
            else if (key == "calibration") cfg.calibration = v.get<std::string>();
            else if (key == "out_dir") cfg.out_dir = v.get<std::string>();
            else if (key == "fitness") cfg.kind = parse_fitness_kind(v.get<std::string>());
            else if (key == "population") cfg.population = v.get<std::size_t>();
            else if (key == "max_evaluations") cfg.max_evaluations = v.get<std::size_t>();
            else if (key == "crossover_prob") cfg.crossover_prob = v.get<double>();
            else if (key == "crossover_eta") cfg.crossover_eta = v.get<double>();
            else if (key == "mutation_prob") cfg.mutation_prob = v.get<double>();
            else if (key == "mutation_eta") cfg.mutation_eta = v.get<double>();
            else if (key == "target_ratio") cfg.target_ratio = v.get<double>();
            else if (key == "repair_trials") cfg.repair_trials = v.get<int>();
            else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (key == "workers") cfg.workers = v.get<int>();
            else if (key == "repeats") cfg.repeats = v.get<int>();
            else if (key == "n_calibration") cfg.n_calibration = v.get<std::size_t>();
            else if (key == "calib_max_len") cfg.calib_max_len = v.get<std::size_t>();
            else if (key == "calib_seed") cfg.calib_seed = v.get<std::uint64_t>();
            else if (key == "mode") continue;
            else fail(ErrorClass::InvalidArgument, "unknown run config key '" + key + "'");
        }
    } catch (const json::exception& ex) {
        fail(ErrorClass::InvalidArgument, std::string("bad run config value: ") + ex.what());
    }
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorClass::Io, "cannot read config " + path.string());
    RunConfig cfg;
    try {
        merge_run_config(cfg, json::parse(in));
    } catch (const json::parse_error& ex) {
        fail(ErrorClass::InvalidArgument, "malformed config " + path.string() + ": " + ex.what());
    }
    return cfg;
}

json run_config_json(const RunConfig& cfg, const std::string& mode) {
    json j = {{"mode", mode},
              {"checkpoint", cfg.checkpoint.string()},
              {"calibration", cfg.calibration.string()},
              {"fitness", std::string(fitness_kind_name(cfg.kind))},
              {"crossover_prob", cfg.crossover_prob},
              {"crossover_eta", cfg.crossover_eta},
              {"mutation_eta", cfg.mutation_eta},
              {"seed", cfg.seed},
              {"repeats", cfg.repeats},
              {"n_calibration", cfg.n_calibration},
              {"calib_max_len", cfg.calib_max_len},
              {"calib_seed", cfg.calib_seed}};
    if (cfg.mutation_prob < 0.0)
        j["mutation_prob"] = "1/(3L)";
    else
        j["mutation_prob"] = cfg.mutation_prob;
    if (mode == "compress") {
        const auto g = cfg.ga_config();
        j["population"] = g.population;
        j["max_evaluations"] = g.max_evaluations;
        j["target_ratio"] = cfg.target_ratio;
        j["repair_trials"] = cfg.repair_trials;
    } else {
        const auto m = cfg.mo_config();
        j["population"] = m.population;
        j["max_evaluations"] = m.max_evaluations;
    }
    return j;
}

// ---------------------------------------------------------------------------

json cmd_gen_toy(const ModelConfig& config, std::uint64_t seed, const fs::path& out_dir) {
    config.validate();
    if (out_dir.empty()) fail(ErrorClass::InvalidArgument, "--out-dir is required");
    const Model model = init_random<float>(config, seed);
    save_checkpoint(model, out_dir);
    return {{"command", "gen-toy"}, {"n_layers", config.n_layers}, {"d_model", config.d_model}, {"seed", seed},
            {"checkpoint", out_dir.string()}};
}

json cmd_compress(const RunConfig& cfg) {
    const Inputs in = load_inputs(cfg);
    cfg.ga_config().validate(in.model.n_layers());
    if (cfg.repeats == 1) return compress_once(cfg, in, cfg.seed, cfg.out_dir);

    ensure_dir(cfg.out_dir);
    json runs = json::array();
    std::vector<double> fitness, ratio;
    std::ofstream csv(cfg.out_dir / "repeats.csv", std::ios::trunc);
    csv << "seed,best_fitness,ratio,removed_layers,canonical_key,run_dir\n";
    for (int r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
        const std::string dir = "run_" + std::to_string(r);
        const json rep = compress_once(cfg, in, seed, cfg.out_dir / dir);
        const auto& best = rep["best"];
        fitness.push_back(best["fitness"].get<double>());
        ratio.push_back(best["ratio"].get<double>());
        csv << seed << "," << num(fitness.back()) << "," << num(ratio.back()) << ","
            << best["removed_layers"].get<Index>() << "," << best["canonical_key"].get<std::string>() << "," << dir
            << "\n";
        runs.push_back({{"seed", seed}, {"run_dir", dir}, {"best", best}});
    }
    const auto [fm, fs_] = mean_stddev(fitness);
    std::ofstream summary(cfg.out_dir / "summary.csv", std::ios::trunc);
    summary << "runs,best_fitness_mean,best_fitness_stddev\n" << cfg.repeats << "," << num(fm) << "," << num(fs_) << "\n";
    json report = {{"command", "compress"},
                   {"config", run_config_json(cfg, "compress")},
                   {"runs", runs},
                   {"best_fitness_mean", fm},
                   {"best_fitness_stddev", fs_},
                   {"artifacts", {{"repeats", "repeats.csv"}, {"summary", "summary.csv"}, {"report", "report.json"}}}};
    write_json(cfg.out_dir / "report.json", report);
    return report;
}

json cmd_pareto(const RunConfig& cfg) {
    const Inputs in = load_inputs(cfg);
    cfg.mo_config().validate(in.model.n_layers());
    if (cfg.repeats == 1) return pareto_once(cfg, in, cfg.seed, cfg.out_dir);

    ensure_dir(cfg.out_dir);
    json runs = json::array();
    std::map<Index, std::vector<double>> by_removed;
    for (int r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
        const std::string dir = "run_" + std::to_string(r);
        const json rep = pareto_once(cfg, in, seed, cfg.out_dir / dir);
        // One value per run and ratio: the best front member at that ratio.
        std::map<Index, double> best;
        for (const auto& m : rep["front"]) {
            const auto removed = m["removed_layers"].get<Index>();
            const auto f = m["fitness"].get<double>();
            auto [it, inserted] = best.try_emplace(removed, f);
            if (!inserted) it->second = std::max(it->second, f);
        }
        for (const auto& [removed, f] : best) by_removed[removed].push_back(f);
        runs.push_back({{"seed", seed}, {"run_dir", dir}, {"front_size", rep["front_size"]}});
    }
    const double L = static_cast<double>(in.model.n_layers());
    std::ofstream csv(cfg.out_dir / "front_mean.csv", std::ios::trunc);
    csv << "ratio,removed_layers,fitness_mean,fitness_stddev,runs\n";
    json mean_front = json::array();
    for (const auto& [removed, values] : by_removed) {
        const auto [m, s] = mean_stddev(values);
        csv << num(static_cast<double>(removed) / L) << "," << removed << "," << num(m) << "," << num(s) << ","
            << values.size() << "\n";
        mean_front.push_back({{"removed_layers", removed}, {"fitness_mean", m}, {"fitness_stddev", s},
                              {"runs", values.size()}});
    }
    json report = {{"command", "pareto"},
                   {"config", run_config_json(cfg, "pareto")},
                   {"runs", runs},
                   {"mean_front", mean_front},
                   {"artifacts", {{"front_mean", "front_mean.csv"}, {"report", "report.json"}}}};
    write_json(cfg.out_dir / "report.json", report);
    return report;
}

json cmd_apply(const fs::path& checkpoint, const fs::path& plan_file, const fs::path& out_dir) {
    require_exists(checkpoint, "checkpoint");
    require_exists(plan_file, "plan file");
    if (out_dir.empty()) fail(ErrorClass::InvalidArgument, "--out-dir is required");
    const Model model = load_checkpoint(checkpoint);
    const ResolvedPlan plan = read_plan_file(plan_file);
    if (plan.original_layers != model.n_layers())
        fail(ErrorClass::Incompatible, "plan expects " + std::to_string(plan.original_layers) +
                                           " original layers but the checkpoint has " +
                                           std::to_string(model.n_layers()));
    const Model out = apply_plan(model, plan);
    save_checkpoint(out, out_dir);
    write_plan_file(plan, out_dir / "plan.json");
    return {{"command", "apply"},
            {"layers_before", model.n_layers()},
            {"layers_after", out.n_layers()},
            {"ratio", compression_ratio(plan, model.n_layers())},
            {"canonical_key", canonical_key(plan)}};
}

json cmd_eval(const EvalOptions& opts) {
    require_exists(opts.checkpoint_a, "checkpoint a");
    require_exists(opts.checkpoint_b, "checkpoint b");
    require_exists(opts.calibration, "calibration file");
    if (opts.out_dir.empty()) fail(ErrorClass::InvalidArgument, "--out-dir is required");
    if (opts.kinds.empty()) fail(ErrorClass::InvalidArgument, "no fitness kinds requested");
    const Model a = load_checkpoint(opts.checkpoint_a);
    const Model b = load_checkpoint(opts.checkpoint_b);

    SimilarityMap phi;
    std::optional<ResolvedPlan> plan;
    if (opts.plan) {
        require_exists(*opts.plan, "plan file");
        plan = read_plan_file(*opts.plan);
        if (plan->original_layers != a.n_layers() || plan->final_layer_count != b.n_layers())
            fail(ErrorClass::Incompatible, "plan maps " + std::to_string(plan->original_layers) + " -> " +
                                               std::to_string(plan->final_layer_count) + " layers but the models have " +
                                               std::to_string(a.n_layers()) + " and " + std::to_string(b.n_layers()));
        phi = similarity_map(*plan, a.n_layers());
    } else if (a.n_layers() == b.n_layers()) {
        for (Index i = 0; i < a.n_layers(); ++i) phi.mapping.push_back(i);
    } else {
        fail(ErrorClass::Incompatible, "models have " + std::to_string(a.n_layers()) + " and " +
                                           std::to_string(b.n_layers()) + " layers; pass --plan to pair them");
    }

    const auto calibration =
        load_calibration(opts.calibration, opts.n_calibration, calib_len(opts.calib_max_len, a), opts.calib_seed);
    FitnessCache cache;
    FitnessEvaluator evaluator(a, calibration, cache, opts.workers);

    json scores = json::object();
    json timings = json::object();
    json report = {{"command", "eval"},
                   {"checkpoint_a", opts.checkpoint_a.string()},
                   {"checkpoint_b", opts.checkpoint_b.string()},
                   {"layers_a", a.n_layers()},
                   {"layers_b", b.n_layers()},
                   {"n_calibration", calibration.size()}};
    if (plan) report["plan"] = plan_to_json(*plan);
    // Direct scoring of a given checkpoint never goes through the plan cache.
    report["cache"] = {{"hits", 0}, {"misses", opts.kinds.size()}};
    for (FitnessKind kind : opts.kinds) {
        const auto t0 = Clock::now();
        double score = 0.0;
        if (kind == FitnessKind::ModuleSimilarity) {
            const auto br = evaluator.breakdown(b, phi);
            score = br.overall;
            report["breakdown"] = {
                {"attention", br.attention}, {"ffn", br.ffn}, {"hidden", br.hidden}, {"overall", br.overall}};
        } else {
            score = evaluator.score_model(b, phi, kind);
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        scores[std::string(fitness_kind_name(kind))] = score;
        timings[std::string(fitness_kind_name(kind))] = secs;
        if (kind == FitnessKind::NegKLDivergence) report["kl_divergence"] = -score;
        if (kind == FitnessKind::NegPerplexity) report["perplexity"] = -score;
    }
    report["scores"] = scores;
    ensure_dir(opts.out_dir);
    write_json(opts.out_dir / "eval_report.json", report);
    write_json(opts.out_dir / "timings.json", {{"workers", opts.workers}, {"score_seconds", timings}});
    return report;
}

}  // namespace evocollapse::cli
