#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evocollapse/evolve.hpp"
#include "evocollapse/fitness.hpp"
#include "evocollapse/model.hpp"

namespace evocollapse::cli {

namespace fs = std::filesystem;

/// Settings shared by `compress` and `pareto`. Unset search sizes fall back to
/// the mode defaults (100/10000 for compress, 200/30000 for pareto).
struct RunConfig {
    fs::path checkpoint;
    fs::path calibration;
    fs::path out_dir;
    FitnessKind kind = FitnessKind::ModuleSimilarity;

    std::optional<std::size_t> population;
    std::optional<std::size_t> max_evaluations;
    double crossover_prob = 0.9;
    double crossover_eta = 20.0;
    double mutation_prob = -1.0;
    double mutation_eta = 20.0;
    double target_ratio = 0.0;
    int repair_trials = 100;

    std::uint64_t seed = 1;
    int workers = 1;
    int repeats = 1;
    std::size_t n_calibration = 64;
    /// 0 means the checkpoint's max_seq_len.
    std::size_t calib_max_len = 0;
    std::uint64_t calib_seed = 7;

    GAConfig ga_config() const;
    MOConfig mo_config() const;
};

/// Applies every key present in `j` on top of `cfg`.
void merge_run_config(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_run_config(const fs::path& path);

/// Echo of the effective configuration for `mode` ("compress" or "pareto").
nlohmann::json run_config_json(const RunConfig& cfg, const std::string& mode);

struct EvalOptions {
    fs::path checkpoint_a;
    fs::path checkpoint_b;
    std::optional<fs::path> plan;
    fs::path calibration;
    std::vector<FitnessKind> kinds{kAllFitnessKinds.begin(), kAllFitnessKinds.end()};
    std::size_t n_calibration = 64;
    std::size_t calib_max_len = 0;
    std::uint64_t calib_seed = 7;
    fs::path out_dir;
    int workers = 1;
};

/// Writes a deterministic random checkpoint into `out_dir`.
nlohmann::json cmd_gen_toy(const ModelConfig& config, std::uint64_t seed, const fs::path& out_dir);

/// Single-objective search; writes `compressed/`, `plan.json`, `history.jsonl`,
/// `report.json` and `timings.json` (one `run_<k>/` directory per repeat when
/// repeats > 1). Everything except `timings.json` is reproducible byte for byte.
nlohmann::json cmd_compress(const RunConfig& cfg);

/// Bi-objective search; writes `front.csv`, `plans/`, `history.jsonl`, `report.json`, `timings.json`.
nlohmann::json cmd_pareto(const RunConfig& cfg);

/// Applies a plan file to a checkpoint and writes the result into `out_dir`.
nlohmann::json cmd_apply(const fs::path& checkpoint, const fs::path& plan_file, const fs::path& out_dir);

/// Scores checkpoint b against checkpoint a; writes `eval_report.json` and `timings.json`.
nlohmann::json cmd_eval(const EvalOptions& opts);

}  // namespace evocollapse::cli
