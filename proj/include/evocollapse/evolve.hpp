#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evocollapse/collapse.hpp"
#include "evocollapse/fitness.hpp"
#include "evocollapse/rng.hpp"

namespace evocollapse {

struct GAConfig {
    std::size_t population = 100;
    std::size_t max_evaluations = 10000;
    double crossover_prob = 0.9;
    double crossover_eta = 20.0;
    /// Negative means 1 / (3L).
    double mutation_prob = -1.0;
    double mutation_eta = 20.0;
    double target_ratio = 0.25;
    int repair_trials = 100;
    std::uint64_t seed = 1;

    double mutation_probability(Index n_layers) const noexcept;
    /// round(target_ratio * L).
    Index target_removed(Index n_layers) const noexcept;
    /// Throws InvalidArgument.
    void validate(Index n_layers) const;
};

struct MOConfig {
    std::size_t population = 200;
    std::size_t max_evaluations = 30000;
    double crossover_prob = 0.9;
    double crossover_eta = 20.0;
    double mutation_prob = -1.0;
    double mutation_eta = 20.0;
    std::uint64_t seed = 1;

    double mutation_probability(Index n_layers) const noexcept;
    void validate(Index n_layers) const;
};

struct Individual {
    Genome genome;
    ResolvedPlan plan;
    std::string key;
    double fitness = penalty_score();
    double ratio = 0.0;
    bool feasible = true;
};

struct GenerationRecord {
    std::size_t generation = 0;
    std::size_t evaluations_used = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
    double elapsed_seconds = 0.0;
};

struct GAResult {
    Individual best;
    std::vector<GenerationRecord> history;
    std::size_t evaluations = 0;
};

struct ParetoMember {
    double ratio = 0.0;
    double fitness = 0.0;
    ResolvedPlan plan;
    Genome genome;
    std::string key;
};

struct ParetoResult {
    /// Mutually non-dominated, unique by canonical key, sorted by ratio.
    std::vector<ParetoMember> front;
    std::vector<GenerationRecord> history;
    std::size_t evaluations = 0;
};

// ---------------------------------------------------------------------------
// Variation operators

/// Uniform random genome within bounds.
Genome random_genome(Index n_layers, Rng& rng);

/// Integer SBX: one draw decides crossover; then per variable u -> beta,
/// children 0.5((1 +- beta) x1 + (1 -+ beta) x2), rounded and clamped.
std::pair<Genome, Genome> sbx_integer(const Genome& p1, const Genome& p2, double prob, double eta,
                                      const GenomeBounds& bounds, Rng& rng);

/// Integer polynomial mutation: per variable, with probability `prob`,
/// x += delta * (upper - lower), rounded and clamped.
Genome polynomial_mutation_integer(const Genome& g, double prob, double eta, const GenomeBounds& bounds, Rng& rng);

/// Edits the genome until its resolved plan removes exactly `target_removed`
/// layers; std::nullopt when `trials` edit rounds are not enough.
std::optional<Genome> repair(Genome g, Index n_layers, Index target_removed, int trials, Rng& rng);

// ---------------------------------------------------------------------------
// Multi-objective helpers; objectives are {fitness, ratio}, both maximized.

using Objectives = std::array<double, 2>;

bool dominates(const Objectives& a, const Objectives& b) noexcept;

/// Fronts of indices into `points`; front 0 is the non-dominated set.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> points);

/// Distances aligned with `front`; boundary points per objective get +inf.
std::vector<double> crowding_distance(std::span<const Objectives> points, std::span<const std::size_t> front);

// ---------------------------------------------------------------------------
// Searches

/// Single-objective GA with exact-ratio repair.
/// Throws Infeasible when no feasible individual was ever produced.
GAResult run_ga(FitnessEvaluator& evaluator, FitnessKind kind, const GAConfig& cfg);

ParetoResult run_nsga2(FitnessEvaluator& evaluator, FitnessKind kind, const MOConfig& cfg);

}  // namespace evocollapse
