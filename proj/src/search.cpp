#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "evocollapse/evolve.hpp"

namespace evocollapse {

namespace {

using Clock = std::chrono::steady_clock;

double default_mutation(double configured, Index n_layers) {
    return configured < 0.0 ? 1.0 / (3.0 * static_cast<double>(n_layers)) : configured;
}

void validate_common(std::size_t population, double cx_prob, double cx_eta, double mut_prob, double mut_eta) {
    auto bad = [](const std::string& m) { fail(ErrorClass::InvalidArgument, m); };
    if (population < 4 || population % 2 != 0) bad("population must be even and >= 4");
    if (!(cx_prob >= 0.0 && cx_prob <= 1.0)) bad("crossover probability must be in [0, 1]");
    if (!(mut_prob <= 1.0)) bad("mutation probability must be <= 1");
    if (!(cx_eta >= 0.0) || !(mut_eta >= 0.0)) bad("distribution indices must be non-negative");
}

Individual make_individual(Genome genome, Index n_layers, bool feasible) {
    Individual ind;
    ind.plan = decode_genome(genome, n_layers);
    ind.genome = std::move(genome);
    ind.key = canonical_key(ind.plan);
    ind.ratio = compression_ratio(ind.plan, n_layers);
    ind.feasible = feasible;
    return ind;
}

/// Scores feasible individuals through the evaluator; infeasible ones get the
/// penalty without a model evaluation. Returns the number of evaluations used.
std::size_t evaluate_population(std::vector<Individual>& pop, FitnessEvaluator& evaluator, FitnessKind kind) {
    std::vector<const ResolvedPlan*> plans;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i].feasible) {
            plans.push_back(&pop[i].plan);
            where.push_back(i);
        } else {
            pop[i].fitness = penalty_score();
        }
    }
    const auto scores = evaluator.evaluate_batch(plans, kind);
    for (std::size_t j = 0; j < where.size(); ++j) pop[where[j]].fitness = scores[j];
    return pop.size();
}

/// Strict weak order for single-objective ranking: higher fitness, then
/// feasible, then smaller canonical key.
bool ga_better(const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    if (a.feasible != b.feasible) return a.feasible;
    return a.key < b.key;
}

GenerationRecord make_record(std::size_t generation, std::size_t evaluations, double best,
                             const std::vector<Individual>& pop, const FitnessEvaluator& evaluator,
                             Clock::time_point start) {
    const auto stats = evaluator.cache_stats();
    double mean = 0.0;
    for (const auto& ind : pop) mean += ind.fitness;
    mean /= static_cast<double>(pop.size());
    return {generation, evaluations, best, mean, stats.hits, stats.misses,
            std::chrono::duration<double>(Clock::now() - start).count()};
}

std::size_t draw_pair_index(std::size_t n, std::size_t other, Rng& rng) {
    std::size_t j = other;
    while (j == other) j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    return j;
}

}  // namespace

double GAConfig::mutation_probability(Index n_layers) const noexcept {
    return default_mutation(mutation_prob, n_layers);
}

Index GAConfig::target_removed(Index n_layers) const noexcept {
    return static_cast<Index>(std::lround(target_ratio * static_cast<double>(n_layers)));
}

void GAConfig::validate(Index n_layers) const {
    validate_common(population, crossover_prob, crossover_eta, mutation_probability(n_layers), mutation_eta);
    if (!(target_ratio > 0.0 && target_ratio < 1.0))
        fail(ErrorClass::InvalidArgument, "target ratio must be in (0, 1)");
    const Index removed = target_removed(n_layers);
    if (removed < 1 || removed > n_layers - 1)
        fail(ErrorClass::InvalidArgument, "target ratio " + std::to_string(target_ratio) + " on " +
                                              std::to_string(n_layers) + " layers rounds to " +
                                              std::to_string(removed) + " removed layers");
    const double achieved = static_cast<double>(removed) / static_cast<double>(n_layers);
    if (std::abs(achieved - target_ratio) > 0.5 / static_cast<double>(n_layers) + 1e-12)
        fail(ErrorClass::InvalidArgument, "target ratio not reachable within 0.5/L");
    if (repair_trials < 0) fail(ErrorClass::InvalidArgument, "repair trials must be >= 0");
}

double MOConfig::mutation_probability(Index n_layers) const noexcept {
    return default_mutation(mutation_prob, n_layers);
}

void MOConfig::validate(Index n_layers) const {
    validate_common(population, crossover_prob, crossover_eta, mutation_probability(n_layers), mutation_eta);
}

// ---------------------------------------------------------------------------

GAResult run_ga(FitnessEvaluator& evaluator, FitnessKind kind, const GAConfig& cfg) {
    const Index L = evaluator.original().n_layers();
    cfg.validate(L);
    const Index target = cfg.target_removed(L);
    const GenomeBounds bounds{L};
    const double mut_prob = cfg.mutation_probability(L);
    const auto start = Clock::now();

    GAResult result;
    std::optional<Individual> best;
    auto track_best = [&](const std::vector<Individual>& pop) {
        for (const auto& ind : pop)
            if (ind.feasible && (!best || ga_better(ind, *best))) best = ind;
    };
    auto finish = [&](const Genome& g, Rng& rng) {
        auto fixed = repair(g, L, target, cfg.repair_trials, rng);
        return fixed ? make_individual(std::move(*fixed), L, true) : make_individual(g, L, false);
    };

    std::vector<Individual> pop;
    pop.reserve(cfg.population);
    for (std::size_t i = 0; i < cfg.population; ++i) {
        Rng rng(derive_seed(cfg.seed, 0, i));
        pop.push_back(finish(random_genome(L, rng), rng));
    }
    result.evaluations += evaluate_population(pop, evaluator, kind);
    std::stable_sort(pop.begin(), pop.end(), ga_better);
    track_best(pop);
    result.history.push_back(
        make_record(0, result.evaluations, best ? best->fitness : penalty_score(), pop, evaluator, start));

    auto tournament = [&](Rng& rng) -> const Individual& {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pop.size()) - 1));
        const auto j = draw_pair_index(pop.size(), i, rng);
        return ga_better(pop[j], pop[i]) ? pop[j] : pop[i];
    };

    for (std::size_t gen = 1; result.evaluations < cfg.max_evaluations; ++gen) {
        std::vector<Individual> offspring;
        offspring.reserve(cfg.population);
        for (std::size_t p = 0; p < cfg.population / 2; ++p) {
            Rng rng(derive_seed(cfg.seed, gen, p));
            const Individual& a = tournament(rng);
            const Individual& b = tournament(rng);
            auto [c1, c2] = sbx_integer(a.genome, b.genome, cfg.crossover_prob, cfg.crossover_eta, bounds, rng);
            c1 = polynomial_mutation_integer(c1, mut_prob, cfg.mutation_eta, bounds, rng);
            c2 = polynomial_mutation_integer(c2, mut_prob, cfg.mutation_eta, bounds, rng);
            offspring.push_back(finish(c1, rng));
            offspring.push_back(finish(c2, rng));
        }
        result.evaluations += evaluate_population(offspring, evaluator, kind);
        pop.insert(pop.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));
        std::stable_sort(pop.begin(), pop.end(), ga_better);
        pop.resize(cfg.population);
        track_best(pop);
        result.history.push_back(
            make_record(gen, result.evaluations, best ? best->fitness : penalty_score(), pop, evaluator, start));
    }

    if (!best)
        fail(ErrorClass::Infeasible, "no feasible individual reached " + std::to_string(target) + " removed layers in " +
                                         std::to_string(result.evaluations) + " evaluations (repair trials " +
                                         std::to_string(cfg.repair_trials) + ")");
    result.best = std::move(*best);
    return result;
}

// ---------------------------------------------------------------------------

namespace {

struct Ranked {
    std::size_t rank = 0;
    double crowding = 0.0;
};

/// Ranks with fronts and crowding distance; fills `order` with the survivor
/// order (front by front, crowding descending, canonical key ascending).
std::vector<Ranked> rank_population(const std::vector<Individual>& pop, std::vector<std::size_t>& order) {
    std::vector<Objectives> pts(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) pts[i] = {pop[i].fitness, pop[i].ratio};
    std::vector<Ranked> ranked(pop.size());
    order.clear();
    const auto fronts = non_dominated_sort(pts);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        const auto dist = crowding_distance(pts, fronts[f]);
        std::vector<std::size_t> local(fronts[f].size());
        std::iota(local.begin(), local.end(), 0);
        for (std::size_t k = 0; k < local.size(); ++k) ranked[fronts[f][k]] = {f, dist[k]};
        std::stable_sort(local.begin(), local.end(), [&](std::size_t a, std::size_t b) {
            if (dist[a] != dist[b]) return dist[a] > dist[b];
            const auto& ka = pop[fronts[f][a]].key;
            const auto& kb = pop[fronts[f][b]].key;
            if (ka != kb) return ka < kb;
            return fronts[f][a] < fronts[f][b];
        });
        for (std::size_t k : local) order.push_back(fronts[f][k]);
    }
    return ranked;
}

}  // namespace

ParetoResult run_nsga2(FitnessEvaluator& evaluator, FitnessKind kind, const MOConfig& cfg) {
    const Index L = evaluator.original().n_layers();
    cfg.validate(L);
    const GenomeBounds bounds{L};
    const double mut_prob = cfg.mutation_probability(L);
    const auto start = Clock::now();
    ParetoResult result;

    auto best_fitness = [](const std::vector<Individual>& pop) {
        double b = -std::numeric_limits<double>::infinity();
        for (const auto& ind : pop) b = std::max(b, ind.fitness);
        return b;
    };

    std::vector<Individual> pop;
    pop.reserve(cfg.population);
    for (std::size_t i = 0; i < cfg.population; ++i) {
        Rng rng(derive_seed(cfg.seed, 0, i));
        pop.push_back(make_individual(random_genome(L, rng), L, true));
    }
    result.evaluations += evaluate_population(pop, evaluator, kind);
    std::vector<std::size_t> order;
    auto ranked = rank_population(pop, order);
    result.history.push_back(make_record(0, result.evaluations, best_fitness(pop), pop, evaluator, start));

    auto tournament = [&](Rng& rng) -> const Individual& {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pop.size()) - 1));
        const auto j = draw_pair_index(pop.size(), i, rng);
        const Ranked &ri = ranked[i], &rj = ranked[j];
        bool j_wins;
        if (ri.rank != rj.rank)
            j_wins = rj.rank < ri.rank;
        else if (ri.crowding != rj.crowding)
            j_wins = rj.crowding > ri.crowding;
        else
            j_wins = pop[j].key < pop[i].key;
        return j_wins ? pop[j] : pop[i];
    };

    for (std::size_t gen = 1; result.evaluations < cfg.max_evaluations; ++gen) {
        std::vector<Individual> offspring;
        offspring.reserve(cfg.population);
        for (std::size_t p = 0; p < cfg.population / 2; ++p) {
            Rng rng(derive_seed(cfg.seed, gen, p));
            const Individual& a = tournament(rng);
            const Individual& b = tournament(rng);
            auto [c1, c2] = sbx_integer(a.genome, b.genome, cfg.crossover_prob, cfg.crossover_eta, bounds, rng);
            c1 = polynomial_mutation_integer(c1, mut_prob, cfg.mutation_eta, bounds, rng);
            c2 = polynomial_mutation_integer(c2, mut_prob, cfg.mutation_eta, bounds, rng);
            offspring.push_back(make_individual(std::move(c1), L, true));
            offspring.push_back(make_individual(std::move(c2), L, true));
        }
        result.evaluations += evaluate_population(offspring, evaluator, kind);
        pop.insert(pop.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));

        rank_population(pop, order);
        std::vector<Individual> survivors;
        survivors.reserve(cfg.population);
        for (std::size_t k = 0; k < cfg.population; ++k) survivors.push_back(std::move(pop[order[k]]));
        pop = std::move(survivors);
        ranked = rank_population(pop, order);
        result.history.push_back(make_record(gen, result.evaluations, best_fitness(pop), pop, evaluator, start));
    }

    std::vector<std::size_t> first;
    for (std::size_t i = 0; i < pop.size(); ++i)
        if (ranked[i].rank == 0) first.push_back(i);
    std::stable_sort(first.begin(), first.end(), [&](std::size_t a, std::size_t b) {
        if (pop[a].ratio != pop[b].ratio) return pop[a].ratio < pop[b].ratio;
        if (pop[a].fitness != pop[b].fitness) return pop[a].fitness > pop[b].fitness;
        return pop[a].key < pop[b].key;
    });
    for (std::size_t i : first) {
        const auto& ind = pop[i];
        if (!result.front.empty() && std::any_of(result.front.begin(), result.front.end(),
                                                 [&](const ParetoMember& m) { return m.key == ind.key; }))
            continue;
        result.front.push_back({ind.ratio, ind.fitness, ind.plan, ind.genome, ind.key});
    }
    return result;
}

}  // namespace evocollapse
