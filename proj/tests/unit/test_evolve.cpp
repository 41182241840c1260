#include <doctest.h>

#include "evocollapse/evolve.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace evocollapse;

namespace {

std::vector<std::int32_t> uppers(const GenomeBounds& b, std::size_t n) {
    std::vector<std::int32_t> u;
    for (std::size_t v = 0; v < n; ++v) u.push_back(b.upper(v));
    return u;
}

bool in_bounds(const Genome& g, Index L) {
    const GenomeBounds b{L};
    if (g.size() != static_cast<std::size_t>(3 * L)) return false;
    for (std::size_t v = 0; v < g.size(); ++v)
        if (g.vars()[v] < b.lower(v) || g.vars()[v] > b.upper(v)) return false;
    return true;
}

}  // namespace

TEST_CASE("sbx and mutation match scalar recomputation") {
    const GenomeBounds bounds{16};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng init(seed);
        const Genome p1 = random_genome(16, init), p2 = random_genome(16, init);
        Rng a(seed + 1000), b(seed + 1000);
        const auto [c1, c2] = sbx_integer(p1, p2, 0.9, 20.0, bounds, a);
        const auto [e1, e2] = oracle::sbx(p1.vars(), p2.vars(), 0.9, 20.0, uppers(bounds, p1.size()), b);
        CHECK(c1.vars() == e1);
        CHECK(c2.vars() == e2);
        const Genome m = polynomial_mutation_integer(c1, 0.3, 20.0, bounds, a);
        CHECK(m.vars() == oracle::mutate(e1, 0.3, 20.0, uppers(bounds, p1.size()), b));
        CHECK(a.next() == b.next());
    }
}

TEST_CASE("operator edge cases") {
    const GenomeBounds bounds{8};
    Rng rng(4);
    const Genome p = random_genome(8, rng), q = random_genome(8, rng);
    const auto [s1, s2] = sbx_integer(p, p, 1.0, 20.0, bounds, rng);
    CHECK(s1 == p);
    CHECK(s2 == p);
    const auto [c1, c2] = sbx_integer(p, q, 0.0, 20.0, bounds, rng);
    CHECK(c1 == p);
    CHECK(c2 == q);
    CHECK(polynomial_mutation_integer(p, 0.0, 20.0, bounds, rng) == p);
    CHECK(oracle::pm_delta(0.5, 20.0) == 0.0);
    CHECK(oracle::sbx_beta(0.5, 20.0) == 1.0);
    CHECK_THROWS_AS(sbx_integer(p, Genome::inactive(7), 0.9, 20.0, bounds, rng), Error);
}

TEST_CASE("operators stay within bounds") {
    for (Index L : {2, 8, 32}) {
        Rng rng(static_cast<std::uint64_t>(L));
        const GenomeBounds bounds{L};
        for (int i = 0; i < 200; ++i) {
            const Genome a = random_genome(L, rng), b = random_genome(L, rng);
            CHECK(in_bounds(a, L));
            const auto [c1, c2] = sbx_integer(a, b, 1.0, 2.0, bounds, rng);
            CHECK(in_bounds(c1, L));
            CHECK(in_bounds(c2, L));
            CHECK(in_bounds(polynomial_mutation_integer(c1, 1.0, 1.0, bounds, rng), L));
        }
    }
}

TEST_CASE("repair reaches the exact target") {
    Rng rng(12);
    for (Index L : {8, 16, 32}) {
        for (Index target : {Index{1}, L / 4, L / 2, L - 1}) {
            for (int i = 0; i < 30; ++i) {
                const auto out = repair(random_genome(L, rng), L, target, 100, rng);
                if (!out) continue;
                CHECK(in_bounds(*out, L));
                CHECK(decode_genome(*out, L).removed_count == target);
            }
        }
    }
    const auto from_empty = repair(Genome::inactive(8), 8, 2, 100, rng);
    REQUIRE(from_empty);
    CHECK(decode_genome(*from_empty, 8).removed_count == 2);
}

TEST_CASE("repair leaves on-target genomes alone and honours the trial limit") {
    Genome g = Genome::inactive(8);
    g.base(1) = 3;
    g.end(1) = 5;
    g.active(1) = 1;
    Rng rng(1), twin(1);
    CHECK(repair(g, 8, 2, 100, rng) == g);
    CHECK(rng.next() == twin.next());
    CHECK_FALSE(repair(Genome::inactive(8), 8, 2, 0, rng));
    CHECK_THROWS_AS(repair(g, 8, 0, 10, rng), Error);
    CHECK_THROWS_AS(repair(g, 8, 8, 10, rng), Error);
}

TEST_CASE("non-dominated sort on the documented example") {
    // (fitness, ratio) objectives.
    const std::vector<Objectives> pts{{0.9, 0.2}, {0.7, 0.5}, {0.9, 0.5}};
    const auto fronts = non_dominated_sort(pts);
    REQUIRE(fronts.size() == 2);
    CHECK(fronts[0] == std::vector<std::size_t>{2});
    CHECK(std::set<std::size_t>(fronts[1].begin(), fronts[1].end()) == std::set<std::size_t>{0, 1});
    CHECK(non_dominated_sort(std::vector<Objectives>{{0.1, 0.1}}).size() == 1);
    CHECK(non_dominated_sort(std::vector<Objectives>(4, Objectives{0.3, 0.3})).front().size() == 4);
}

TEST_CASE("non-dominated sort agrees with front peeling on random points") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Objectives> pts;
        std::vector<std::array<double, 2>> raw;
        for (int i = 0; i < 40; ++i) {
            const Objectives o{static_cast<double>(rng.uniform_int(0, 9)), static_cast<double>(rng.uniform_int(0, 9))};
            pts.push_back(o);
            raw.push_back(o);
        }
        const auto fronts = non_dominated_sort(pts);
        const auto expect = oracle::peel_fronts(raw);
        REQUIRE(fronts.size() == expect.size());
        for (std::size_t f = 0; f < fronts.size(); ++f)
            CHECK(std::set<std::size_t>(fronts[f].begin(), fronts[f].end()) == expect[f]);
    }
}

TEST_CASE("crowding distance") {
    const std::vector<Objectives> line{{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
    const std::vector<std::size_t> all{0, 1, 2};
    const auto d = crowding_distance(line, all);
    CHECK(std::isinf(d[0]));
    CHECK(std::isinf(d[2]));
    CHECK(d[1] == doctest::Approx(2.0));
    const std::vector<std::size_t> two{0, 1};
    for (double v : crowding_distance(line, two)) CHECK(std::isinf(v));
    const std::vector<Objectives> flat{{0.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}};
    CHECK(crowding_distance(flat, all)[1] == doctest::Approx(1.0));
}

TEST_CASE("run_ga: elitism, budget, exact ratio and determinism") {
    const auto m = testsupport::toy_model(8, 1, 32);
    const auto calib = testsupport::toy_calibration(8, 24);
    GAConfig cfg;
    cfg.population = 12;
    cfg.max_evaluations = 120;
    cfg.target_ratio = 0.25;
    cfg.seed = 5;
    auto run = [&](int workers) {
        FitnessCache cache;
        FitnessEvaluator ev(m, calib, cache, workers);
        return run_ga(ev, FitnessKind::ModuleSimilarity, cfg);
    };
    const auto r = run(1);
    CHECK(r.best.feasible);
    CHECK(r.best.plan.removed_count == 2);
    CHECK(r.best.ratio == doctest::Approx(0.25));
    CHECK(r.evaluations <= cfg.max_evaluations + cfg.population);
    CHECK(r.evaluations >= cfg.max_evaluations);
    for (std::size_t g = 1; g < r.history.size(); ++g) {
        CHECK(r.history[g].best_fitness >= r.history[g - 1].best_fitness);
        CHECK(r.history[g].cache_hits >= r.history[g - 1].cache_hits);
        CHECK(r.history[g].evaluations_used > r.history[g - 1].evaluations_used);
    }
    CHECK(r.best.fitness == r.history.back().best_fitness);

    const auto r4 = run(4);
    CHECK(r4.best.genome == r.best.genome);
    CHECK(r4.best.fitness == r.best.fitness);
    REQUIRE(r4.history.size() == r.history.size());
    for (std::size_t g = 0; g < r.history.size(); ++g) {
        CHECK(r4.history[g].mean_fitness == r.history[g].mean_fitness);
        CHECK(r4.history[g].cache_hits == r.history[g].cache_hits);
    }
}

TEST_CASE("run_ga on a 32-layer model removes exactly 8 layers") {
    const auto m = testsupport::toy_model(32, 2, 16);
    FitnessCache cache;
    FitnessEvaluator ev(m, testsupport::toy_calibration(2, 12), cache);
    GAConfig cfg;
    cfg.population = 8;
    cfg.max_evaluations = 32;
    cfg.target_ratio = 0.25;
    const auto r = run_ga(ev, FitnessKind::ModuleSimilarity, cfg);
    CHECK(r.best.plan.removed_count == 8);
    CHECK(r.best.plan.final_layer_count == 24);
}

TEST_CASE("config validation") {
    GAConfig ga;
    ga.target_ratio = 0.03;
    CHECK(ga.target_removed(8) == 0);
    CHECK_THROWS_AS(ga.validate(8), Error);
    ga.target_ratio = 0.25;
    ga.population = 5;
    CHECK_THROWS_AS(ga.validate(8), Error);
    ga.population = 100;
    CHECK_NOTHROW(ga.validate(8));
    CHECK(ga.mutation_probability(8) == doctest::Approx(1.0 / 24.0));
    MOConfig mo;
    CHECK(mo.population == 200);
    CHECK(mo.max_evaluations == 30000);
    mo.population = 2;
    CHECK_THROWS_AS(mo.validate(8), Error);
}

TEST_CASE("run_nsga2 returns a sorted mutually non-dominated front") {
    const auto m = testsupport::toy_model(6, 3, 32);
    const auto calib = testsupport::toy_calibration(6, 24);
    MOConfig cfg;
    cfg.population = 16;
    cfg.max_evaluations = 160;
    cfg.seed = 2;
    auto run = [&] {
        FitnessCache cache;
        FitnessEvaluator ev(m, calib, cache);
        return run_nsga2(ev, FitnessKind::ModuleSimilarity, cfg);
    };
    const auto r = run();
    REQUIRE_FALSE(r.front.empty());
    std::vector<std::array<double, 2>> pts;
    std::set<std::string> keys;
    for (const auto& p : r.front) {
        pts.push_back({p.fitness, p.ratio});
        keys.insert(p.key);
        CHECK(p.ratio == doctest::Approx(compression_ratio(p.plan, 6)));
    }
    CHECK(keys.size() == r.front.size());
    CHECK(oracle::mutually_non_dominated(pts));
    for (std::size_t i = 1; i < r.front.size(); ++i) {
        CHECK(r.front[i].ratio >= r.front[i - 1].ratio);
        CHECK(r.front[i].fitness <= r.front[i - 1].fitness);
    }
    for (const auto& p : r.front)
        if (p.ratio == 0.0) CHECK(p.fitness >= 1.0 - 1e-6);
    const auto again = run();
    REQUIRE(again.front.size() == r.front.size());
    for (std::size_t i = 0; i < r.front.size(); ++i) CHECK(again.front[i].key == r.front[i].key);
}

TEST_CASE("run_ga with no repair keeps infeasible individuals below every feasible one") {
    const auto m = testsupport::toy_model(8, 1, 32);
    FitnessCache cache;
    FitnessEvaluator ev(m, testsupport::toy_calibration(4, 16), cache);
    GAConfig cfg;
    cfg.population = 20;
    cfg.max_evaluations = 60;
    cfg.target_ratio = 0.25;
    cfg.repair_trials = 0;
    try {
        const auto r = run_ga(ev, FitnessKind::ModuleSimilarity, cfg);
        CHECK(r.best.feasible);
        CHECK(r.best.plan.removed_count == 2);
        CHECK(r.best.fitness > penalty_score());
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::Infeasible);
    }
    // Only feasible individuals reach the evaluator.
    CHECK(cache.stats().hits + cache.stats().misses <= cfg.max_evaluations + cfg.population);
}
