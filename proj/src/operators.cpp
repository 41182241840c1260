#include <algorithm>
#include <cmath>

#include "evocollapse/evolve.hpp"

namespace evocollapse {

namespace {

std::int32_t round_clamp(double x, std::int32_t lo, std::int32_t hi) {
    return static_cast<std::int32_t>(std::clamp<long>(std::lround(x), lo, hi));
}

std::size_t pick(const std::vector<std::size_t>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
}

}  // namespace

Genome random_genome(Index n_layers, Rng& rng) {
    Genome g = Genome::inactive(n_layers);
    const GenomeBounds bounds{n_layers};
    for (std::size_t v = 0; v < g.size(); ++v)
        g.vars()[v] = static_cast<std::int32_t>(rng.uniform_int(bounds.lower(v), bounds.upper(v)));
    return g;
}

std::pair<Genome, Genome> sbx_integer(const Genome& p1, const Genome& p2, double prob, double eta,
                                      const GenomeBounds& bounds, Rng& rng) {
    if (p1.size() != p2.size())
        fail(ErrorClass::InvalidArgument, "sbx_integer: parent lengths differ (" + std::to_string(p1.size()) + " vs " +
                                              std::to_string(p2.size()) + ")");
    Genome c1 = p1, c2 = p2;
    if (!(rng.uniform() < prob)) return {c1, c2};
    const double exponent = 1.0 / (eta + 1.0);
    for (std::size_t v = 0; v < p1.size(); ++v) {
        const double u = rng.uniform();
        const double beta = u <= 0.5 ? std::pow(2.0 * u, exponent) : std::pow(1.0 / (2.0 * (1.0 - u)), exponent);
        const double x1 = p1.vars()[v], x2 = p2.vars()[v];
        c1.vars()[v] = round_clamp(0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2), bounds.lower(v), bounds.upper(v));
        c2.vars()[v] = round_clamp(0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2), bounds.lower(v), bounds.upper(v));
    }
    return {c1, c2};
}

Genome polynomial_mutation_integer(const Genome& g, double prob, double eta, const GenomeBounds& bounds, Rng& rng) {
    Genome out = g;
    const double exponent = 1.0 / (eta + 1.0);
    for (std::size_t v = 0; v < out.size(); ++v) {
        if (!(rng.uniform() < prob)) continue;
        const double u = rng.uniform();
        const double delta = u < 0.5 ? std::pow(2.0 * u, exponent) - 1.0 : 1.0 - std::pow(2.0 * (1.0 - u), exponent);
        const double span = bounds.upper(v) - bounds.lower(v);
        out.vars()[v] = round_clamp(out.vars()[v] + delta * span, bounds.lower(v), bounds.upper(v));
    }
    return out;
}

std::optional<Genome> repair(Genome g, Index n_layers, Index target_removed, int trials, Rng& rng) {
    if (target_removed < 1 || target_removed > n_layers - 1)
        fail(ErrorClass::InvalidArgument, "repair: target_removed must be in [1, L-1]");
    Index removed = decode_genome(g, n_layers).removed_count;
    if (removed == target_removed) return g;

    const auto last = static_cast<std::int32_t>(n_layers - 1);
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<std::size_t> active, inactive, shrinkable, extendable;
        for (std::size_t s = 0; s < g.slots(); ++s) {
            if (g.active(s)) {
                active.push_back(s);
                if (g.end(s) > g.base(s)) shrinkable.push_back(s);
                if (g.end(s) < last) extendable.push_back(s);
            } else {
                inactive.push_back(s);
            }
        }

        enum class Edit { Deactivate, Shrink, Extend, Activate, Create };
        std::vector<Edit> edits;
        if (removed > target_removed) {
            if (!active.empty()) edits.push_back(Edit::Deactivate);
            if (!shrinkable.empty()) edits.push_back(Edit::Shrink);
        } else {
            if (!extendable.empty()) edits.push_back(Edit::Extend);
            if (!inactive.empty()) {
                edits.push_back(Edit::Activate);
                edits.push_back(Edit::Create);
            }
        }
        if (edits.empty()) break;

        switch (edits[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(edits.size()) - 1))]) {
            case Edit::Deactivate: g.active(pick(active, rng)) = 0; break;
            case Edit::Shrink: --g.end(pick(shrinkable, rng)); break;
            case Edit::Extend: ++g.end(pick(extendable, rng)); break;
            case Edit::Activate: g.active(pick(inactive, rng)) = 1; break;
            case Edit::Create: {
                const std::size_t s = pick(inactive, rng);
                const auto base = static_cast<std::int32_t>(rng.uniform_int(0, last - 1));
                const auto max_len = std::min<std::int64_t>(target_removed - removed, last - base);
                g.base(s) = base;
                g.end(s) = base + static_cast<std::int32_t>(rng.uniform_int(1, max_len));
                g.active(s) = 1;
                break;
            }
        }
        removed = decode_genome(g, n_layers).removed_count;
        if (removed == target_removed) return g;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

bool dominates(const Objectives& a, const Objectives& b) noexcept {
    bool strictly = false;
    for (std::size_t m = 0; m < a.size(); ++m) {
        if (a[m] < b[m]) return false;
        if (a[m] > b[m]) strictly = true;
    }
    return strictly;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (dominates(points[p], points[q]))
                dominated[p].push_back(q);
            else if (dominates(points[q], points[p]))
                ++count[p];
        }
        if (count[p] == 0) current.push_back(p);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t p : current)
            for (std::size_t q : dominated[p])
                if (--count[q] == 0) next.push_back(q);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(std::span<const Objectives> points, std::span<const std::size_t> front) {
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t m = 0; m < Objectives{}.size(); ++m) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return points[front[a]][m] < points[front[b]][m]; });
        const double lo = points[front[order.front()]][m];
        const double hi = points[front[order.back()]][m];
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        if (hi == lo) continue;
        for (std::size_t k = 1; k + 1 < n; ++k)
            dist[order[k]] += (points[front[order[k + 1]]][m] - points[front[order[k - 1]]][m]) / (hi - lo);
    }
    return dist;
}

}  // namespace evocollapse
