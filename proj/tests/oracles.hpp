#pragma once

// Reference computations written without the library's algorithms. They share
// only plain data types with the code under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "evocollapse/collapse.hpp"
#include "evocollapse/fitness.hpp"
#include "evocollapse/rng.hpp"

namespace oracle {

using evocollapse::Index;

/// Elementwise theta_l + sum_k (theta_{l+k} - theta_l), one scalar at a time,
/// accumulating left to right.
template <typename Scalar>
std::vector<Scalar> merge_elementwise(const std::vector<std::vector<Scalar>>& stack, std::size_t base, std::size_t end) {
    const std::size_t n = stack[base].size();
    std::vector<Scalar> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Scalar acc = stack[base][i];
        for (std::size_t k = base + 1; k <= end; ++k) {
            const Scalar diff = stack[k][i] - stack[base][i];
            acc = acc + diff;
        }
        out[i] = acc;
    }
    return out;
}

/// Result of simulating merge ops by explicit group bookkeeping: each
/// compressed layer is the ordered list of original layers it absorbed.
struct GroupSimulation {
    std::vector<std::vector<Index>> groups;
    /// Per applied op: (first, last) original layer and (lo, hi) group positions.
    std::vector<std::pair<Index, Index>> effective;
    std::vector<std::pair<Index, Index>> positions;

    Index removed(Index n_layers) const { return n_layers - static_cast<Index>(groups.size()); }

    Index group_of(Index layer) const {
        for (std::size_t g = 0; g < groups.size(); ++g)
            if (std::find(groups[g].begin(), groups[g].end(), layer) != groups[g].end()) return static_cast<Index>(g);
        return -1;
    }

    std::vector<Index> phi(Index n_layers) const {
        std::vector<Index> out;
        for (Index j = 0; j < n_layers; ++j) out.push_back(group_of(j));
        return out;
    }

    std::string key() const {
        if (effective.empty()) return "[]";
        std::string k;
        for (const auto& [a, b] : effective) k += "[" + std::to_string(a) + "-" + std::to_string(b) + "]";
        return k;
    }
};

/// Op (b, e) merges every group from the one holding b through the one holding e.
inline GroupSimulation simulate_groups(const std::vector<std::pair<Index, Index>>& ops, Index n_layers) {
    GroupSimulation sim;
    for (Index j = 0; j < n_layers; ++j) sim.groups.push_back({j});
    for (const auto& [b, e] : ops) {
        if (e <= b) continue;
        const Index lo = sim.group_of(b), hi = sim.group_of(e);
        if (hi <= lo) continue;
        sim.effective.push_back({sim.groups[lo].front(), sim.groups[hi].back()});
        sim.positions.push_back({lo, hi});
        std::vector<Index> merged;
        for (Index g = lo; g <= hi; ++g) merged.insert(merged.end(), sim.groups[g].begin(), sim.groups[g].end());
        std::sort(merged.begin(), merged.end());
        sim.groups.erase(sim.groups.begin() + lo, sim.groups.begin() + hi + 1);
        sim.groups.insert(sim.groups.begin() + lo, merged);
    }
    return sim;
}

/// Builds the compressed model of `sim` with scalar merges over every tensor.
inline evocollapse::Model build_compressed(const evocollapse::Model& model, const GroupSimulation& sim) {
    using evocollapse::LayerWeights;
    std::vector<LayerWeights<float>> layers = model.layers;
    for (const auto& [lo, hi] : sim.positions) {
        LayerWeights<float> merged = layers[lo];
        for (const auto& [name, field] : evocollapse::layer_fields<float>()) {
            std::vector<std::vector<float>> stack;
            for (Index g = lo; g <= hi; ++g) {
                const auto d = (layers[g].*field).data();
                stack.emplace_back(d.begin(), d.end());
            }
            const auto out = merge_elementwise(stack, 0, stack.size() - 1);
            std::copy(out.begin(), out.end(), (merged.*field).data().begin());
        }
        layers.erase(layers.begin() + lo, layers.begin() + hi + 1);
        layers.insert(layers.begin() + lo, merged);
    }
    evocollapse::Model out = model;
    out.layers = std::move(layers);
    out.config.n_layers = static_cast<Index>(out.layers.size());
    return out;
}

/// Every merge plan of at most two ops that removes exactly `removed` layers,
/// keyed by its sequence of effective ops.
inline std::map<std::string, GroupSimulation> enumerate_plans(Index n_layers, Index removed) {
    std::vector<std::pair<Index, Index>> singles;
    for (Index b = 0; b < n_layers; ++b)
        for (Index e = b + 1; e < n_layers; ++e) singles.push_back({b, e});
    std::map<std::string, GroupSimulation> plans;
    auto consider = [&](const std::vector<std::pair<Index, Index>>& ops) {
        auto sim = simulate_groups(ops, n_layers);
        if (sim.removed(n_layers) == removed) plans.emplace(sim.key(), std::move(sim));
    };
    for (const auto& a : singles) {
        consider({a});
        for (const auto& b : singles) consider({a, b});
    }
    return plans;
}

/// Pairwise Pareto dominance with both objectives maximized.
inline bool dominates(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1]);
}

inline bool mutually_non_dominated(const std::vector<std::array<double, 2>>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (i != j && dominates(pts[i], pts[j])) return false;
    return true;
}

/// Fronts by repeated extraction of the non-dominated remainder.
inline std::vector<std::set<std::size_t>> peel_fronts(const std::vector<std::array<double, 2>>& pts) {
    std::set<std::size_t> left;
    for (std::size_t i = 0; i < pts.size(); ++i) left.insert(i);
    std::vector<std::set<std::size_t>> fronts;
    while (!left.empty()) {
        std::set<std::size_t> front;
        for (auto i : left) {
            bool dominated = false;
            for (auto j : left) dominated = dominated || (i != j && dominates(pts[j], pts[i]));
            if (!dominated) front.insert(i);
        }
        for (auto i : front) left.erase(i);
        fronts.push_back(std::move(front));
    }
    return fronts;
}

// Scalar recomputations of the integer operators, consuming a twin RNG stream
// in the documented order.

inline std::int32_t round_clamp(double x, std::int32_t lo, std::int32_t hi) {
    double r = std::round(x);  // halfway cases away from zero
    if (r < lo) r = lo;
    if (r > hi) r = hi;
    return static_cast<std::int32_t>(r);
}

inline double sbx_beta(double u, double eta) {
    if (u <= 0.5) return std::pow(2.0 * u, 1.0 / (eta + 1.0));
    return std::pow(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta + 1.0));
}

inline double pm_delta(double u, double eta) {
    if (u < 0.5) return std::pow(2.0 * u, 1.0 / (eta + 1.0)) - 1.0;
    return 1.0 - std::pow(2.0 * (1.0 - u), 1.0 / (eta + 1.0));
}

inline std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> sbx(const std::vector<std::int32_t>& x1,
                                                                           const std::vector<std::int32_t>& x2,
                                                                           double prob, double eta,
                                                                           const std::vector<std::int32_t>& upper,
                                                                           evocollapse::Rng& rng) {
    auto c1 = x1, c2 = x2;
    if (!(rng.uniform() < prob)) return {c1, c2};
    for (std::size_t v = 0; v < x1.size(); ++v) {
        const double beta = sbx_beta(rng.uniform(), eta);
        const double a = x1[v], b = x2[v];
        c1[v] = round_clamp(0.5 * ((1.0 + beta) * a + (1.0 - beta) * b), 0, upper[v]);
        c2[v] = round_clamp(0.5 * ((1.0 - beta) * a + (1.0 + beta) * b), 0, upper[v]);
    }
    return {c1, c2};
}

inline std::vector<std::int32_t> mutate(const std::vector<std::int32_t>& x, double prob, double eta,
                                        const std::vector<std::int32_t>& upper, evocollapse::Rng& rng) {
    auto out = x;
    for (std::size_t v = 0; v < x.size(); ++v) {
        if (!(rng.uniform() < prob)) continue;
        const double delta = pm_delta(rng.uniform(), eta);
        out[v] = round_clamp(out[v] + delta * static_cast<double>(upper[v]), 0, upper[v]);
    }
    return out;
}

/// Module similarity by explicit pairing of per-layer activations.
inline double hand_module_similarity(const evocollapse::Trace& base, const evocollapse::Trace& comp,
                                     const std::vector<Index>& phi) {
    auto cos = [](const auto& a, const auto& b) {
        double dot = 0, na = 0, nb = 0;
        for (Index i = 0; i < a.size(); ++i) {
            const double x = a.data()[i], y = b.data()[i];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    double attn = 0, ffn = 0;
    for (std::size_t i = 0; i < base.layers.size(); ++i) {
        const auto& b = base.layers[i];
        const auto& c = comp.layers[phi[i]];
        attn += (cos(b.attn_q, c.attn_q) + cos(b.attn_k, c.attn_k) + cos(b.attn_v, c.attn_v) +
                 cos(b.attn_o, c.attn_o)) / 4;
        ffn += (cos(b.ffn_gate, c.ffn_gate) + cos(b.ffn_up, c.ffn_up) + cos(b.ffn_down, c.ffn_down)) / 3;
    }
    const double n = static_cast<double>(base.layers.size());
    return (attn / n + ffn / n + cos(base.final_hidden, comp.final_hidden)) / 3;
}

}  // namespace oracle
