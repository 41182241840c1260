#include "evocollapse/collapse.hpp"

#include <algorithm>
#include <fstream>

namespace evocollapse {

using nlohmann::json;

void validate_genome(const Genome& genome, Index n_layers) {
    if (n_layers < 2) fail(ErrorClass::InvalidArgument, "genome: n_layers must be >= 2");
    if (genome.size() != static_cast<std::size_t>(3 * n_layers))
        fail(ErrorClass::InvalidArgument, "genome length " + std::to_string(genome.size()) + " != 3 * " +
                                              std::to_string(n_layers));
    const GenomeBounds bounds{n_layers};
    for (std::size_t v = 0; v < genome.size(); ++v) {
        const auto x = genome.vars()[v];
        if (x < bounds.lower(v) || x > bounds.upper(v))
            fail(ErrorClass::InvalidArgument, "genome variable " + std::to_string(v) + " = " + std::to_string(x) +
                                                  " out of bounds");
    }
}

ResolvedPlan resolve_ops(std::span<const MergeOp> ops, Index n_layers) {
    if (n_layers < 2) fail(ErrorClass::InvalidArgument, "resolve_ops: n_layers must be >= 2");
    ResolvedPlan plan;
    plan.original_layers = n_layers;
    auto& psi = plan.alias.mapping;
    psi.resize(static_cast<std::size_t>(n_layers));
    for (Index j = 0; j < n_layers; ++j) psi[j] = j;
    Index current = n_layers;

    for (const MergeOp& op : ops) {
        if (op.base < 0 || op.end < 0 || op.base >= n_layers || op.end >= n_layers)
            fail(ErrorClass::InvalidArgument, "merge op (" + std::to_string(op.base) + "," + std::to_string(op.end) +
                                                  ") outside [0, " + std::to_string(n_layers - 1) + "]");
        if (op.end <= op.base) continue;
        const Index mb = psi[op.base];
        const Index me = std::min(psi[op.end], current - 1);
        if (me <= mb) continue;
        const Index len = me - mb;

        const auto first = std::find(psi.begin(), psi.end(), mb) - psi.begin();
        const auto last = std::find(psi.rbegin(), psi.rend(), me).base() - psi.begin() - 1;
        plan.effective_ops.push_back({first, last});
        plan.applied_ops.push_back({mb, me});

        // Layers already folded into mb or me keep following them; the shift uses
        // the length in current coordinates.
        for (auto& p : psi) {
            if (p > mb && p <= me)
                p = mb;
            else if (p > me)
                p = std::max<Index>(0, p - len);
        }
        current -= len;
        plan.removed_count += len;
    }
    plan.final_layer_count = current;
    return plan;
}

ResolvedPlan decode_genome(const Genome& genome, Index n_layers) {
    validate_genome(genome, n_layers);
    std::vector<MergeOp> ops;
    ops.reserve(genome.slots());
    for (std::size_t i = 0; i < genome.slots(); ++i)
        if (genome.active(i) != 0) ops.push_back({genome.base(i), genome.end(i)});
    return resolve_ops(ops, n_layers);
}

SimilarityMap similarity_map(const ResolvedPlan& plan, Index n_layers) {
    if (plan.original_layers != n_layers || plan.alias.size() != static_cast<std::size_t>(n_layers))
        fail(ErrorClass::Incompatible, "similarity_map: plan was decoded for " +
                                           std::to_string(plan.original_layers) + " layers, not " +
                                           std::to_string(n_layers));
    return plan.alias;
}

double compression_ratio(const ResolvedPlan& plan, Index n_layers) {
    if (n_layers <= 0) fail(ErrorClass::InvalidArgument, "compression_ratio: n_layers must be positive");
    return static_cast<double>(plan.removed_count) / static_cast<double>(n_layers);
}

std::string canonical_key(const ResolvedPlan& plan) {
    if (plan.effective_ops.empty()) return "[]";
    std::string key;
    for (const auto& op : plan.effective_ops) key += "[" + std::to_string(op.base) + "-" + std::to_string(op.end) + "]";
    return key;
}

json plan_to_json(const ResolvedPlan& plan) {
    json ops = json::array();
    for (const auto& op : plan.effective_ops) ops.push_back({op.base, op.end});
    return {{"original_layers", plan.original_layers},
            {"effective_ops", std::move(ops)},
            {"removed", plan.removed_count},
            {"ratio", compression_ratio(plan, plan.original_layers)},
            {"canonical_key", canonical_key(plan)}};
}

ResolvedPlan plan_from_json(const json& j) {
    Index n_layers = 0;
    std::vector<MergeOp> ops;
    try {
        n_layers = j.at("original_layers").get<Index>();
        for (const auto& op : j.at("effective_ops")) {
            if (!op.is_array() || op.size() != 2) fail(ErrorClass::InvalidArgument, "plan op must be [base, end]");
            ops.push_back({op[0].get<Index>(), op[1].get<Index>()});
        }
    } catch (const json::exception& ex) {
        fail(ErrorClass::InvalidArgument, std::string("malformed plan: ") + ex.what());
    }
    // Ops need not be in resolved form; redundant ones vanish here.
    ResolvedPlan plan = resolve_ops(ops, n_layers);
    if (j.contains("removed") && j["removed"].get<Index>() != plan.removed_count)
        fail(ErrorClass::InvalidArgument, "plan 'removed' field disagrees with its ops");
    return plan;
}

void write_plan_file(const ResolvedPlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorClass::Io, "cannot write " + path.string());
    out << plan_to_json(plan).dump(2) << "\n";
    if (!out) fail(ErrorClass::Io, "short write to " + path.string());
}

ResolvedPlan read_plan_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorClass::Io, "cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        fail(ErrorClass::InvalidArgument, "malformed plan file " + path.string() + ": " + ex.what());
    }
    return plan_from_json(j);
}

}  // namespace evocollapse
