#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evocollapse/model.hpp"

namespace evocollapse {

/// Collapse of consecutive layers [base, end] (inclusive) into `base`.
struct MergeOp {
    Index base = 0;
    Index end = 0;

    Index length() const noexcept { return end - base; }
    bool operator==(const MergeOp&) const = default;
};

/// 3L integers, one (base, end, active) triple per potential merge operation.
class Genome {
public:
    Genome() = default;
    explicit Genome(std::vector<std::int32_t> vars) : vars_(std::move(vars)) {}

    /// All-inactive genome with `n_layers` zeroed slots.
    static Genome inactive(Index n_layers) { return Genome(std::vector<std::int32_t>(3 * n_layers, 0)); }

    std::size_t size() const noexcept { return vars_.size(); }
    std::size_t slots() const noexcept { return vars_.size() / 3; }

    std::int32_t& base(std::size_t slot) { return vars_[3 * slot]; }
    std::int32_t& end(std::size_t slot) { return vars_[3 * slot + 1]; }
    std::int32_t& active(std::size_t slot) { return vars_[3 * slot + 2]; }
    std::int32_t base(std::size_t slot) const { return vars_[3 * slot]; }
    std::int32_t end(std::size_t slot) const { return vars_[3 * slot + 1]; }
    std::int32_t active(std::size_t slot) const { return vars_[3 * slot + 2]; }

    std::vector<std::int32_t>& vars() noexcept { return vars_; }
    const std::vector<std::int32_t>& vars() const noexcept { return vars_; }

    bool operator==(const Genome&) const = default;

private:
    std::vector<std::int32_t> vars_;
};

/// Inclusive per-variable bounds of a genome for an `n_layers` model.
struct GenomeBounds {
    Index n_layers = 0;

    std::int32_t lower(std::size_t) const noexcept { return 0; }
    std::int32_t upper(std::size_t var) const noexcept {
        return var % 3 == 2 ? 1 : static_cast<std::int32_t>(n_layers - 1);
    }
};

/// Throws InvalidArgument on a wrong length or an out-of-bounds value.
void validate_genome(const Genome& genome, Index n_layers);

/// Map from original layer index to a layer index in a (possibly) shrunk model.
struct LayerMap {
    std::vector<Index> mapping;

    Index operator[](std::size_t i) const { return mapping[i]; }
    std::size_t size() const noexcept { return mapping.size(); }
    bool operator==(const LayerMap&) const = default;
};

using AliasMap = LayerMap;
using SimilarityMap = LayerMap;

struct ResolvedPlan {
    Index original_layers = 0;
    /// Effective operations in original-layer coordinates, genome order preserved.
    /// `base` is the first and `end` the last original layer merged by the op.
    std::vector<MergeOp> effective_ops;
    /// The same operations in the coordinates of the shrinking model at the time
    /// each one is applied; sum of their lengths equals removed_count.
    std::vector<MergeOp> applied_ops;
    /// Final alias map: original layer -> compressed layer index.
    AliasMap alias;
    Index removed_count = 0;
    Index final_layer_count = 0;

    bool empty() const noexcept { return effective_ops.empty(); }
};

/// Resolves a sequence of (base, end) operations, all treated as active,
/// through the alias mapping. Zero or negative length ops are dropped.
ResolvedPlan resolve_ops(std::span<const MergeOp> ops, Index n_layers);

ResolvedPlan decode_genome(const Genome& genome, Index n_layers);

SimilarityMap similarity_map(const ResolvedPlan& plan, Index n_layers);

double compression_ratio(const ResolvedPlan& plan, Index n_layers);

/// Order-preserving serialization of the effective ops, e.g. "[5-7][3-7]"; "[]" for the identity plan.
std::string canonical_key(const ResolvedPlan& plan);

// ---------------------------------------------------------------------------
// Weight merging

/// theta* = theta_base + sum_{k=1..m} (theta_{base+k} - theta_base), applied to all nine tensors.
template <typename Scalar>
LayerWeights<Scalar> merge_layers(std::span<const LayerWeights<Scalar>> layers, Index base, Index end) {
    if (base < 0 || end <= base || end >= static_cast<Index>(layers.size()))
        fail(ErrorClass::InvalidArgument, "merge_layers: invalid range [" + std::to_string(base) + ", " +
                                              std::to_string(end) + "] for " + std::to_string(layers.size()) +
                                              " layers");
    const auto& first = layers[static_cast<std::size_t>(base)];
    LayerWeights<Scalar> merged = first;
    for (const auto& [name, field] : layer_fields<Scalar>()) {
        const auto& anchor = first.*field;
        auto& acc = (merged.*field).values();
        for (Index k = base + 1; k <= end; ++k) {
            const auto& other = layers[static_cast<std::size_t>(k)].*field;
            require_same_shape(anchor, other, "merge_layers: " + std::string(name));
            acc.array() += other.values().array() - anchor.values().array();
        }
    }
    return merged;
}

template <typename Scalar>
TransformerModel<Scalar> apply_plan(const TransformerModel<Scalar>& model, const ResolvedPlan& plan) {
    if (plan.original_layers != model.n_layers())
        fail(ErrorClass::Incompatible, "plan was decoded for " + std::to_string(plan.original_layers) +
                                           " layers but the model has " + std::to_string(model.n_layers()));
    TransformerModel<Scalar> out = model;
    for (const MergeOp& op : plan.applied_ops) {
        auto merged = merge_layers(std::span<const LayerWeights<Scalar>>(out.layers), op.base, op.end);
        out.layers[static_cast<std::size_t>(op.base)] = std::move(merged);
        out.layers.erase(out.layers.begin() + op.base + 1, out.layers.begin() + op.end + 1);
    }
    out.config.n_layers = out.n_layers();
    return out;
}

// ---------------------------------------------------------------------------
// Plan files

nlohmann::json plan_to_json(const ResolvedPlan& plan);

/// Resolves the listed ops as an all-active sequence; throws InvalidArgument on malformed input.
ResolvedPlan plan_from_json(const nlohmann::json& j);

void write_plan_file(const ResolvedPlan& plan, const std::filesystem::path& path);
ResolvedPlan read_plan_file(const std::filesystem::path& path);

}  // namespace evocollapse
