#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evocollapse/collapse.hpp"
#include "evocollapse/model.hpp"

namespace evocollapse {

/// All kinds are maximize-is-better; divergence and perplexity are negated.
enum class FitnessKind { ModuleSimilarity, NegKLDivergence, NegPerplexity };

inline constexpr std::array<FitnessKind, 3> kAllFitnessKinds{FitnessKind::ModuleSimilarity,
                                                             FitnessKind::NegKLDivergence, FitnessKind::NegPerplexity};

std::string_view fitness_kind_name(FitnessKind kind) noexcept;

/// Accepts "similarity", "kl" and "perplexity" (plus a few aliases).
FitnessKind parse_fitness_kind(std::string_view name);

/// Worst possible fitness, assigned to individuals that miss the exact target.
constexpr double penalty_score() noexcept { return -1.0; }

struct CalibrationSet {
    std::vector<TokenSequence> sequences;

    std::size_t size() const noexcept { return sequences.size(); }
    bool empty() const noexcept { return sequences.empty(); }

    /// FNV-1a hash over the tokenized contents.
    std::uint64_t fingerprint() const noexcept;
};

/// Seeded sample of `n_sentences` distinct non-empty lines, each byte-tokenized
/// and truncated to `max_len`, in sampled order.
CalibrationSet load_calibration(const std::filesystem::path& path, std::size_t n_sentences, std::size_t max_len,
                                std::uint64_t seed);

CalibrationSet sample_calibration(std::span<const std::string> lines, std::size_t n_sentences, std::size_t max_len,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

/// Cosine similarity of the flattened arguments; 0 when either norm is below 1e-12.
template <typename DA, typename DB>
double cosine(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorClass::ShapeMismatch, "cosine: [" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                            "] vs [" + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + "]");
    if (a.size() == 0) fail(ErrorClass::InvalidArgument, "cosine: empty operands");
    const auto ad = a.template cast<double>();
    const auto bd = b.template cast<double>();
    const double na = std::sqrt(ad.squaredNorm());
    const double nb = std::sqrt(bd.squaredNorm());
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return std::clamp(ad.cwiseProduct(bd).sum() / (na * nb), -1.0, 1.0);
}

template <typename Scalar>
double cosine(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_shape(a, b, "cosine");
    return cosine(a.values(), b.values());
}

struct SimilarityBreakdown {
    double attention = 0.0;
    double ffn = 0.0;
    double hidden = 0.0;
    double overall = 0.0;
};

/// Pairs each original layer i with compressed layer phi(i):
/// attention averages q/k/v/o cosines, ffn averages gate/up/down cosines,
/// both across original layers; hidden compares the final hidden states.
SimilarityBreakdown module_similarity(const Trace& base, const Trace& compressed, const SimilarityMap& phi);

/// Mean over positions of KL(softmax(base) || softmax(compressed)); probabilities
/// are clamped below at 1e-12 before the log.
double kl_divergence(const RowMatrix<float>& base_logits, const RowMatrix<float>& comp_logits);

/// exp(mean next-token negative log-likelihood); needs at least two tokens.
double perplexity(const RowMatrix<float>& logits, const TokenSequence& tokens);

// ---------------------------------------------------------------------------
// Cache

class FitnessCache {
public:
    struct Key {
        std::string plan;
        FitnessKind kind = FitnessKind::ModuleSimilarity;
        std::uint64_t calibration = 0;

        auto operator<=>(const Key&) const = default;
    };

    struct Stats {
        std::uint64_t hits = 0;
        std::uint64_t misses = 0;
        double hit_seconds = 0.0;
        double miss_seconds = 0.0;
        std::size_t entries = 0;

        double hit_rate() const noexcept {
            const auto n = hits + misses;
            return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
        }
    };

    std::optional<double> find(const Key& key) const;

    /// First writer wins; returns false if the key was already present.
    bool insert(const Key& key, double score);

    void record_hit(double seconds);
    void record_miss(double seconds);

    Stats stats() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<Key, double> entries_;
    Stats stats_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationRecord {
    bool cached = false;
    double seconds = 0.0;
};

/// Scores compressed variants of one original model over one calibration set.
/// Reference activations and logits of the original are computed once.
class FitnessEvaluator {
public:
    FitnessEvaluator(const Model& original, CalibrationSet calibration, FitnessCache& cache, int workers = 1);

    double evaluate(const ResolvedPlan& plan, FitnessKind kind);

    /// Scores every plan; duplicate keys within the batch are resolved as cache
    /// hits in batch order, so hit/miss counts do not depend on `workers`.
    std::vector<double> evaluate_batch(std::span<const ResolvedPlan* const> plans, FitnessKind kind);

    /// Uncached score of an already-compressed model paired through `phi`
    /// (phi is only used by ModuleSimilarity).
    double score_model(const Model& compressed, const SimilarityMap& phi, FitnessKind kind) const;

    SimilarityBreakdown breakdown(const Model& compressed, const SimilarityMap& phi) const;

    const Model& original() const noexcept { return original_; }
    const CalibrationSet& calibration() const noexcept { return calibration_; }
    FitnessCache& cache() noexcept { return cache_; }
    FitnessCache::Stats cache_stats() const { return cache_.stats(); }
    int workers() const noexcept { return workers_; }
    void set_workers(int workers) noexcept { workers_ = std::max(1, workers); }

    std::uint64_t forward_passes() const noexcept { return forward_passes_.load(); }
    std::uint64_t model_constructions() const noexcept { return model_constructions_.load(); }
    const std::vector<EvaluationRecord>& records() const noexcept { return records_; }

private:
    FitnessCache::Key key_for(const ResolvedPlan& plan, FitnessKind kind) const;
    double compute(const ResolvedPlan& plan, FitnessKind kind);
    double sanitize(double score, const std::string& what) const;

    const Model& original_;
    CalibrationSet calibration_;
    std::uint64_t fingerprint_;
    FitnessCache& cache_;
    int workers_;
    std::vector<ForwardResult<float>> reference_;
    mutable std::atomic<std::uint64_t> forward_passes_{0};
    std::atomic<std::uint64_t> model_constructions_{0};
    std::vector<EvaluationRecord> records_;
};

}  // namespace evocollapse
