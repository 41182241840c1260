#include "evocollapse/fitness.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>

#include "evocollapse/parallel.hpp"
#include "evocollapse/rng.hpp"

namespace evocollapse {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Row-wise log-softmax in double precision.
Eigen::ArrayXXd log_softmax(const RowMatrix<float>& logits) {
    Eigen::ArrayXXd x = logits.cast<double>().array();
    for (Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        const double lse = mx + std::log((x.row(r) - mx).exp().sum());
        x.row(r) -= lse;
    }
    return x;
}

}  // namespace

std::string_view fitness_kind_name(FitnessKind kind) noexcept {
    switch (kind) {
        case FitnessKind::ModuleSimilarity: return "similarity";
        case FitnessKind::NegKLDivergence: return "kl";
        case FitnessKind::NegPerplexity: return "perplexity";
    }
    return "unknown";
}

FitnessKind parse_fitness_kind(std::string_view name) {
    if (name == "similarity" || name == "module-similarity" || name == "sim") return FitnessKind::ModuleSimilarity;
    if (name == "kl" || name == "neg-kl" || name == "kl-divergence") return FitnessKind::NegKLDivergence;
    if (name == "perplexity" || name == "ppl" || name == "neg-perplexity") return FitnessKind::NegPerplexity;
    fail(ErrorClass::InvalidArgument,
         "unknown fitness kind '" + std::string(name) + "' (expected similarity, kl or perplexity)");
}

// ---------------------------------------------------------------------------
// Calibration data

std::uint64_t CalibrationSet::fingerprint() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    };
    feed(sequences.size());
    for (const auto& s : sequences) {
        feed(s.size());
        for (auto t : s.tokens) feed(static_cast<std::uint64_t>(t));
    }
    return h;
}

CalibrationSet sample_calibration(std::span<const std::string> lines, std::size_t n_sentences, std::size_t max_len,
                                  std::uint64_t seed) {
    if (n_sentences == 0) fail(ErrorClass::InvalidArgument, "calibration: n_sentences must be >= 1");
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (!lines[i].empty()) usable.push_back(i);
    if (usable.size() < n_sentences)
        fail(ErrorClass::InvalidArgument, "insufficient calibration sentences: need " + std::to_string(n_sentences) +
                                              ", have " + std::to_string(usable.size()));
    // Partial Fisher-Yates on the usable line indices.
    Rng rng(derive_seed(seed, 0xca11b));
    for (std::size_t i = 0; i < n_sentences; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(usable.size() - 1)));
        std::swap(usable[i], usable[j]);
    }
    CalibrationSet set;
    set.sequences.reserve(n_sentences);
    for (std::size_t i = 0; i < n_sentences; ++i) set.sequences.push_back(tokenize_bytes(lines[usable[i]], max_len));
    return set;
}

CalibrationSet load_calibration(const std::filesystem::path& path, std::size_t n_sentences, std::size_t max_len,
                                std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorClass::Io, "cannot read calibration file " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return sample_calibration(lines, n_sentences, max_len, seed);
}

// ---------------------------------------------------------------------------
// Metrics

SimilarityBreakdown module_similarity(const Trace& base, const Trace& compressed, const SimilarityMap& phi) {
    const std::size_t n = base.layers.size();
    if (n == 0 || phi.size() != n)
        fail(ErrorClass::Incompatible, "module_similarity: similarity map has " + std::to_string(phi.size()) +
                                           " entries for " + std::to_string(n) + " original layers");
    SimilarityBreakdown out;
    for (std::size_t i = 0; i < n; ++i) {
        const Index c = phi[i];
        if (c < 0 || c >= static_cast<Index>(compressed.layers.size()))
            fail(ErrorClass::Incompatible, "module_similarity: phi(" + std::to_string(i) + ") = " + std::to_string(c) +
                                               " outside the compressed model");
        const auto& b = base.layers[i];
        const auto& k = compressed.layers[static_cast<std::size_t>(c)];
        out.attention += (cosine(b.attn_q, k.attn_q) + cosine(b.attn_k, k.attn_k) + cosine(b.attn_v, k.attn_v) +
                          cosine(b.attn_o, k.attn_o)) /
                         4.0;
        out.ffn += (cosine(b.ffn_gate, k.ffn_gate) + cosine(b.ffn_up, k.ffn_up) + cosine(b.ffn_down, k.ffn_down)) / 3.0;
    }
    out.attention /= static_cast<double>(n);
    out.ffn /= static_cast<double>(n);
    out.hidden = cosine(base.final_hidden, compressed.final_hidden);
    out.overall = (out.attention + out.ffn + out.hidden) / 3.0;
    return out;
}

double kl_divergence(const RowMatrix<float>& base_logits, const RowMatrix<float>& comp_logits) {
    if (base_logits.rows() != comp_logits.rows() || base_logits.cols() != comp_logits.cols())
        fail(ErrorClass::ShapeMismatch, "kl_divergence: logits shapes differ");
    if (base_logits.rows() == 0) fail(ErrorClass::InvalidArgument, "kl_divergence: no positions");
    constexpr double floor = 1e-12;
    const Eigen::ArrayXXd lp = log_softmax(base_logits);
    const Eigen::ArrayXXd lq = log_softmax(comp_logits);
    double total = 0.0;
    for (Index r = 0; r < lp.rows(); ++r) {
        const Eigen::ArrayXd p = lp.row(r).transpose().exp().max(floor);
        const Eigen::ArrayXd q = lq.row(r).transpose().exp().max(floor);
        total += std::max(0.0, (p * (p.log() - q.log())).sum());
    }
    return total / static_cast<double>(lp.rows());
}

double perplexity(const RowMatrix<float>& logits, const TokenSequence& tokens) {
    if (tokens.size() < 2) fail(ErrorClass::InvalidArgument, "perplexity: need at least two tokens");
    if (logits.rows() != static_cast<Index>(tokens.size()))
        fail(ErrorClass::ShapeMismatch, "perplexity: logits rows do not match token count");
    const Eigen::ArrayXXd lp = log_softmax(logits);
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) nll -= lp(static_cast<Index>(t), tokens.tokens[t + 1]);
    return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

// ---------------------------------------------------------------------------
// Cache

std::optional<double> FitnessCache::find(const Key& key) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool FitnessCache::insert(const Key& key, double score) {
    std::unique_lock lock(mutex_);
    return entries_.try_emplace(key, score).second;
}

void FitnessCache::record_hit(double seconds) {
    std::unique_lock lock(mutex_);
    ++stats_.hits;
    stats_.hit_seconds += seconds;
}

void FitnessCache::record_miss(double seconds) {
    std::unique_lock lock(mutex_);
    ++stats_.misses;
    stats_.miss_seconds += seconds;
}

FitnessCache::Stats FitnessCache::stats() const {
    std::shared_lock lock(mutex_);
    Stats s = stats_;
    s.entries = entries_.size();
    return s;
}

// ---------------------------------------------------------------------------
// Evaluator

FitnessEvaluator::FitnessEvaluator(const Model& original, CalibrationSet calibration, FitnessCache& cache,
                                   int workers)
    : original_(original),
      calibration_(std::move(calibration)),
      fingerprint_(calibration_.fingerprint()),
      cache_(cache),
      workers_(std::max(1, workers)) {
    validate_shapes(original_);
    if (calibration_.empty()) fail(ErrorClass::InvalidArgument, "empty calibration set");
    for (const auto& s : calibration_.sequences)
        if (s.empty()) fail(ErrorClass::InvalidArgument, "calibration set contains an empty sequence");
    reference_.resize(calibration_.size());
    parallel_for(calibration_.size(), workers_,
                 [&](std::size_t i) { reference_[i] = forward(original_, calibration_.sequences[i], true); });
    forward_passes_ += calibration_.size();
}

FitnessCache::Key FitnessEvaluator::key_for(const ResolvedPlan& plan, FitnessKind kind) const {
    return {canonical_key(plan), kind, fingerprint_};
}

double FitnessEvaluator::sanitize(double score, const std::string& what) const {
    if (std::isfinite(score)) return score;
    std::cerr << "warning: non-finite " << what << " score mapped to penalty " << penalty_score() << "\n";
    return penalty_score();
}

double FitnessEvaluator::compute(const ResolvedPlan& plan, FitnessKind kind) {
    const Model compressed = apply_plan(original_, plan);
    ++model_constructions_;
    const SimilarityMap phi = similarity_map(plan, original_.n_layers());
    return sanitize(score_model(compressed, phi, kind), canonical_key(plan));
}

SimilarityBreakdown FitnessEvaluator::breakdown(const Model& compressed, const SimilarityMap& phi) const {
    SimilarityBreakdown mean;
    for (std::size_t s = 0; s < calibration_.size(); ++s) {
        const auto r = forward(compressed, calibration_.sequences[s], true);
        ++forward_passes_;
        const auto b = module_similarity(*reference_[s].trace, *r.trace, phi);
        mean.attention += b.attention;
        mean.ffn += b.ffn;
        mean.hidden += b.hidden;
        mean.overall += b.overall;
    }
    const double n = static_cast<double>(calibration_.size());
    mean.attention /= n;
    mean.ffn /= n;
    mean.hidden /= n;
    mean.overall /= n;
    return mean;
}

double FitnessEvaluator::score_model(const Model& compressed, const SimilarityMap& phi, FitnessKind kind) const {
    if (compressed.config.d_model != original_.config.d_model ||
        compressed.config.vocab_size != original_.config.vocab_size)
        fail(ErrorClass::Incompatible, "compressed model dimensions differ from the original");
    switch (kind) {
        case FitnessKind::ModuleSimilarity: return breakdown(compressed, phi).overall;
        case FitnessKind::NegKLDivergence: {
            double total = 0.0;
            for (std::size_t s = 0; s < calibration_.size(); ++s) {
                const auto r = forward(compressed, calibration_.sequences[s], false);
                ++forward_passes_;
                total += kl_divergence(reference_[s].logits, r.logits);
            }
            return -total / static_cast<double>(calibration_.size());
        }
        case FitnessKind::NegPerplexity: {
            double total = 0.0;
            std::size_t counted = 0;
            for (const auto& seq : calibration_.sequences) {
                if (seq.size() < 2) continue;
                const auto r = forward(compressed, seq, false);
                ++forward_passes_;
                total += perplexity(r.logits, seq);
                ++counted;
            }
            if (counted == 0)
                fail(ErrorClass::InvalidArgument, "perplexity needs calibration sequences of at least two tokens");
            return -total / static_cast<double>(counted);
        }
    }
    fail(ErrorClass::InvalidArgument, "unknown fitness kind");
}

double FitnessEvaluator::evaluate(const ResolvedPlan& plan, FitnessKind kind) {
    const ResolvedPlan* p = &plan;
    return evaluate_batch(std::span<const ResolvedPlan* const>(&p, 1), kind).front();
}

std::vector<double> FitnessEvaluator::evaluate_batch(std::span<const ResolvedPlan* const> plans, FitnessKind kind) {
    struct Miss {
        std::size_t first;
        FitnessCache::Key key;
        double score = 0.0;
        double seconds = 0.0;
    };
    const std::size_t n = plans.size();
    std::vector<double> scores(n, 0.0);
    std::vector<EvaluationRecord> recs(n);
    std::vector<Miss> misses;
    std::map<FitnessCache::Key, std::size_t> pending;
    std::vector<std::optional<std::size_t>> waiting(n);

    for (std::size_t i = 0; i < n; ++i) {
        if (plans[i]->original_layers != original_.n_layers())
            fail(ErrorClass::Incompatible, "plan was decoded for " + std::to_string(plans[i]->original_layers) +
                                               " layers but the model has " + std::to_string(original_.n_layers()));
        const auto t0 = Clock::now();
        auto key = key_for(*plans[i], kind);
        if (auto hit = cache_.find(key)) {
            scores[i] = *hit;
            recs[i] = {true, seconds_since(t0)};
            cache_.record_hit(recs[i].seconds);
        } else if (auto it = pending.find(key); it != pending.end()) {
            waiting[i] = it->second;
        } else {
            pending.emplace(key, misses.size());
            waiting[i] = misses.size();
            misses.push_back({i, std::move(key)});
        }
    }

    parallel_for(misses.size(), workers_, [&](std::size_t j) {
        const auto t0 = Clock::now();
        misses[j].score = compute(*plans[misses[j].first], kind);
        misses[j].seconds = seconds_since(t0);
    });

    for (const auto& m : misses) {
        cache_.insert(m.key, m.score);
        cache_.record_miss(m.seconds);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!waiting[i]) continue;
        const Miss& m = misses[*waiting[i]];
        if (m.first == i) {
            scores[i] = m.score;
            recs[i] = {false, m.seconds};
            continue;
        }
        const auto t0 = Clock::now();
        scores[i] = cache_.find(m.key).value();
        recs[i] = {true, seconds_since(t0)};
        cache_.record_hit(recs[i].seconds);
    }
    records_.insert(records_.end(), recs.begin(), recs.end());
    return scores;
}

}  // namespace evocollapse
