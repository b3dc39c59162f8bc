#pragma once
// Per-pair predicate score vectors: external score dumps and a built-in
// pair-conditional frequency baseline.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ietrans/data_model.hpp"

namespace ietrans {

inline constexpr double kNormalizationTolerance = 1e-6;

// Distribution over {NA} ∪ predicates. Slot 0 is NA.
class ScoreVector {
public:
    ScoreVector() = default;
    // Throws ValidationError unless finite, non-negative and summing to 1 ± 1e-6.
    explicit ScoreVector(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double na() const { return values_.at(0); }
    std::span<const double> values() const noexcept { return values_; }

    // Highest-scoring predicate (NA ignored), ties to the lower index.
    PredicateId best_predicate() const;

    bool operator==(const ScoreVector&) const = default;

private:
    std::vector<double> values_;
};

struct PairKey {
    std::string image_id;
    ObjectId subj = 0;
    ObjectId obj = 0;

    auto operator<=>(const PairKey&) const = default;
};

std::string to_string(const PairKey& key);

class ScoreTable {
public:
    ScoreTable() = default;
    ScoreTable(std::string vocab_fingerprint, std::size_t vector_size)
        : fingerprint_(std::move(vocab_fingerprint)), vector_size_(vector_size) {}

    const std::string& fingerprint() const noexcept { return fingerprint_; }
    std::size_t vector_size() const noexcept { return vector_size_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    // Throws on length mismatch or a repeated key.
    void insert(PairKey key, ScoreVector v);
    const ScoreVector* find(const PairKey& key) const;
    const ScoreVector& at(const PairKey& key) const;  // throws MissingScoreError
    bool contains(const PairKey& key) const { return find(key) != nullptr; }

    // Throws FingerprintMismatch when the table was built for another vocabulary.
    void check_vocab(const Vocab& vocab) const;

    // Merges disjoint tables; duplicate keys must carry identical vectors.
    void merge_from(const ScoreTable& other);

    const std::map<PairKey, ScoreVector>& entries() const noexcept { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool operator==(const ScoreTable&) const = default;

private:
    std::string fingerprint_;
    std::size_t vector_size_ = 0;
    std::map<PairKey, ScoreVector> entries_;
};

// Pair-conditional predicate counts with Laplace smoothing and a constant NA prior.
class FrequencyBaseline {
public:
    static constexpr double kDefaultAlpha = 1.0;
    static constexpr double kDefaultBeta = 0.1;

    FrequencyBaseline(const Vocab& vocab, double alpha, double beta);

    void add(ClassId subject, PredicateId p, ClassId object);

    // values[p] = (1-β)(n_p + α) / Σ_q (n_q + α), values[NA] = β.
    // Throws ArgumentError when α = 0 and the pair was never observed.
    ScoreVector score_pair(ClassId subject, ClassId object) const;

    // Count of p on the ordered class pair; 0 when unseen.
    std::uint64_t count(ClassId subject, ClassId object, PredicateId p) const;

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    const std::string& vocab_fingerprint() const noexcept { return fingerprint_; }
    std::size_t vector_size() const noexcept { return vector_size_; }
    // Identifies the counts and hyperparameters; recorded in run manifests.
    std::string fingerprint() const;

private:
    double alpha_;
    double beta_;
    std::size_t vector_size_;
    std::string fingerprint_;
    std::map<std::pair<ClassId, ClassId>, std::vector<std::uint64_t>> counts_;
};

FrequencyBaseline fit_frequency_baseline(const Dataset& train,
                                         double alpha = FrequencyBaseline::kDefaultAlpha,
                                         double beta = FrequencyBaseline::kDefaultBeta);

using ScoreSource =
    std::variant<std::reference_wrapper<const FrequencyBaseline>, std::reference_wrapper<const ScoreTable>>;

// One vector per ordered pair carrying at least one relation.
ScoreTable score_annotated(const Dataset& d, const ScoreSource& source, unsigned workers = 1);

// One vector per listed pair (e.g. NA candidates). Pairs refer to objects of `d`.
ScoreTable score_pairs(const Dataset& d, std::span<const PairKey> pairs, const ScoreSource& source,
                       unsigned workers = 1);

// Every ordered pair with a relation, in image/subj/obj order.
std::vector<PairKey> annotated_pairs(const Dataset& d);

// Score dumps. JSONL records are {"image_id","subj","obj","scores":[...]}, optionally
// preceded by a header {"vocab_fingerprint":..,"vector_size":..,"manifest":{..}}.
ScoreTable read_scores_jsonl(std::istream& in, const Vocab& vocab);
void write_scores_jsonl(const ScoreTable& table, std::ostream& out,
                        const std::optional<nlohmann::json>& manifest = std::nullopt);

// Binary variant, little-endian: magic "IETSCORE", u32 version, u32 fingerprint
// length + bytes, u32 vector size, u64 record count, then per record u32 image-id
// length + bytes, u32 subj, u32 obj, and vector_size f64 values.
ScoreTable read_scores_binary(std::istream& in, const Vocab& vocab);
void write_scores_binary(const ScoreTable& table, std::ostream& out);

// Dispatches on the binary magic, otherwise parses JSONL.
ScoreTable load_external_scores(const std::filesystem::path& path, const Vocab& vocab);
void save_scores(const ScoreTable& table, const std::filesystem::path& path, bool binary,
                 const std::optional<nlohmann::json>& manifest = std::nullopt);

}  // namespace ietrans
