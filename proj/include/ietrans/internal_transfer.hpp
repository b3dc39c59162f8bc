#pragma once
// Internal transfer: relabel annotated instances from general predicates to the
// more informative predicates a scorer confuses them with.
//
// For every annotated triplet type t = (cs, p, co):
//   1. average the score vectors of t's instances,
//   2. confusion set  Pc = { q : avg[q] > avg[p] },
//   3. sources        Ps = { q in Pc : N(cs,q,co) > 0 and A(cs,q,co) < A(t) },
//      with attraction A(t) = N(t) / sum over types t' carrying p of N(t'),
//   4. every original instance of (cs, q, co) with q in Ps is a candidate for t.
// An instance that is a candidate for several targets goes to the target with the
// highest attraction (ties: lower predicate index). Each target then keeps the top
// share of its candidates ranked by their own score on p.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ietrans/data_model.hpp"
#include "ietrans/scorer.hpp"

namespace ietrans {

struct AggregatedEntry {
    std::vector<double> mean;  // score-axis layout, slot 0 = NA
    std::size_t count = 0;
};

using AggregatedScores = std::map<TripletType, AggregatedEntry>;

// Exact rational N(t) / total(p). Compared by cross-multiplication.
class Attraction {
public:
    Attraction(std::uint64_t numerator, std::uint64_t denominator);

    std::uint64_t numerator() const noexcept { return num_; }
    std::uint64_t denominator() const noexcept { return den_; }
    double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    std::strong_ordering operator<=>(const Attraction& other) const noexcept;
    bool operator==(const Attraction& other) const noexcept { return (*this <=> other) == 0; }

private:
    std::uint64_t num_;
    std::uint64_t den_;
};

struct TransferRule {
    TripletType target;
    std::vector<PredicateId> confusion;  // Pc, ascending
    std::vector<PredicateId> sources;    // Ps ⊆ Pc, ascending
    Attraction target_attraction{1, 1};
    std::vector<Attraction> source_attraction;  // parallel to `sources`
};

struct Move {
    RelationRef ref;
    std::string image_id;
    ObjectId subj = 0;
    ObjectId obj = 0;
    PredicateId src = 0;
    PredicateId tgt = 0;
    double tgt_score = 0;  // instance's score on tgt

    bool operator==(const Move&) const = default;
};

struct TargetDiagnostics {
    TripletType target;
    std::size_t candidates = 0;  // n_t, after conflict resolution
    std::size_t kept = 0;
    double threshold = 0;        // adaptive mode only: μ + kσ

    bool operator==(const TargetDiagnostics&) const = default;
};

struct InternalPlan {
    std::vector<Move> moves;  // sorted by (image, rel)
    std::vector<TargetDiagnostics> targets;
    nlohmann::json params = nlohmann::json::object();
};

AggregatedScores aggregate_scores(const Dataset& d, const ScoreTable& scores);

// Throws ArgumentError when t has no aggregated entry.
std::vector<PredicateId> confusion_set(const AggregatedScores& agg, const TripletType& t);

// Throws ArgumentError when N(t) = 0.
Attraction attraction(const TripletIndex& idx, const TripletType& t);

std::vector<PredicateId> transfer_sources(const TripletType& t, std::span<const PredicateId> confusion,
                                          const TripletIndex& idx);

// Original-provenance instances of (t.subject, q, t.object) for q in sources.
std::vector<RelationRef> collect_candidates(const Dataset& d, const TripletType& t,
                                            std::span<const PredicateId> sources);

std::vector<TransferRule> build_rules(const AggregatedScores& agg, const TripletIndex& idx,
                                      unsigned workers = 1);

// Fixed-percentage cut: each target keeps floor(k_I/100 · n_t) candidates.
InternalPlan build_plan(const Dataset& d, const ScoreTable& scores, const TripletIndex& idx,
                        double k_percent, unsigned workers = 1);

// Adaptive cut: keep a candidate iff its score on the target predicate exceeds
// μ + k·σ of the target type's own instances (population σ).
InternalPlan build_plan_adaptive(const Dataset& d, const ScoreTable& scores, const TripletIndex& idx,
                                 double k, unsigned workers = 1);

// floor(percent/100 · n); percent must lie in [0, 100].
std::size_t percent_cut(double percent, std::size_t n);

void write_internal_plan(const InternalPlan& plan, const Vocab& vocab, std::ostream& out);
void save_internal_plan(const InternalPlan& plan, const Vocab& vocab, const std::filesystem::path& path);
// Resolves moves against `d`; throws ValidationError for unknown images/relations.
InternalPlan read_internal_plan(std::istream& in, const Dataset& d);
InternalPlan load_internal_plan(const std::filesystem::path& path, const Dataset& d);

// Confusion matrix of one ordered class pair: one row per annotated predicate,
// columns NA then every predicate, cells the aggregated mean score.
void write_confusion_csv(const AggregatedScores& agg, const Vocab& vocab, ClassId subject, ClassId object,
                         std::ostream& out);

}  // namespace ietrans
