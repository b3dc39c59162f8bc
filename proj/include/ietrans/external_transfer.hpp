#pragma once
// External transfer: label unannotated, overlapping object pairs with an existing
// triplet type and keep the ones the scorer finds least likely to be NA.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ietrans/data_model.hpp"
#include "ietrans/scorer.hpp"

namespace ietrans {

struct NACandidate {
    std::size_t image = 0;
    std::string image_id;
    ObjectId subj = 0;
    ObjectId obj = 0;
    ClassId subj_class = 0;
    ClassId obj_class = 0;
    double na_score = 0;
    std::optional<PredicateId> assigned;

    PairKey key() const { return {image_id, subj, obj}; }
};

struct Addition {
    std::size_t image = 0;
    std::string image_id;
    ObjectId subj = 0;
    ObjectId obj = 0;
    PredicateId predicate = 0;
    double na_score = 0;

    bool operator==(const Addition&) const = default;
};

struct ExternalDiagnostics {
    std::size_t enumerated = 0;     // NA candidates offered
    std::size_t empty_targets = 0;  // skipped: no existing triplet type for the class pair
    std::size_t head_excluded = 0;  // skipped: label among the most frequent predicates
    std::size_t eligible = 0;       // n, ranked for the cut
    std::size_t kept = 0;

    bool operator==(const ExternalDiagnostics&) const = default;
};

struct ExternalPlan {
    std::vector<Addition> additions;  // sorted by (image, subj, obj)
    std::vector<PredicateId> excluded_head_predicates;
    ExternalDiagnostics diagnostics;
    nlohmann::json params = nlohmann::json::object();
};

// Ordered pairs (s, o), s ≠ o, with no relation on (s, o) and IoU > 0, in
// (image, subj, obj) order.
std::vector<NACandidate> enumerate_na(const Dataset& d, unsigned workers = 1);

std::vector<PairKey> candidate_keys(std::span<const NACandidate> cands);

// Predicates p with N(subj_class, p, obj_class) > 0.
std::vector<PredicateId> candidate_targets(const NACandidate& c, const TripletIndex& idx);

// Highest-scoring predicate within `targets` (NA ignored), ties to the lower index;
// nullopt when `targets` is empty.
std::optional<PredicateId> assign_label(const ScoreVector& v, std::span<const PredicateId> targets);

// The n most frequent predicates by instance count, ties to the lower index.
std::vector<PredicateId> head_predicates(const TripletIndex& idx, std::size_t n);

ExternalPlan build_external_plan(std::vector<NACandidate> cands, const ScoreTable& scores, const TripletIndex& idx,
                                 double k_percent, std::size_t head_exclude);

void write_external_plan(const ExternalPlan& plan, const Vocab& vocab, std::ostream& out);
void save_external_plan(const ExternalPlan& plan, const Vocab& vocab, const std::filesystem::path& path);
ExternalPlan read_external_plan(std::istream& in, const Dataset& d);
ExternalPlan load_external_plan(const std::filesystem::path& path, const Dataset& d);

// "predicate<TAB>additions" for every predicate, vocab order.
void write_external_summary(const ExternalPlan& plan, const Vocab& vocab, std::ostream& out);

}  // namespace ietrans
