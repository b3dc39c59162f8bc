#pragma once
// Benchmark construction: constrained train/val/test splitting and a synthetic
// long-tailed, ambiguously annotated corpus generator.

#include <cstdint>
#include <string>
#include <vector>

#include "ietrans/data_model.hpp"

namespace ietrans {

// Image count of the full reference corpus the default validation size refers to.
inline constexpr std::size_t kReferenceCorpusImages = 104177;

struct SplitConfig {
    double train_fraction = 0.70;
    // Validation images carved from the training share, scaled by
    // corpus_size / kReferenceCorpusImages when the corpus is smaller.
    std::size_t val_image_count = 5000;
    std::size_t min_test_per_predicate = 5;
    std::size_t min_train_per_predicate = 1;
    std::vector<std::string> predicate_blocklist;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DroppedPredicate {
    PredicateId predicate = 0;
    std::string reason;  // "too_rare" | "unsatisfiable"
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
    std::vector<PredicateId> blocklisted;
    std::vector<DroppedPredicate> dropped;
    std::vector<PredicateId> surviving;
    std::size_t pre_repair_train_images = 0;  // train + val before constraint repair
    std::size_t repair_moves = 0;
};

// Removes blocklisted predicates, drops predicates that cannot meet the minima, splits
// images between train and test, pulling from validation only when the other split
// has nothing safe to give. Throws ArgumentError when no predicate survives.
// images between train and test. Throws ArgumentError when no predicate survives.
SplitResult build_split(const Dataset& corpus, const SplitConfig& cfg);

// The corpus after blocklist and predicate drops: equals the union of the splits.
Dataset filtered_corpus(const Dataset& corpus, const SplitResult& split);

struct AmbiguityRule {
    PredicateId general = 0;
    std::vector<PredicateId> informative;
    // Share of truly informative instances annotated with `general` instead.
    double mislabel_probability = 0;
};

struct SynthConfig {
    std::size_t num_images = 500;
    std::size_t num_object_classes = 30;
    std::size_t num_predicates = 30;
    // Predicate i (1-based) has weight i^-zipf_exponent.
    double zipf_exponent = 1.5;
    std::size_t min_relations_per_image = 2;
    std::size_t max_relations_per_image = 8;
    std::size_t max_distractor_objects = 2;
    // Ordered class pairs a predicate may connect.
    std::size_t general_support_pairs = 40;
    std::size_t specific_support_pairs = 3;
    std::vector<AmbiguityRule> ambiguity;
    // Share of true relations left unannotated.
    double deletion_probability = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

// The `num_general` most frequent predicates become general parents; every predicate
// in the rarer two thirds of the ranking is assigned round-robin as an informative child.
std::vector<AmbiguityRule> default_ambiguity(std::size_t num_predicates, std::size_t num_general,
                                             double mislabel_probability);

struct SynthCorpus {
    Dataset annotated;
    Dataset truth;  // same images and objects, every true relation with its true label
};

SynthCorpus synth_generate(const SynthConfig& cfg, unsigned workers = 1);

}  // namespace ietrans
