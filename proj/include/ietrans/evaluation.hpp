#pragma once
// Predicate-classification metrics over a test dataset and its score table.
//
//   recall family:   R@K (micro, mean over images), mR@K (mean per-predicate recall), F@K
//   accuracy family: Acc@K (micro), mAcc@K (mean per-class accuracy), F-Acc@K, Non-Zero@K
//
// All values are percentages. Macro means skip predicates without ground truth.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ietrans/data_model.hpp"
#include "ietrans/scorer.hpp"

namespace ietrans {

enum class MetricFamily { recall, accuracy };

struct MetricRow {
    int k = 0;
    double micro = 0;
    double macro = 0;
    double f = 0;
    std::optional<std::size_t> non_zero;  // accuracy family only
};

struct PredicateBreakdown {
    PredicateId predicate = 0;
    std::size_t ground_truth = 0;
    std::vector<std::size_t> hits;  // parallel to MetricReport::rows
};

struct MetricReport {
    MetricFamily family = MetricFamily::recall;
    std::vector<MetricRow> rows;
    std::vector<PredicateBreakdown> per_predicate;  // every predicate, vocab order
    std::size_t ground_truth = 0;

    const MetricRow& at_k(int k) const;
};

// 2·a·b / (a + b); 0 when both are 0.
double harmonic_f(double micro, double macro);

// One predicate per annotated pair (its best non-NA score) when graph_constraint
// is set, every non-NA predicate otherwise.
MetricReport recall_family(const Dataset& test, const ScoreTable& scores, std::span<const int> ks,
                           bool graph_constraint = true);

MetricReport accuracy_family(const Dataset& test, const ScoreTable& scores, std::span<const int> ks);

inline constexpr int kDefaultRecallKs[] = {20, 50, 100};
inline constexpr int kDefaultAccuracyKs[] = {1, 5, 10};

// Summary TSV (one row per K) and per-predicate TSV; numbers to two decimals.
void write_report_tsv(const MetricReport& report, std::ostream& out);
void write_breakdown_tsv(const MetricReport& report, const Vocab& vocab, std::ostream& out);
nlohmann::json report_to_json(const MetricReport& report, const Vocab& vocab);

std::string format_percent(double v);

}  // namespace ietrans
