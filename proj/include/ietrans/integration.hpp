#pragma once
// Applying transfer plans to a dataset, and the reports that describe the result.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ietrans/data_model.hpp"
#include "ietrans/external_transfer.hpp"
#include "ietrans/internal_transfer.hpp"

namespace ietrans {

struct EnhancedDataset {
    Dataset dataset;
    nlohmann::json manifest = nlohmann::json::object();
    std::size_t moved = 0;
    std::size_t added = 0;
    // Moves whose new (subj, obj, predicate) already existed; the moved copy is dropped.
    std::size_t collisions = 0;
};

// Internal moves relabel in place (provenance internal:<src>); external additions are
// appended to their image after the existing relations, in (subj, obj) order.
// Throws ValidationError when a plan references a relation that does not exist or
// no longer carries the plan's source predicate.
EnhancedDataset merge(const Dataset& d, const InternalPlan& ip, const ExternalPlan& ep,
                      const nlohmann::json& extra_manifest = nlohmann::json::object());

void write_enhanced(const EnhancedDataset& e, std::ostream& out);

struct DistributionBin {
    std::size_t first_rank = 0;  // inclusive, 0 = most frequent predicate
    std::size_t last_rank = 0;   // exclusive
    std::uint64_t before = 0;
    std::uint64_t after = 0;
    std::optional<double> log10_before;  // absent when the count is 0
    std::optional<double> log10_after;
};

struct DistributionReport {
    std::vector<PredicateId> rank_order;  // by original frequency desc, ties lower index
    std::vector<DistributionBin> bins;
};

// Predicates ranked by their count in `before`, split into `bins` equal-width rank
// ranges; bin b covers ranks [floor(b·P/bins), floor((b+1)·P/bins)).
DistributionReport distribution_report(const Dataset& before, const Dataset& after, std::size_t bins);
void write_distribution_tsv(const DistributionReport& report, const Vocab& vocab, std::ostream& out);

struct TransferPairRow {
    std::string general;
    std::string informative;
    std::size_t moved = 0;

    bool operator==(const TransferPairRow&) const = default;
};

// (src, tgt) pairs over all moves, by count desc then names; top_n = 0 keeps all.
std::vector<TransferPairRow> transfer_pair_report(const InternalPlan& ip, const Vocab& vocab, std::size_t top_n = 0);
void write_transfer_pair_tsv(const std::vector<TransferPairRow>& rows, std::ostream& out);

}  // namespace ietrans
