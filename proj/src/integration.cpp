#include "ietrans/integration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "ietrans/error.hpp"

namespace ietrans {

namespace {

std::vector<std::uint64_t> predicate_counts(const Dataset& d) {
    std::vector<std::uint64_t> counts(d.vocab.score_size(), 0);
    for (const auto& img : d.images) {
        for (const auto& rel : img.relations) ++counts[rel.predicate];
    }
    return counts;
}

std::optional<double> log_count(std::uint64_t n) {
    if (n == 0) return std::nullopt;
    return std::log10(static_cast<double>(n));
}

}  // namespace

EnhancedDataset merge(const Dataset& d, const InternalPlan& ip, const ExternalPlan& ep,
                      const nlohmann::json& extra_manifest) {
    EnhancedDataset e;
    e.dataset = d;

    std::set<RelationRef> moved_refs;
    for (const Move& m : ip.moves) {
        if (m.ref.image >= d.images.size() || d.images[m.ref.image].id != m.image_id) {
            throw ValidationError("internal plan references unknown image " + m.image_id);
        }
        const Image& img = d.images[m.ref.image];
        if (m.ref.rel >= img.relations.size()) {
            throw ValidationError("internal plan references unknown rel_id " + std::to_string(m.ref.rel) +
                                  " in image " + m.image_id);
        }
        const RelationInstance& rel = img.relations[m.ref.rel];
        if (rel.predicate != m.src || rel.subj != m.subj || rel.obj != m.obj) {
            throw ValidationError("internal plan move does not match relation " + std::to_string(m.ref.rel) +
                                  " in image " + m.image_id);
        }
        if (m.src == m.tgt) throw ValidationError("internal plan move keeps its predicate");
        if (!moved_refs.insert(m.ref).second) {
            throw ValidationError("internal plan moves relation " + std::to_string(m.ref.rel) + " in image " +
                                  m.image_id + " twice");
        }
    }

    // Relabel in place, then drop any relation that now duplicates an earlier one.
    for (const Move& m : ip.moves) {
        RelationInstance& rel = e.dataset.images[m.ref.image].relations[m.ref.rel];
        rel.predicate = m.tgt;
        rel.provenance = Provenance::internal(m.src);
    }
    for (auto& img : e.dataset.images) {
        std::vector<RelationInstance> kept;
        kept.reserve(img.relations.size());
        // Unmoved relations win a collision over moved ones.
        std::set<std::tuple<ObjectId, ObjectId, PredicateId>> seen;
        for (const auto& rel : img.relations) {
            if (rel.provenance.kind != ProvenanceKind::internal_transfer) seen.emplace(rel.subj, rel.obj, rel.predicate);
        }
        for (const auto& rel : img.relations) {
            if (rel.provenance.kind == ProvenanceKind::internal_transfer &&
                !seen.emplace(rel.subj, rel.obj, rel.predicate).second) {
                ++e.collisions;
                continue;
            }
            kept.push_back(rel);
        }
        img.relations = std::move(kept);
    }
    e.moved = ip.moves.size() - e.collisions;

    for (const Addition& a : ep.additions) {
        if (a.image >= d.images.size() || d.images[a.image].id != a.image_id) {
            throw ValidationError("external plan references unknown image " + a.image_id);
        }
        const Image& original = d.images[a.image];
        if (a.subj >= original.objects.size() || a.obj >= original.objects.size() || a.subj == a.obj) {
            throw ValidationError("external plan references an invalid object pair in image " + a.image_id);
        }
        if (original.has_relation_on(a.subj, a.obj)) {
            throw ValidationError("external plan labels an annotated pair in image " + a.image_id);
        }
        Image& img = e.dataset.images[a.image];
        if (img.has_relation(a.subj, a.obj, a.predicate)) {
            throw ValidationError("external plan adds the same relation twice in image " + a.image_id);
        }
        img.relations.push_back({a.subj, a.obj, a.predicate, Provenance::external()});
        ++e.added;
    }

    e.manifest = extra_manifest.is_object() ? extra_manifest : nlohmann::json::object();
    e.manifest["internal"] = ip.params;
    e.manifest["external"] = ep.params;
    e.manifest["moved"] = e.moved;
    e.manifest["added"] = e.added;
    e.manifest["collisions"] = e.collisions;
    e.dataset.validate();
    return e;
}

void write_enhanced(const EnhancedDataset& e, std::ostream& out) { write_dataset(e.dataset, out, e.manifest); }

DistributionReport distribution_report(const Dataset& before, const Dataset& after, std::size_t bins) {
    if (before.vocab.fingerprint() != after.vocab.fingerprint()) {
        throw FingerprintMismatch("distribution report needs datasets over the same vocabulary");
    }
    if (bins == 0) throw ArgumentError("bins must be positive");
    const auto cb = predicate_counts(before);
    const auto ca = predicate_counts(after);
    DistributionReport report;
    report.rank_order.resize(before.vocab.num_predicates());
    std::iota(report.rank_order.begin(), report.rank_order.end(), PredicateId{1});
    std::stable_sort(report.rank_order.begin(), report.rank_order.end(),
                     [&](PredicateId a, PredicateId b) { return cb[a] > cb[b]; });
    const std::size_t n = report.rank_order.size();
    for (std::size_t b = 0; b < bins; ++b) {
        DistributionBin bin;
        bin.first_rank = b * n / bins;
        bin.last_rank = (b + 1) * n / bins;
        for (std::size_t r = bin.first_rank; r < bin.last_rank; ++r) {
            bin.before += cb[report.rank_order[r]];
            bin.after += ca[report.rank_order[r]];
        }
        bin.log10_before = log_count(bin.before);
        bin.log10_after = log_count(bin.after);
        report.bins.push_back(bin);
    }
    return report;
}

void write_distribution_tsv(const DistributionReport& report, const Vocab& vocab, std::ostream& out) {
    out << "bin\tfirst_rank\tlast_rank\tpredicates\tbefore\tafter\tlog10_before\tlog10_after\n";
    auto fmt = [](const std::optional<double>& v) -> std::string {
        if (!v) return "";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *v);
        return buf;
    };
    for (std::size_t b = 0; b < report.bins.size(); ++b) {
        const auto& bin = report.bins[b];
        std::string names;
        for (std::size_t r = bin.first_rank; r < bin.last_rank; ++r) {
            if (!names.empty()) names += ',';
            names += vocab.predicate_name(report.rank_order[r]);
        }
        out << b << '\t' << bin.first_rank << '\t' << bin.last_rank << '\t' << names << '\t' << bin.before << '\t'
            << bin.after << '\t' << fmt(bin.log10_before) << '\t' << fmt(bin.log10_after) << '\n';
    }
}

std::vector<TransferPairRow> transfer_pair_report(const InternalPlan& ip, const Vocab& vocab, std::size_t top_n) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const Move& m : ip.moves) ++counts[{vocab.predicate_name(m.src), vocab.predicate_name(m.tgt)}];
    std::vector<TransferPairRow> rows;
    for (const auto& [pair, n] : counts) rows.push_back({pair.first, pair.second, n});
    std::stable_sort(rows.begin(), rows.end(),
                     [](const TransferPairRow& a, const TransferPairRow& b) { return a.moved > b.moved; });
    if (top_n > 0 && rows.size() > top_n) rows.resize(top_n);
    return rows;
}

void write_transfer_pair_tsv(const std::vector<TransferPairRow>& rows, std::ostream& out) {
    out << "general\tinformative\tmoved\n";
    for (const auto& r : rows) out << r.general << '\t' << r.informative << '\t' << r.moved << '\n';
}

}  // namespace ietrans
