#include "ietrans/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>
#include <tuple>

#include "ietrans/error.hpp"

namespace ietrans {

namespace {

struct Ranked {
    double score;
    ObjectId subj;
    ObjectId obj;
    PredicateId predicate;
};

void check_ks(std::span<const int> ks) {
    if (ks.empty()) throw ArgumentError("at least one K is required");
    for (int k : ks) {
        if (k <= 0) throw ArgumentError("K must be positive");
    }
}

const ScoreVector& lookup(const ScoreTable& scores, const Image& img, const RelationInstance& rel) {
    const ScoreVector* v = scores.find({img.id, rel.subj, rel.obj});
    if (v == nullptr) throw MissingScoreError("no score vector for test pair " + to_string(PairKey{img.id, rel.subj, rel.obj}));
    return *v;
}

// Position of p when predicates are ordered by score desc, ties to the lower index.
std::size_t rank_of(const ScoreVector& v, PredicateId p) {
    std::size_t rank = 0;
    for (PredicateId q = 1; q < v.size(); ++q) {
        if (v[q] > v[p] || (v[q] == v[p] && q < p)) ++rank;
    }
    return rank;
}

MetricReport make_report(MetricFamily family, const Vocab& vocab, std::span<const int> ks) {
    MetricReport report;
    report.family = family;
    for (int k : ks) report.rows.push_back({k, 0, 0, 0, std::nullopt});
    for (PredicateId p = 1; p <= vocab.num_predicates(); ++p) {
        report.per_predicate.push_back({p, 0, std::vector<std::size_t>(ks.size(), 0)});
    }
    return report;
}

void fill_macro(MetricReport& report) {
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        double sum = 0;
        std::size_t classes = 0;
        std::size_t non_zero = 0;
        for (const auto& pb : report.per_predicate) {
            if (pb.ground_truth == 0) continue;
            sum += static_cast<double>(pb.hits[i]) / static_cast<double>(pb.ground_truth);
            ++classes;
            if (pb.hits[i] > 0) ++non_zero;
        }
        MetricRow& row = report.rows[i];
        row.macro = classes ? 100.0 * sum / static_cast<double>(classes) : 0.0;
        row.f = harmonic_f(row.micro, row.macro);
        if (report.family == MetricFamily::accuracy) row.non_zero = non_zero;
    }
}

}  // namespace

const MetricRow& MetricReport::at_k(int k) const {
    for (const auto& row : rows) {
        if (row.k == k) return row;
    }
    throw ArgumentError("report has no row for K=" + std::to_string(k));
}

double harmonic_f(double micro, double macro) {
    if (micro + macro <= 0) return 0.0;
    return 2.0 * micro * macro / (micro + macro);
}

MetricReport recall_family(const Dataset& test, const ScoreTable& scores, std::span<const int> ks,
                           bool graph_constraint) {
    check_ks(ks);
    scores.check_vocab(test.vocab);
    MetricReport report = make_report(MetricFamily::recall, test.vocab, ks);
    std::vector<double> recall_sum(ks.size(), 0.0);
    std::size_t images_with_gt = 0;

    for (const Image& img : test.images) {
        if (img.relations.empty()) continue;
        ++images_with_gt;
        std::set<std::pair<ObjectId, ObjectId>> pairs;
        for (const auto& rel : img.relations) pairs.emplace(rel.subj, rel.obj);

        std::vector<Ranked> ranked;
        for (const auto& [s, o] : pairs) {
            const ScoreVector* v = scores.find({img.id, s, o});
            if (v == nullptr) throw MissingScoreError("no score vector for test pair " + to_string(PairKey{img.id, s, o}));
            if (graph_constraint) {
                const PredicateId best = v->best_predicate();
                ranked.push_back({(*v)[best], s, o, best});
            } else {
                for (PredicateId p = 1; p < v->size(); ++p) ranked.push_back({(*v)[p], s, o, p});
            }
        }
        std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.score != b.score) return a.score > b.score;
            return std::tie(a.subj, a.obj, a.predicate) < std::tie(b.subj, b.obj, b.predicate);
        });

        for (std::size_t i = 0; i < ks.size(); ++i) {
            const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(ks[i]), ranked.size());
            std::set<std::tuple<ObjectId, ObjectId, PredicateId>> hit;
            for (std::size_t r = 0; r < top; ++r) hit.emplace(ranked[r].subj, ranked[r].obj, ranked[r].predicate);
            std::size_t matched = 0;
            for (const auto& rel : img.relations) {
                if (hit.count({rel.subj, rel.obj, rel.predicate})) {
                    ++matched;
                    ++report.per_predicate[rel.predicate - 1].hits[i];
                }
            }
            recall_sum[i] += static_cast<double>(matched) / static_cast<double>(img.relations.size());
        }
        for (const auto& rel : img.relations) ++report.per_predicate[rel.predicate - 1].ground_truth;
        report.ground_truth += img.relations.size();
    }

    for (std::size_t i = 0; i < ks.size(); ++i) {
        report.rows[i].micro = images_with_gt ? 100.0 * recall_sum[i] / static_cast<double>(images_with_gt) : 0.0;
    }
    fill_macro(report);
    return report;
}

MetricReport accuracy_family(const Dataset& test, const ScoreTable& scores, std::span<const int> ks) {
    check_ks(ks);
    scores.check_vocab(test.vocab);
    MetricReport report = make_report(MetricFamily::accuracy, test.vocab, ks);
    std::vector<std::size_t> correct(ks.size(), 0);
    for (const Image& img : test.images) {
        for (const auto& rel : img.relations) {
            const std::size_t rank = rank_of(lookup(scores, img, rel), rel.predicate);
            auto& pb = report.per_predicate[rel.predicate - 1];
            ++pb.ground_truth;
            ++report.ground_truth;
            for (std::size_t i = 0; i < ks.size(); ++i) {
                if (rank < static_cast<std::size_t>(ks[i])) {
                    ++correct[i];
                    ++pb.hits[i];
                }
            }
        }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
        report.rows[i].micro =
            report.ground_truth ? 100.0 * static_cast<double>(correct[i]) / static_cast<double>(report.ground_truth)
                                : 0.0;
    }
    fill_macro(report);
    return report;
}

std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void write_report_tsv(const MetricReport& report, std::ostream& out) {
    const bool acc = report.family == MetricFamily::accuracy;
    out << (acc ? "K\tAcc\tmAcc\tF-Acc\tNon-Zero\n" : "K\tR@K\tmR@K\tF@K\n");
    for (const auto& row : report.rows) {
        out << row.k << '\t' << format_percent(row.micro) << '\t' << format_percent(row.macro) << '\t'
            << format_percent(row.f);
        if (acc) out << '\t' << row.non_zero.value_or(0);
        out << '\n';
    }
}

void write_breakdown_tsv(const MetricReport& report, const Vocab& vocab, std::ostream& out) {
    out << "predicate\tground_truth";
    for (const auto& row : report.rows) out << "\t@" << row.k;
    out << '\n';
    for (const auto& pb : report.per_predicate) {
        out << vocab.predicate_name(pb.predicate) << '\t' << pb.ground_truth;
        for (std::size_t i = 0; i < pb.hits.size(); ++i) {
            const double v = pb.ground_truth ? 100.0 * static_cast<double>(pb.hits[i]) / pb.ground_truth : 0.0;
            out << '\t' << format_percent(v);
        }
        out << '\n';
    }
}

nlohmann::json report_to_json(const MetricReport& report, const Vocab& vocab) {
    using nlohmann::json;
    const bool acc = report.family == MetricFamily::accuracy;
    auto round2 = [](double v) { return std::stod(format_percent(v)); };
    json rows = json::array();
    for (const auto& row : report.rows) {
        json j{{"k", row.k}, {"micro", round2(row.micro)}, {"macro", round2(row.macro)}, {"f", round2(row.f)}};
        if (acc) j["non_zero"] = row.non_zero.value_or(0);
        rows.push_back(std::move(j));
    }
    json per = json::array();
    for (const auto& pb : report.per_predicate) {
        json hits = json::array();
        for (std::size_t i = 0; i < pb.hits.size(); ++i) {
            hits.push_back(pb.ground_truth ? round2(100.0 * static_cast<double>(pb.hits[i]) / pb.ground_truth) : 0.0);
        }
        per.push_back({{"predicate", vocab.predicate_name(pb.predicate)},
                       {"ground_truth", pb.ground_truth},
                       {"per_k", std::move(hits)}});
    }
    return {{"family", acc ? "accuracy" : "recall"},
            {"ground_truth", report.ground_truth},
            {"rows", std::move(rows)},
            {"per_predicate", std::move(per)}};
}

}  // namespace ietrans
