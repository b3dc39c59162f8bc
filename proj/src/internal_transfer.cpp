#include "ietrans/internal_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <tuple>

#include "ietrans/error.hpp"
#include "ietrans/parallel.hpp"

namespace ietrans {

namespace {

using nlohmann::json;

constexpr const char* kTieBreakPolicy =
    "conflict: max target attraction, then lower target predicate; "
    "cut order: score on target desc, then (image_id, rel_id) asc";

PairKey pair_of(const Dataset& d, const RelationRef& ref) {
    const Image& img = d.images[ref.image];
    const RelationInstance& rel = img.relations[ref.rel];
    return {img.id, rel.subj, rel.obj};
}

// Relations grouped by triplet type, each group in (image, subj, obj, rel) order so
// floating-point sums do not depend on relation order inside an image.
std::map<TripletType, std::vector<RelationRef>> members_by_type(const Dataset& d) {
    std::map<TripletType, std::vector<RelationRef>> members;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const Image& img = d.images[i];
        for (RelId r = 0; r < img.relations.size(); ++r) {
            members[d.type_of(img, img.relations[r])].push_back({i, r});
        }
    }
    for (auto& [t, refs] : members) {
        std::sort(refs.begin(), refs.end(), [&](const RelationRef& a, const RelationRef& b) {
            const auto& ra = d.images[a.image].relations[a.rel];
            const auto& rb = d.images[b.image].relations[b.rel];
            return std::tie(a.image, ra.subj, ra.obj, a.rel) < std::tie(b.image, rb.subj, rb.obj, b.rel);
        });
    }
    return members;
}

struct Assignment {
    RelationRef ref;
    TripletType target;
    double score = 0;
};

// Steps shared by the fixed and adaptive cuts: rules, inversion, conflict resolution.
// Returns, per target type, its assigned candidates (unsorted).
std::map<TripletType, std::vector<Assignment>> assign_candidates(const Dataset& d, const ScoreTable& scores,
                                                                 const AggregatedScores& agg,
                                                                 const TripletIndex& idx, unsigned workers) {
    const std::vector<TransferRule> rules = build_rules(agg, idx, workers);

    // source type -> indices of rules that may pull from it
    std::map<TripletType, std::vector<std::size_t>> pulls;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const TripletType& t = rules[i].target;
        for (PredicateId q : rules[i].sources) pulls[{t.subject, q, t.object}].push_back(i);
    }

    std::map<TripletType, std::vector<Assignment>> assigned;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const Image& img = d.images[i];
        for (RelId r = 0; r < img.relations.size(); ++r) {
            const RelationInstance& rel = img.relations[r];
            if (rel.provenance.kind != ProvenanceKind::original) continue;
            auto it = pulls.find(d.type_of(img, rel));
            if (it == pulls.end()) continue;
            const TransferRule* best = nullptr;
            for (std::size_t rule_index : it->second) {
                const TransferRule& rule = rules[rule_index];
                if (best == nullptr || rule.target_attraction > best->target_attraction ||
                    (rule.target_attraction == best->target_attraction &&
                     rule.target.predicate < best->target.predicate)) {
                    best = &rule;
                }
            }
            const ScoreVector& v = scores.at({img.id, rel.subj, rel.obj});
            assigned[best->target].push_back({{i, r}, best->target, v[best->target.predicate]});
        }
    }
    for (auto& [t, list] : assigned) {
        std::sort(list.begin(), list.end(), [](const Assignment& a, const Assignment& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.ref < b.ref;
        });
    }
    return assigned;
}

Move make_move(const Dataset& d, const Assignment& a) {
    const Image& img = d.images[a.ref.image];
    const RelationInstance& rel = img.relations[a.ref.rel];
    return {a.ref, img.id, rel.subj, rel.obj, rel.predicate, a.target.predicate, a.score};
}

void finish(InternalPlan& plan) {
    std::sort(plan.moves.begin(), plan.moves.end(), [](const Move& a, const Move& b) { return a.ref < b.ref; });
}

void check_scores(const Dataset& d, const ScoreTable& scores) {
    scores.check_vocab(d.vocab);
}

json type_json(const TripletType& t, const Vocab& vocab) {
    return {{"subject", vocab.object_name(t.subject)},
            {"predicate", vocab.predicate_name(t.predicate)},
            {"object", vocab.object_name(t.object)}};
}

TripletType type_from_json(const json& j, const Vocab& vocab) {
    return {vocab.object_id(j.at("subject").get<std::string>()),
            vocab.predicate_id(j.at("predicate").get<std::string>()),
            vocab.object_id(j.at("object").get<std::string>())};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + '"';
}

}  // namespace

// ---------------------------------------------------------------------------

Attraction::Attraction(std::uint64_t numerator, std::uint64_t denominator) : num_(numerator), den_(denominator) {
    if (den_ == 0) throw ArgumentError("attraction denominator must be positive");
}

std::strong_ordering Attraction::operator<=>(const Attraction& other) const noexcept {
    const unsigned __int128 lhs = static_cast<unsigned __int128>(num_) * other.den_;
    const unsigned __int128 rhs = static_cast<unsigned __int128>(other.num_) * den_;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
}

AggregatedScores aggregate_scores(const Dataset& d, const ScoreTable& scores) {
    check_scores(d, scores);
    AggregatedScores agg;
    for (const auto& [t, refs] : members_by_type(d)) {
        AggregatedEntry entry;
        entry.mean.assign(scores.vector_size(), 0.0);
        for (const RelationRef& ref : refs) {
            const PairKey key = pair_of(d, ref);
            const ScoreVector* v = scores.find(key);
            if (v == nullptr) {
                throw MissingScoreError("no score vector for annotated pair " + to_string(key));
            }
            for (std::size_t k = 0; k < entry.mean.size(); ++k) entry.mean[k] += (*v)[k];
        }
        entry.count = refs.size();
        for (double& x : entry.mean) x /= static_cast<double>(entry.count);
        agg.emplace(t, std::move(entry));
    }
    return agg;
}

std::vector<PredicateId> confusion_set(const AggregatedScores& agg, const TripletType& t) {
    auto it = agg.find(t);
    if (it == agg.end()) throw ArgumentError("triplet type has no aggregated scores");
    const std::vector<double>& mean = it->second.mean;
    if (t.predicate == kNA || t.predicate >= mean.size()) throw ArgumentError("triplet predicate out of range");
    std::vector<PredicateId> confused;
    for (PredicateId q = 1; q < mean.size(); ++q) {
        if (mean[q] > mean[t.predicate]) confused.push_back(q);
    }
    return confused;
}

Attraction attraction(const TripletIndex& idx, const TripletType& t) {
    const std::uint64_t n = idx.count(t);
    if (n == 0) throw ArgumentError("attraction is undefined for a triplet type absent from the training set");
    return Attraction(n, idx.predicate_total(t.predicate));
}

std::vector<PredicateId> transfer_sources(const TripletType& t, std::span<const PredicateId> confusion,
                                          const TripletIndex& idx) {
    const Attraction target = attraction(idx, t);
    std::vector<PredicateId> sources;
    for (PredicateId q : confusion) {
        const TripletType source{t.subject, q, t.object};
        if (q == t.predicate || !idx.exists(source)) continue;
        if (attraction(idx, source) < target) sources.push_back(q);
    }
    return sources;
}

std::vector<RelationRef> collect_candidates(const Dataset& d, const TripletType& t,
                                            std::span<const PredicateId> sources) {
    std::vector<RelationRef> out;
    if (sources.empty()) return out;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const Image& img = d.images[i];
        for (RelId r = 0; r < img.relations.size(); ++r) {
            const RelationInstance& rel = img.relations[r];
            if (rel.provenance.kind != ProvenanceKind::original) continue;
            if (img.objects[rel.subj].class_id != t.subject || img.objects[rel.obj].class_id != t.object) continue;
            if (std::find(sources.begin(), sources.end(), rel.predicate) != sources.end()) out.push_back({i, r});
        }
    }
    return out;
}

std::vector<TransferRule> build_rules(const AggregatedScores& agg, const TripletIndex& idx, unsigned workers) {
    std::vector<const TripletType*> types;
    types.reserve(agg.size());
    for (const auto& [t, entry] : agg) types.push_back(&t);
    std::vector<TransferRule> rules(types.size());
    parallel_for(types.size(), workers, [&](std::size_t i) {
        TransferRule& rule = rules[i];
        rule.target = *types[i];
        rule.confusion = confusion_set(agg, rule.target);
        rule.sources = transfer_sources(rule.target, rule.confusion, idx);
        rule.target_attraction = attraction(idx, rule.target);
        for (PredicateId q : rule.sources) {
            rule.source_attraction.push_back(attraction(idx, {rule.target.subject, q, rule.target.object}));
        }
    });
    return rules;
}

std::size_t percent_cut(double percent, std::size_t n) {
    if (!(percent >= 0 && percent <= 100)) throw ArgumentError("percentage must lie in [0, 100]");
    return static_cast<std::size_t>(std::floor(percent * static_cast<double>(n) / 100.0));
}

InternalPlan build_plan(const Dataset& d, const ScoreTable& scores, const TripletIndex& idx, double k_percent,
                        unsigned workers) {
    if (!(k_percent >= 0 && k_percent <= 100)) throw ArgumentError("k_I must lie in [0, 100]");
    const AggregatedScores agg = aggregate_scores(d, scores);
    InternalPlan plan;
    plan.params = {{"mode", "fixed"}, {"k_I", k_percent}, {"tie_break", kTieBreakPolicy}};
    for (const auto& [target, list] : assign_candidates(d, scores, agg, idx, workers)) {
        const std::size_t keep = percent_cut(k_percent, list.size());
        plan.targets.push_back({target, list.size(), keep, 0.0});
        for (std::size_t i = 0; i < keep; ++i) plan.moves.push_back(make_move(d, list[i]));
    }
    finish(plan);
    return plan;
}

InternalPlan build_plan_adaptive(const Dataset& d, const ScoreTable& scores, const TripletIndex& idx, double k,
                                 unsigned workers) {
    if (std::isnan(k)) throw ArgumentError("adaptive k must be a number");
    const AggregatedScores agg = aggregate_scores(d, scores);
    const auto members = members_by_type(d);
    InternalPlan plan;
    plan.params = {{"mode", "adaptive"},
                   {"k", std::isfinite(k) ? json(k) : json(k > 0 ? "inf" : "-inf")},
                   {"sigma", "population"},
                   {"tie_break", kTieBreakPolicy}};
    for (const auto& [target, list] : assign_candidates(d, scores, agg, idx, workers)) {
        const auto& own = members.at(target);
        // Moments about the first score: identical scores give exactly that score and σ = 0,
        // where a plain sum / n may round below it and let equal candidates through.
        const double pivot = scores.at(pair_of(d, own.front()))[target.predicate];
        double shift = 0;
        for (const RelationRef& ref : own) shift += scores.at(pair_of(d, ref))[target.predicate] - pivot;
        shift /= static_cast<double>(own.size());
        const double mean = pivot + shift;
        double var = 0;
        for (const RelationRef& ref : own) {
            const double diff = scores.at(pair_of(d, ref))[target.predicate] - pivot - shift;
            var += diff * diff;
        }
        const double sigma = own.size() > 1 ? std::sqrt(var / static_cast<double>(own.size())) : 0.0;
        // Infinite k is the limiting cut (nothing / everything), even where σ = 0.
        const double threshold = !std::isfinite(k) ? k : mean + k * sigma;
        std::size_t keep = 0;
        for (const Assignment& a : list) {
            if (a.score > threshold) {
                plan.moves.push_back(make_move(d, a));
                ++keep;
            }
        }
        plan.targets.push_back({target, list.size(), keep, threshold});
    }
    finish(plan);
    return plan;
}

// ---------------------------------------------------------------------------

void write_internal_plan(const InternalPlan& plan, const Vocab& vocab, std::ostream& out) {
    json targets = json::array();
    for (const auto& t : plan.targets) {
        json j = type_json(t.target, vocab);
        j["candidates"] = t.candidates;
        j["kept"] = t.kept;
        if (plan.params.value("mode", "") == "adaptive") j["threshold"] = t.threshold;
        targets.push_back(std::move(j));
    }
    out << json{{"kind", "internal_plan"},
                {"params", plan.params},
                {"moves", plan.moves.size()},
                {"targets", std::move(targets)}}
               .dump()
        << '\n';
    for (const Move& m : plan.moves) {
        out << json{{"image_id", m.image_id},
                    {"rel_id", m.ref.rel},
                    {"subj", m.subj},
                    {"obj", m.obj},
                    {"src", vocab.predicate_name(m.src)},
                    {"tgt", vocab.predicate_name(m.tgt)},
                    {"tgt_score", m.tgt_score}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed");
}

void save_internal_plan(const InternalPlan& plan, const Vocab& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_internal_plan(plan, vocab, out);
}

InternalPlan read_internal_plan(std::istream& in, const Dataset& d) {
    InternalPlan plan;
    std::string raw;
    std::size_t line = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            const json rec = json::parse(raw);
            if (!header) {
                if (rec.value("kind", "") != "internal_plan") throw ParseError(line, "not an internal plan file");
                header = true;
                plan.params = rec.value("params", json::object());
                for (const json& t : rec.value("targets", json::array())) {
                    plan.targets.push_back({type_from_json(t, d.vocab), t.at("candidates").get<std::size_t>(),
                                            t.at("kept").get<std::size_t>(), t.value("threshold", 0.0)});
                }
                continue;
            }
            Move m;
            m.image_id = rec.at("image_id").get<std::string>();
            m.ref.rel = rec.at("rel_id").get<RelId>();
            m.subj = rec.at("subj").get<ObjectId>();
            m.obj = rec.at("obj").get<ObjectId>();
            m.src = d.vocab.predicate_id(rec.at("src").get<std::string>());
            m.tgt = d.vocab.predicate_id(rec.at("tgt").get<std::string>());
            m.tgt_score = rec.at("tgt_score").get<double>();
            const auto image = d.find_image(m.image_id);
            if (!image) throw ValidationError("plan line " + std::to_string(line) + ": unknown image " + m.image_id);
            m.ref.image = *image;
            const Image& img = d.images[*image];
            if (m.ref.rel >= img.relations.size()) {
                throw ValidationError("plan line " + std::to_string(line) + ": unknown rel_id " +
                                      std::to_string(m.ref.rel) + " in image " + m.image_id);
            }
            const RelationInstance& rel = img.relations[m.ref.rel];
            if (rel.subj != m.subj || rel.obj != m.obj || rel.predicate != m.src) {
                throw ValidationError("plan line " + std::to_string(line) + ": move does not match relation " +
                                      std::to_string(m.ref.rel) + " in image " + m.image_id);
            }
            plan.moves.push_back(std::move(m));
        } catch (const json::exception& e) {
            throw ParseError(line, std::string("malformed plan record: ") + e.what());
        } catch (const ArgumentError& e) {
            throw ValidationError("plan line " + std::to_string(line) + ": " + e.what());
        }
    }
    if (!header) throw ParseError(0, "empty internal plan file");
    finish(plan);
    return plan;
}

InternalPlan load_internal_plan(const std::filesystem::path& path, const Dataset& d) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return read_internal_plan(in, d);
}

void write_confusion_csv(const AggregatedScores& agg, const Vocab& vocab, ClassId subject, ClassId object,
                         std::ostream& out) {
    out << "annotated,NA";
    for (const auto& name : vocab.predicate_classes()) out << ',' << csv_field(name);
    out << '\n';
    auto it = agg.lower_bound({subject, 0, object});
    for (; it != agg.end() && it->first.subject == subject; ++it) {
        if (it->first.object != object) continue;
        out << csv_field(vocab.predicate_name(it->first.predicate));
        char buf[32];
        for (double v : it->second.mean) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace ietrans
