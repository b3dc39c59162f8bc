#include "ietrans/external_transfer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <tuple>

#include "ietrans/error.hpp"
#include "ietrans/internal_transfer.hpp"
#include "ietrans/parallel.hpp"

namespace ietrans {

namespace {

using nlohmann::json;

constexpr const char* kRankPolicy = "na_score asc, then (image_id, subj, obj) asc";

}  // namespace

std::vector<NACandidate> enumerate_na(const Dataset& d, unsigned workers) {
    std::vector<std::vector<NACandidate>> per_image(d.images.size());
    parallel_for(d.images.size(), workers, [&](std::size_t i) {
        const Image& img = d.images[i];
        const auto n = static_cast<ObjectId>(img.objects.size());
        std::vector<char> annotated(static_cast<std::size_t>(n) * n, 0);
        for (const auto& rel : img.relations) annotated[static_cast<std::size_t>(rel.subj) * n + rel.obj] = 1;
        for (ObjectId s = 0; s < n; ++s) {
            for (ObjectId o = 0; o < n; ++o) {
                if (s == o || annotated[static_cast<std::size_t>(s) * n + o]) continue;
                if (!(iou(img.objects[s].box, img.objects[o].box) > 0)) continue;
                per_image[i].push_back(
                    {i, img.id, s, o, img.objects[s].class_id, img.objects[o].class_id, 0.0, std::nullopt});
            }
        }
    });
    std::vector<NACandidate> out;
    for (auto& v : per_image) {
        std::move(v.begin(), v.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<PairKey> candidate_keys(std::span<const NACandidate> cands) {
    std::vector<PairKey> keys;
    keys.reserve(cands.size());
    for (const auto& c : cands) keys.push_back(c.key());
    return keys;
}

std::vector<PredicateId> candidate_targets(const NACandidate& c, const TripletIndex& idx) {
    return idx.predicates_for_pair(c.subj_class, c.obj_class);
}

std::optional<PredicateId> assign_label(const ScoreVector& v, std::span<const PredicateId> targets) {
    std::optional<PredicateId> best;
    for (PredicateId p : targets) {
        if (p == kNA || p >= v.size()) continue;
        if (!best || v[p] > v[*best] || (v[p] == v[*best] && p < *best)) best = p;
    }
    return best;
}

std::vector<PredicateId> head_predicates(const TripletIndex& idx, std::size_t n) {
    std::vector<PredicateId> order(idx.num_predicate_slots() > 0 ? idx.num_predicate_slots() - 1 : 0);
    std::iota(order.begin(), order.end(), PredicateId{1});
    std::stable_sort(order.begin(), order.end(), [&](PredicateId a, PredicateId b) {
        return idx.predicate_total(a) > idx.predicate_total(b);
    });
    order.resize(std::min(n, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

ExternalPlan build_external_plan(std::vector<NACandidate> cands, const ScoreTable& scores, const TripletIndex& idx,
                                 double k_percent, std::size_t head_exclude) {
    if (!(k_percent >= 0 && k_percent <= 100)) throw ArgumentError("k_E must lie in [0, 100]");
    ExternalPlan plan;
    plan.excluded_head_predicates = head_predicates(idx, head_exclude);
    plan.params = {{"k_E", k_percent},
                   {"head_exclude", head_exclude},
                   {"head_frequency_measured_on", "original dataset"},
                   {"rank", kRankPolicy}};
    plan.diagnostics.enumerated = cands.size();

    std::vector<char> is_head(idx.num_predicate_slots(), 0);
    for (PredicateId p : plan.excluded_head_predicates) is_head[p] = 1;

    std::vector<NACandidate> eligible;
    for (auto& c : cands) {
        const std::vector<PredicateId>& targets = candidate_targets(c, idx);
        if (targets.empty()) {
            ++plan.diagnostics.empty_targets;
            continue;
        }
        const ScoreVector* v = scores.find(c.key());
        if (v == nullptr) throw MissingScoreError("no score vector for NA candidate " + to_string(c.key()));
        c.na_score = v->na();
        c.assigned = assign_label(*v, targets);
        if (is_head[*c.assigned]) {
            ++plan.diagnostics.head_excluded;
            continue;
        }
        eligible.push_back(std::move(c));
    }
    plan.diagnostics.eligible = eligible.size();

    std::sort(eligible.begin(), eligible.end(), [](const NACandidate& a, const NACandidate& b) {
        if (a.na_score != b.na_score) return a.na_score < b.na_score;
        return std::tie(a.image, a.subj, a.obj) < std::tie(b.image, b.subj, b.obj);
    });
    const std::size_t keep = percent_cut(k_percent, eligible.size());
    plan.diagnostics.kept = keep;
    for (std::size_t i = 0; i < keep; ++i) {
        const NACandidate& c = eligible[i];
        plan.additions.push_back({c.image, c.image_id, c.subj, c.obj, *c.assigned, c.na_score});
    }
    std::sort(plan.additions.begin(), plan.additions.end(), [](const Addition& a, const Addition& b) {
        return std::tie(a.image, a.subj, a.obj) < std::tie(b.image, b.subj, b.obj);
    });
    return plan;
}

// ---------------------------------------------------------------------------

void write_external_plan(const ExternalPlan& plan, const Vocab& vocab, std::ostream& out) {
    json heads = json::array();
    for (PredicateId p : plan.excluded_head_predicates) heads.push_back(vocab.predicate_name(p));
    const auto& dg = plan.diagnostics;
    out << json{{"kind", "external_plan"},
                {"params", plan.params},
                {"excluded_head_predicates", std::move(heads)},
                {"diagnostics",
                 {{"enumerated", dg.enumerated},
                  {"empty_targets", dg.empty_targets},
                  {"head_excluded", dg.head_excluded},
                  {"eligible", dg.eligible},
                  {"kept", dg.kept}}}}
               .dump()
        << '\n';
    for (const Addition& a : plan.additions) {
        out << json{{"image_id", a.image_id},
                    {"subj", a.subj},
                    {"obj", a.obj},
                    {"predicate", vocab.predicate_name(a.predicate)},
                    {"na_score", a.na_score}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed");
}

void save_external_plan(const ExternalPlan& plan, const Vocab& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_external_plan(plan, vocab, out);
}

ExternalPlan read_external_plan(std::istream& in, const Dataset& d) {
    ExternalPlan plan;
    std::string raw;
    std::size_t line = 0;
    bool header = false;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            const json rec = json::parse(raw);
            if (!header) {
                if (rec.value("kind", "") != "external_plan") throw ParseError(line, "not an external plan file");
                header = true;
                plan.params = rec.value("params", json::object());
                for (const json& name : rec.value("excluded_head_predicates", json::array())) {
                    plan.excluded_head_predicates.push_back(d.vocab.predicate_id(name.get<std::string>()));
                }
                const json dg = rec.value("diagnostics", json::object());
                plan.diagnostics = {dg.value("enumerated", std::size_t{0}), dg.value("empty_targets", std::size_t{0}),
                                    dg.value("head_excluded", std::size_t{0}), dg.value("eligible", std::size_t{0}),
                                    dg.value("kept", std::size_t{0})};
                continue;
            }
            Addition a;
            a.image_id = rec.at("image_id").get<std::string>();
            a.subj = rec.at("subj").get<ObjectId>();
            a.obj = rec.at("obj").get<ObjectId>();
            a.predicate = d.vocab.predicate_id(rec.at("predicate").get<std::string>());
            a.na_score = rec.at("na_score").get<double>();
            const auto image = d.find_image(a.image_id);
            if (!image) throw ValidationError("plan line " + std::to_string(line) + ": unknown image " + a.image_id);
            a.image = *image;
            const Image& img = d.images[*image];
            if (a.subj >= img.objects.size() || a.obj >= img.objects.size() || a.subj == a.obj) {
                throw ValidationError("plan line " + std::to_string(line) + ": invalid object pair in image " +
                                      a.image_id);
            }
            plan.additions.push_back(std::move(a));
        } catch (const json::exception& e) {
            throw ParseError(line, std::string("malformed plan record: ") + e.what());
        } catch (const ArgumentError& e) {
            throw ValidationError("plan line " + std::to_string(line) + ": " + e.what());
        }
    }
    if (!header) throw ParseError(0, "empty external plan file");
    std::sort(plan.additions.begin(), plan.additions.end(), [](const Addition& a, const Addition& b) {
        return std::tie(a.image, a.subj, a.obj) < std::tie(b.image, b.subj, b.obj);
    });
    return plan;
}

ExternalPlan load_external_plan(const std::filesystem::path& path, const Dataset& d) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return read_external_plan(in, d);
}

void write_external_summary(const ExternalPlan& plan, const Vocab& vocab, std::ostream& out) {
    std::vector<std::size_t> counts(vocab.score_size(), 0);
    for (const Addition& a : plan.additions) ++counts[a.predicate];
    out << "predicate\tadditions\n";
    for (PredicateId p = 1; p < counts.size(); ++p) out << vocab.predicate_name(p) << '\t' << counts[p] << '\n';
}

}  // namespace ietrans
