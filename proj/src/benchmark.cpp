#include "ietrans/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "ietrans/error.hpp"
#include "ietrans/parallel.hpp"
#include "ietrans/rng.hpp"

namespace ietrans {

namespace {

enum class Side : char { train, val, test };

using Counts = std::vector<std::size_t>;  // indexed by PredicateId

Counts count_image(const Image& img, std::size_t slots) {
    Counts c(slots, 0);
    for (const auto& rel : img.relations) ++c[rel.predicate];
    return c;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& images) {
    Dataset out;
    out.vocab = d.vocab;
    for (std::size_t i : images) out.images.push_back(d.images[i]);
    out.sort_images();
    return out;
}

void remove_predicates(Dataset& d, const std::vector<char>& removed) {
    for (auto& img : d.images) {
        std::erase_if(img.relations, [&](const RelationInstance& r) { return removed[r.predicate] != 0; });
    }
}

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

BBox random_box(Rng& rng) {
    const double w = std::round(rng.uniform(40, 200));
    const double h = std::round(rng.uniform(40, 200));
    const double x = std::round(rng.uniform(0, 800));
    const double y = std::round(rng.uniform(0, 600));
    return {x, y, x + w, y + h};
}

// A box of random size whose top-left corner is shifted from `anchor` by less than
// half of the smaller width/height, so the two always intersect with positive area.
BBox overlapping_box(Rng& rng, const BBox& anchor) {
    const double w = std::round(rng.uniform(40, 200));
    const double h = std::round(rng.uniform(40, 200));
    const double dx = std::round(rng.uniform(-0.45, 0.45) * std::min(w, anchor.width()));
    const double dy = std::round(rng.uniform(-0.45, 0.45) * std::min(h, anchor.height()));
    return {anchor.x1 + dx, anchor.y1 + dy, anchor.x1 + dx + w, anchor.y1 + dy + h};
}

}  // namespace

// ---------------------------------------------------------------------------

void SplitConfig::validate() const {
    if (!(train_fraction > 0 && train_fraction < 1)) throw ArgumentError("train_fraction must lie in (0, 1)");
}

SplitResult build_split(const Dataset& corpus, const SplitConfig& cfg) {
    cfg.validate();
    const std::size_t slots = corpus.vocab.score_size();
    SplitResult result;

    std::vector<char> removed(slots, 0);
    for (const auto& name : cfg.predicate_blocklist) {
        const auto p = corpus.vocab.find_predicate(name);
        if (!p) throw ArgumentError("blocklist names unknown predicate '" + name + "'");
        if (!removed[*p]) result.blocklisted.push_back(*p);
        removed[*p] = 1;
    }
    std::sort(result.blocklisted.begin(), result.blocklisted.end());

    Dataset work = corpus;
    remove_predicates(work, removed);

    Counts total(slots, 0);
    for (const auto& img : work.images) {
        for (const auto& rel : img.relations) ++total[rel.predicate];
    }
    const std::size_t need = cfg.min_test_per_predicate + cfg.min_train_per_predicate;
    bool any_relation = false;
    std::vector<PredicateId> live;
    for (PredicateId p = 1; p < slots; ++p) {
        if (total[p] == 0) continue;
        any_relation = true;
        if (total[p] < need) {
            result.dropped.push_back({p, "too_rare"});
            removed[p] = 1;
        } else {
            live.push_back(p);
        }
    }
    remove_predicates(work, removed);
    if (any_relation && live.empty()) {
        throw ArgumentError("infeasible split: no predicate can satisfy min_test=" +
                            std::to_string(cfg.min_test_per_predicate) +
                            " and min_train=" + std::to_string(cfg.min_train_per_predicate));
    }

    // Seeded image-level split.
    const std::size_t n = work.images.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(n)));
    std::size_t n_val = std::min<std::size_t>(
        cfg.val_image_count,
        static_cast<std::size_t>(std::floor(static_cast<double>(cfg.val_image_count) * static_cast<double>(n) /
                                            static_cast<double>(kReferenceCorpusImages))));
    n_val = std::min(n_val, n_train > 0 ? n_train - 1 : 0);
    result.pre_repair_train_images = n_train;

    std::vector<Side> side(n, Side::test);
    for (std::size_t i = 0; i < n_train; ++i) side[order[i]] = i + n_val >= n_train ? Side::val : Side::train;

    std::vector<Counts> per_image(n);
    Counts train(slots, 0), test(slots, 0);
    for (std::size_t i = 0; i < n; ++i) {
        per_image[i] = count_image(work.images[i], slots);
        Counts* dst = side[i] == Side::train ? &train : side[i] == Side::test ? &test : nullptr;
        if (dst) {
            for (PredicateId p = 1; p < slots; ++p) (*dst)[p] += per_image[i][p];
        }
    }

    // Rarest predicates are repaired first.
    std::vector<PredicateId> repair_order = live;
    std::stable_sort(repair_order.begin(), repair_order.end(),
                     [&](PredicateId a, PredicateId b) { return total[a] < total[b]; });

    auto move_image = [&](std::size_t i, Side to) {
        Counts& to_c = to == Side::train ? train : test;
        for (PredicateId p = 1; p < slots; ++p) {
            if (side[i] != Side::val) (side[i] == Side::train ? train : test)[p] -= per_image[i][p];
            to_c[p] += per_image[i][p];
        }
        side[i] = to;
        ++result.repair_moves;
    };

    // Moving image i away from `from` must not break a minimum already met there.
    auto safe_to_take = [&](std::size_t i, Side from) {
        if (from == Side::val) return true;
        const Counts& c = from == Side::train ? train : test;
        const std::size_t floor_n = from == Side::train ? cfg.min_train_per_predicate : cfg.min_test_per_predicate;
        for (PredicateId q = 1; q < slots; ++q) {
            if (per_image[i][q] && c[q] >= floor_n && c[q] - per_image[i][q] < floor_n) return false;
        }
        return true;
    };
    // Fill deficits of `to` from the opposite split first, then from validation.
    auto fill = [&](Side to, std::size_t minimum) {
        Counts& have = to == Side::train ? train : test;
        const Side opposite = to == Side::train ? Side::test : Side::train;
        for (PredicateId p : repair_order) {
            for (Side from : {opposite, Side::val}) {
                for (std::size_t k = 0; k < n && have[p] < minimum; ++k) {
                    const std::size_t i = order[k];
                    if (side[i] != from || per_image[i][p] == 0) continue;
                    if (safe_to_take(i, from)) move_image(i, to);
                }
            }
        }
    };
    fill(Side::train, cfg.min_train_per_predicate);
    fill(Side::test, cfg.min_test_per_predicate);

    for (PredicateId p : live) {
        if (train[p] >= cfg.min_train_per_predicate && test[p] >= cfg.min_test_per_predicate) {
            result.surviving.push_back(p);
        } else {
            result.dropped.push_back({p, "unsatisfiable"});
            removed[p] = 1;
        }
    }
    if (any_relation && result.surviving.empty()) {
        throw ArgumentError("infeasible split: no predicate satisfies the minima after repair");
    }
    std::sort(result.dropped.begin(), result.dropped.end(),
              [](const DroppedPredicate& a, const DroppedPredicate& b) { return a.predicate < b.predicate; });
    remove_predicates(work, removed);

    std::vector<std::size_t> tr, va, te;
    for (std::size_t i = 0; i < n; ++i) {
        (side[i] == Side::train ? tr : side[i] == Side::val ? va : te).push_back(i);
    }
    result.train = subset(work, tr);
    result.val = subset(work, va);
    result.test = subset(work, te);
    return result;
}

Dataset filtered_corpus(const Dataset& corpus, const SplitResult& split) {
    std::vector<char> removed(corpus.vocab.score_size(), 0);
    for (PredicateId p : split.blocklisted) removed[p] = 1;
    for (const auto& dp : split.dropped) removed[dp.predicate] = 1;
    Dataset out = corpus;
    remove_predicates(out, removed);
    return out;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    if (num_object_classes == 0 || num_predicates == 0) throw ArgumentError("synthetic vocab must be non-empty");
    if (min_relations_per_image > max_relations_per_image) throw ArgumentError("relations per image: min > max");
    if (!(zipf_exponent >= 0) || !std::isfinite(zipf_exponent)) throw ArgumentError("zipf exponent must be >= 0");
    if (!(deletion_probability >= 0 && deletion_probability <= 1)) {
        throw ArgumentError("deletion probability must lie in [0, 1]");
    }
    if (general_support_pairs == 0 || specific_support_pairs == 0) throw ArgumentError("support sizes must be positive");
    std::set<PredicateId> children;
    for (const auto& rule : ambiguity) {
        if (rule.general == kNA || rule.general > num_predicates) throw ArgumentError("ambiguity general out of range");
        if (!(rule.mislabel_probability >= 0 && rule.mislabel_probability <= 1)) {
            throw ArgumentError("mislabel probability must lie in [0, 1]");
        }
        for (PredicateId p : rule.informative) {
            if (p == kNA || p > num_predicates) throw ArgumentError("ambiguity informative predicate out of range");
            if (p == rule.general) throw ArgumentError("a general predicate cannot be its own informative child");
            if (!children.insert(p).second) throw ArgumentError("informative predicate listed under two generals");
        }
    }
    for (const auto& rule : ambiguity) {
        if (children.count(rule.general)) throw ArgumentError("a general predicate cannot also be informative");
    }
}

std::vector<AmbiguityRule> default_ambiguity(std::size_t num_predicates, std::size_t num_general,
                                             double mislabel_probability) {
    num_general = std::min(num_general, num_predicates);
    std::vector<AmbiguityRule> rules;
    for (std::size_t g = 1; g <= num_general; ++g) {
        rules.push_back({static_cast<PredicateId>(g), {}, mislabel_probability});
    }
    if (rules.empty()) return rules;
    const std::size_t first_child = std::max(num_general + 1, num_predicates / 3 + 1);
    for (std::size_t p = first_child, r = 0; p <= num_predicates; ++p, ++r) {
        rules[r % rules.size()].informative.push_back(static_cast<PredicateId>(p));
    }
    return rules;
}

SynthCorpus synth_generate(const SynthConfig& cfg, unsigned workers) {
    cfg.validate();
    std::vector<std::string> objects, predicates;
    for (std::size_t i = 0; i < cfg.num_object_classes; ++i) objects.push_back(padded("obj", i, 2));
    for (std::size_t i = 1; i <= cfg.num_predicates; ++i) predicates.push_back(padded("pred", i, 2));
    Vocab vocab(std::move(objects), std::move(predicates));

    // Class-pair support of every predicate, from a stream independent of the images.
    Rng global(derive_seed(cfg.seed, ~std::uint64_t{0}));
    std::vector<std::pair<ClassId, ClassId>> pool;
    for (ClassId a = 0; a < cfg.num_object_classes; ++a) {
        for (ClassId b = 0; b < cfg.num_object_classes; ++b) pool.emplace_back(a, b);
    }
    global.shuffle(pool);

    std::vector<PredicateId> parent(cfg.num_predicates + 1, kNA);
    std::vector<double> mislabel(cfg.num_predicates + 1, 0.0);
    std::vector<char> is_general(cfg.num_predicates + 1, 0);
    for (const auto& rule : cfg.ambiguity) {
        is_general[rule.general] = 1;
        for (PredicateId p : rule.informative) {
            parent[p] = rule.general;
            mislabel[p] = rule.mislabel_probability;
        }
    }

    std::vector<std::vector<std::pair<ClassId, ClassId>>> support(cfg.num_predicates + 1);
    std::size_t cursor = 0;
    for (PredicateId p = 1; p <= cfg.num_predicates; ++p) {
        if (is_general[p]) {
            for (std::size_t k = 0; k < cfg.general_support_pairs; ++k) support[p].push_back(pool[global.below(pool.size())]);
        } else {
            for (std::size_t k = 0; k < cfg.specific_support_pairs; ++k) support[p].push_back(pool[cursor++ % pool.size()]);
        }
    }
    // A general predicate also occurs on its children's class pairs.
    for (PredicateId p = 1; p <= cfg.num_predicates; ++p) {
        if (parent[p] != kNA) {
            auto& s = support[parent[p]];
            s.insert(s.end(), support[p].begin(), support[p].end());
        }
    }

    std::vector<double> weights(cfg.num_predicates);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] = std::pow(static_cast<double>(i + 1), -cfg.zipf_exponent);
    }

    const int width = std::max<int>(6, static_cast<int>(std::to_string(cfg.num_images).size()));
    std::vector<Image> annotated(cfg.num_images), truth(cfg.num_images);
    parallel_for(cfg.num_images, workers, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, i));
        Image& a = annotated[i];
        Image& t = truth[i];
        a.id = t.id = padded("img", i, width);
        const std::size_t span = cfg.max_relations_per_image - cfg.min_relations_per_image + 1;
        const std::size_t relations = cfg.min_relations_per_image + rng.below(span);
        for (std::size_t r = 0; r < relations; ++r) {
            const auto p = static_cast<PredicateId>(rng.weighted(weights) + 1);
            const auto& sup = support[p];
            const auto [cs, co] = sup[rng.below(sup.size())];
            const BBox sbox = random_box(rng);
            const BBox obox = overlapping_box(rng, sbox);
            const auto s = static_cast<ObjectId>(t.objects.size());
            t.objects.push_back({cs, sbox});
            t.objects.push_back({co, obox});
            t.relations.push_back({s, s + 1, p, Provenance::original()});
            const bool deleted = rng.bernoulli(cfg.deletion_probability);
            const bool relabel = parent[p] != kNA && rng.bernoulli(mislabel[p]);
            if (!deleted) a.relations.push_back({s, s + 1, relabel ? parent[p] : p, Provenance::original()});
        }
        const std::size_t distractors = rng.below(cfg.max_distractor_objects + 1);
        for (std::size_t k = 0; k < distractors; ++k) {
            const auto c = static_cast<ClassId>(rng.below(cfg.num_object_classes));
            t.objects.push_back({c, random_box(rng)});
        }
        a.objects = t.objects;
    });

    SynthCorpus corpus;
    corpus.annotated.vocab = vocab;
    corpus.truth.vocab = vocab;
    corpus.annotated.images = std::move(annotated);
    corpus.truth.images = std::move(truth);
    corpus.annotated.validate();
    corpus.truth.validate();
    return corpus;
}

}  // namespace ietrans
