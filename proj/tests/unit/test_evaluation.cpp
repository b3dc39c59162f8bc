#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "ietrans/error.hpp"
#include "ietrans/evaluation.hpp"
#include "support/gen.hpp"

using namespace th;

namespace {

// Puts `mass` on p and spreads the rest evenly over the other slots (NA included).
ScoreVector peaked(const Vocab& v, PredicateId p, double mass) {
    std::vector<double> s(v.score_size(), (1.0 - mass) / static_cast<double>(v.score_size() - 1));
    s[p] = mass;
    return ScoreVector(s);
}

// Brute force: predicates sorted by score, stable so ties keep the lower index.
std::vector<PredicateId> ranking(const ScoreVector& s) {
    std::vector<PredicateId> order(s.size() - 1);
    std::iota(order.begin(), order.end(), PredicateId{1});
    std::stable_sort(order.begin(), order.end(), [&](PredicateId a, PredicateId b) { return s[a] > s[b]; });
    return order;
}

const int kAccKs[] = {1, 5, 10};

}  // namespace

TEST_CASE("harmonic mean") {
    CHECK(harmonic_f(0, 0) == 0.0);
    CHECK(harmonic_f(50, 50) == doctest::Approx(50));
    CHECK(harmonic_f(60, 20) == doctest::Approx(30));
    CHECK(harmonic_f(100, 0) == 0.0);
    for (int a = 0; a <= 100; a += 7) {
        for (int b = 0; b <= 100; b += 11) {
            const double f = harmonic_f(a, b);
            CHECK(f >= std::min(a, b) - 1e-12);
            CHECK(f <= (a + b) / 2.0 + 1e-12);
            if (a == 0 || b == 0) CHECK(f == 0.0);
            CHECK(f == doctest::Approx(harmonic_f(b, a)));
        }
    }
}

TEST_CASE("a scorer that peaks on the ground truth scores 100") {
    const Dataset d = testgen::random_dataset(5);
    ScoreTable t(d.vocab.fingerprint(), d.vocab.score_size());
    for (const auto& img : d.images) {
        for (const auto& r : img.relations) {
            if (!t.find({img.id, r.subj, r.obj})) t.insert({img.id, r.subj, r.obj}, peaked(d.vocab, r.predicate, 0.9));
        }
    }
    // Keep only the peaked predicate per pair so each test relation is reachable at K=1.
    Dataset single = d;
    for (auto& img : single.images) {
        std::vector<RelationInstance> kept;
        for (const auto& r : img.relations) {
            if (t.at({img.id, r.subj, r.obj}).best_predicate() == r.predicate) kept.push_back(r);
        }
        img.relations = kept;
    }
    REQUIRE(single.num_relations() > 0);
    const MetricReport acc = accuracy_family(single, t, kAccKs);
    CHECK(acc.at_k(1).micro == 100.0);
    CHECK(acc.at_k(1).macro == 100.0);
    CHECK(acc.at_k(1).f == 100.0);
    const int big[] = {1000};
    const MetricReport rec = recall_family(single, t, big);
    CHECK(rec.at_k(1000).micro == 100.0);
    CHECK(rec.at_k(1000).macro == 100.0);
}

TEST_CASE("recall over an image's ranked pairs") {
    const Vocab v = fixture_vocab();
    const Dataset d = dataset(v, {image(v, "r", {{"man"}, {"horse"}, {"kite"}}, {{0, 1, "riding"}, {0, 2, "flying"}})});
    ScoreTable t(v.fingerprint(), v.score_size());
    t.insert({"r", 0, 1}, peaked(v, v.predicate_id("riding"), 0.6));
    t.insert({"r", 0, 2}, peaked(v, v.predicate_id("flying"), 0.5));
    const int ks[] = {1, 2};
    const MetricReport rep = recall_family(d, t, ks);
    CHECK(rep.at_k(1).micro == doctest::Approx(50));
    CHECK(rep.at_k(1).macro == doctest::Approx(50));  // riding 1/1, flying 0/1
    CHECK(rep.at_k(2).micro == doctest::Approx(100));
    CHECK_FALSE(rep.at_k(1).non_zero.has_value());

    // Without the constraint every predicate of every pair competes.
    const int three[] = {3};
    const MetricReport free = recall_family(d, t, three, false);
    CHECK(free.rows[0].micro == doctest::Approx(100));
    const int one[] = {1};
    CHECK(recall_family(d, t, one, false).rows[0].micro == doctest::Approx(50));

    ScoreTable wrong(v.fingerprint(), v.score_size());
    wrong.insert({"r", 0, 1}, peaked(v, v.predicate_id("on"), 0.6));
    wrong.insert({"r", 0, 2}, peaked(v, v.predicate_id("on"), 0.5));
    const MetricReport zero = recall_family(d, wrong, ks);
    CHECK(zero.at_k(2).micro == 0.0);
    CHECK(zero.at_k(2).f == 0.0);
}

TEST_CASE("accuracy example with unequal class sizes") {
    const Vocab v = fixture_vocab();
    const PredicateId on = v.predicate_id("on"), riding = v.predicate_id("riding"), holding = v.predicate_id("holding");
    std::vector<Image> imgs;
    add_instances(imgs, v, "o", "man", "on", "horse", 1);
    add_instances(imgs, v, "r", "man", "riding", "horse", 1);
    add_instances(imgs, v, "h", "man", "holding", "cup", 2);
    const Dataset d = dataset(v, imgs);
    ScoreTable t(v.fingerprint(), v.score_size());
    t.insert({"o0", 0, 1}, peaked(v, on, 0.5));       // right
    t.insert({"r0", 0, 1}, peaked(v, on, 0.5));       // wrong
    t.insert({"h0", 0, 1}, peaked(v, holding, 0.5));  // right
    t.insert({"h1", 0, 1}, peaked(v, riding, 0.5));   // wrong
    const MetricReport rep = accuracy_family(d, t, kAccKs);
    CHECK(rep.at_k(1).micro == doctest::Approx(50));
    CHECK(rep.at_k(1).macro == doctest::Approx(50));
    CHECK(rep.at_k(1).non_zero == 2u);
    // h1 ties holding with four lower-indexed predicates, so it sits at rank 5.
    CHECK(rep.at_k(5).micro == doctest::Approx(75));
    CHECK(rep.at_k(10).micro == doctest::Approx(100));
    CHECK(rep.at_k(10).non_zero == 3u);
    CHECK(rep.ground_truth == 4);
    // Predicates without ground truth stay out of the macro mean.
    CHECK(rep.per_predicate[v.predicate_id("flying") - 1].ground_truth == 0);

    std::ostringstream tsv;
    write_report_tsv(rep, tsv);
    CHECK(tsv.str() == "K\tAcc\tmAcc\tF-Acc\tNon-Zero\n1\t50.00\t50.00\t50.00\t2\n5\t75.00\t83.33\t78.95\t3\n"
                       "10\t100.00\t100.00\t100.00\t3\n");
    std::ostringstream breakdown;
    write_breakdown_tsv(rep, v, breakdown);
    CHECK(breakdown.str().rfind("predicate\tground_truth\t@1\t@5\t@10\non\t1\t100.00\t100.00\t100.00\n", 0) == 0);
    const auto j = report_to_json(rep, v);
    CHECK(j["family"] == "accuracy");
    CHECK(j["rows"][0]["non_zero"] == 2);
}

TEST_CASE("accuracy matches a brute-force ranking on random data") {
    for (std::uint64_t seed = 0; seed < 80; ++seed) {
        const Dataset d = testgen::random_dataset(seed);
        const ScoreTable t = testgen::to_table(testgen::random_weight_table(d, seed), d.vocab);
        const MetricReport rep = accuracy_family(d, t, kAccKs);

        std::size_t total = 0;
        std::vector<std::size_t> hits(3, 0);
        for (const auto& img : d.images) {
            for (const auto& r : img.relations) {
                const auto order = ranking(t.at({img.id, r.subj, r.obj}));
                const auto pos = std::find(order.begin(), order.end(), r.predicate) - order.begin();
                ++total;
                for (std::size_t i = 0; i < 3; ++i) hits[i] += pos < kAccKs[i];
            }
        }
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(rep.rows[i].micro == doctest::Approx(total ? 100.0 * hits[i] / total : 0.0));
        }
        for (std::size_t i = 1; i < 3; ++i) {
            CHECK(rep.rows[i].micro >= rep.rows[i - 1].micro);
            CHECK(rep.rows[i].macro >= rep.rows[i - 1].macro);
            CHECK(*rep.rows[i].non_zero >= *rep.rows[i - 1].non_zero);
        }

        // A strictly increasing affine map of every vector changes nothing.
        ScoreTable shifted(d.vocab.fingerprint(), d.vocab.score_size());
        const double n = static_cast<double>(d.vocab.score_size());
        for (const auto& [key, vecv] : t.entries()) {
            std::vector<double> s(vecv.values().begin(), vecv.values().end());
            for (double& x : s) x = 0.5 * x + 0.5 / n;
            shifted.insert(key, ScoreVector(s));
        }
        const MetricReport again = accuracy_family(d, shifted, kAccKs);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(again.rows[i].micro == rep.rows[i].micro);
            CHECK(again.rows[i].macro == rep.rows[i].macro);
            CHECK(again.rows[i].non_zero == rep.rows[i].non_zero);
        }
    }
}

TEST_CASE("doubling one predicate's test instances keeps the macro mean") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Dataset d = testgen::random_dataset(seed);
        if (d.num_relations() == 0) continue;
        ScoreTable t = testgen::to_table(testgen::random_weight_table(d, seed), d.vocab);
        const PredicateId p = d.images[0].relations.empty() ? 1 : d.images[0].relations[0].predicate;

        std::vector<Image> imgs = d.images;
        for (const auto& img : d.images) {
            Image copy = img;
            copy.id = img.id + "_dup";
            copy.relations.clear();
            for (const auto& r : img.relations) {
                if (r.predicate != p) continue;
                copy.relations.push_back(r);
                if (!t.find({copy.id, r.subj, r.obj})) t.insert({copy.id, r.subj, r.obj}, t.at({img.id, r.subj, r.obj}));
            }
            imgs.push_back(copy);
        }
        const Dataset doubled = dataset(d.vocab, imgs);
        const MetricReport a = accuracy_family(d, t, kAccKs);
        const MetricReport b = accuracy_family(doubled, t, kAccKs);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(b.rows[i].macro == doctest::Approx(a.rows[i].macro));
            CHECK(b.rows[i].non_zero == a.rows[i].non_zero);
        }
    }
}

TEST_CASE("evaluation argument and coverage errors") {
    const Vocab v = fixture_vocab();
    const Dataset d = dataset(v, {image(v, "m", {{"man"}, {"cup"}}, {{0, 1, "holding"}})});
    ScoreTable empty(v.fingerprint(), v.score_size());
    CHECK_THROWS_AS(accuracy_family(d, empty, kAccKs), MissingScoreError);
    CHECK_THROWS_AS(recall_family(d, empty, kAccKs), MissingScoreError);
    const int zero[] = {0};
    CHECK_THROWS_AS(accuracy_family(d, empty, zero), ArgumentError);
    const ScoreTable foreign("0000000000000000", v.score_size());
    CHECK_THROWS_AS(accuracy_family(d, foreign, kAccKs), FingerprintMismatch);
    CHECK(format_percent(12.345678) == "12.35");

    // An empty test set reports zeros rather than dividing by zero.
    const MetricReport none = accuracy_family(Dataset{v, {}}, empty, kAccKs);
    CHECK(none.at_k(1).micro == 0.0);
    CHECK(none.at_k(1).non_zero == 0u);
}
