#include <map>
#include <set>

#include "helpers.hpp"
#include "ietrans/error.hpp"
#include "ietrans/integration.hpp"
#include "support/gen.hpp"

using namespace th;

namespace {

Move move(const Dataset& d, std::size_t image, RelId rel, PredicateId tgt) {
    const auto& r = d.images[image].relations[rel];
    return {{image, rel}, d.images[image].id, r.subj, r.obj, r.predicate, tgt, 0.5};
}

std::map<PredicateId, long> predicate_counts(const Dataset& d) {
    std::map<PredicateId, long> c;
    for (const auto& img : d.images) {
        for (const auto& r : img.relations) ++c[r.predicate];
    }
    return c;
}

}  // namespace

TEST_CASE("one move and one addition match the hand-written golden file") {
    const Vocab v = fixture_vocab();
    const Dataset d = load_dataset(fixture("merge_input.jsonl"), v);
    InternalPlan ip;
    ip.moves.push_back(move(d, 0, 0, v.predicate_id("riding")));
    ExternalPlan ep;
    ep.additions.push_back({1, "g2", 2, 1, v.predicate_id("flying"), 0.2});
    const EnhancedDataset e = merge(d, ip, ep);
    CHECK(dataset_to_string(e.dataset) == slurp(fixture("merge_golden.jsonl")));
    CHECK(e.moved == 1);
    CHECK(e.added == 1);
    CHECK(e.collisions == 0);
    CHECK(e.manifest["moved"] == 1);
    CHECK(e.manifest["added"] == 1);

    std::ostringstream out;
    write_enhanced(e, out);
    const std::string text = out.str();
    CHECK(text.rfind("{\"manifest\":", 0) == 0);
    CHECK(text.substr(text.find('\n') + 1) == slurp(fixture("merge_golden.jsonl")));
}

TEST_CASE("empty plans leave the dataset unchanged") {
    const Vocab v = fixture_vocab();
    const Dataset d = load_dataset(fixture("merge_input.jsonl"), v);
    const EnhancedDataset once = merge(d, {}, {});
    CHECK(once.dataset == d);
    CHECK(once.moved == 0);
    CHECK(once.added == 0);
    CHECK(merge(once.dataset, {}, {}).dataset == once.dataset);
    CHECK(dataset_to_string(once.dataset) == dataset_to_string(d));
}

TEST_CASE("merge rejects plans that do not fit the dataset") {
    const Vocab v = fixture_vocab();
    const Dataset d = load_dataset(fixture("merge_input.jsonl"), v);
    InternalPlan bad;
    bad.moves.push_back(move(d, 0, 0, v.predicate_id("riding")));
    bad.moves[0].ref.rel = 7;
    CHECK_THROWS_AS(merge(d, bad, {}), ValidationError);

    InternalPlan wrong_src;
    wrong_src.moves.push_back(move(d, 0, 0, v.predicate_id("riding")));
    wrong_src.moves[0].src = v.predicate_id("holding");
    CHECK_THROWS_AS(merge(d, wrong_src, {}), ValidationError);

    ExternalPlan on_annotated;
    on_annotated.additions.push_back({1, "g2", 0, 1, v.predicate_id("holding"), 0.1});
    CHECK_THROWS_AS(merge(d, {}, on_annotated), ValidationError);
}

TEST_CASE("a move onto an existing relation keeps a single instance") {
    const Vocab v = fixture_vocab();
    const Dataset d = dataset(v, {image(v, "c", {{"man"}, {"horse"}}, {{0, 1, "on"}, {0, 1, "riding"}})});
    InternalPlan ip;
    ip.moves.push_back(move(d, 0, 0, v.predicate_id("riding")));
    const EnhancedDataset e = merge(d, ip, {});
    CHECK(e.collisions == 1);
    REQUIRE(e.dataset.images[0].relations.size() == 1);
    CHECK(e.dataset.images[0].relations[0].predicate == v.predicate_id("riding"));
    CHECK(e.dataset.images[0].relations[0].provenance == Provenance::original());
    CHECK(e.manifest["collisions"] == 1);
}

TEST_CASE("merge bookkeeping on random plans") {
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        const Dataset d = testgen::random_dataset(seed);
        const ScoreTable t = testgen::to_table(testgen::random_weight_table(d, seed), d.vocab);
        const TripletIndex idx = build_triplet_index(d);
        const InternalPlan ip = build_plan(d, t, idx, static_cast<double>(seed % 101));
        const ExternalPlan ep = build_external_plan(enumerate_na(d), t, idx, static_cast<double>(seed * 3 % 101), 1);
        const EnhancedDataset e = merge(d, ip, ep);

        CHECK(e.dataset.num_relations() + e.collisions == d.num_relations() + ep.additions.size());
        CHECK(e.moved + e.collisions == ip.moves.size());

        // count_after(p) = count_before(p) - moved_out(p) + moved_in(p) + added(p)
        auto expected = predicate_counts(d);
        for (const auto& m : ip.moves) --expected[m.src], ++expected[m.tgt];
        for (const auto& a : ep.additions) ++expected[a.predicate];
        auto after = predicate_counts(e.dataset);
        for (PredicateId p = 1; p < d.vocab.score_size(); ++p) {
            // Each collision removes one instance of its target predicate.
            long collided = 0;
            for (const auto& m : ip.moves) {
                collided += d.images[m.ref.image].has_relation(m.subj, m.obj, m.tgt) && m.tgt == p;
            }
            CHECK(after[p] == expected[p] - collided);
        }

        // Original pairs are preserved and no quadruple is duplicated.
        for (std::size_t i = 0; i < d.images.size(); ++i) {
            std::set<std::pair<ObjectId, ObjectId>> before_pairs, after_pairs;
            for (const auto& r : d.images[i].relations) before_pairs.emplace(r.subj, r.obj);
            std::set<std::tuple<ObjectId, ObjectId, PredicateId>> quads;
            for (const auto& r : e.dataset.images[i].relations) {
                after_pairs.emplace(r.subj, r.obj);
                CHECK(quads.emplace(r.subj, r.obj, r.predicate).second);
            }
            for (const auto& pr : before_pairs) CHECK(after_pairs.count(pr));
            CHECK(e.dataset.images[i].objects == d.images[i].objects);
        }
    }
}

TEST_CASE("distribution report") {
    const Vocab v = fixture_vocab();
    std::vector<Image> imgs;
    add_instances(imgs, v, "a", "man", "holding", "kite", 4);
    add_instances(imgs, v, "b", "man", "riding", "horse", 2);
    add_instances(imgs, v, "c", "man", "on", "horse", 1);
    const Dataset before = dataset(v, imgs);

    const DistributionReport same = distribution_report(before, before, 3);
    CHECK(same.rank_order == std::vector<PredicateId>{6, 2, 1, 3, 4, 5});
    REQUIRE(same.bins.size() == 3);
    for (const auto& b : same.bins) {
        CHECK(b.before == b.after);
        CHECK(b.log10_before == b.log10_after);
    }
    CHECK(same.bins[0].before == 6);
    CHECK(same.bins[0].log10_before.value() == doctest::Approx(std::log10(6.0)));
    CHECK(same.bins[2].before == 0);
    CHECK_FALSE(same.bins[2].log10_before.has_value());

    std::vector<Image> more = imgs;
    add_instances(more, v, "d", "man", "flying", "kite", 3);
    const DistributionReport one = distribution_report(before, dataset(v, more), 1);
    REQUIRE(one.bins.size() == 1);
    CHECK(one.bins[0].before == before.num_relations());
    CHECK(one.bins[0].after == before.num_relations() + 3);
    CHECK(one.bins[0].first_rank == 0);
    CHECK(one.bins[0].last_rank == 6);

    std::ostringstream tsv;
    write_distribution_tsv(same, v, tsv);
    CHECK(tsv.str().rfind("bin\tfirst_rank\tlast_rank\tpredicates\tbefore\tafter\tlog10_before\tlog10_after\n", 0) == 0);
    CHECK_THROWS_AS(distribution_report(before, before, 0), ArgumentError);
}

TEST_CASE("transfer pair report") {
    const Vocab v = fixture_vocab();
    CHECK(transfer_pair_report({}, v).empty());
    InternalPlan ip;
    auto add = [&](const char* src, const char* tgt) {
        Move m;
        m.src = v.predicate_id(src);
        m.tgt = v.predicate_id(tgt);
        ip.moves.push_back(m);
    };
    add("on", "standing_on");
    for (int i = 0; i < 3; ++i) add("on", "riding");
    add("holding", "flying");
    const auto rows = transfer_pair_report(ip, v);
    const std::vector<TransferPairRow> expected{
        {"on", "riding", 3}, {"holding", "flying", 1}, {"on", "standing_on", 1}};
    CHECK(rows == expected);
    CHECK(transfer_pair_report(ip, v, 1) == std::vector<TransferPairRow>{{"on", "riding", 3}});

    std::ostringstream tsv;
    write_transfer_pair_tsv(rows, tsv);
    CHECK(tsv.str() == "general\tinformative\tmoved\non\triding\t3\nholding\tflying\t1\non\tstanding_on\t1\n");
}
