#include <algorithm>
#include <random>
#include <set>

#include "helpers.hpp"
#include "ietrans/error.hpp"
#include "support/gen.hpp"

using namespace th;
using nlohmann::json;

namespace {

// Independent canonical form of a dataset file: manifest and blank lines dropped,
// records sorted by id, boxes as doubles, repeated relations and explicit
// "original" provenance removed, keys sorted.
std::string canonicalize(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> records;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line);
        if (j.contains("manifest")) continue;
        json objects = json::array();
        for (const auto& o : j["objects"]) {
            json box = json::array();
            for (const auto& x : o["box"]) box.push_back(x.get<double>());
            objects.push_back({{"box", box}, {"class", o["class"]}});
        }
        json relations = json::array();
        std::set<std::tuple<int, int, std::string>> seen;
        for (const auto& r : j["relations"]) {
            if (!seen.insert({r["subj"].get<int>(), r["obj"].get<int>(), r["predicate"].get<std::string>()}).second) {
                continue;
            }
            json out{{"obj", r["obj"]}, {"predicate", r["predicate"]}, {"subj", r["subj"]}};
            if (r.contains("provenance") && r["provenance"] != "original") out["provenance"] = r["provenance"];
            relations.push_back(out);
        }
        const json rec{{"image_id", j["image_id"]}, {"objects", objects}, {"relations", relations}};
        records.emplace_back(j["image_id"].get<std::string>(), rec.dump());
    }
    std::sort(records.begin(), records.end());
    std::string out;
    for (const auto& [id, s] : records) out += s + "\n";
    return out;
}

const char* const kFixtures[] = {"basic.jsonl", "unsorted.jsonl", "provenance.jsonl", "duplicates.jsonl",
                                 "manifest.jsonl"};

Dataset parse(const std::string& text, const Vocab& v) {
    std::istringstream in(text);
    return read_dataset(in, v).dataset;
}

}  // namespace

TEST_CASE("vocab assigns predicate ids from 1 and rejects bad names") {
    const Vocab v = fixture_vocab();
    CHECK(v.num_object_classes() == 8);
    CHECK(v.num_predicates() == 6);
    CHECK(v.score_size() == 7);
    CHECK(v.predicate_id("on") == 1);
    CHECK(v.predicate_id("holding") == 6);
    CHECK(v.object_id("man") == 0);
    CHECK_FALSE(v.find_predicate("NA").has_value());
    CHECK_THROWS_AS(v.predicate_id("jumping"), ArgumentError);
    CHECK_THROWS_AS(Vocab({"a", "a"}, {"p"}), ValidationError);
    CHECK_THROWS_AS(Vocab({"a"}, {""}), ValidationError);

    std::ostringstream out;
    write_vocab(v, out);
    std::istringstream in(out.str());
    const Vocab back = read_vocab(in);
    CHECK(back == v);
    CHECK(back.fingerprint() == v.fingerprint());
    CHECK(Vocab({"b", "a"}, {"p"}).fingerprint() != Vocab({"a", "b"}, {"p"}).fingerprint());
}

TEST_CASE("iou") {
    const BBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
    CHECK(iou(a, {5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0).epsilon(1e-12));
    CHECK(iou(a, {10, 0, 20, 10}) == 0.0);  // shared edge only

    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(0, 20);
    for (int i = 0; i < 500; ++i) {
        const double x = u(g), y = u(g), x2 = u(g), y2 = u(g);
        const BBox b{x, y, x + 1 + u(g), y + 1 + u(g)};
        const BBox c{x2, y2, x2 + 1 + u(g), y2 + 1 + u(g)};
        const double v = iou(b, c);
        CHECK(v == iou(c, b));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(iou(b, b) == doctest::Approx(1.0));
    }
}

TEST_CASE("empty file gives an empty dataset") {
    const Dataset d = parse("", fixture_vocab());
    CHECK(d.images.empty());
    CHECK(build_triplet_index(d).num_types() == 0);
}

TEST_CASE("loader errors name the line, image and reason") {
    const Vocab v = fixture_vocab();
    const std::string good = R"({"image_id":"ok","objects":[],"relations":[]})";

    try {
        parse(good + "\n{not json\n", v);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        parse(R"({"image_id":"flat","objects":[{"class":"man","box":[3,0,3,5]}],"relations":[]})", v);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("flat") != std::string::npos);
        CHECK(msg.find("box") != std::string::npos);
    }
    const auto rejects = [&](const std::string& line) { CHECK_THROWS_AS(parse(line, v), Error); };
    rejects(R"({"image_id":"x","objects":[{"class":"alien","box":[0,0,1,1]}],"relations":[]})");
    rejects(R"({"image_id":"x","objects":[{"class":"man","box":[0,0,1,1]}],"relations":[{"subj":0,"obj":0,"predicate":"on"}]})");
    rejects(R"({"image_id":"x","objects":[{"class":"man","box":[0,0,1,1]}],"relations":[{"subj":0,"obj":4,"predicate":"on"}]})");
    rejects(R"({"image_id":"x","objects":[{"class":"man","box":[0,0,1,1]},{"class":"cup","box":[0,0,1,1]}],"relations":[{"subj":0,"obj":1,"predicate":"flies"}]})");
    rejects(good + "\n" + good);
    rejects(R"({"image_id":"x","objects":[{"class":"man","box":[0,0,1]}],"relations":[]})");
}

TEST_CASE("round trip equals an independent canonicalization of each fixture") {
    const Vocab v = fixture_vocab();
    for (const char* name : kFixtures) {
        CAPTURE(name);
        const std::string raw = slurp(fixture(name));
        const Dataset d = load_dataset(fixture(name), v);
        const std::string written = dataset_to_string(d);
        CHECK(written == canonicalize(raw));
        // load ∘ write ∘ load is the identity, and writing is deterministic.
        CHECK(parse(written, v) == d);
        CHECK(dataset_to_string(parse(written, v)) == written);
    }
}

TEST_CASE("provenance survives a round trip") {
    const Vocab v = fixture_vocab();
    const Dataset d = load_dataset(fixture("provenance.jsonl"), v);
    const auto& rels = d.images.at(0).relations;
    REQUIRE(rels.size() == 3);
    CHECK(rels[0].provenance == Provenance::internal(v.predicate_id("on")));
    CHECK(rels[1].provenance == Provenance::external());
    CHECK(rels[2].provenance == Provenance::original());
    CHECK(parse(dataset_to_string(d), v).images.at(0).relations == rels);
}

TEST_CASE("manifest line is kept aside") {
    const auto f = load_dataset_file(fixture("manifest.jsonl"), fixture_vocab());
    REQUIRE(f.manifest.has_value());
    CHECK((*f.manifest)["command"] == "merge");
    CHECK(f.dataset.images.size() == 2);
    CHECK(f.dataset.images.front().id == "f1");
}

TEST_CASE("duplicate relations collapse to one") {
    const Dataset d = load_dataset(fixture("duplicates.jsonl"), fixture_vocab());
    CHECK(d.images.at(0).relations.size() == 3);
    CHECK(build_triplet_index(d).count({0, d.vocab.predicate_id("riding"), 1}) == 1);
}

TEST_CASE("triplet index counts instances per type") {
    const Vocab v = fixture_vocab();
    std::vector<Image> imgs;
    add_instances(imgs, v, "r", "man", "riding", "bike", 3);
    add_instances(imgs, v, "o", "man", "on", "bike", 1);
    const Dataset d = dataset(v, imgs);
    const TripletIndex idx = build_triplet_index(d);
    const ClassId man = v.object_id("man"), bike = v.object_id("bike");
    CHECK(idx.count({man, v.predicate_id("riding"), bike}) == 3);
    CHECK(idx.count({man, v.predicate_id("on"), bike}) == 1);
    CHECK(idx.predicate_total(v.predicate_id("riding")) == 3);
    CHECK_FALSE(idx.exists({bike, v.predicate_id("riding"), man}));
    CHECK(idx.predicates_for_pair(man, bike) == std::vector<PredicateId>{1, 2});
    CHECK(idx.predicates_for_pair(bike, man).empty());
}

TEST_CASE("triplet index invariants on random datasets") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Dataset d = testgen::random_dataset(seed);
        const TripletIndex idx = build_triplet_index(d);

        std::vector<std::uint64_t> totals(d.vocab.score_size(), 0);
        for (const auto& [t, n] : idx.counts()) {
            CHECK(n >= 1);
            totals[t.predicate] += n;
        }
        for (PredicateId p = 1; p < d.vocab.score_size(); ++p) CHECK(idx.predicate_total(p) == totals[p]);

        // Shuffling images and relations leaves every count unchanged.
        Dataset shuffled = d;
        std::mt19937_64 g(seed);
        std::shuffle(shuffled.images.begin(), shuffled.images.end(), g);
        for (auto& img : shuffled.images) std::shuffle(img.relations.begin(), img.relations.end(), g);
        CHECK(build_triplet_index(shuffled).counts() == idx.counts());

        // Image order in the file does not matter: loading sorts by id.
        Dataset reordered = d;
        std::shuffle(reordered.images.begin(), reordered.images.end(), g);
        std::string text;
        for (const auto& img : reordered.images) text += dataset_to_string(Dataset{d.vocab, {img}});
        CHECK(parse(text, d.vocab) == d);
        CHECK(dataset_to_string(parse(text, d.vocab)) == dataset_to_string(d));
    }
}

TEST_CASE("provenance strings") {
    const Vocab v = fixture_vocab();
    CHECK(provenance_to_string(Provenance::internal(2), v) == "internal:riding");
    CHECK(provenance_from_string("external", v) == Provenance::external());
    CHECK_THROWS_AS(provenance_from_string("internal:nothing", v), Error);
    CHECK_THROWS_AS(provenance_from_string("guess", v), Error);
}
