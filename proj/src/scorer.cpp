#include "ietrans/scorer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ietrans/error.hpp"
#include "ietrans/parallel.hpp"

namespace ietrans {

namespace {

using nlohmann::json;

constexpr std::array<char, 8> kBinaryMagic = {'I', 'E', 'T', 'S', 'C', 'O', 'R', 'E'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.put(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(std::istream& in) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw ParseError(0, "truncated binary score file");
        value |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return value;
}

void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto n = get_le<std::uint32_t>(in);
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw ParseError(0, "truncated binary score file");
    return s;
}

ScoreVector score_from_source(const Dataset& d, const PairKey& key, std::size_t image,
                              const ScoreSource& source) {
    if (const auto* baseline = std::get_if<std::reference_wrapper<const FrequencyBaseline>>(&source)) {
        const Image& img = d.images[image];
        return baseline->get().score_pair(img.objects[key.subj].class_id, img.objects[key.obj].class_id);
    }
    return std::get<std::reference_wrapper<const ScoreTable>>(source).get().at(key);
}

std::string source_fingerprint(const ScoreSource& source) {
    if (const auto* baseline = std::get_if<std::reference_wrapper<const FrequencyBaseline>>(&source)) {
        return baseline->get().vocab_fingerprint();
    }
    return std::get<std::reference_wrapper<const ScoreTable>>(source).get().fingerprint();
}

// Missing keys are reported all at once so a bad dump can be fixed in one pass.
void check_coverage(const std::vector<PairKey>& pairs, const ScoreSource& source) {
    const auto* table = std::get_if<std::reference_wrapper<const ScoreTable>>(&source);
    if (table == nullptr) return;
    std::vector<std::string> missing;
    for (const auto& key : pairs) {
        if (!table->get().contains(key)) missing.push_back(to_string(key));
    }
    if (missing.empty()) return;
    std::string msg = std::to_string(missing.size()) + " pair(s) missing from score table:";
    constexpr std::size_t kShown = 20;
    for (std::size_t i = 0; i < std::min(kShown, missing.size()); ++i) msg += " " + missing[i];
    if (missing.size() > kShown) msg += " ...";
    throw MissingScoreError(msg);
}

ScoreTable score_keys(const Dataset& d, const std::vector<PairKey>& pairs, const ScoreSource& source,
                      unsigned workers) {
    const std::string fp = source_fingerprint(source);
    if (fp != d.vocab.fingerprint()) {
        throw FingerprintMismatch("score source vocab " + fp + " does not match dataset vocab " +
                                  d.vocab.fingerprint());
    }
    check_coverage(pairs, source);
    std::vector<ScoreVector> vectors(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t i) {
        const auto image = d.find_image(pairs[i].image_id);
        if (!image) throw ValidationError("pair refers to unknown image " + pairs[i].image_id);
        const Image& img = d.images[*image];
        if (pairs[i].subj >= img.objects.size() || pairs[i].obj >= img.objects.size()) {
            throw ValidationError("pair refers to missing object: " + to_string(pairs[i]));
        }
        vectors[i] = score_from_source(d, pairs[i], *image, source);
    });
    ScoreTable table(d.vocab.fingerprint(), d.vocab.score_size());
    for (std::size_t i = 0; i < pairs.size(); ++i) table.insert(pairs[i], std::move(vectors[i]));
    return table;
}

}  // namespace

// ---------------------------------------------------------------------------

ScoreVector::ScoreVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw ValidationError("score vector needs an NA slot and at least one predicate");
    double sum = 0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const double v = values_[i];
        if (!std::isfinite(v)) throw ValidationError("score vector entry " + std::to_string(i) + " is not finite");
        if (v < 0) throw ValidationError("score vector entry " + std::to_string(i) + " is negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "score vector sums to " << sum << ", expected 1";
        throw ValidationError(msg.str());
    }
}

PredicateId ScoreVector::best_predicate() const {
    PredicateId best = 1;
    for (PredicateId p = 2; p < values_.size(); ++p) {
        if (values_[p] > values_[best]) best = p;
    }
    return best;
}

std::string to_string(const PairKey& key) {
    return "(" + key.image_id + "," + std::to_string(key.subj) + "," + std::to_string(key.obj) + ")";
}

void ScoreTable::insert(PairKey key, ScoreVector v) {
    if (v.size() != vector_size_) {
        throw ValidationError("score vector for " + to_string(key) + " has length " + std::to_string(v.size()) +
                              ", expected " + std::to_string(vector_size_));
    }
    const std::string where = to_string(key);
    if (!entries_.emplace(std::move(key), std::move(v)).second) {
        throw ValidationError("duplicate score entry for " + where);
    }
}

const ScoreVector* ScoreTable::find(const PairKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

const ScoreVector& ScoreTable::at(const PairKey& key) const {
    if (const auto* v = find(key)) return *v;
    throw MissingScoreError("no score vector for pair " + to_string(key));
}

void ScoreTable::check_vocab(const Vocab& vocab) const {
    if (fingerprint_ != vocab.fingerprint()) {
        throw FingerprintMismatch("score table vocab " + fingerprint_ + " does not match " + vocab.fingerprint());
    }
    if (vector_size_ != vocab.score_size()) {
        throw FingerprintMismatch("score table vector size " + std::to_string(vector_size_) +
                                  " does not match vocab size " + std::to_string(vocab.score_size()));
    }
}

void ScoreTable::merge_from(const ScoreTable& other) {
    if (other.fingerprint_ != fingerprint_ || other.vector_size_ != vector_size_) {
        throw FingerprintMismatch("cannot merge score tables built for different vocabularies");
    }
    for (const auto& [key, v] : other.entries_) {
        auto [it, inserted] = entries_.emplace(key, v);
        if (!inserted && !(it->second == v)) {
            throw ValidationError("conflicting score vectors for " + to_string(key));
        }
    }
}

// ---------------------------------------------------------------------------

FrequencyBaseline::FrequencyBaseline(const Vocab& vocab, double alpha, double beta)
    : alpha_(alpha), beta_(beta), vector_size_(vocab.score_size()), fingerprint_(vocab.fingerprint()) {
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ArgumentError("smoothing alpha must be >= 0");
    if (!(beta >= 0 && beta < 1)) throw ArgumentError("NA prior beta must lie in [0, 1)");
}

void FrequencyBaseline::add(ClassId subject, PredicateId p, ClassId object) {
    if (p == kNA || p >= vector_size_) throw ArgumentError("predicate index out of range");
    auto& row = counts_[{subject, object}];
    if (row.empty()) row.assign(vector_size_, 0);
    ++row[p];
}

std::uint64_t FrequencyBaseline::count(ClassId subject, ClassId object, PredicateId p) const {
    auto it = counts_.find({subject, object});
    if (it == counts_.end() || p >= it->second.size()) return 0;
    return it->second[p];
}

ScoreVector FrequencyBaseline::score_pair(ClassId subject, ClassId object) const {
    auto it = counts_.find({subject, object});
    const std::vector<std::uint64_t>* row = it == counts_.end() ? nullptr : &it->second;
    double denom = 0;
    for (std::size_t p = 1; p < vector_size_; ++p) {
        denom += static_cast<double>(row ? (*row)[p] : 0) + alpha_;
    }
    if (denom <= 0) {
        throw ArgumentError("frequency baseline with alpha = 0 has no distribution for unseen class pair (" +
                            std::to_string(subject) + "," + std::to_string(object) + ")");
    }
    std::vector<double> values(vector_size_);
    values[kNA] = beta_;
    for (std::size_t p = 1; p < vector_size_; ++p) {
        values[p] = (1.0 - beta_) * (static_cast<double>(row ? (*row)[p] : 0) + alpha_) / denom;
    }
    return ScoreVector(std::move(values));
}

std::string FrequencyBaseline::fingerprint() const {
    std::ostringstream out;
    out.precision(17);
    out << "freq|" << fingerprint_ << '|' << alpha_ << '|' << beta_;
    for (const auto& [pair, row] : counts_) {
        out << '|' << pair.first << ',' << pair.second;
        for (std::size_t p = 1; p < row.size(); ++p) {
            if (row[p]) out << ';' << p << ':' << row[p];
        }
    }
    return fnv1a_hex(out.str());
}

FrequencyBaseline fit_frequency_baseline(const Dataset& train, double alpha, double beta) {
    FrequencyBaseline model(train.vocab, alpha, beta);
    for (const auto& img : train.images) {
        for (const auto& rel : img.relations) {
            model.add(img.objects[rel.subj].class_id, rel.predicate, img.objects[rel.obj].class_id);
        }
    }
    return model;
}

// ---------------------------------------------------------------------------

std::vector<PairKey> annotated_pairs(const Dataset& d) {
    std::vector<PairKey> pairs;
    for (const auto& img : d.images) {
        std::vector<std::pair<ObjectId, ObjectId>> local;
        for (const auto& rel : img.relations) local.emplace_back(rel.subj, rel.obj);
        std::sort(local.begin(), local.end());
        local.erase(std::unique(local.begin(), local.end()), local.end());
        for (const auto& [s, o] : local) pairs.push_back({img.id, s, o});
    }
    return pairs;
}

ScoreTable score_annotated(const Dataset& d, const ScoreSource& source, unsigned workers) {
    return score_keys(d, annotated_pairs(d), source, workers);
}

ScoreTable score_pairs(const Dataset& d, std::span<const PairKey> pairs, const ScoreSource& source,
                       unsigned workers) {
    return score_keys(d, std::vector<PairKey>(pairs.begin(), pairs.end()), source, workers);
}

// ---------------------------------------------------------------------------

ScoreTable read_scores_jsonl(std::istream& in, const Vocab& vocab) {
    ScoreTable table(vocab.fingerprint(), vocab.score_size());
    std::string raw;
    std::size_t line = 0;
    bool first = true;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object()) throw ParseError(line, "score record must be a JSON object");
        if (first && rec.contains("vocab_fingerprint")) {
            first = false;
            const json& fp = rec.at("vocab_fingerprint");
            if (!fp.is_string() || fp.get<std::string>() != vocab.fingerprint()) {
                throw FingerprintMismatch("score dump vocab fingerprint " + fp.dump() + " does not match " +
                                          vocab.fingerprint());
            }
            continue;
        }
        first = false;
        try {
            PairKey key{rec.at("image_id").get<std::string>(), rec.at("subj").get<ObjectId>(),
                        rec.at("obj").get<ObjectId>()};
            const json& scores = rec.at("scores");
            if (!scores.is_array()) throw ParseError(line, "scores must be an array");
            std::vector<double> values;
            values.reserve(scores.size());
            for (const json& v : scores) {
                if (!v.is_number()) throw ParseError(line, "score entries must be numbers");
                values.push_back(v.get<double>());
            }
            if (values.size() != vocab.score_size()) {
                throw ValidationError("line " + std::to_string(line) + ": score vector has length " +
                                      std::to_string(values.size()) + ", expected " +
                                      std::to_string(vocab.score_size()) + " (NA + predicates)");
            }
            try {
                table.insert(std::move(key), ScoreVector(std::move(values)));
            } catch (const ValidationError& e) {
                throw ValidationError("line " + std::to_string(line) + ": " + e.what());
            }
        } catch (const json::exception& e) {
            throw ParseError(line, std::string("malformed score record: ") + e.what());
        }
    }
    return table;
}

void write_scores_jsonl(const ScoreTable& table, std::ostream& out, const std::optional<nlohmann::json>& manifest) {
    json header{{"vocab_fingerprint", table.fingerprint()}, {"vector_size", table.vector_size()}};
    if (manifest) header["manifest"] = *manifest;
    out << header.dump() << '\n';
    for (const auto& [key, v] : table) {
        json rec{{"image_id", key.image_id}, {"subj", key.subj}, {"obj", key.obj}};
        rec["scores"] = std::vector<double>(v.values().begin(), v.values().end());
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("write failed");
}

ScoreTable read_scores_binary(std::istream& in, const Vocab& vocab) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kBinaryMagic) {
        throw ParseError(0, "not a binary score file");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kBinaryVersion) throw ParseError(0, "unsupported binary score version " + std::to_string(version));
    const std::string fp = get_string(in);
    if (fp != vocab.fingerprint()) {
        throw FingerprintMismatch("binary score vocab fingerprint " + fp + " does not match " + vocab.fingerprint());
    }
    const auto size = get_le<std::uint32_t>(in);
    if (size != vocab.score_size()) {
        throw ValidationError("binary score vectors have length " + std::to_string(size) + ", expected " +
                              std::to_string(vocab.score_size()));
    }
    const auto records = get_le<std::uint64_t>(in);
    ScoreTable table(fp, size);
    for (std::uint64_t r = 0; r < records; ++r) {
        PairKey key;
        key.image_id = get_string(in);
        key.subj = get_le<std::uint32_t>(in);
        key.obj = get_le<std::uint32_t>(in);
        std::vector<double> values(size);
        for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
        try {
            table.insert(std::move(key), ScoreVector(std::move(values)));
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(r) + ": " + e.what());
        }
    }
    return table;
}

void write_scores_binary(const ScoreTable& table, std::ostream& out) {
    out.write(kBinaryMagic.data(), kBinaryMagic.size());
    put_le<std::uint32_t>(out, kBinaryVersion);
    put_string(out, table.fingerprint());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.vector_size()));
    put_le<std::uint64_t>(out, table.size());
    for (const auto& [key, v] : table) {
        put_string(out, key.image_id);
        put_le<std::uint32_t>(out, key.subj);
        put_le<std::uint32_t>(out, key.obj);
        for (double x : v.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
    }
    if (!out) throw IoError("write failed");
}

ScoreTable load_external_scores(const std::filesystem::path& path, const Vocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    const bool binary = in.gcount() == static_cast<std::streamsize>(magic.size()) && magic == kBinaryMagic;
    in.clear();
    in.seekg(0);
    return binary ? read_scores_binary(in, vocab) : read_scores_jsonl(in, vocab);
}

void save_scores(const ScoreTable& table, const std::filesystem::path& path, bool binary,
                 const std::optional<nlohmann::json>& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    if (binary) {
        write_scores_binary(table, out);
    } else {
        write_scores_jsonl(table, out, manifest);
    }
}

}  // namespace ietrans
