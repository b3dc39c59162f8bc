#include "ietrans/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "ietrans/error.hpp"

namespace ietrans {

namespace {

using nlohmann::json;

template <typename Id>
std::unordered_map<std::string, Id> index_names(const std::vector<std::string>& names,
                                                Id offset, const char* what) {
    std::unordered_map<std::string, Id> lookup;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty()) {
            throw ValidationError(std::string("empty ") + what + " class name at position " +
                                  std::to_string(i));
        }
        if (!lookup.emplace(names[i], static_cast<Id>(i) + offset).second) {
            throw ValidationError(std::string("duplicate ") + what + " class name '" + names[i] + "'");
        }
    }
    return lookup;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

double json_number(const json& v, std::size_t line, const char* what) {
    if (!v.is_number()) throw ParseError(line, std::string(what) + " must be a number");
    return v.get<double>();
}

std::uint32_t json_index(const json& v, std::size_t line, const char* what) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
        v.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        throw ParseError(line, std::string(what) + " must be a non-negative integer");
    }
    return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

const json& require(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, std::string("missing field '") + key + "'");
    return *it;
}

Image parse_image(const json& rec, const Vocab& vocab, std::size_t line) {
    if (!rec.is_object()) throw ParseError(line, "record must be a JSON object");
    Image image;
    const json& id = require(rec, "image_id", line);
    if (!id.is_string()) throw ParseError(line, "image_id must be a string");
    image.id = id.get<std::string>();

    const json& objects = require(rec, "objects", line);
    if (!objects.is_array()) throw ParseError(line, "objects must be an array");
    for (const json& o : objects) {
        if (!o.is_object()) throw ParseError(line, "object must be a JSON object");
        const json& cls = require(o, "class", line);
        if (!cls.is_string()) throw ParseError(line, "object class must be a string");
        const auto c = vocab.find_object(cls.get_ref<const std::string&>());
        if (!c) {
            throw ValidationError("image '" + image.id + "': unknown object class '" +
                                  cls.get<std::string>() + "'");
        }
        const json& box = require(o, "box", line);
        if (!box.is_array() || box.size() != 4) throw ParseError(line, "box must be [x1,y1,x2,y2]");
        image.objects.push_back({*c, BBox{json_number(box[0], line, "box"), json_number(box[1], line, "box"),
                                          json_number(box[2], line, "box"), json_number(box[3], line, "box")}});
    }

    const json& relations = require(rec, "relations", line);
    if (!relations.is_array()) throw ParseError(line, "relations must be an array");
    for (const json& r : relations) {
        if (!r.is_object()) throw ParseError(line, "relation must be a JSON object");
        RelationInstance rel;
        rel.subj = json_index(require(r, "subj", line), line, "subj");
        rel.obj = json_index(require(r, "obj", line), line, "obj");
        const json& pred = require(r, "predicate", line);
        if (!pred.is_string()) throw ParseError(line, "predicate must be a string");
        const auto p = vocab.find_predicate(pred.get_ref<const std::string&>());
        if (!p) {
            throw ValidationError("image '" + image.id + "': unknown predicate '" +
                                  pred.get<std::string>() + "'");
        }
        rel.predicate = *p;
        if (auto it = r.find("provenance"); it != r.end()) {
            if (!it->is_string()) throw ParseError(line, "provenance must be a string");
            rel.provenance = provenance_from_string(it->get_ref<const std::string&>(), vocab);
        }
        image.relations.push_back(rel);
    }
    return image;
}

json box_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> object_classes, std::vector<std::string> predicate_classes)
    : objects_(std::move(object_classes)), predicates_(std::move(predicate_classes)) {
    object_lookup_ = index_names<ClassId>(objects_, 0, "object");
    predicate_lookup_ = index_names<PredicateId>(predicates_, 1, "predicate");
    std::ostringstream out;
    write_vocab(*this, out);
    fingerprint_ = fnv1a_hex(out.str());
}

const std::string& Vocab::object_name(ClassId c) const {
    if (!valid_object(c)) throw ArgumentError("object class index " + std::to_string(c) + " out of range");
    return objects_[c];
}

const std::string& Vocab::predicate_name(PredicateId p) const {
    if (!valid_predicate(p)) throw ArgumentError("predicate index " + std::to_string(p) + " out of range");
    return predicates_[p - 1];
}

std::optional<ClassId> Vocab::find_object(std::string_view name) const {
    auto it = object_lookup_.find(std::string(name));
    if (it == object_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<PredicateId> Vocab::find_predicate(std::string_view name) const {
    auto it = predicate_lookup_.find(std::string(name));
    if (it == predicate_lookup_.end()) return std::nullopt;
    return it->second;
}

ClassId Vocab::object_id(std::string_view name) const {
    if (auto c = find_object(name)) return *c;
    throw ArgumentError("unknown object class '" + std::string(name) + "'");
}

PredicateId Vocab::predicate_id(std::string_view name) const {
    if (auto p = find_predicate(name)) return *p;
    throw ArgumentError("unknown predicate '" + std::string(name) + "'");
}

Vocab read_vocab(std::istream& in) {
    std::vector<std::string> objects;
    std::vector<std::string> predicates;
    std::vector<std::string>* section = nullptr;
    bool saw_objects = false;
    bool saw_predicates = false;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string name = trim(raw);
        if (name.empty()) continue;
        if (name == "[objects]") {
            if (saw_objects) throw ParseError(line, "repeated [objects] section");
            saw_objects = true;
            section = &objects;
        } else if (name == "[predicates]") {
            if (saw_predicates) throw ParseError(line, "repeated [predicates] section");
            saw_predicates = true;
            section = &predicates;
        } else if (section == nullptr) {
            throw ParseError(line, "class name before any [objects]/[predicates] section");
        } else {
            section->push_back(name);
        }
    }
    if (!saw_objects || !saw_predicates) {
        throw ParseError(0, "vocab needs both [objects] and [predicates] sections");
    }
    return Vocab(std::move(objects), std::move(predicates));
}

Vocab load_vocab(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_vocab(in);
}

void write_vocab(const Vocab& vocab, std::ostream& out) {
    out << "[objects]\n";
    for (const auto& n : vocab.object_classes()) out << n << '\n';
    out << "[predicates]\n";
    for (const auto& n : vocab.predicate_classes()) out << n << '\n';
}

void write_vocab(const Vocab& vocab, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_vocab(vocab, out);
}

// ---------------------------------------------------------------------------
// Geometry

bool BBox::valid() const noexcept {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 < x2 && y1 < y2;
}

double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Dataset

bool Image::has_relation_on(ObjectId subj, ObjectId obj) const {
    return std::any_of(relations.begin(), relations.end(),
                       [&](const RelationInstance& r) { return r.subj == subj && r.obj == obj; });
}

bool Image::has_relation(ObjectId subj, ObjectId obj, PredicateId p) const {
    return std::any_of(relations.begin(), relations.end(), [&](const RelationInstance& r) {
        return r.subj == subj && r.obj == obj && r.predicate == p;
    });
}

std::size_t Dataset::num_relations() const noexcept {
    std::size_t n = 0;
    for (const auto& img : images) n += img.relations.size();
    return n;
}

std::size_t Dataset::num_objects() const noexcept {
    std::size_t n = 0;
    for (const auto& img : images) n += img.objects.size();
    return n;
}

TripletType Dataset::type_of(const Image& image, const RelationInstance& rel) const {
    return {image.objects[rel.subj].class_id, rel.predicate, image.objects[rel.obj].class_id};
}

TripletType Dataset::type_of(const RelationRef& ref) const {
    const Image& image = images[ref.image];
    return type_of(image, image.relations[ref.rel]);
}

std::optional<std::size_t> Dataset::find_image(std::string_view id) const {
    auto it = std::lower_bound(images.begin(), images.end(), id,
                               [](const Image& img, std::string_view key) { return img.id < key; });
    if (it == images.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - images.begin());
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = images[i];
        auto fail = [&](const std::string& why) {
            throw ValidationError("image '" + img.id + "': " + why);
        };
        if (img.id.empty()) fail("empty image_id");
        if (i > 0 && !(images[i - 1].id < img.id)) {
            if (images[i - 1].id == img.id) fail("duplicate image_id");
            fail("images not sorted by image_id");
        }
        for (std::size_t o = 0; o < img.objects.size(); ++o) {
            const auto& obj = img.objects[o];
            if (!vocab.valid_object(obj.class_id)) fail("object " + std::to_string(o) + " has invalid class");
            if (!obj.box.valid()) {
                std::ostringstream msg;
                msg << "object " << o << " has degenerate box [" << obj.box.x1 << ',' << obj.box.y1 << ','
                    << obj.box.x2 << ',' << obj.box.y2 << ']';
                fail(msg.str());
            }
        }
        std::set<std::tuple<ObjectId, ObjectId, PredicateId>> seen;
        for (std::size_t r = 0; r < img.relations.size(); ++r) {
            const auto& rel = img.relations[r];
            const std::string where = "relation " + std::to_string(r) + ": ";
            if (rel.subj >= img.objects.size() || rel.obj >= img.objects.size()) {
                fail(where + "refers to a missing object");
            }
            if (rel.subj == rel.obj) fail(where + "subject equals object");
            if (!vocab.valid_predicate(rel.predicate)) fail(where + "invalid predicate");
            if (rel.provenance.kind == ProvenanceKind::internal_transfer &&
                !vocab.valid_predicate(rel.provenance.source)) {
                fail(where + "internal provenance without a valid source predicate");
            }
            if (!seen.emplace(rel.subj, rel.obj, rel.predicate).second) {
                fail(where + "duplicates an earlier (subj, obj, predicate)");
            }
        }
    }
}

void Dataset::sort_images() {
    std::stable_sort(images.begin(), images.end(),
                     [](const Image& a, const Image& b) { return a.id < b.id; });
}

std::size_t collapse_duplicate_relations(Dataset& d) {
    std::size_t removed = 0;
    for (auto& img : d.images) {
        std::set<std::tuple<ObjectId, ObjectId, PredicateId>> seen;
        std::vector<RelationInstance> kept;
        kept.reserve(img.relations.size());
        for (const auto& rel : img.relations) {
            if (seen.emplace(rel.subj, rel.obj, rel.predicate).second) {
                kept.push_back(rel);
            } else {
                ++removed;
            }
        }
        img.relations = std::move(kept);
    }
    return removed;
}

// ---------------------------------------------------------------------------
// TripletIndex

TripletIndex::TripletIndex(const Dataset& d) : totals_(d.vocab.score_size(), 0) {
    for (const auto& img : d.images) {
        for (const auto& rel : img.relations) {
            const TripletType t = d.type_of(img, rel);
            ++counts_[t];
            ++totals_[t.predicate];
        }
    }
    for (const auto& [t, n] : counts_) by_pair_[{t.subject, t.object}].push_back(t.predicate);
}

std::uint64_t TripletIndex::count(const TripletType& t) const {
    auto it = counts_.find(t);
    return it == counts_.end() ? 0 : it->second;
}

std::uint64_t TripletIndex::predicate_total(PredicateId p) const {
    return p < totals_.size() ? totals_[p] : 0;
}

const std::vector<PredicateId>& TripletIndex::predicates_for_pair(ClassId subject, ClassId object) const {
    static const std::vector<PredicateId> kEmpty;
    auto it = by_pair_.find({subject, object});
    return it == by_pair_.end() ? kEmpty : it->second;
}

TripletIndex build_triplet_index(const Dataset& d) { return TripletIndex(d); }

// ---------------------------------------------------------------------------
// Provenance

std::string provenance_to_string(const Provenance& p, const Vocab& vocab) {
    switch (p.kind) {
        case ProvenanceKind::original: return "original";
        case ProvenanceKind::external_transfer: return "external";
        case ProvenanceKind::internal_transfer: return "internal:" + vocab.predicate_name(p.source);
    }
    return "original";
}

Provenance provenance_from_string(std::string_view s, const Vocab& vocab) {
    if (s == "original") return Provenance::original();
    if (s == "external") return Provenance::external();
    constexpr std::string_view kInternal = "internal:";
    if (s.substr(0, kInternal.size()) == kInternal) {
        const auto src = vocab.find_predicate(s.substr(kInternal.size()));
        if (!src) throw ValidationError("provenance names unknown predicate: " + std::string(s));
        return Provenance::internal(*src);
    }
    throw ValidationError("unknown provenance '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// JSONL I/O

DatasetFile read_dataset(std::istream& in, const Vocab& vocab) {
    DatasetFile file;
    file.dataset.vocab = vocab;
    std::string raw;
    std::size_t line = 0;
    std::set<std::string> ids;
    while (std::getline(in, raw)) {
        ++line;
        if (trim(raw).empty()) continue;
        json rec;
        try {
            rec = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("invalid JSON: ") + e.what());
        }
        if (rec.is_object() && rec.contains("manifest") && !rec.contains("image_id")) {
            if (!file.dataset.images.empty() || file.manifest) {
                throw ParseError(line, "manifest line must be the first record");
            }
            file.manifest = rec.at("manifest");
            continue;
        }
        Image image = parse_image(rec, vocab, line);
        if (!ids.insert(image.id).second) {
            throw ValidationError("image '" + image.id + "': duplicate image_id (line " +
                                  std::to_string(line) + ")");
        }
        file.dataset.images.push_back(std::move(image));
    }
    file.dataset.sort_images();
    collapse_duplicate_relations(file.dataset);
    file.dataset.validate();
    return file;
}

DatasetFile load_dataset_file(const std::filesystem::path& path, const Vocab& vocab) {
    auto in = open_in(path);
    return read_dataset(in, vocab);
}

Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab) {
    return load_dataset_file(path, vocab).dataset;
}

void write_dataset(const Dataset& d, std::ostream& out, const std::optional<nlohmann::json>& manifest) {
    if (manifest) out << json{{"manifest", *manifest}}.dump() << '\n';
    for (const auto& img : d.images) {
        json objects = json::array();
        for (const auto& o : img.objects) {
            objects.push_back({{"class", d.vocab.object_name(o.class_id)}, {"box", box_json(o.box)}});
        }
        json relations = json::array();
        for (const auto& r : img.relations) {
            json rel{{"subj", r.subj}, {"obj", r.obj}, {"predicate", d.vocab.predicate_name(r.predicate)}};
            if (r.provenance.kind != ProvenanceKind::original) {
                rel["provenance"] = provenance_to_string(r.provenance, d.vocab);
            }
            relations.push_back(std::move(rel));
        }
        out << json{{"image_id", img.id}, {"objects", std::move(objects)}, {"relations", std::move(relations)}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed");
}

void write_dataset(const Dataset& d, const std::filesystem::path& path,
                   const std::optional<nlohmann::json>& manifest) {
    auto out = open_out(path);
    write_dataset(d, out, manifest);
}

std::string dataset_to_string(const Dataset& d, const std::optional<nlohmann::json>& manifest) {
    std::ostringstream out;
    write_dataset(d, out, manifest);
    return out.str();
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = kHex[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::string file_fingerprint(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a_hex(buf.str());
}

}  // namespace ietrans
