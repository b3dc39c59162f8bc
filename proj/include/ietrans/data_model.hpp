#pragma once
// Scene-graph corpus model: vocabulary, images with objects and directed relations,
// triplet-type counting, box geometry and the canonical JSONL encoding.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ietrans {

using ClassId = std::uint32_t;
// Index on the score axis. 0 is the NA pseudo-predicate, real predicates start at 1.
using PredicateId = std::uint32_t;
using ObjectId = std::uint32_t;
using RelId = std::uint32_t;

inline constexpr PredicateId kNA = 0;

// Object and predicate class names. Predicate `i` in the file becomes PredicateId i+1.
class Vocab {
public:
    Vocab() : Vocab({}, {}) {}
    Vocab(std::vector<std::string> object_classes, std::vector<std::string> predicate_classes);

    std::size_t num_object_classes() const noexcept { return objects_.size(); }
    std::size_t num_predicates() const noexcept { return predicates_.size(); }
    // Length of every score vector: NA plus one slot per predicate.
    std::size_t score_size() const noexcept { return predicates_.size() + 1; }

    const std::string& object_name(ClassId c) const;
    const std::string& predicate_name(PredicateId p) const;

    std::optional<ClassId> find_object(std::string_view name) const;
    std::optional<PredicateId> find_predicate(std::string_view name) const;
    ClassId object_id(std::string_view name) const;
    PredicateId predicate_id(std::string_view name) const;

    bool valid_object(ClassId c) const noexcept { return c < objects_.size(); }
    bool valid_predicate(PredicateId p) const noexcept { return p >= 1 && p <= predicates_.size(); }

    const std::vector<std::string>& object_classes() const noexcept { return objects_; }
    const std::vector<std::string>& predicate_classes() const noexcept { return predicates_; }

    // 16 hex digits identifying the class lists and their order.
    const std::string& fingerprint() const noexcept { return fingerprint_; }

    bool operator==(const Vocab& other) const {
        return objects_ == other.objects_ && predicates_ == other.predicates_;
    }

private:
    std::vector<std::string> objects_;
    std::vector<std::string> predicates_;
    std::unordered_map<std::string, ClassId> object_lookup_;
    std::unordered_map<std::string, PredicateId> predicate_lookup_;
    std::string fingerprint_;
};

// Sidecar vocabulary file: an "[objects]" line, one object class per line, a
// "[predicates]" line, one predicate per line. Blank lines are ignored.
Vocab read_vocab(std::istream& in);
Vocab load_vocab(const std::filesystem::path& path);
void write_vocab(const Vocab& vocab, std::ostream& out);
void write_vocab(const Vocab& vocab, const std::filesystem::path& path);

// Half-open real rectangle [x1, x2) x [y1, y2).
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return width() * height(); }
    bool valid() const noexcept;

    bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);

struct ObjectInstance {
    ClassId class_id = 0;
    BBox box;

    bool operator==(const ObjectInstance&) const = default;
};

enum class ProvenanceKind { original, internal_transfer, external_transfer };

struct Provenance {
    ProvenanceKind kind = ProvenanceKind::original;
    PredicateId source = kNA;  // previous predicate for internal transfers

    static Provenance original() { return {}; }
    static Provenance internal(PredicateId src) { return {ProvenanceKind::internal_transfer, src}; }
    static Provenance external() { return {ProvenanceKind::external_transfer, kNA}; }

    bool operator==(const Provenance&) const = default;
};

// Object ids and relation ids are positions inside the owning image.
struct RelationInstance {
    ObjectId subj = 0;
    ObjectId obj = 0;
    PredicateId predicate = 0;
    Provenance provenance;

    bool operator==(const RelationInstance&) const = default;
};

struct Image {
    std::string id;
    std::vector<ObjectInstance> objects;
    std::vector<RelationInstance> relations;

    bool has_relation_on(ObjectId subj, ObjectId obj) const;
    bool has_relation(ObjectId subj, ObjectId obj, PredicateId p) const;

    bool operator==(const Image&) const = default;
};

// Ordered class-level triplet (subject class, predicate, object class).
struct TripletType {
    ClassId subject = 0;
    PredicateId predicate = 0;
    ClassId object = 0;

    auto operator<=>(const TripletType&) const = default;
};

// Position of a relation instance; the deterministic tie-break key everywhere.
struct RelationRef {
    std::size_t image = 0;
    RelId rel = 0;

    auto operator<=>(const RelationRef&) const = default;
};

// Images are kept sorted by id; their position is the dense image index.
struct Dataset {
    Vocab vocab;
    std::vector<Image> images;

    std::size_t num_relations() const noexcept;
    std::size_t num_objects() const noexcept;

    TripletType type_of(const RelationRef& ref) const;
    TripletType type_of(const Image& image, const RelationInstance& rel) const;
    std::optional<std::size_t> find_image(std::string_view id) const;

    // Throws ValidationError naming the image and the violated invariant.
    void validate() const;
    // Sorts images by id. Does not validate.
    void sort_images();

    bool operator==(const Dataset&) const = default;
};

// Drops repeated (subj, obj, predicate) relations inside each image, keeping the
// first occurrence, and renumbers relation ids. Returns the number removed.
std::size_t collapse_duplicate_relations(Dataset& d);

// N(t) for every triplet type present, plus per-predicate totals.
class TripletIndex {
public:
    TripletIndex() = default;
    explicit TripletIndex(const Dataset& d);

    std::uint64_t count(const TripletType& t) const;
    bool exists(const TripletType& t) const { return count(t) > 0; }
    // Sum of N over all types carrying predicate p, i.e. p's instance count.
    std::uint64_t predicate_total(PredicateId p) const;
    // Predicates p with N(subject, p, object) > 0, ascending.
    const std::vector<PredicateId>& predicates_for_pair(ClassId subject, ClassId object) const;

    const std::map<TripletType, std::uint64_t>& counts() const noexcept { return counts_; }
    std::size_t num_types() const noexcept { return counts_.size(); }
    std::size_t num_predicate_slots() const noexcept { return totals_.size(); }

private:
    std::map<TripletType, std::uint64_t> counts_;
    std::vector<std::uint64_t> totals_;  // indexed by PredicateId
    std::map<std::pair<ClassId, ClassId>, std::vector<PredicateId>> by_pair_;
};

TripletIndex build_triplet_index(const Dataset& d);

// A dataset file may begin with a manifest line ({"manifest": {...}}).
struct DatasetFile {
    Dataset dataset;
    std::optional<nlohmann::json> manifest;
};

DatasetFile read_dataset(std::istream& in, const Vocab& vocab);
Dataset load_dataset(const std::filesystem::path& path, const Vocab& vocab);
DatasetFile load_dataset_file(const std::filesystem::path& path, const Vocab& vocab);

// Canonical encoding: one line per image in image order, keys sorted, shortest
// round-trip float formatting, provenance omitted for original relations.
void write_dataset(const Dataset& d, std::ostream& out,
                   const std::optional<nlohmann::json>& manifest = std::nullopt);
void write_dataset(const Dataset& d, const std::filesystem::path& path,
                   const std::optional<nlohmann::json>& manifest = std::nullopt);
std::string dataset_to_string(const Dataset& d,
                              const std::optional<nlohmann::json>& manifest = std::nullopt);

std::string provenance_to_string(const Provenance& p, const Vocab& vocab);
Provenance provenance_from_string(std::string_view s, const Vocab& vocab);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace ietrans
