#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ietrans/data_model.hpp"
#include "ietrans/scorer.hpp"

namespace th {

using namespace ietrans;

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(IETRANS_FIXTURE_DIR) / name;
}

inline Vocab fixture_vocab() { return load_vocab(fixture("vocab.txt")); }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ietrans_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct Obj {
    std::string cls;
    BBox box{0, 0, 10, 10};
};

struct Rel {
    ObjectId subj;
    ObjectId obj;
    std::string predicate;
};

inline Image image(const Vocab& v, std::string id, std::initializer_list<Obj> objs, std::initializer_list<Rel> rels) {
    Image img;
    img.id = std::move(id);
    for (const auto& o : objs) img.objects.push_back({v.object_id(o.cls), o.box});
    for (const auto& r : rels) img.relations.push_back({r.subj, r.obj, v.predicate_id(r.predicate), {}});
    return img;
}

inline Dataset dataset(const Vocab& v, std::vector<Image> images) {
    Dataset d{v, std::move(images)};
    d.sort_images();
    d.validate();
    return d;
}

// `n` two-object images, each holding one (subject, predicate, object) relation.
inline void add_instances(std::vector<Image>& out, const Vocab& v, const std::string& prefix, const std::string& s,
                          const std::string& p, const std::string& o, int n) {
    for (int i = 0; i < n; ++i) {
        out.push_back(image(v, prefix + std::to_string(i), {{s}, {o, {5, 5, 15, 15}}}, {{0, 1, p}}));
    }
}

inline ScoreVector vec(std::initializer_list<double> values) { return ScoreVector(std::vector<double>(values)); }

}  // namespace th
