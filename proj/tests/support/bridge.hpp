#pragma once
// Field-by-field copy of a library dataset into the oracle's plain structures.

#include "gen.hpp"
#include "ietrans/external_transfer.hpp"
#include "ietrans/internal_transfer.hpp"
#include "oracle/oracle.hpp"

namespace testgen {

inline oracle::World to_world(const ietrans::Dataset& d, const WeightTable& w) {
    oracle::World world;
    world.num_predicates = static_cast<int>(d.vocab.num_predicates());
    for (const auto& img : d.images) {
        oracle::Img o{img.id, {}, {}};
        for (const auto& obj : img.objects) {
            o.objects.push_back({static_cast<int>(obj.class_id), obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2});
        }
        for (const auto& r : img.relations) {
            o.relations.push_back({static_cast<int>(r.subj), static_cast<int>(r.obj), static_cast<int>(r.predicate)});
        }
        world.images.push_back(std::move(o));
    }
    for (const auto& [k, v] : w) world.weights[{k.image_id, static_cast<int>(k.subj), static_cast<int>(k.obj)}] = v;
    return world;
}

inline oracle::MoveSet move_set(const ietrans::InternalPlan& plan) {
    oracle::MoveSet s;
    for (const auto& m : plan.moves) {
        s.insert({m.image_id, static_cast<int>(m.ref.rel), static_cast<int>(m.src), static_cast<int>(m.tgt)});
    }
    return s;
}

inline oracle::AdditionSet addition_set(const ietrans::ExternalPlan& plan) {
    oracle::AdditionSet s;
    for (const auto& a : plan.additions) {
        s.insert({a.image_id, static_cast<int>(a.subj), static_cast<int>(a.obj), static_cast<int>(a.predicate)});
    }
    return s;
}

}  // namespace testgen
