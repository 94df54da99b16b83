#include "sma/sets.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace sma {

std::size_t EntityBatch::entity_index(std::uint64_t entity) const {
    auto it = std::lower_bound(entities.begin(), entities.end(), entity);
    if (it == entities.end() || *it != entity) {
        throw ShapeError("unknown entity id " + std::to_string(entity));
    }
    return static_cast<std::size_t>(it - entities.begin());
}

EntityBatch build_entity_batch(EmbeddingBlock x, EmbeddingBlock y) {
    if (x.size() == 0 || y.size() == 0) {
        throw ShapeError("build_entity_batch: empty block");
    }
    if (x.matrix.rows() != x.entity_ids.size() || y.matrix.rows() != y.entity_ids.size()) {
        throw ShapeError("build_entity_batch: entity_ids length != matrix rows");
    }

    std::map<std::uint64_t, std::vector<std::size_t>> by_x, by_y;
    for (std::size_t r = 0; r < x.entity_ids.size(); ++r) by_x[x.entity_ids[r]].push_back(r);
    for (std::size_t r = 0; r < y.entity_ids.size(); ++r) by_y[y.entity_ids[r]].push_back(r);

    for (const auto& [id, rows] : by_x) {
        if (by_y.find(id) == by_y.end()) {
            throw ShapeError("build_entity_batch: entity " + std::to_string(id) +
                             " present only in modality X");
        }
    }
    for (const auto& [id, rows] : by_y) {
        if (by_x.find(id) == by_x.end()) {
            throw ShapeError("build_entity_batch: entity " + std::to_string(id) +
                             " present only in modality Y");
        }
    }

    EntityBatch b;
    b.x = std::move(x);
    b.y = std::move(y);
    for (const auto& [id, rows] : by_x) {
        b.entities.push_back(id);
        b.x_rows.push_back(rows);            // ascending row order from the scan
        b.y_rows.push_back(by_y.at(id));
    }
    return b;
}

namespace {

NegativeIndexSets anchored_negatives(const std::vector<std::vector<std::size_t>>& anchor_side,
                                     const std::vector<std::vector<std::size_t>>& opposite_side,
                                     std::size_t idx, std::size_t num_entities) {
    if (num_entities < 2) {
        throw ShapeError("negative_index_sets: need at least 2 entities, have " +
                         std::to_string(num_entities));
    }
    NegativeIndexSets out;
    out.anchor_rows = anchor_side[idx];
    for (std::size_t e = 0; e < num_entities; ++e) {
        if (e == idx) continue;
        out.negative_rows.insert(out.negative_rows.end(), opposite_side[e].begin(),
                                 opposite_side[e].end());
    }
    std::sort(out.negative_rows.begin(), out.negative_rows.end());
    return out;
}

}  // namespace

NegativeIndexSets negative_index_sets(const EntityBatch& b, std::uint64_t entity) {
    return anchored_negatives(b.x_rows, b.y_rows, b.entity_index(entity), b.num_entities());
}

NegativeIndexSets negative_index_sets_swapped(const EntityBatch& b, std::uint64_t entity) {
    return anchored_negatives(b.y_rows, b.x_rows, b.entity_index(entity), b.num_entities());
}

}  // namespace sma
