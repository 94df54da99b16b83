#pragma once

#include <cstdint>
#include <vector>

#include "sma/core.hpp"

namespace sma {

enum class Modality : std::uint8_t { X = 0, Y = 1 };

// A block of instance embeddings. One row per instance, tagged with the id
// of the entity it depicts. Rows must be L2-normalized before any kernel
// computation.
struct EmbeddingBlock {
    Matrix matrix;
    std::vector<std::uint64_t> entity_ids;
    Modality modality = Modality::X;

    std::size_t size() const { return entity_ids.size(); }
};

// The combinatorial view of a batch: a disjoint partition of each modality's
// rows into per-entity positive sets. Entities are kept in sorted-id order so
// two builds from the same inputs are structurally identical.
struct EntityBatch {
    EmbeddingBlock x;
    EmbeddingBlock y;
    std::vector<std::uint64_t> entities;         // sorted, distinct
    std::vector<std::vector<std::size_t>> x_rows;  // aligned with entities
    std::vector<std::vector<std::size_t>> y_rows;

    std::size_t num_entities() const { return entities.size(); }
    // Index into entities/x_rows/y_rows; throws ShapeError on unknown id.
    std::size_t entity_index(std::uint64_t entity) const;
};

// Validates that both blocks cover the same entity universe and builds the
// positive-set partition. Throws ShapeError on empty blocks or on an entity
// present in only one modality.
EntityBatch build_entity_batch(EmbeddingBlock x, EmbeddingBlock y);

struct NegativeIndexSets {
    std::vector<std::size_t> anchor_rows;   // entity i's rows, anchor side
    std::vector<std::size_t> negative_rows; // all other entities' rows, opposite side
};

// Anchored negative sets for entity i: i's X rows against every other
// entity's Y rows. Requires at least two entities.
NegativeIndexSets negative_index_sets(const EntityBatch& b, std::uint64_t entity);

// Same with modalities swapped: i's Y rows against other entities' X rows.
NegativeIndexSets negative_index_sets_swapped(const EntityBatch& b, std::uint64_t entity);

}  // namespace sma
