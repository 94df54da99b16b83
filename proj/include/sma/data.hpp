#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sma/core.hpp"
#include "sma/sets.hpp"

namespace sma {

enum class Nonlinearity : std::uint8_t { None = 0, Tanh = 1 };

// Synthetic stand-in for frozen-encoder embeddings: per entity, a shared
// latent is pushed through two fixed seeded mixing matrices (one per
// modality), noised per view, optionally squashed, then row-normalized.
struct SynthConfig {
    std::size_t num_entities = 500;
    std::size_t views_x = 4;
    std::size_t views_y = 5;
    std::size_t latent_dim = 16;
    std::size_t dim_x = 64;
    std::size_t dim_y = 96;
    double noise_sigma = 0.05;
    Nonlinearity nonlinearity = Nonlinearity::Tanh;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Dataset {
    EmbeddingBlock x, y;  // all entities, both modalities
    std::vector<std::uint64_t> train, val, test;  // entity ids per split

    // Latents kept for sanity oracles (nearest-centroid floor at sigma = 0).
    Matrix latents;
    std::vector<std::uint64_t> latent_ids;
};

// Deterministic in the config seed; entity-level 80/10/10 split.
Dataset generate(const SynthConfig& cfg);

// Rows of the given entities, in sorted-entity then ascending-row order.
EmbeddingBlock gather_entities(const EmbeddingBlock& block,
                               std::span<const std::uint64_t> entities);

// EmbeddingFile "SMAE": header (magic, version u32, dim u32, count u64) then
// records (entity_id u64, modality u8, dim little-endian f32). Byte-exact
// round trip.
std::string serialize_embedding_file(const EmbeddingBlock& block);
EmbeddingBlock parse_embedding_file(const std::string& bytes);
void write_embedding_file(const std::string& path, const EmbeddingBlock& block);
EmbeddingBlock read_embedding_file(const std::string& path);

// Without-replacement entity batches covering a split exactly once per epoch.
// A trailing remainder smaller than 2 entities is merged into the last batch.
class BatchSampler {
   public:
    BatchSampler(std::vector<std::uint64_t> entities, std::size_t entities_per_batch);

    // Shuffled batch plan for one epoch; deterministic in the rng state.
    std::vector<std::vector<std::uint64_t>> epoch_plan(Rng& rng) const;

    std::size_t batches_per_epoch() const;

   private:
    std::vector<std::uint64_t> entities_;
    std::size_t per_batch_;
};

// Gathers one batch worth of rows and builds the partition.
EntityBatch sample_batch(const EmbeddingBlock& x, const EmbeddingBlock& y,
                         std::span<const std::uint64_t> entities);

}  // namespace sma
