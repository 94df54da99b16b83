#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sma/aligner.hpp"
#include "sma/data.hpp"
#include "sma/losses.hpp"
#include "sma/optim.hpp"

namespace sma {

enum class OptimizerKind : std::uint8_t { Lion = 0, Sgd = 1 };

struct TrainConfig {
    LossKind loss = LossKind::Flqmia;
    HeadKind head = HeadKind::Glu;
    double tau = 1.0;
    double temperature = 1.0;
    double lr = 1e-5;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::size_t entities_per_batch = 16;
    std::uint64_t seed = 1;
    std::size_t out_dim = 32;
    std::size_t hidden_dim = 0;  // 0 means out_dim
    OptimizerKind optimizer = OptimizerKind::Lion;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double init_log_scale = 2.6592600369327783;  // log(1/0.07)
    double init_bias = 0.0;

    void validate() const;
};

struct MetricsRecord {
    std::size_t epoch = 0;  // 0 is the pre-training baseline
    double train_loss = 0.0;
    double val_loss = 0.0;
    double recall1_i2t = 0.0, recall5_i2t = 0.0;
    double recall1_t2i = 0.0, recall5_t2i = 0.0;
    double centroid_gap = 0.0;
    double mean_pair_gap = 0.0;
    double wall_time = 0.0;  // seconds; excluded from determinism comparisons
};

// Bitwise equality of every field except wall_time.
bool metrics_equal_ignoring_walltime(const MetricsRecord& a, const MetricsRecord& b);
bool history_equal_ignoring_walltime(const std::vector<MetricsRecord>& a,
                                     const std::vector<MetricsRecord>& b);

struct Checkpoint {
    AlignHead head_x, head_y;
    double log_scale = 0.0;
    double bias = 0.0;
    LossKind loss = LossKind::Flqmia;
};

struct TrainResult {
    Checkpoint best;
    std::size_t best_epoch = 0;
    std::vector<MetricsRecord> history;
    bool diverged = false;
    std::string diagnostic;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

// Full training loop: per-entity batches without replacement, forward through
// both heads, loss, backward, optimizer step. Early-stops after `patience`
// epochs without validation-loss improvement and returns the best-validation
// checkpoint. Deterministic given (config, data, warm_start).
TrainResult train(const TrainConfig& cfg, const Dataset& data,
                  const Checkpoint* warm_start = nullptr,
                  const EpochCallback& on_epoch = nullptr);

struct RecallTable {
    std::vector<std::size_t> ks;
    std::vector<double> i2t, t2i;  // recall at ks[i], both directions
};

// Ranks the opposite modality by cosine similarity of projected embeddings; a
// query is a hit at k if any view of its entity is in the top k.
RecallTable eval_retrieval(const AlignHead& hx, const AlignHead& hy,
                           const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y,
                           std::span<const std::size_t> ks);

struct GapMetrics {
    double centroid_gap = 0.0;   // l2 distance between modality centroids
    double mean_pair_gap = 0.0;  // mean l2 distance over matched view pairs
};

GapMetrics eval_modality_gap(const AlignHead& hx, const AlignHead& hy,
                             const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y);

// Class prototypes are means of projected Y views over each class's entities;
// every X view is assigned to the nearest prototype.
double eval_prototype_classification(const AlignHead& hx, const AlignHead& hy,
                                     const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y,
                                     const std::map<std::uint64_t, std::uint64_t>& class_map);

// Same metrics on already-projected blocks (used inside the train loop).
RecallTable retrieval_on_projected(const EmbeddingBlock& px, const EmbeddingBlock& py,
                                   std::span<const std::size_t> ks);
GapMetrics gap_on_projected(const EmbeddingBlock& px, const EmbeddingBlock& py);

}  // namespace sma
