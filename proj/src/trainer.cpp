#include "sma/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

namespace sma {

void TrainConfig::validate() const {
    if (!(tau > 0.0)) throw ShapeError("TrainConfig: tau must be positive");
    if (!(temperature > 0.0)) throw ShapeError("TrainConfig: temperature must be positive");
    if (lr < 0.0) throw ShapeError("TrainConfig: lr must be >= 0");
    if (entities_per_batch < 2) throw ShapeError("TrainConfig: entities_per_batch must be >= 2");
    if (out_dim == 0) throw ShapeError("TrainConfig: out_dim must be positive");
    if (!(beta1 >= 0.0 && beta1 <= 1.0 && beta2 >= 0.0 && beta2 <= 1.0)) {
        throw ShapeError("TrainConfig: betas must lie in [0, 1]");
    }
}

namespace {

// Bit-pattern equality, stricter than ==: the determinism contract is
// bitwise, so -0.0 vs 0.0 or differing NaN payloads must not compare equal.
bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

bool metrics_equal_ignoring_walltime(const MetricsRecord& a, const MetricsRecord& b) {
    return a.epoch == b.epoch && bits_equal(a.train_loss, b.train_loss) &&
           bits_equal(a.val_loss, b.val_loss) && bits_equal(a.recall1_i2t, b.recall1_i2t) &&
           bits_equal(a.recall5_i2t, b.recall5_i2t) && bits_equal(a.recall1_t2i, b.recall1_t2i) &&
           bits_equal(a.recall5_t2i, b.recall5_t2i) &&
           bits_equal(a.centroid_gap, b.centroid_gap) &&
           bits_equal(a.mean_pair_gap, b.mean_pair_gap);
}

bool history_equal_ignoring_walltime(const std::vector<MetricsRecord>& a,
                                     const std::vector<MetricsRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!metrics_equal_ignoring_walltime(a[i], b[i])) return false;
    }
    return true;
}

namespace {

struct TrainState {
    AlignHead head_x, head_y;
    Matrix log_scale{1, 1};  // scalars live in 1x1 matrices for the optimizer
    Matrix bias{1, 1};

    std::vector<Matrix*> params(bool with_bias) {
        std::vector<Matrix*> out;
        for (Matrix* m : head_x.param_list()) out.push_back(m);
        for (Matrix* m : head_y.param_list()) out.push_back(m);
        out.push_back(&log_scale);
        if (with_bias) out.push_back(&bias);
        return out;
    }
};

LossParams loss_params(const TrainConfig& cfg, const TrainState& st) {
    LossParams p;
    p.tau = cfg.tau;
    p.temperature = cfg.temperature;
    p.log_scale = st.log_scale.at(0, 0);
    p.bias = st.bias.at(0, 0);
    return p;
}

double batch_loss_value(const TrainConfig& cfg, const TrainState& st, const EmbeddingBlock& rx,
                        const EmbeddingBlock& ry) {
    const EmbeddingBlock px = head_forward(st.head_x, rx);
    const EmbeddingBlock py = head_forward(st.head_y, ry);
    const EntityBatch b = build_entity_batch(px, py);
    return compute_loss(cfg.loss, b, loss_params(cfg, st)).value;
}

Checkpoint snapshot(const TrainConfig& cfg, const TrainState& st) {
    Checkpoint ck;
    ck.head_x = st.head_x;
    ck.head_y = st.head_y;
    ck.log_scale = st.log_scale.at(0, 0);
    ck.bias = st.bias.at(0, 0);
    ck.loss = cfg.loss;
    return ck;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data, const Checkpoint* warm_start,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.train.size() < 2 || data.val.size() < 2) {
        throw ShapeError("train: need >= 2 entities in train and val splits");
    }
    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t hidden = cfg.hidden_dim == 0 ? cfg.out_dim : cfg.hidden_dim;

    Rng root(cfg.seed);
    Rng rng_init_x = root.fork(10);
    Rng rng_init_y = root.fork(11);
    Rng rng_epochs = root.fork(20);

    TrainState st;
    if (warm_start != nullptr) {
        st.head_x = warm_start->head_x;
        st.head_y = warm_start->head_y;
        st.log_scale.at(0, 0) = static_cast<float>(warm_start->log_scale);
        st.bias.at(0, 0) = static_cast<float>(warm_start->bias);
        if (st.head_x.in_dim != data.x.matrix.cols() ||
            st.head_y.in_dim != data.y.matrix.cols()) {
            throw ShapeError("train: warm-start head dims do not match the data");
        }
    } else {
        const std::size_t in_x = data.x.matrix.cols();
        const std::size_t in_y = data.y.matrix.cols();
        st.head_x = cfg.head == HeadKind::Glu ? AlignHead::glu(in_x, hidden, cfg.out_dim, rng_init_x)
                                              : AlignHead::linear(in_x, cfg.out_dim, rng_init_x);
        st.head_y = cfg.head == HeadKind::Glu ? AlignHead::glu(in_y, hidden, cfg.out_dim, rng_init_y)
                                              : AlignHead::linear(in_y, cfg.out_dim, rng_init_y);
        st.log_scale.at(0, 0) = static_cast<float>(cfg.init_log_scale);
        st.bias.at(0, 0) = static_cast<float>(cfg.init_bias);
    }

    const bool with_bias = cfg.loss == LossKind::Siglip;
    OptimConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.beta1 = cfg.beta1;
    ocfg.beta2 = cfg.beta2;
    ocfg.weight_decay = cfg.weight_decay;
    LionOptimizer lion(ocfg);
    SgdOptimizer sgd(ocfg);

    // Raw split blocks; projections are recomputed as parameters move.
    const EmbeddingBlock val_x = gather_entities(data.x, data.val);
    const EmbeddingBlock val_y = gather_entities(data.y, data.val);
    BatchSampler sampler(data.train, cfg.entities_per_batch);

    // Reported train loss uses a fixed canonical batch plan, so it depends
    // only on the parameters, not on the epoch's shuffle.
    std::vector<std::pair<EmbeddingBlock, EmbeddingBlock>> canonical_batches;
    {
        Rng plan_rng = rng_epochs.fork(0);
        for (const auto& ids : sampler.epoch_plan(plan_rng)) {
            canonical_batches.emplace_back(gather_entities(data.x, ids),
                                           gather_entities(data.y, ids));
        }
    }
    auto canonical_train_loss = [&] {
        double loss_sum = 0.0;
        for (const auto& [rx, ry] : canonical_batches) {
            loss_sum += batch_loss_value(cfg, st, rx, ry);
        }
        return loss_sum / static_cast<double>(canonical_batches.size());
    };

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_improvement = 0;

    // recall@5 clamps to the gallery when the validation split is tiny.
    const std::size_t k5 = std::min<std::size_t>(5, std::min(val_x.size(), val_y.size()));
    const std::vector<std::size_t> ks = {1, k5};
    auto epoch_metrics = [&](std::size_t epoch, double train_loss) {
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        const EmbeddingBlock pvx = head_forward(st.head_x, val_x);
        const EmbeddingBlock pvy = head_forward(st.head_y, val_y);
        const EntityBatch vb = build_entity_batch(pvx, pvy);
        rec.val_loss = compute_loss(cfg.loss, vb, loss_params(cfg, st)).value;
        const RecallTable rt = retrieval_on_projected(pvx, pvy, ks);
        rec.recall1_i2t = rt.i2t[0];
        rec.recall5_i2t = rt.i2t[1];
        rec.recall1_t2i = rt.t2i[0];
        rec.recall5_t2i = rt.t2i[1];
        const GapMetrics gm = gap_on_projected(pvx, pvy);
        rec.centroid_gap = gm.centroid_gap;
        rec.mean_pair_gap = gm.mean_pair_gap;
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return rec;
    };

    auto record_epoch = [&](MetricsRecord rec) {
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            result.best = snapshot(cfg, st);
            result.best_epoch = rec.epoch;
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
        }
    };

    try {
        // Epoch 0: pre-training baseline.
        record_epoch(epoch_metrics(0, canonical_train_loss()));

        for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            Rng plan_rng = rng_epochs.fork(epoch);
            for (const auto& ids : sampler.epoch_plan(plan_rng)) {
                const EmbeddingBlock rx = gather_entities(data.x, ids);
                const EmbeddingBlock ry = gather_entities(data.y, ids);
                const EmbeddingBlock px = head_forward(st.head_x, rx);
                const EmbeddingBlock py = head_forward(st.head_y, ry);
                const EntityBatch b = build_entity_batch(px, py);
                const LossReport rep = compute_loss(cfg.loss, b, loss_params(cfg, st));
                if (!std::isfinite(rep.value)) {
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch));
                }

                const HeadGrads gx = head_backward(st.head_x, rx, rep.grad_x);
                const HeadGrads gy = head_backward(st.head_y, ry, rep.grad_y);
                Matrix g_scale(1, 1);
                g_scale.at(0, 0) = static_cast<float>(rep.grad_log_scale);
                Matrix g_bias(1, 1);
                g_bias.at(0, 0) = static_cast<float>(rep.grad_bias);

                std::vector<const Matrix*> grads;
                for (const Matrix& m : gx.params) grads.push_back(&m);
                for (const Matrix& m : gy.params) grads.push_back(&m);
                grads.push_back(&g_scale);
                if (with_bias) grads.push_back(&g_bias);

                if (cfg.optimizer == OptimizerKind::Lion) {
                    lion.step(st.params(with_bias), grads);
                } else {
                    sgd.step(st.params(with_bias), grads);
                }
            }
            record_epoch(epoch_metrics(epoch, canonical_train_loss()));
            if (epochs_since_improvement > cfg.patience) {
                log_msg(LogLevel::Info, "early stop at epoch " + std::to_string(epoch) +
                                            " (best epoch " + std::to_string(result.best_epoch) +
                                            ")");
                break;
            }
        }
    } catch (const NumericError& e) {
        result.diverged = true;
        result.diagnostic = e.what();
        log_msg(LogLevel::Error, std::string("training aborted: ") + e.what());
    }
    return result;
}

}  // namespace sma
