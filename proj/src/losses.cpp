#include "sma/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace sma {

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::Flqmia: return "flqmia";
        case LossKind::Flvmia: return "flvmia";
        case LossKind::InfoNce: return "infonce";
        case LossKind::Siglip: return "siglip";
    }
    return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "flqmia") return LossKind::Flqmia;
    if (name == "flvmia") return LossKind::Flvmia;
    if (name == "infonce") return LossKind::InfoNce;
    if (name == "siglip") return LossKind::Siglip;
    throw ShapeError("unknown loss kind: " + name);
}

namespace {

using detail::Mode;

// Double-precision working copy of a batch. The row partition references the
// source EntityBatch, which must outlive the copy.
struct DBatch {
    std::size_t nx = 0, ny = 0, dim = 0;
    std::vector<double> x, y;  // row-major
    const std::vector<std::vector<std::size_t>>* x_rows = nullptr;
    const std::vector<std::vector<std::size_t>>* y_rows = nullptr;
    std::size_t n_entities = 0;

    double xv(std::size_t r, std::size_t d) const { return x[r * dim + d]; }
    double yv(std::size_t r, std::size_t d) const { return y[r * dim + d]; }
};

DBatch make_dbatch(const EntityBatch& b) {
    if (b.x.matrix.cols() != b.y.matrix.cols()) {
        throw ShapeError("loss: projected dims differ between modalities");
    }
    b.x.matrix.require_finite("loss input X");
    b.y.matrix.require_finite("loss input Y");
    for (std::size_t e = 0; e < b.num_entities(); ++e) {
        if (b.x_rows[e].empty() || b.y_rows[e].empty()) {
            throw ShapeError("loss: empty positive set for entity index " + std::to_string(e));
        }
    }
    DBatch db;
    db.nx = b.x.matrix.rows();
    db.ny = b.y.matrix.rows();
    db.dim = b.x.matrix.cols();
    db.x = b.x.matrix.to_double();
    db.y = b.y.matrix.to_double();
    db.x_rows = &b.x_rows;
    db.y_rows = &b.y_rows;
    db.n_entities = b.num_entities();
    return db;
}

void require_normalized_rows(const DBatch& db) {
    auto check = [&](const std::vector<double>& m, std::size_t n, const char* side) {
        for (std::size_t r = 0; r < n; ++r) {
            double sq = 0.0;
            for (std::size_t d = 0; d < db.dim; ++d) {
                sq += m[r * db.dim + d] * m[r * db.dim + d];
            }
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-2) {
                throw NumericError(std::string("loss: ") + side + " row " + std::to_string(r) +
                                   " is not L2-normalized");
            }
        }
    };
    check(db.x, db.nx, "X");
    check(db.y, db.ny, "Y");
}

struct ScaleInfo {
    double scale = 1.0;
    double dscale_dls = 0.0;  // zero when the clamp is active
};

ScaleInfo effective_scale(double log_scale) {
    const double e = std::exp(log_scale);
    ScaleInfo s;
    s.scale = std::clamp(e, 1.0, 100.0);
    s.dscale_dls = (e > 1.0 && e < 100.0) ? e : 0.0;
    return s;
}

// Scaled logit matrices. zxx/zyy are filled only when `intra` is set.
struct Kernels {
    ScaleInfo si;
    std::vector<double> zxy, zxx, zyy;
};

void fill_gram(const std::vector<double>& a, std::size_t na, const std::vector<double>& b,
               std::size_t nb, std::size_t dim, double scale, std::vector<double>& out) {
    out.assign(na * nb, 0.0);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < dim; ++d) acc += a[i * dim + d] * b[j * dim + d];
            out[i * nb + j] = scale * acc;
        }
    }
}

Kernels build_kernels(const DBatch& db, double log_scale, bool intra) {
    Kernels k;
    k.si = effective_scale(log_scale);
    fill_gram(db.x, db.nx, db.y, db.ny, db.dim, k.si.scale, k.zxy);
    if (intra) {
        fill_gram(db.x, db.nx, db.x, db.nx, db.dim, k.si.scale, k.zxx);
        fill_gram(db.y, db.ny, db.y, db.ny, db.dim, k.si.scale, k.zyy);
    }
    return k;
}

// Descending-sorted accumulation: deterministic and exactly invariant to
// permutations of the summands.
double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<double>());
    double acc = 0.0;
    for (double t : v) acc += t;
    return acc;
}

struct LseResult {
    double value = 0.0;
    std::vector<double> weights;  // softmax over the inputs
};

LseResult lse_grad(const std::vector<double>& v, double tau, bool with_grad) {
    std::vector<double> scaled(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) scaled[i] = v[i] / tau;
    std::vector<double> sorted = scaled;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const double m = sorted.front();
    double acc = 0.0;
    for (double s : sorted) acc += std::exp(s - m);
    LseResult r;
    r.value = tau * (m + std::log(acc));
    if (with_grad) {
        r.weights.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) r.weights[i] = std::exp(scaled[i] - m) / acc;
    }
    return r;
}

struct SminResult {
    double value = 0.0;
    double wa = 0.0, wb = 0.0;  // d value / d a, d value / d b
};

SminResult smin_pair(double a, double b, double tau) {
    const double m = std::min(a, b);
    const double ea = std::exp(-(a - m) / tau);
    const double eb = std::exp(-(b - m) / tau);
    SminResult r;
    r.value = m - tau * std::log(ea + eb);
    r.wa = ea / (ea + eb);
    r.wb = eb / (ea + eb);
    return r;
}

double hard_max(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

// dL/dZ accumulators, row-major, same shapes as the kernels.
struct KernelGrads {
    std::vector<double> wxy, wxx, wyy;
};

std::vector<std::vector<std::size_t>> complement_rows(
    const std::vector<std::vector<std::size_t>>& rows, std::size_t total) {
    std::vector<std::vector<std::size_t>> out(rows.size());
    std::vector<std::size_t> owner(total);
    for (std::size_t e = 0; e < rows.size(); ++e) {
        for (std::size_t r : rows[e]) owner[r] = e;
    }
    for (std::size_t e = 0; e < rows.size(); ++e) {
        out[e].reserve(total - rows[e].size());
        for (std::size_t r = 0; r < total; ++r) {
            if (owner[r] != e) out[e].push_back(r);
        }
    }
    return out;
}

void require_negatives(const DBatch& db, const char* loss) {
    if (db.n_entities < 2) {
        throw ShapeError(std::string(loss) + ": needs at least 2 entities, have " +
                         std::to_string(db.n_entities));
    }
}

// ---------------------------------------------------------------------------
// FLQMIA. Per anchor instance j of entity e (direction X->Y):
//   positive coverage: smooth max of z_jk over entity e's Y rows,
//   negative coverage: smooth max of z_jk over the whole Y block,
//   loss term: negative - positive.
// The inclusive negative reproduces the NT-Xent denominator when sets are
// singletons. Symmetric direction uses Y anchors against X rows. The total is
// divided by the anchor count nx + ny.
// ---------------------------------------------------------------------------
double flqmia_eval(const DBatch& db, const Kernels& K, double tau, Mode mode,
                   KernelGrads* grads) {
    require_negatives(db, "flqmia");
    const double inv_norm = 1.0 / static_cast<double>(db.nx + db.ny);
    std::vector<double> direction_totals;

    auto run_direction = [&](bool x_to_y) {
        const auto& anchor_rows = x_to_y ? *db.x_rows : *db.y_rows;
        const auto& pos_rows = x_to_y ? *db.y_rows : *db.x_rows;
        const std::size_t n_opposite = x_to_y ? db.ny : db.nx;
        auto z_at = [&](std::size_t anchor, std::size_t other) {
            return x_to_y ? K.zxy[anchor * db.ny + other] : K.zxy[other * db.ny + anchor];
        };
        auto w_accum = [&](std::size_t anchor, std::size_t other, double w) {
            if (x_to_y) {
                grads->wxy[anchor * db.ny + other] += w;
            } else {
                grads->wxy[other * db.ny + anchor] += w;
            }
        };

        std::vector<double> entity_totals;
        for (std::size_t e = 0; e < db.n_entities; ++e) {
            std::vector<double> anchor_terms;
            for (std::size_t j : anchor_rows[e]) {
                std::vector<double> pos_vals;
                pos_vals.reserve(pos_rows[e].size());
                for (std::size_t k : pos_rows[e]) pos_vals.push_back(z_at(j, k));
                std::vector<double> neg_vals(n_opposite);
                for (std::size_t k = 0; k < n_opposite; ++k) neg_vals[k] = z_at(j, k);

                if (mode == Mode::Hard) {
                    anchor_terms.push_back(hard_max(neg_vals) - hard_max(pos_vals));
                    continue;
                }
                const LseResult pos = lse_grad(pos_vals, tau, grads != nullptr);
                const LseResult neg = lse_grad(neg_vals, tau, grads != nullptr);
                anchor_terms.push_back(neg.value - pos.value);
                if (grads != nullptr) {
                    for (std::size_t k = 0; k < n_opposite; ++k) {
                        w_accum(j, k, neg.weights[k] * inv_norm);
                    }
                    for (std::size_t p = 0; p < pos_rows[e].size(); ++p) {
                        w_accum(j, pos_rows[e][p], -pos.weights[p] * inv_norm);
                    }
                }
            }
            entity_totals.push_back(sorted_sum(std::move(anchor_terms)));
        }
        double total = 0.0;
        for (double t : entity_totals) total += t;
        direction_totals.push_back(total);
    };

    run_direction(true);
    run_direction(false);
    return (direction_totals[0] + direction_totals[1]) * inv_norm;
}

// ---------------------------------------------------------------------------
// FLVMIA. Per anchor j of entity e (direction X->Y):
//   positive: smooth min of (within-modality coverage of entity e's X rows,
//             cross-modality coverage of entity e's Y rows),
//   negative: same structure over the other entities' rows,
//   loss term: negative - positive.
// Needs all three kernels (x-x, y-y, x-y).
// ---------------------------------------------------------------------------
double flvmia_eval(const DBatch& db, const Kernels& K, double tau, Mode mode,
                   KernelGrads* grads) {
    require_negatives(db, "flvmia");
    const double inv_norm = 1.0 / static_cast<double>(db.nx + db.ny);
    const auto others_x = complement_rows(*db.x_rows, db.nx);
    const auto others_y = complement_rows(*db.y_rows, db.ny);
    std::vector<double> direction_totals;

    auto run_direction = [&](bool x_to_y) {
        const auto& anchor_rows = x_to_y ? *db.x_rows : *db.y_rows;
        const auto& same_rows = x_to_y ? *db.x_rows : *db.y_rows;
        const auto& cross_rows = x_to_y ? *db.y_rows : *db.x_rows;
        const auto& same_others = x_to_y ? others_x : others_y;
        const auto& cross_others = x_to_y ? others_y : others_x;
        const std::vector<double>& z_same = x_to_y ? K.zxx : K.zyy;
        const std::size_t n_same = x_to_y ? db.nx : db.ny;
        std::vector<double>* w_same = grads ? (x_to_y ? &grads->wxx : &grads->wyy) : nullptr;

        auto z_cross = [&](std::size_t anchor, std::size_t other) {
            return x_to_y ? K.zxy[anchor * db.ny + other] : K.zxy[other * db.ny + anchor];
        };
        auto w_cross_accum = [&](std::size_t anchor, std::size_t other, double w) {
            if (x_to_y) {
                grads->wxy[anchor * db.ny + other] += w;
            } else {
                grads->wxy[other * db.ny + anchor] += w;
            }
        };

        std::vector<double> entity_totals;
        for (std::size_t e = 0; e < db.n_entities; ++e) {
            std::vector<double> anchor_terms;
            for (std::size_t j : anchor_rows[e]) {
                auto coverage = [&](const std::vector<std::size_t>& same_set,
                                    const std::vector<std::size_t>& cross_set, double sign) {
                    std::vector<double> same_vals, cross_vals;
                    same_vals.reserve(same_set.size());
                    cross_vals.reserve(cross_set.size());
                    for (std::size_t k : same_set) same_vals.push_back(z_same[j * n_same + k]);
                    for (std::size_t k : cross_set) cross_vals.push_back(z_cross(j, k));
                    if (mode == Mode::Hard) {
                        return std::min(hard_max(same_vals), hard_max(cross_vals));
                    }
                    const LseResult la = lse_grad(same_vals, tau, grads != nullptr);
                    const LseResult lq = lse_grad(cross_vals, tau, grads != nullptr);
                    const SminResult sm = smin_pair(la.value, lq.value, tau);
                    if (grads != nullptr) {
                        for (std::size_t p = 0; p < same_set.size(); ++p) {
                            (*w_same)[j * n_same + same_set[p]] +=
                                sign * sm.wa * la.weights[p] * inv_norm;
                        }
                        for (std::size_t p = 0; p < cross_set.size(); ++p) {
                            w_cross_accum(j, cross_set[p],
                                          sign * sm.wb * lq.weights[p] * inv_norm);
                        }
                    }
                    return sm.value;
                };
                const double pos = coverage(same_rows[e], cross_rows[e], -1.0);
                const double neg = coverage(same_others[e], cross_others[e], +1.0);
                anchor_terms.push_back(neg - pos);
            }
            entity_totals.push_back(sorted_sum(std::move(anchor_terms)));
        }
        double total = 0.0;
        for (double t : entity_totals) total += t;
        direction_totals.push_back(total);
    };

    run_direction(true);
    run_direction(false);
    return (direction_totals[0] + direction_totals[1]) * inv_norm;
}

// ---------------------------------------------------------------------------
// InfoNCE: symmetric cross-entropy over scaled logits, every matched
// (x-view, y-view) pair of an entity a positive, averaged per direction.
// ---------------------------------------------------------------------------
double infonce_eval(const DBatch& db, const Kernels& K, double temperature,
                    KernelGrads* grads) {
    require_negatives(db, "infonce");
    const double t_inv = 1.0 / temperature;

    std::size_t pair_count = 0;
    for (std::size_t e = 0; e < db.n_entities; ++e) {
        pair_count += (*db.x_rows)[e].size() * (*db.y_rows)[e].size();
    }
    std::vector<double> direction_means;

    auto run_direction = [&](bool x_to_y) {
        const auto& anchor_rows = x_to_y ? *db.x_rows : *db.y_rows;
        const auto& pos_rows = x_to_y ? *db.y_rows : *db.x_rows;
        const std::size_t n_opposite = x_to_y ? db.ny : db.nx;
        const double w_scale = 0.5 / static_cast<double>(pair_count);
        auto z_at = [&](std::size_t anchor, std::size_t other) {
            return x_to_y ? K.zxy[anchor * db.ny + other] : K.zxy[other * db.ny + anchor];
        };
        auto w_accum = [&](std::size_t anchor, std::size_t other, double w) {
            if (x_to_y) {
                grads->wxy[anchor * db.ny + other] += w;
            } else {
                grads->wxy[other * db.ny + anchor] += w;
            }
        };

        std::vector<double> entity_totals;
        for (std::size_t e = 0; e < db.n_entities; ++e) {
            std::vector<double> anchor_terms;
            for (std::size_t j : anchor_rows[e]) {
                std::vector<double> logits(n_opposite);
                for (std::size_t k = 0; k < n_opposite; ++k) logits[k] = z_at(j, k);
                const LseResult lse = lse_grad(logits, temperature, grads != nullptr);
                std::vector<double> pair_terms;
                pair_terms.reserve(pos_rows[e].size());
                for (std::size_t k : pos_rows[e]) {
                    pair_terms.push_back((lse.value - z_at(j, k)) * t_inv);
                }
                anchor_terms.push_back(sorted_sum(std::move(pair_terms)));
                if (grads != nullptr) {
                    const double n_pos = static_cast<double>(pos_rows[e].size());
                    for (std::size_t k = 0; k < n_opposite; ++k) {
                        w_accum(j, k, n_pos * lse.weights[k] * t_inv * w_scale);
                    }
                    for (std::size_t k : pos_rows[e]) {
                        w_accum(j, k, -t_inv * w_scale);
                    }
                }
            }
            entity_totals.push_back(sorted_sum(std::move(anchor_terms)));
        }
        double total = 0.0;
        for (double t : entity_totals) total += t;
        direction_means.push_back(total / static_cast<double>(pair_count));
    };

    run_direction(true);
    run_direction(false);
    return 0.5 * (direction_means[0] + direction_means[1]);
}

double stable_softplus(double u) {
    if (u > 0.0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// SigLIP: mean over every (x-view, y-view) pair of
// softplus(-z * (scaled similarity / temperature + bias)), z = +/-1.
// ---------------------------------------------------------------------------
double siglip_eval(const DBatch& db, const Kernels& K, double temperature, double bias,
                   KernelGrads* grads, double* grad_bias) {
    const double t_inv = 1.0 / temperature;
    const double count = static_cast<double>(db.nx * db.ny);

    std::vector<std::size_t> x_owner(db.nx), y_owner(db.ny);
    for (std::size_t e = 0; e < db.n_entities; ++e) {
        for (std::size_t r : (*db.x_rows)[e]) x_owner[r] = e;
        for (std::size_t r : (*db.y_rows)[e]) y_owner[r] = e;
    }

    std::vector<double> terms;
    terms.reserve(db.nx * db.ny);
    double bias_acc = 0.0;
    for (std::size_t j = 0; j < db.nx; ++j) {
        for (std::size_t k = 0; k < db.ny; ++k) {
            const double label = (x_owner[j] == y_owner[k]) ? 1.0 : -1.0;
            const double u = -label * (K.zxy[j * db.ny + k] * t_inv + bias);
            terms.push_back(stable_softplus(u));
            if (grads != nullptr) {
                const double du = sigmoid(u) * (-label);
                grads->wxy[j * db.ny + k] += du * t_inv / count;
                bias_acc += du / count;
            }
        }
    }
    if (grad_bias != nullptr) *grad_bias = bias_acc;
    return sorted_sum(std::move(terms)) / count;
}

// Maps dL/d(logits) back to embedding and scale gradients:
// z = scale * <a_i, b_j>  =>  dL/da = scale * W b,  dL/d log_scale via clamp.
LossReport finish_report(const DBatch& db, const Kernels& K, const KernelGrads& g,
                         double value) {
    LossReport rep;
    rep.value = value;
    std::vector<double> gx(db.nx * db.dim, 0.0), gy(db.ny * db.dim, 0.0);
    double scale_acc = 0.0;  // sum of W .* raw cosine entries

    const double scale = K.si.scale;
    if (!g.wxy.empty()) {
        for (std::size_t j = 0; j < db.nx; ++j) {
            for (std::size_t k = 0; k < db.ny; ++k) {
                const double w = g.wxy[j * db.ny + k];
                if (w == 0.0) continue;
                scale_acc += w * K.zxy[j * db.ny + k] / scale;
                for (std::size_t d = 0; d < db.dim; ++d) {
                    gx[j * db.dim + d] += scale * w * db.yv(k, d);
                    gy[k * db.dim + d] += scale * w * db.xv(j, d);
                }
            }
        }
    }
    auto intra = [&](const std::vector<double>& w_mat, const std::vector<double>& z_mat,
                     const std::vector<double>& emb, std::size_t n, std::vector<double>& out) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
                const double w = w_mat[j * n + k];
                if (w == 0.0) continue;
                scale_acc += w * z_mat[j * n + k] / scale;
                for (std::size_t d = 0; d < db.dim; ++d) {
                    out[j * db.dim + d] += scale * w * emb[k * db.dim + d];
                    out[k * db.dim + d] += scale * w * emb[j * db.dim + d];
                }
            }
        }
    };
    if (!g.wxx.empty()) intra(g.wxx, K.zxx, db.x, db.nx, gx);
    if (!g.wyy.empty()) intra(g.wyy, K.zyy, db.y, db.ny, gy);

    rep.grad_log_scale = scale_acc * K.si.dscale_dls;
    rep.grad_x = Matrix(db.nx, db.dim);
    rep.grad_y = Matrix(db.ny, db.dim);
    for (std::size_t i = 0; i < gx.size(); ++i) rep.grad_x.data()[i] = static_cast<float>(gx[i]);
    for (std::size_t i = 0; i < gy.size(); ++i) rep.grad_y.data()[i] = static_cast<float>(gy[i]);
    rep.grad_x.require_finite("loss grad_x");
    rep.grad_y.require_finite("loss grad_y");
    if (!std::isfinite(rep.value) || !std::isfinite(rep.grad_log_scale) ||
        !std::isfinite(rep.grad_bias)) {
        throw NumericError("loss: non-finite value or scalar gradient");
    }
    return rep;
}

void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw ShapeError(std::string(name) + " must be positive");
}

}  // namespace

LossReport loss_flqmia(const EntityBatch& b, double tau, double log_scale) {
    require_positive(tau, "tau");
    DBatch db = make_dbatch(b);
    require_normalized_rows(db);
    Kernels K = build_kernels(db, log_scale, /*intra=*/false);
    KernelGrads g;
    g.wxy.assign(db.nx * db.ny, 0.0);
    const double value = flqmia_eval(db, K, tau, Mode::Smooth, &g);
    return finish_report(db, K, g, value);
}

LossReport loss_flvmia(const EntityBatch& b, double tau, double log_scale) {
    require_positive(tau, "tau");
    DBatch db = make_dbatch(b);
    require_normalized_rows(db);
    Kernels K = build_kernels(db, log_scale, /*intra=*/true);
    KernelGrads g;
    g.wxy.assign(db.nx * db.ny, 0.0);
    g.wxx.assign(db.nx * db.nx, 0.0);
    g.wyy.assign(db.ny * db.ny, 0.0);
    const double value = flvmia_eval(db, K, tau, Mode::Smooth, &g);
    return finish_report(db, K, g, value);
}

LossReport loss_infonce(const EntityBatch& b, double temperature, double log_scale) {
    require_positive(temperature, "temperature");
    DBatch db = make_dbatch(b);
    require_normalized_rows(db);
    Kernels K = build_kernels(db, log_scale, /*intra=*/false);
    KernelGrads g;
    g.wxy.assign(db.nx * db.ny, 0.0);
    const double value = infonce_eval(db, K, temperature, &g);
    return finish_report(db, K, g, value);
}

LossReport loss_siglip(const EntityBatch& b, double temperature, double log_scale,
                       double bias) {
    require_positive(temperature, "temperature");
    DBatch db = make_dbatch(b);
    require_normalized_rows(db);
    Kernels K = build_kernels(db, log_scale, /*intra=*/false);
    KernelGrads g;
    g.wxy.assign(db.nx * db.ny, 0.0);
    double grad_bias = 0.0;
    const double value = siglip_eval(db, K, temperature, bias, &g, &grad_bias);
    LossReport rep = finish_report(db, K, g, value);
    rep.grad_bias = grad_bias;
    return rep;
}

LossReport compute_loss(LossKind kind, const EntityBatch& b, const LossParams& p) {
    switch (kind) {
        case LossKind::Flqmia: return loss_flqmia(b, p.tau, p.log_scale);
        case LossKind::Flvmia: return loss_flvmia(b, p.tau, p.log_scale);
        case LossKind::InfoNce: return loss_infonce(b, p.temperature, p.log_scale);
        case LossKind::Siglip: return loss_siglip(b, p.temperature, p.log_scale, p.bias);
    }
    throw ShapeError("compute_loss: bad kind");
}

namespace detail {

double flqmia_value(const EntityBatch& b, double tau, double log_scale, Mode mode) {
    DBatch db = make_dbatch(b);
    Kernels K = build_kernels(db, log_scale, false);
    return flqmia_eval(db, K, tau, mode, nullptr);
}

double flvmia_value(const EntityBatch& b, double tau, double log_scale, Mode mode) {
    DBatch db = make_dbatch(b);
    Kernels K = build_kernels(db, log_scale, true);
    return flvmia_eval(db, K, tau, mode, nullptr);
}

}  // namespace detail

namespace {

double value_at(LossKind kind, const DBatch& db, const LossParams& p) {
    switch (kind) {
        case LossKind::Flqmia: {
            Kernels K = build_kernels(db, p.log_scale, false);
            return flqmia_eval(db, K, p.tau, Mode::Smooth, nullptr);
        }
        case LossKind::Flvmia: {
            Kernels K = build_kernels(db, p.log_scale, true);
            return flvmia_eval(db, K, p.tau, Mode::Smooth, nullptr);
        }
        case LossKind::InfoNce: {
            Kernels K = build_kernels(db, p.log_scale, false);
            return infonce_eval(db, K, p.temperature, nullptr);
        }
        case LossKind::Siglip: {
            Kernels K = build_kernels(db, p.log_scale, false);
            return siglip_eval(db, K, p.temperature, p.bias, nullptr, nullptr);
        }
    }
    throw ShapeError("value_at: bad kind");
}

}  // namespace

GradCheckReport grad_check(LossKind kind, const EntityBatch& b, const LossParams& p,
                           double step) {
    const LossReport rep = compute_loss(kind, b, p);
    DBatch db = make_dbatch(b);
    GradCheckReport out;

    auto record = [&](double fd, double analytic, const std::string& coord) {
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
        const double rel = std::abs(fd - analytic) / denom;
        ++out.coords_checked;
        if (rel > out.max_rel_err) {
            out.max_rel_err = rel;
            out.worst_coord = coord;
        }
    };

    auto sweep_block = [&](std::vector<double>& buf, const Matrix& analytic,
                           const char* name) {
        for (std::size_t i = 0; i < buf.size(); ++i) {
            const double saved = buf[i];
            buf[i] = saved + step;
            const double fp = value_at(kind, db, p);
            buf[i] = saved - step;
            const double fm = value_at(kind, db, p);
            buf[i] = saved;
            record((fp - fm) / (2.0 * step), analytic.data()[i],
                   std::string(name) + "[" + std::to_string(i) + "]");
        }
    };
    sweep_block(db.x, rep.grad_x, "x");
    sweep_block(db.y, rep.grad_y, "y");

    {
        LossParams q = p;
        q.log_scale = p.log_scale + step;
        const double fp = value_at(kind, db, q);
        q.log_scale = p.log_scale - step;
        const double fm = value_at(kind, db, q);
        record((fp - fm) / (2.0 * step), rep.grad_log_scale, "log_scale");
    }
    if (kind == LossKind::Siglip) {
        LossParams q = p;
        q.bias = p.bias + step;
        const double fp = value_at(kind, db, q);
        q.bias = p.bias - step;
        const double fm = value_at(kind, db, q);
        record((fp - fm) / (2.0 * step), rep.grad_bias, "bias");
    }
    return out;
}

}  // namespace sma
