#pragma once

#include <string>
#include <vector>

#include "sma/core.hpp"
#include "sma/sets.hpp"

namespace sma {

enum class LossKind { Flqmia, Flvmia, InfoNce, Siglip };

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

// Learnable scalars shared by the losses. The effective logit scale is
// exp(log_scale) clamped to [1, 100]; bias participates only in SigLIP.
struct LossParams {
    double log_scale = 2.6592600369327783;  // log(1/0.07)
    double bias = 0.0;
    double tau = 1.0;          // smoothing temperature for the SMA losses
    double temperature = 1.0;  // softmax / sigmoid temperature for the baselines
};

struct LossReport {
    double value = 0.0;
    Matrix grad_x;  // w.r.t. the projected X block
    Matrix grad_y;  // w.r.t. the projected Y block
    double grad_log_scale = 0.0;
    double grad_bias = 0.0;  // SigLIP only, else 0
};

// All four losses are reported in minimization form (SMA objectives negated);
// lower is better. Values and gradients are computed in double precision and
// are exactly invariant to entity/view permutations of the batch.
LossReport loss_flqmia(const EntityBatch& b, double tau, double log_scale);
LossReport loss_flvmia(const EntityBatch& b, double tau, double log_scale);
LossReport loss_infonce(const EntityBatch& b, double temperature, double log_scale);
LossReport loss_siglip(const EntityBatch& b, double temperature, double log_scale, double bias);

LossReport compute_loss(LossKind kind, const EntityBatch& b, const LossParams& p);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_coord;
    std::size_t coords_checked = 0;
    bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Central finite differences (64-bit re-evaluation, step on every coordinate
// of both blocks plus log_scale and, for SigLIP, bias) against the analytic
// gradients. Relative error denominators are floored at 1e-3.
GradCheckReport grad_check(LossKind kind, const EntityBatch& b, const LossParams& p,
                           double step = 1e-3);

namespace detail {

enum class Mode { Hard, Smooth };

// Value-only evaluators, shared by grad_check and the hard-mode oracles.
double flqmia_value(const EntityBatch& b, double tau, double log_scale, Mode mode);
double flvmia_value(const EntityBatch& b, double tau, double log_scale, Mode mode);

}  // namespace detail

}  // namespace sma
