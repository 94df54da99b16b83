#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sma/core.hpp"
#include "sma/sets.hpp"

namespace sma {

// Cross-modal cosine-similarity matrix plus a learnable logit scale stored in
// log space. Entries are clamped to [-1, 1] on construction; effective logits
// are s * exp(log_scale) with exp(log_scale) clamped to [1, 100].
struct SimilarityKernel {
    Matrix s;
    double log_scale = 0.0;

    SimilarityKernel() = default;
    SimilarityKernel(Matrix sim, double log_scale_param);

    double scale() const;                                    // clamped exp(log_scale)
    double logit(std::size_t i, std::size_t j) const { return scale() * s.at(i, j); }
    std::size_t rows() const { return s.rows(); }
    std::size_t cols() const { return s.cols(); }
};

// Kernel of scaled dot products between two blocks of L2-normalized rows.
// Throws NumericError if a row norm strays more than 1e-2 from 1.
SimilarityKernel cosine_kernel(const EmbeddingBlock& a, const EmbeddingBlock& b,
                               double log_scale);

enum class SmiMode { Hard, Smooth };

// FLVMI: sum over i in U of min(max_{j in A} s_ij, max_{j in Q} s_ij).
// U indexes rows of the kernel; A and Q index columns. Smooth mode replaces
// max by logsumexp(., tau) and min by -logsumexp(-., tau).
double flvmi(std::span<const std::size_t> U, std::span<const std::size_t> A,
             std::span<const std::size_t> Q, const SimilarityKernel& k, SmiMode mode,
             double tau = 1.0);

// FLQMI: sum over i in Q of max_{j in A} s_ji + sum over i in A of max_{j in Q} s_ij.
// A indexes rows, Q indexes columns.
double flqmi(std::span<const std::size_t> A, std::span<const std::size_t> Q,
             const SimilarityKernel& k, SmiMode mode, double tau = 1.0);

// SMI of f(X) = -(sum X)^2 over scalar multisets:
//   -(sum X)^2 - (sum Y)^2 + 2 (sum X)(sum Y)  =  -(sum X - sum Y)^2.
double quadratic_smi(std::span<const double> X, std::span<const double> Y);

struct QuadraticSmiReport {
    double value = 0.0;
    double grad_x = 0.0;  // d value / d x_i, identical for every element of X
    double grad_y = 0.0;
};
QuadraticSmiReport quadratic_smi_with_grad(std::span<const double> X, std::span<const double> Y);

// Set function over a ground set {0, ..., n-1}.
struct GroundSetFn {
    enum class Kind { FacilityLocation, QuadraticNegSumSq, Custom };
    Kind kind = Kind::Custom;
    std::size_t ground_size = 0;
    std::function<double(std::span<const std::size_t>)> eval;

    // f(A) = sum over kernel rows of max_{j in A} logits, f(empty) = 0.
    // Ground set = kernel columns. Submodular for nonnegative kernels.
    static GroundSetFn facility_location(const SimilarityKernel& k);
    // f(A) = -(sum of weights in A)^2. Submodular for nonnegative weights.
    static GroundSetFn quadratic_neg_sum_sq(std::vector<double> weights);
    static GroundSetFn custom(std::size_t ground_size,
                              std::function<double(std::span<const std::size_t>)> eval);
};

struct Violation {
    std::vector<std::size_t> set_a, set_b;
    double lhs = 0.0, rhs = 0.0;  // f(A)+f(B) vs f(A|B)+f(A&B)
    double slack() const { return lhs - rhs; }
};

struct SubmodularityReport {
    std::size_t pairs_checked = 0;
    bool exhaustive = false;
    std::vector<Violation> violations;  // slack < -1e-9
    bool ok() const { return violations.empty(); }
};

// Checks f(A)+f(B) >= f(A|B)+f(A&B) over subset pairs: exhaustively when
// 4^ground_size <= 1e5, otherwise on `trials` sampled pairs.
SubmodularityReport check_submodular(const GroundSetFn& f, std::size_t ground_size,
                                     std::size_t trials, Rng& rng);

struct MonotonicityReport {
    std::size_t chains_checked = 0;
    std::size_t violations = 0;
    double worst_slack = 0.0;  // most negative f(A') - f(A)
    bool ok() const { return violations == 0; }
};

// Hard-mode monotonicity of flqmi and flvmi along random chains A subset A'
// at fixed Q, over random nonnegative kernels of the given shape.
MonotonicityReport check_smi_monotone(std::size_t ground_rows, std::size_t ground_cols,
                                      std::size_t trials, Rng& rng);

}  // namespace sma
