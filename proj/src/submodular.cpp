#include "sma/submodular.hpp"

#include <algorithm>
#include <cmath>

namespace sma {

SimilarityKernel::SimilarityKernel(Matrix sim, double log_scale_param)
    : s(std::move(sim)), log_scale(log_scale_param) {
    s.require_finite("SimilarityKernel");
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < s.cols(); ++j) {
            s.at(i, j) = std::clamp(s.at(i, j), -1.0f, 1.0f);
        }
    }
}

double SimilarityKernel::scale() const {
    return std::clamp(std::exp(log_scale), 1.0, 100.0);
}

SimilarityKernel cosine_kernel(const EmbeddingBlock& a, const EmbeddingBlock& b,
                               double log_scale) {
    for (const auto* blk : {&a, &b}) {
        for (std::size_t r = 0; r < blk->matrix.rows(); ++r) {
            double sq = 0.0;
            for (float v : blk->matrix.row(r)) sq += static_cast<double>(v) * v;
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-2) {
                throw NumericError("cosine_kernel: row " + std::to_string(r) +
                                   " is not L2-normalized");
            }
        }
    }
    Matrix sim(a.matrix.rows(), b.matrix.rows());
    for (std::size_t i = 0; i < a.matrix.rows(); ++i) {
        for (std::size_t j = 0; j < b.matrix.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < a.matrix.cols(); ++d) {
                acc += static_cast<double>(a.matrix.at(i, d)) * b.matrix.at(j, d);
            }
            sim.at(i, j) = static_cast<float>(acc);
        }
    }
    return SimilarityKernel(std::move(sim), log_scale);
}

namespace {

void require_nonempty(std::span<const std::size_t> set, const char* name) {
    if (set.empty()) throw ShapeError(std::string(name) + ": empty index set");
}

double set_max(const std::vector<double>& vals, SmiMode mode, double tau) {
    if (mode == SmiMode::Hard) return *std::max_element(vals.begin(), vals.end());
    return logsumexp(vals, tau);
}

double pair_min(double a, double b, SmiMode mode, double tau) {
    if (mode == SmiMode::Hard) return std::min(a, b);
    const double v[2] = {a, b};
    return smoothmin(v, tau);
}

std::vector<double> gather_row(const SimilarityKernel& k, std::size_t i,
                               std::span<const std::size_t> cols) {
    std::vector<double> out;
    out.reserve(cols.size());
    for (std::size_t j : cols) out.push_back(k.logit(i, j));
    return out;
}

std::vector<double> gather_col(const SimilarityKernel& k, std::span<const std::size_t> rows,
                               std::size_t j) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(k.logit(i, j));
    return out;
}

}  // namespace

double flvmi(std::span<const std::size_t> U, std::span<const std::size_t> A,
             std::span<const std::size_t> Q, const SimilarityKernel& k, SmiMode mode,
             double tau) {
    require_nonempty(U, "flvmi U");
    require_nonempty(A, "flvmi A");
    require_nonempty(Q, "flvmi Q");
    double total = 0.0;
    for (std::size_t i : U) {
        const double cov_a = set_max(gather_row(k, i, A), mode, tau);
        const double cov_q = set_max(gather_row(k, i, Q), mode, tau);
        total += pair_min(cov_a, cov_q, mode, tau);
    }
    return total;
}

double flqmi(std::span<const std::size_t> A, std::span<const std::size_t> Q,
             const SimilarityKernel& k, SmiMode mode, double tau) {
    require_nonempty(A, "flqmi A");
    require_nonempty(Q, "flqmi Q");
    double total = 0.0;
    for (std::size_t q : Q) total += set_max(gather_col(k, A, q), mode, tau);
    for (std::size_t a : A) total += set_max(gather_row(k, a, Q), mode, tau);
    return total;
}

double quadratic_smi(std::span<const double> X, std::span<const double> Y) {
    return quadratic_smi_with_grad(X, Y).value;
}

QuadraticSmiReport quadratic_smi_with_grad(std::span<const double> X,
                                           std::span<const double> Y) {
    if (X.empty() || Y.empty()) throw ShapeError("quadratic_smi: empty set");
    double sx = 0.0, sy = 0.0;
    for (double v : X) sx += v;
    for (double v : Y) sy += v;
    QuadraticSmiReport r;
    r.value = -sx * sx - sy * sy + 2.0 * sx * sy;  // = -(sx - sy)^2
    r.grad_x = -2.0 * (sx - sy);
    r.grad_y = 2.0 * (sx - sy);
    return r;
}

GroundSetFn GroundSetFn::facility_location(const SimilarityKernel& k) {
    GroundSetFn f;
    f.kind = Kind::FacilityLocation;
    f.ground_size = k.cols();
    f.eval = [k](std::span<const std::size_t> set) -> double {
        if (set.empty()) return 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < k.rows(); ++i) {
            double best = k.logit(i, set[0]);
            for (std::size_t j : set) best = std::max(best, k.logit(i, j));
            total += best;
        }
        return total;
    };
    return f;
}

GroundSetFn GroundSetFn::quadratic_neg_sum_sq(std::vector<double> weights) {
    GroundSetFn f;
    f.kind = Kind::QuadraticNegSumSq;
    f.ground_size = weights.size();
    f.eval = [w = std::move(weights)](std::span<const std::size_t> set) -> double {
        double s = 0.0;
        for (std::size_t i : set) s += w[i];
        return -s * s;
    };
    return f;
}

GroundSetFn GroundSetFn::custom(std::size_t ground_size,
                                std::function<double(std::span<const std::size_t>)> eval) {
    GroundSetFn f;
    f.kind = Kind::Custom;
    f.ground_size = ground_size;
    f.eval = std::move(eval);
    return f;
}

namespace {

std::vector<std::size_t> mask_to_set(std::uint64_t mask, std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) out.push_back(i);
    }
    return out;
}

}  // namespace

SubmodularityReport check_submodular(const GroundSetFn& f, std::size_t ground_size,
                                     std::size_t trials, Rng& rng) {
    if (ground_size > 8) throw ShapeError("check_submodular: ground_size must be <= 8");
    constexpr double kSlackTol = -1e-9;
    const std::uint64_t num_subsets = 1ULL << ground_size;

    // One evaluation per subset, then lattice checks by table lookup.
    std::vector<double> value(num_subsets);
    std::vector<std::vector<std::size_t>> sets(num_subsets);
    for (std::uint64_t m = 0; m < num_subsets; ++m) {
        sets[m] = mask_to_set(m, ground_size);
        value[m] = f.eval(sets[m]);
    }

    SubmodularityReport report;
    auto check_pair = [&](std::uint64_t a, std::uint64_t b) {
        const double lhs = value[a] + value[b];
        const double rhs = value[a | b] + value[a & b];
        ++report.pairs_checked;
        if (lhs - rhs < kSlackTol) {
            report.violations.push_back({sets[a], sets[b], lhs, rhs});
        }
    };

    if (num_subsets * num_subsets <= 100000) {
        report.exhaustive = true;
        for (std::uint64_t a = 0; a < num_subsets; ++a) {
            for (std::uint64_t b = 0; b < num_subsets; ++b) check_pair(a, b);
        }
    } else {
        for (std::size_t t = 0; t < trials; ++t) {
            check_pair(rng.below(num_subsets), rng.below(num_subsets));
        }
    }
    return report;
}

MonotonicityReport check_smi_monotone(std::size_t ground_rows, std::size_t ground_cols,
                                      std::size_t trials, Rng& rng) {
    MonotonicityReport report;
    for (std::size_t t = 0; t < trials; ++t) {
        Matrix s(ground_rows, ground_cols);
        for (std::size_t i = 0; i < ground_rows; ++i) {
            for (std::size_t j = 0; j < ground_cols; ++j) {
                s.at(i, j) = static_cast<float>(rng.uniform());  // nonnegative
            }
        }
        SimilarityKernel k(std::move(s), 0.0);

        auto random_subset = [&](std::size_t n, std::size_t min_size) {
            std::vector<std::size_t> out;
            while (out.size() < min_size) {
                out.clear();
                for (std::size_t i = 0; i < n; ++i) {
                    if (rng.uniform() < 0.5) out.push_back(i);
                }
            }
            return out;
        };
        auto grow_chain = [&](const std::vector<std::size_t>& base, std::size_t n) {
            std::vector<std::size_t> grown = base;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(base.begin(), base.end(), i) == base.end() &&
                    rng.uniform() < 0.5) {
                    grown.push_back(i);
                }
            }
            std::sort(grown.begin(), grown.end());
            return grown;
        };

        // flqmi: A over rows, Q over columns.
        const std::vector<std::size_t> a_rows = random_subset(ground_rows, 1);
        const std::vector<std::size_t> a_rows_grown = grow_chain(a_rows, ground_rows);
        const std::vector<std::size_t> q_cols = random_subset(ground_cols, 1);
        // flvmi: U over rows, A and Q both over columns.
        const std::vector<std::size_t> u_rows = random_subset(ground_rows, 1);
        const std::vector<std::size_t> a_cols = random_subset(ground_cols, 1);
        const std::vector<std::size_t> a_cols_grown = grow_chain(a_cols, ground_cols);

        ++report.chains_checked;
        const double dq = flqmi(a_rows_grown, q_cols, k, SmiMode::Hard) -
                          flqmi(a_rows, q_cols, k, SmiMode::Hard);
        const double dv = flvmi(u_rows, a_cols_grown, q_cols, k, SmiMode::Hard) -
                          flvmi(u_rows, a_cols, q_cols, k, SmiMode::Hard);
        for (double d : {dq, dv}) {
            if (d < -1e-9) {
                ++report.violations;
                report.worst_slack = std::min(report.worst_slack, d);
            }
        }
    }
    return report;
}

}  // namespace sma
