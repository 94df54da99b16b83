#pragma once

#include <string>
#include <vector>

#include "sma/core.hpp"
#include "sma/sets.hpp"

namespace sma {

enum class HeadKind : std::uint8_t { Linear = 0, Glu = 1 };

// Projection head mapping raw (frozen-encoder) embeddings into the shared
// space. Outputs are L2-normalized.
//   Linear:  out = normalize(x W + b)
//   GLU:     out = normalize(((x Wv + bv) * sigmoid(x Wg + bg)) Wo + bo)
// Matrices are row-major with rows = input side (x W means row-vector times
// in_dim x out_dim).
struct AlignHead {
    HeadKind kind = HeadKind::Linear;
    std::size_t in_dim = 0, hidden_dim = 0, out_dim = 0;

    Matrix w, b;                                      // Linear
    Matrix w_value, b_value, w_gate, b_gate, w_out, b_out;  // GLU

    // Weights uniform in [-1/sqrt(in), 1/sqrt(in)], biases zero.
    static AlignHead linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);
    static AlignHead glu(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                         Rng& rng);

    std::size_t param_count() const;
    std::vector<Matrix*> param_list();              // declared order
    std::vector<const Matrix*> param_list() const;
};

// Projects a raw block; entity ids and modality are preserved.
EmbeddingBlock head_forward(const AlignHead& h, const EmbeddingBlock& raw);

struct HeadGrads {
    std::vector<Matrix> params;  // aligned with AlignHead::param_list()
    Matrix grad_raw;
};

// grad_out is the loss gradient w.r.t. the normalized output block. The chain
// runs back through the L2-normalization Jacobian.
HeadGrads head_backward(const AlignHead& h, const EmbeddingBlock& raw, const Matrix& grad_out);

struct HeadGradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_coord;
    std::size_t coords_checked = 0;
    bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Central finite differences of phi(params, raw) = sum(forward(...) * probe)
// against head_backward, every parameter coordinate plus the raw inputs,
// 64-bit evaluation.
HeadGradCheckReport head_grad_check(const AlignHead& h, const EmbeddingBlock& raw,
                                    const Matrix& probe, double step = 1e-4);

// Binary checkpoint: magic "SMAH", version u32, kind u8, in u32, hidden u32,
// out u32, then each parameter matrix in declared order as little-endian f32.
std::string serialize_head(const AlignHead& h);
AlignHead deserialize_head(const std::string& bytes);
void save_head(const std::string& path, const AlignHead& h);
AlignHead load_head(const std::string& path);

}  // namespace sma
