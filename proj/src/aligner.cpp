#include "sma/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace sma {

namespace {

constexpr double kNormEps = 1e-12;

Matrix uniform_init(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<float>(rng.uniform(-scale, scale));
    }
    return m;
}

double sigmoid_d(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

// Double-precision views of the head parameters, so finite-difference checks
// can perturb them without f32 quantization.
struct HeadCore {
    HeadKind kind;
    std::size_t in, hidden, out;
    std::vector<std::vector<double>> p;  // declared order

    static HeadCore from(const AlignHead& h) {
        HeadCore c;
        c.kind = h.kind;
        c.in = h.in_dim;
        c.hidden = h.hidden_dim;
        c.out = h.out_dim;
        for (const Matrix* m : h.param_list()) c.p.push_back(m->to_double());
        return c;
    }
};

// out = raw (n x in) times w (in x out) + bias, double accumulation.
void affine(const std::vector<double>& raw, std::size_t n, std::size_t in,
            const std::vector<double>& w, const std::vector<double>& bias, std::size_t out,
            std::vector<double>& res) {
    res.assign(n * out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < out; ++j) {
            double acc = bias.empty() ? 0.0 : bias[j];
            for (std::size_t k = 0; k < in; ++k) acc += raw[i * in + k] * w[k * out + j];
            res[i * out + j] = acc;
        }
    }
}

struct ForwardTrace {
    std::vector<double> a, g, h;  // GLU intermediates
    std::vector<double> v;        // pre-normalization output
    std::vector<double> u;        // normalized output
    std::vector<double> norms;
};

void forward_core(const HeadCore& c, const std::vector<double>& raw, std::size_t n,
                  ForwardTrace& t) {
    if (c.kind == HeadKind::Linear) {
        affine(raw, n, c.in, c.p[0], c.p[1], c.out, t.v);
    } else {
        affine(raw, n, c.in, c.p[0], c.p[1], c.hidden, t.a);
        affine(raw, n, c.in, c.p[2], c.p[3], c.hidden, t.g);
        t.h.resize(n * c.hidden);
        for (std::size_t i = 0; i < t.h.size(); ++i) t.h[i] = t.a[i] * sigmoid_d(t.g[i]);
        affine(t.h, n, c.hidden, c.p[4], c.p[5], c.out, t.v);
    }
    t.u.resize(n * c.out);
    t.norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < c.out; ++j) sq += t.v[i * c.out + j] * t.v[i * c.out + j];
        const double denom = std::max(std::sqrt(sq), kNormEps);
        t.norms[i] = denom;
        for (std::size_t j = 0; j < c.out; ++j) t.u[i * c.out + j] = t.v[i * c.out + j] / denom;
    }
}

}  // namespace

AlignHead AlignHead::linear(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    AlignHead h;
    h.kind = HeadKind::Linear;
    h.in_dim = in_dim;
    h.out_dim = out_dim;
    h.hidden_dim = 0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    h.w = uniform_init(in_dim, out_dim, scale, rng);
    h.b = Matrix(1, out_dim);
    return h;
}

AlignHead AlignHead::glu(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                         Rng& rng) {
    AlignHead h;
    h.kind = HeadKind::Glu;
    h.in_dim = in_dim;
    h.hidden_dim = hidden_dim;
    h.out_dim = out_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    h.w_value = uniform_init(in_dim, hidden_dim, scale, rng);
    h.b_value = Matrix(1, hidden_dim);
    h.w_gate = uniform_init(in_dim, hidden_dim, scale, rng);
    h.b_gate = Matrix(1, hidden_dim);
    const double scale_o = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    h.w_out = uniform_init(hidden_dim, out_dim, scale_o, rng);
    h.b_out = Matrix(1, out_dim);
    return h;
}

std::size_t AlignHead::param_count() const {
    std::size_t total = 0;
    for (const Matrix* m : param_list()) total += m->size();
    return total;
}

std::vector<Matrix*> AlignHead::param_list() {
    if (kind == HeadKind::Linear) return {&w, &b};
    return {&w_value, &b_value, &w_gate, &b_gate, &w_out, &b_out};
}

std::vector<const Matrix*> AlignHead::param_list() const {
    if (kind == HeadKind::Linear) return {&w, &b};
    return {&w_value, &b_value, &w_gate, &b_gate, &w_out, &b_out};
}

EmbeddingBlock head_forward(const AlignHead& h, const EmbeddingBlock& raw) {
    if (raw.matrix.cols() != h.in_dim) {
        throw ShapeError("head_forward: input dim " + std::to_string(raw.matrix.cols()) +
                         " != head in_dim " + std::to_string(h.in_dim));
    }
    const HeadCore core = HeadCore::from(h);
    ForwardTrace t;
    const std::vector<double> raw_d = raw.matrix.to_double();
    forward_core(core, raw_d, raw.matrix.rows(), t);

    EmbeddingBlock out;
    out.entity_ids = raw.entity_ids;
    out.modality = raw.modality;
    out.matrix = Matrix(raw.matrix.rows(), h.out_dim);
    for (std::size_t i = 0; i < t.u.size(); ++i) {
        out.matrix.data()[i] = static_cast<float>(t.u[i]);
    }
    out.matrix.require_finite("head_forward output");
    return out;
}

HeadGrads head_backward(const AlignHead& h, const EmbeddingBlock& raw, const Matrix& grad_out) {
    const std::size_t n = raw.matrix.rows();
    if (raw.matrix.cols() != h.in_dim || grad_out.rows() != n || grad_out.cols() != h.out_dim) {
        throw ShapeError("head_backward: shape mismatch");
    }
    const HeadCore core = HeadCore::from(h);
    const std::vector<double> raw_d = raw.matrix.to_double();
    ForwardTrace t;
    forward_core(core, raw_d, n, t);

    // Through the normalization: du/dv = (I - u u^T) / ||v||.
    std::vector<double> gv(n * h.out_dim);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < h.out_dim; ++j) {
            dot += static_cast<double>(grad_out.at(i, j)) * t.u[i * h.out_dim + j];
        }
        const bool guarded = t.norms[i] <= kNormEps;
        for (std::size_t j = 0; j < h.out_dim; ++j) {
            const double g = grad_out.at(i, j);
            gv[i * h.out_dim + j] =
                guarded ? g / kNormEps : (g - dot * t.u[i * h.out_dim + j]) / t.norms[i];
        }
    }

    auto matT_mul = [](const std::vector<double>& a, std::size_t n_, std::size_t in,
                       const std::vector<double>& g, std::size_t out) {
        std::vector<double> res(in * out, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k < in; ++k) {
                const double av = a[i * in + k];
                for (std::size_t j = 0; j < out; ++j) res[k * out + j] += av * g[i * out + j];
            }
        }
        return res;
    };
    auto colsum = [](const std::vector<double>& g, std::size_t n_, std::size_t out) {
        std::vector<double> res(out, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < out; ++j) res[j] += g[i * out + j];
        }
        return res;
    };
    auto mul_wT = [](const std::vector<double>& g, std::size_t n_, std::size_t out,
                     const std::vector<double>& w, std::size_t in) {
        std::vector<double> res(n_ * in, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < out; ++j) {
                const double gg = g[i * out + j];
                for (std::size_t k = 0; k < in; ++k) res[i * in + k] += gg * w[k * out + j];
            }
        }
        return res;
    };
    auto to_matrix = [](const std::vector<double>& v, std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = static_cast<float>(v[i]);
        m.require_finite("head_backward gradient");
        return m;
    };

    HeadGrads out;
    if (h.kind == HeadKind::Linear) {
        out.params.push_back(to_matrix(matT_mul(raw_d, n, h.in_dim, gv, h.out_dim), h.in_dim,
                                       h.out_dim));
        out.params.push_back(to_matrix(colsum(gv, n, h.out_dim), 1, h.out_dim));
        out.grad_raw = to_matrix(mul_wT(gv, n, h.out_dim, core.p[0], h.in_dim), n, h.in_dim);
        return out;
    }

    const std::vector<double> gh = mul_wT(gv, n, h.out_dim, core.p[4], h.hidden_dim);
    std::vector<double> ga(n * h.hidden_dim), gg(n * h.hidden_dim);
    for (std::size_t i = 0; i < gh.size(); ++i) {
        const double s = sigmoid_d(t.g[i]);
        ga[i] = gh[i] * s;
        gg[i] = gh[i] * t.a[i] * s * (1.0 - s);
    }
    out.params.push_back(to_matrix(matT_mul(raw_d, n, h.in_dim, ga, h.hidden_dim), h.in_dim,
                                   h.hidden_dim));
    out.params.push_back(to_matrix(colsum(ga, n, h.hidden_dim), 1, h.hidden_dim));
    out.params.push_back(to_matrix(matT_mul(raw_d, n, h.in_dim, gg, h.hidden_dim), h.in_dim,
                                   h.hidden_dim));
    out.params.push_back(to_matrix(colsum(gg, n, h.hidden_dim), 1, h.hidden_dim));
    out.params.push_back(to_matrix(matT_mul(t.h, n, h.hidden_dim, gv, h.out_dim), h.hidden_dim,
                                   h.out_dim));
    out.params.push_back(to_matrix(colsum(gv, n, h.out_dim), 1, h.out_dim));
    std::vector<double> graw = mul_wT(ga, n, h.hidden_dim, core.p[0], h.in_dim);
    const std::vector<double> graw_g = mul_wT(gg, n, h.hidden_dim, core.p[2], h.in_dim);
    for (std::size_t i = 0; i < graw.size(); ++i) graw[i] += graw_g[i];
    out.grad_raw = to_matrix(graw, n, h.in_dim);
    return out;
}

HeadGradCheckReport head_grad_check(const AlignHead& h, const EmbeddingBlock& raw,
                                    const Matrix& probe, double step) {
    const std::size_t n = raw.matrix.rows();
    if (probe.rows() != n || probe.cols() != h.out_dim) {
        throw ShapeError("head_grad_check: probe shape mismatch");
    }
    const HeadGrads analytic = head_backward(h, raw, probe);

    HeadCore core = HeadCore::from(h);
    std::vector<double> raw_d = raw.matrix.to_double();
    const std::vector<double> probe_d = probe.to_double();

    auto phi = [&]() {
        ForwardTrace t;
        forward_core(core, raw_d, n, t);
        double acc = 0.0;
        for (std::size_t i = 0; i < t.u.size(); ++i) acc += t.u[i] * probe_d[i];
        return acc;
    };

    HeadGradCheckReport out;
    auto record = [&](double fd, double g, const std::string& coord) {
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
        const double rel = std::abs(fd - g) / denom;
        ++out.coords_checked;
        if (rel > out.max_rel_err) {
            out.max_rel_err = rel;
            out.worst_coord = coord;
        }
    };

    for (std::size_t pi = 0; pi < core.p.size(); ++pi) {
        for (std::size_t i = 0; i < core.p[pi].size(); ++i) {
            const double saved = core.p[pi][i];
            core.p[pi][i] = saved + step;
            const double fp = phi();
            core.p[pi][i] = saved - step;
            const double fm = phi();
            core.p[pi][i] = saved;
            record((fp - fm) / (2.0 * step), analytic.params[pi].data()[i],
                   "param" + std::to_string(pi) + "[" + std::to_string(i) + "]");
        }
    }
    for (std::size_t i = 0; i < raw_d.size(); ++i) {
        const double saved = raw_d[i];
        raw_d[i] = saved + step;
        const double fp = phi();
        raw_d[i] = saved - step;
        const double fm = phi();
        raw_d[i] = saved;
        record((fp - fm) / (2.0 * step), analytic.grad_raw.data()[i],
               "raw[" + std::to_string(i) + "]");
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'A', 'H'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
    if (pos + 4 > s.size()) throw FormatError("SMAH: truncated at byte " + std::to_string(pos));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
}

void put_matrix(std::string& s, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::uint32_t bits;
        float f = m.data()[i];
        std::memcpy(&bits, &f, 4);
        put_u32(s, bits);
    }
}

Matrix get_matrix(const std::string& s, std::size_t& pos, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::uint32_t bits = get_u32(s, pos);
        float f;
        std::memcpy(&f, &bits, 4);
        m.data()[i] = f;
    }
    return m;
}

}  // namespace

std::string serialize_head(const AlignHead& h) {
    std::string s;
    s.append(kMagic, 4);
    put_u32(s, kVersion);
    s.push_back(static_cast<char>(h.kind));
    put_u32(s, static_cast<std::uint32_t>(h.in_dim));
    put_u32(s, static_cast<std::uint32_t>(h.hidden_dim));
    put_u32(s, static_cast<std::uint32_t>(h.out_dim));
    for (const Matrix* m : h.param_list()) put_matrix(s, *m);
    return s;
}

AlignHead deserialize_head(const std::string& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("SMAH: bad magic");
    }
    pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kVersion) throw FormatError("SMAH: unsupported version");
    if (pos >= bytes.size()) throw FormatError("SMAH: truncated header");
    const auto kind_byte = static_cast<std::uint8_t>(bytes[pos++]);
    if (kind_byte > 1) throw FormatError("SMAH: unknown head kind");
    AlignHead h;
    h.kind = static_cast<HeadKind>(kind_byte);
    h.in_dim = get_u32(bytes, pos);
    h.hidden_dim = get_u32(bytes, pos);
    h.out_dim = get_u32(bytes, pos);
    if (h.kind == HeadKind::Linear) {
        h.w = get_matrix(bytes, pos, h.in_dim, h.out_dim);
        h.b = get_matrix(bytes, pos, 1, h.out_dim);
    } else {
        h.w_value = get_matrix(bytes, pos, h.in_dim, h.hidden_dim);
        h.b_value = get_matrix(bytes, pos, 1, h.hidden_dim);
        h.w_gate = get_matrix(bytes, pos, h.in_dim, h.hidden_dim);
        h.b_gate = get_matrix(bytes, pos, 1, h.hidden_dim);
        h.w_out = get_matrix(bytes, pos, h.hidden_dim, h.out_dim);
        h.b_out = get_matrix(bytes, pos, 1, h.out_dim);
    }
    if (pos != bytes.size()) throw FormatError("SMAH: trailing bytes");
    return h;
}

void save_head(const std::string& path, const AlignHead& h) {
    write_file_atomic(path, serialize_head(h));
}

AlignHead load_head(const std::string& path) { return deserialize_head(read_file(path)); }

}  // namespace sma
