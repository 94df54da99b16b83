#include "sma/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

namespace sma {

void SynthConfig::validate() const {
    if (num_entities < 2) throw ShapeError("SynthConfig: num_entities must be >= 2");
    if (views_x < 1 || views_y < 1) throw ShapeError("SynthConfig: views must be >= 1");
    if (latent_dim < 1) throw ShapeError("SynthConfig: latent_dim must be >= 1");
    if (dim_x < latent_dim || dim_y < latent_dim) {
        throw ShapeError("SynthConfig: ambient dims must be >= latent_dim");
    }
    if (noise_sigma < 0.0) throw ShapeError("SynthConfig: noise_sigma must be >= 0");
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<float>(scale * rng.normal());
    }
    return m;
}

}  // namespace

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng root(cfg.seed);
    Rng rng_mix = root.fork(1);
    Rng rng_latent = root.fork(2);
    Rng rng_noise = root.fork(3);
    Rng rng_split = root.fork(4);

    // Fixed mixing matrices, scaled so projected coordinates stay O(1).
    const double mix_scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    const Matrix mix_x = gaussian_matrix(cfg.latent_dim, cfg.dim_x, rng_mix, mix_scale);
    const Matrix mix_y = gaussian_matrix(cfg.latent_dim, cfg.dim_y, rng_mix, mix_scale);

    Dataset ds;
    ds.latents = Matrix(cfg.num_entities, cfg.latent_dim);
    ds.latent_ids.resize(cfg.num_entities);

    const std::size_t nx = cfg.num_entities * cfg.views_x;
    const std::size_t ny = cfg.num_entities * cfg.views_y;
    Matrix raw_x(nx, cfg.dim_x), raw_y(ny, cfg.dim_y);
    ds.x.entity_ids.reserve(nx);
    ds.y.entity_ids.reserve(ny);

    auto emit_view = [&](Matrix& out, std::size_t row, const Matrix& mix, std::size_t dim,
                         const float* latent) {
        for (std::size_t d = 0; d < dim; ++d) {
            double acc = 0.0;
            for (std::size_t l = 0; l < cfg.latent_dim; ++l) {
                acc += static_cast<double>(latent[l]) * mix.at(l, d);
            }
            acc += cfg.noise_sigma * rng_noise.normal();
            if (cfg.nonlinearity == Nonlinearity::Tanh) acc = std::tanh(acc);
            out.at(row, d) = static_cast<float>(acc);
        }
    };

    for (std::size_t e = 0; e < cfg.num_entities; ++e) {
        ds.latent_ids[e] = e;
        for (std::size_t l = 0; l < cfg.latent_dim; ++l) {
            ds.latents.at(e, l) = static_cast<float>(rng_latent.normal());
        }
        for (std::size_t v = 0; v < cfg.views_x; ++v) {
            const std::size_t row = e * cfg.views_x + v;
            emit_view(raw_x, row, mix_x, cfg.dim_x, &ds.latents.at(e, 0));
            ds.x.entity_ids.push_back(e);
        }
        for (std::size_t v = 0; v < cfg.views_y; ++v) {
            const std::size_t row = e * cfg.views_y + v;
            emit_view(raw_y, row, mix_y, cfg.dim_y, &ds.latents.at(e, 0));
            ds.y.entity_ids.push_back(e);
        }
    }
    ds.x.matrix = row_l2_normalize(raw_x);
    ds.x.modality = Modality::X;
    ds.y.matrix = row_l2_normalize(raw_y);
    ds.y.modality = Modality::Y;

    // Entity-level 80/10/10 split, deterministic in the seed.
    std::vector<std::uint64_t> order(cfg.num_entities);
    for (std::size_t e = 0; e < cfg.num_entities; ++e) order[e] = e;
    rng_split.shuffle(order);
    const std::size_t n_train = (cfg.num_entities * 8) / 10;
    const std::size_t n_val = cfg.num_entities / 10;
    for (std::size_t i = 0; i < cfg.num_entities; ++i) {
        if (i < n_train) {
            ds.train.push_back(order[i]);
        } else if (i < n_train + n_val) {
            ds.val.push_back(order[i]);
        } else {
            ds.test.push_back(order[i]);
        }
    }
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.val.begin(), ds.val.end());
    std::sort(ds.test.begin(), ds.test.end());
    return ds;
}

EmbeddingBlock gather_entities(const EmbeddingBlock& block,
                               std::span<const std::uint64_t> entities) {
    std::vector<std::uint64_t> wanted(entities.begin(), entities.end());
    std::sort(wanted.begin(), wanted.end());
    std::vector<std::size_t> rows;
    for (std::uint64_t id : wanted) {
        for (std::size_t r = 0; r < block.entity_ids.size(); ++r) {
            if (block.entity_ids[r] == id) rows.push_back(r);
        }
    }
    EmbeddingBlock out;
    out.modality = block.modality;
    out.matrix = Matrix(rows.size(), block.matrix.cols());
    out.entity_ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.entity_ids.push_back(block.entity_ids[rows[i]]);
        for (std::size_t d = 0; d < block.matrix.cols(); ++d) {
            out.matrix.at(i, d) = block.matrix.at(rows[i], d);
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
    if (pos + 4 > s.size()) throw FormatError("SMAE: truncated at byte " + std::to_string(pos));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
}
std::uint64_t get_u64(const std::string& s, std::size_t& pos) {
    if (pos + 8 > s.size()) throw FormatError("SMAE: truncated at byte " + std::to_string(pos));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
}

}  // namespace

std::string serialize_embedding_file(const EmbeddingBlock& block) {
    if (block.entity_ids.size() != block.matrix.rows()) {
        throw ShapeError("serialize_embedding_file: ids/rows mismatch");
    }
    std::string s;
    s.append(kMagic, 4);
    put_u32(s, kVersion);
    put_u32(s, static_cast<std::uint32_t>(block.matrix.cols()));
    put_u64(s, block.entity_ids.size());
    for (std::size_t r = 0; r < block.matrix.rows(); ++r) {
        put_u64(s, block.entity_ids[r]);
        s.push_back(static_cast<char>(block.modality));
        for (std::size_t d = 0; d < block.matrix.cols(); ++d) {
            std::uint32_t bits;
            const float f = block.matrix.at(r, d);
            std::memcpy(&bits, &f, 4);
            put_u32(s, bits);
        }
    }
    return s;
}

EmbeddingBlock parse_embedding_file(const std::string& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("SMAE: bad magic");
    }
    pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kVersion) {
        throw FormatError("SMAE: unsupported version " + std::to_string(version));
    }
    const std::uint32_t dim = get_u32(bytes, pos);
    const std::uint64_t count = get_u64(bytes, pos);

    EmbeddingBlock block;
    block.matrix = Matrix(count, dim);
    block.entity_ids.reserve(count);
    std::optional<std::uint8_t> modality;
    for (std::uint64_t r = 0; r < count; ++r) {
        block.entity_ids.push_back(get_u64(bytes, pos));
        if (pos >= bytes.size()) {
            throw FormatError("SMAE: truncated record " + std::to_string(r) + " at byte " +
                              std::to_string(pos));
        }
        const auto mod = static_cast<std::uint8_t>(bytes[pos++]);
        if (mod > 1) {
            throw FormatError("SMAE: bad modality byte in record " + std::to_string(r));
        }
        if (modality.has_value() && *modality != mod) {
            throw FormatError("SMAE: mixed modalities in one file at record " +
                              std::to_string(r));
        }
        modality = mod;
        for (std::uint32_t d = 0; d < dim; ++d) {
            const std::uint32_t bits = get_u32(bytes, pos);
            float f;
            std::memcpy(&f, &bits, 4);
            block.matrix.at(r, d) = f;
        }
    }
    if (pos != bytes.size()) {
        throw FormatError("SMAE: " + std::to_string(bytes.size() - pos) +
                          " trailing bytes after record " + std::to_string(count));
    }
    block.modality = modality.has_value() ? static_cast<Modality>(*modality) : Modality::X;
    return block;
}

void write_embedding_file(const std::string& path, const EmbeddingBlock& block) {
    write_file_atomic(path, serialize_embedding_file(block));
}

EmbeddingBlock read_embedding_file(const std::string& path) {
    return parse_embedding_file(read_file(path));
}

BatchSampler::BatchSampler(std::vector<std::uint64_t> entities, std::size_t entities_per_batch)
    : entities_(std::move(entities)), per_batch_(entities_per_batch) {
    if (per_batch_ < 2) throw ShapeError("BatchSampler: entities_per_batch must be >= 2");
    if (entities_.size() < 2) throw ShapeError("BatchSampler: fewer than 2 entities available");
}

std::size_t BatchSampler::batches_per_epoch() const {
    const std::size_t n = entities_.size();
    std::size_t full = n / per_batch_;
    const std::size_t rem = n % per_batch_;
    if (full == 0) return 1;
    return full + (rem >= 2 ? 1 : 0);  // remainder of 1 merges into the last batch
}

std::vector<std::vector<std::uint64_t>> BatchSampler::epoch_plan(Rng& rng) const {
    std::vector<std::uint64_t> order = entities_;
    rng.shuffle(order);
    std::vector<std::vector<std::uint64_t>> plan;
    std::size_t i = 0;
    while (i < order.size()) {
        const std::size_t remaining = order.size() - i;
        std::size_t take = std::min(per_batch_, remaining);
        if (remaining - take == 1) take = remaining;  // avoid a 1-entity leftover
        plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                          order.begin() + static_cast<std::ptrdiff_t>(i + take));
        i += take;
    }
    return plan;
}

EntityBatch sample_batch(const EmbeddingBlock& x, const EmbeddingBlock& y,
                         std::span<const std::uint64_t> entities) {
    if (entities.size() < 2) throw ShapeError("sample_batch: need at least 2 entities");
    return build_entity_batch(gather_entities(x, entities), gather_entities(y, entities));
}

}  // namespace sma
