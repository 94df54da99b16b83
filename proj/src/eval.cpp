#include <algorithm>
#include <cmath>
#include <set>

#include "sma/trainer.hpp"

namespace sma {

RecallTable retrieval_on_projected(const EmbeddingBlock& px, const EmbeddingBlock& py,
                                   std::span<const std::size_t> ks) {
    if (px.size() == 0 || py.size() == 0) throw ShapeError("eval_retrieval: empty block");
    for (std::size_t k : ks) {
        if (k == 0 || k > px.size() || k > py.size()) {
            throw ShapeError("eval_retrieval: k = " + std::to_string(k) +
                             " exceeds gallery size");
        }
    }

    auto direction = [&](const EmbeddingBlock& query, const EmbeddingBlock& gallery) {
        std::vector<double> hits(ks.size(), 0.0);
        const std::size_t dim = query.matrix.cols();
        std::vector<std::size_t> order(gallery.size());
        std::vector<double> scores(gallery.size());
        for (std::size_t q = 0; q < query.size(); ++q) {
            for (std::size_t g = 0; g < gallery.size(); ++g) {
                double acc = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    acc += static_cast<double>(query.matrix.at(q, d)) * gallery.matrix.at(g, d);
                }
                scores[g] = acc;
                order[g] = g;
            }
            // Descending score, ties broken by gallery index for determinism.
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return a < b;
            });
            for (std::size_t ki = 0; ki < ks.size(); ++ki) {
                bool hit = false;
                for (std::size_t r = 0; r < ks[ki]; ++r) {
                    if (gallery.entity_ids[order[r]] == query.entity_ids[q]) {
                        hit = true;
                        break;
                    }
                }
                if (hit) hits[ki] += 1.0;
            }
        }
        for (double& h : hits) h /= static_cast<double>(query.size());
        return hits;
    };

    RecallTable t;
    t.ks.assign(ks.begin(), ks.end());
    t.i2t = direction(px, py);
    t.t2i = direction(py, px);
    return t;
}

GapMetrics gap_on_projected(const EmbeddingBlock& px, const EmbeddingBlock& py) {
    if (px.size() == 0 || py.size() == 0) throw ShapeError("eval_modality_gap: empty block");
    if (px.matrix.cols() != py.matrix.cols()) {
        throw ShapeError("eval_modality_gap: dim mismatch");
    }
    const std::size_t dim = px.matrix.cols();

    GapMetrics gm;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        double mx = 0.0, my = 0.0;
        for (std::size_t r = 0; r < px.size(); ++r) mx += px.matrix.at(r, d);
        for (std::size_t r = 0; r < py.size(); ++r) my += py.matrix.at(r, d);
        mx /= static_cast<double>(px.size());
        my /= static_cast<double>(py.size());
        sq += (mx - my) * (mx - my);
    }
    gm.centroid_gap = std::sqrt(sq);

    double pair_sum = 0.0;
    std::size_t pair_count = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        for (std::size_t j = 0; j < py.size(); ++j) {
            if (px.entity_ids[i] != py.entity_ids[j]) continue;
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff =
                    static_cast<double>(px.matrix.at(i, d)) - py.matrix.at(j, d);
                d2 += diff * diff;
            }
            pair_sum += std::sqrt(d2);
            ++pair_count;
        }
    }
    if (pair_count == 0) throw ShapeError("eval_modality_gap: no matched pairs");
    gm.mean_pair_gap = pair_sum / static_cast<double>(pair_count);
    return gm;
}

RecallTable eval_retrieval(const AlignHead& hx, const AlignHead& hy,
                           const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y,
                           std::span<const std::size_t> ks) {
    return retrieval_on_projected(head_forward(hx, raw_x), head_forward(hy, raw_y), ks);
}

GapMetrics eval_modality_gap(const AlignHead& hx, const AlignHead& hy,
                             const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y) {
    return gap_on_projected(head_forward(hx, raw_x), head_forward(hy, raw_y));
}

double eval_prototype_classification(const AlignHead& hx, const AlignHead& hy,
                                     const EmbeddingBlock& raw_x, const EmbeddingBlock& raw_y,
                                     const std::map<std::uint64_t, std::uint64_t>& class_map) {
    if (raw_x.size() == 0 || raw_y.size() == 0) {
        throw ShapeError("eval_prototype_classification: empty block");
    }
    const EmbeddingBlock px = head_forward(hx, raw_x);
    const EmbeddingBlock py = head_forward(hy, raw_y);
    const std::size_t dim = px.matrix.cols();

    auto class_of = [&](std::uint64_t entity) {
        auto it = class_map.find(entity);
        if (it == class_map.end()) {
            throw ShapeError("eval_prototype_classification: entity " + std::to_string(entity) +
                             " missing from class_map");
        }
        return it->second;
    };

    // Prototypes: mean projected Y view per class, in sorted class order.
    std::map<std::uint64_t, std::pair<std::vector<double>, std::size_t>> proto;
    for (std::size_t r = 0; r < py.size(); ++r) {
        auto& [sum, count] = proto[class_of(py.entity_ids[r])];
        if (sum.empty()) sum.assign(dim, 0.0);
        for (std::size_t d = 0; d < dim; ++d) sum[d] += py.matrix.at(r, d);
        ++count;
    }
    for (auto& [cls, pc] : proto) {
        if (pc.second == 0) {
            throw ShapeError("eval_prototype_classification: empty class " +
                             std::to_string(cls));
        }
        for (double& v : pc.first) v /= static_cast<double>(pc.second);
    }

    std::size_t correct = 0;
    for (std::size_t r = 0; r < px.size(); ++r) {
        if (proto.find(class_of(px.entity_ids[r])) == proto.end()) {
            throw ShapeError("eval_prototype_classification: class " +
                             std::to_string(class_of(px.entity_ids[r])) +
                             " has no Y views to form a prototype");
        }
        double best_d2 = std::numeric_limits<double>::infinity();
        std::uint64_t best_cls = 0;
        for (const auto& [cls, pc] : proto) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = static_cast<double>(px.matrix.at(r, d)) - pc.first[d];
                d2 += diff * diff;
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                best_cls = cls;
            }
        }
        if (best_cls == class_of(px.entity_ids[r])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(px.size());
}

}  // namespace sma
