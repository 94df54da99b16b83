// Acceptance suite: one criterion per check, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sma/losses.hpp"
#include "sma/submodular.hpp"
#include "sma/trainer.hpp"

using namespace sma;

namespace {

struct Criterion {
    std::string name;
    bool passed = false;
    std::string details;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;
// Every (history, best_epoch) pair from acceptance training runs, for the
// early-stopping contract check.
std::vector<std::pair<std::vector<MetricsRecord>, std::size_t>> g_training_runs;

void run_criterion(const std::string& name, const std::function<bool(std::ostringstream&)>& fn,
                   double budget_seconds = 0.0) {
    Criterion c;
    c.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream details;
    try {
        c.passed = fn(details);
    } catch (const std::exception& e) {
        c.passed = false;
        details << "exception: " << e.what();
    }
    c.details = details.str();
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.passed && budget_seconds > 0.0 && c.seconds > budget_seconds) {
        c.passed = false;
        c.details += " [exceeded " + std::to_string(budget_seconds) + "s budget]";
    }
    std::printf("[%s] %s (%.1fs) %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                c.details.c_str());
    std::fflush(stdout);
    g_results.push_back(std::move(c));
}

EntityBatch random_singleton_batch(std::size_t n, std::size_t dim, Rng& rng) {
    auto make = [&](Modality mod) {
        EmbeddingBlock b;
        b.modality = mod;
        b.entity_ids.resize(n);
        Matrix raw(n, dim);
        for (std::size_t i = 0; i < n; ++i) b.entity_ids[i] = i;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            raw.data()[i] = static_cast<float>(rng.normal());
        }
        b.matrix = row_l2_normalize(raw);
        return b;
    };
    return build_entity_batch(make(Modality::X), make(Modality::Y));
}

EntityBatch random_multiview_batch(std::size_t n, std::size_t vx, std::size_t vy,
                                   std::size_t dim, Rng& rng) {
    auto make = [&](std::size_t views, Modality mod) {
        EmbeddingBlock b;
        b.modality = mod;
        for (std::uint64_t e = 0; e < n; ++e) {
            for (std::size_t v = 0; v < views; ++v) b.entity_ids.push_back(e);
        }
        Matrix raw(b.entity_ids.size(), dim);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            raw.data()[i] = static_cast<float>(rng.normal());
        }
        b.matrix = row_l2_normalize(raw);
        return b;
    };
    return build_entity_batch(make(vx, Modality::X), make(vy, Modality::Y));
}

// Multi-view data whose views are heterogeneous: view v of entity e carries
// latent core_e + lambda * aspect_{e,v} in both modalities (distinct crops
// and captions sharing an entity). `sets` groups rows by entity with no
// pairing information; `pairs` is the same data consumed CLIP-style as
// singleton (crop, caption) pairs with an arbitrary within-entity pairing.
// Both arms therefore see exactly the same instances.
struct AspectData {
    Dataset sets;
    Dataset pairs;
};

AspectData make_aspect_data(std::size_t entities, std::size_t views, double lambda,
                            double sigma, std::uint64_t seed) {
    const std::size_t L = 16, DX = 64, DY = 96;
    Rng root(seed);
    Rng rmix = root.fork(1), rlat = root.fork(2), rnoise = root.fork(3), rperm = root.fork(5);
    const double mix_scale = 1.0 / std::sqrt(static_cast<double>(L));
    std::vector<double> mx(L * DX), my(L * DY);
    for (auto& v : mx) v = mix_scale * rmix.normal();
    for (auto& v : my) v = mix_scale * rmix.normal();

    const std::size_t n = entities * views;
    Matrix rawx(n, DX), rawy(n, DY);
    std::vector<std::uint64_t> ids;
    std::vector<std::size_t> pair_partner(n);
    for (std::size_t e = 0; e < entities; ++e) {
        std::vector<double> core(L);
        for (auto& v : core) v = rlat.normal();
        std::vector<std::vector<double>> aspect(views, std::vector<double>(L));
        for (auto& a : aspect) {
            for (auto& v : a) v = rlat.normal();
        }
        std::vector<std::size_t> perm(views);
        for (std::size_t v = 0; v < views; ++v) perm[v] = v;
        rperm.shuffle(perm);
        for (std::size_t v = 0; v < views; ++v) {
            const std::size_t row = e * views + v;
            ids.push_back(e);
            pair_partner[row] = e * views + perm[v];
            for (std::size_t d = 0; d < DX; ++d) {
                double acc = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    acc += (core[l] + lambda * aspect[v][l]) * mx[l * DX + d];
                }
                rawx.at(row, d) = static_cast<float>(std::tanh(acc + sigma * rnoise.normal()));
            }
            for (std::size_t d = 0; d < DY; ++d) {
                double acc = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    acc += (core[l] + lambda * aspect[v][l]) * my[l * DY + d];
                }
                rawy.at(row, d) = static_cast<float>(std::tanh(acc + sigma * rnoise.normal()));
            }
        }
    }
    AspectData out;
    out.sets.x.modality = Modality::X;
    out.sets.y.modality = Modality::Y;
    out.sets.x.matrix = row_l2_normalize(rawx);
    out.sets.y.matrix = row_l2_normalize(rawy);
    out.sets.x.entity_ids = ids;
    out.sets.y.entity_ids = ids;

    Rng rsplit = root.fork(4);
    std::vector<std::uint64_t> order(entities);
    for (std::size_t e = 0; e < entities; ++e) order[e] = e;
    rsplit.shuffle(order);
    const std::size_t ntr = entities * 8 / 10, nva = entities / 10;
    for (std::size_t i = 0; i < entities; ++i) {
        auto& dst = i < ntr ? out.sets.train : (i < ntr + nva ? out.sets.val : out.sets.test);
        dst.push_back(order[i]);
    }
    std::sort(out.sets.train.begin(), out.sets.train.end());
    std::sort(out.sets.val.begin(), out.sets.val.end());
    std::sort(out.sets.test.begin(), out.sets.test.end());

    out.pairs = out.sets;
    Matrix ypaired(n, DY);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < DY; ++d) {
            ypaired.at(r, d) = out.sets.y.matrix.at(pair_partner[r], d);
        }
    }
    out.pairs.y.matrix = std::move(ypaired);
    std::vector<std::uint64_t> pair_ids(n);
    for (std::size_t r = 0; r < n; ++r) pair_ids[r] = r;
    out.pairs.x.entity_ids = pair_ids;
    out.pairs.y.entity_ids = pair_ids;
    out.pairs.train.clear();
    out.pairs.val.clear();
    out.pairs.test.clear();
    auto contains = [](const std::vector<std::uint64_t>& v, std::uint64_t e) {
        return std::find(v.begin(), v.end(), e) != v.end();
    };
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint64_t e = ids[r];
        auto& dst = contains(out.sets.train, e)
                        ? out.pairs.train
                        : (contains(out.sets.val, e) ? out.pairs.val : out.pairs.test);
        dst.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------

bool criterion_submodularity(std::ostringstream& details) {
    Rng rng(9001);
    std::size_t violations = 0, pairs = 0;
    for (std::size_t t = 0; t < 50; ++t) {
        const std::size_t ground = (t % 2 == 0) ? 5 : 6;
        Matrix s(4 + rng.below(4), ground);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s.data()[i] = static_cast<float>(rng.uniform());
        }
        SimilarityKernel k(std::move(s), 0.0);
        auto f = GroundSetFn::facility_location(k);
        auto rep = check_submodular(f, ground, 0, rng);
        if (!rep.exhaustive) {
            details << "kernel " << t << " not checked exhaustively";
            return false;
        }
        violations += rep.violations.size();
        pairs += rep.pairs_checked;
    }
    details << "50 kernels, " << pairs << " subset pairs, " << violations
            << " violations at slack -1e-9";
    return violations == 0;
}

bool criterion_monotonicity(std::ostringstream& details) {
    Rng rng(9002);
    auto rep = check_smi_monotone(6, 6, 200, rng);
    details << rep.chains_checked << " chains, " << rep.violations << " violations";
    return rep.chains_checked == 200 && rep.ok();
}

bool criterion_singleton_reduction(std::ostringstream& details) {
    Rng rng(9003);
    double worst_grad = 0.0, worst_drift = 0.0;
    const std::size_t sizes[] = {4, 8, 16};
    for (std::size_t t = 0; t < 20; ++t) {
        EntityBatch b = random_singleton_batch(sizes[t % 3], 8, rng);
        const LossReport flq = loss_flqmia(b, 1.0, 1.0);
        const LossReport nce = loss_infonce(b, 1.0, 1.0);
        for (std::size_t i = 0; i < flq.grad_x.size(); ++i) {
            worst_grad = std::max(worst_grad, std::abs(static_cast<double>(flq.grad_x.data()[i]) -
                                                       nce.grad_x.data()[i]));
        }
        for (std::size_t i = 0; i < flq.grad_y.size(); ++i) {
            worst_grad = std::max(worst_grad, std::abs(static_cast<double>(flq.grad_y.data()[i]) -
                                                       nce.grad_y.data()[i]));
        }
        const double diff0 = flq.value - nce.value;

        // Value difference must be invariant under embedding perturbations.
        EntityBatch pb = b;
        Matrix perturbed(pb.x.matrix.rows(), pb.x.matrix.cols());
        for (std::size_t i = 0; i < perturbed.size(); ++i) {
            perturbed.data()[i] =
                pb.x.matrix.data()[i] + static_cast<float>(rng.uniform(-0.05, 0.05));
        }
        pb.x.matrix = row_l2_normalize(perturbed);
        const double diff1 =
            loss_flqmia(pb, 1.0, 1.0).value - loss_infonce(pb, 1.0, 1.0).value;
        worst_drift = std::max(worst_drift, std::abs(diff1 - diff0));
    }
    details << "20 batches: worst grad gap " << worst_grad << ", worst value-difference drift "
            << worst_drift;
    return worst_grad < 1e-6 && worst_drift < 1e-6;
}

bool criterion_grad_checks(std::ostringstream& details) {
    Rng rng(9004);
    LossParams p;
    p.log_scale = 1.0;
    p.bias = 0.1;
    double worst = 0.0;
    std::string worst_site;
    for (LossKind kind :
         {LossKind::Flqmia, LossKind::Flvmia, LossKind::InfoNce, LossKind::Siglip}) {
        for (std::size_t t = 0; t < 20; ++t) {
            EntityBatch b = random_multiview_batch(3 + t % 3, 1 + t % 2, 2, 5, rng);
            const GradCheckReport rep = grad_check(kind, b, p);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_site = std::string(loss_kind_name(kind)) + ":" + rep.worst_coord;
            }
        }
    }
    for (std::size_t t = 0; t < 20; ++t) {
        for (bool glu : {false, true}) {
            AlignHead h = glu ? AlignHead::glu(5, 4, 3, rng) : AlignHead::linear(5, 3, rng);
            EmbeddingBlock raw;
            raw.modality = Modality::X;
            raw.entity_ids = {0, 1, 2, 3};
            Matrix m(4, 5);
            for (std::size_t i = 0; i < m.size(); ++i) {
                m.data()[i] = static_cast<float>(rng.normal());
            }
            raw.matrix = m;
            Matrix probe(4, 3);
            for (std::size_t i = 0; i < probe.size(); ++i) {
                probe.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
            }
            const HeadGradCheckReport rep = head_grad_check(h, raw, probe);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_site = std::string(glu ? "glu" : "linear") + ":" + rep.worst_coord;
            }
        }
    }
    details << "4 losses + 2 heads x 20 batches, worst rel err " << worst << " at "
            << worst_site;
    return worst <= 1e-4;
}

struct ComparisonRun {
    double centroid_gap = 0.0;
    double recall1 = 0.0;
};

ComparisonRun train_and_measure(const Dataset& ds, const TrainConfig& cfg,
                                const EmbeddingBlock& test_x, const EmbeddingBlock& test_y) {
    const TrainResult r = train(cfg, ds);
    if (r.diverged) throw NumericError("acceptance training run diverged: " + r.diagnostic);
    g_training_runs.emplace_back(r.history, r.best_epoch);
    ComparisonRun out;
    const GapMetrics gm = eval_modality_gap(r.best.head_x, r.best.head_y, test_x, test_y);
    out.centroid_gap = gm.centroid_gap;
    const std::vector<std::size_t> ks = {1};
    const RecallTable rt = eval_retrieval(r.best.head_x, r.best.head_y, test_x, test_y, ks);
    out.recall1 = rt.i2t[0];
    return out;
}

bool criterion_gap_direction(std::ostringstream& details) {
    // Default synthetic multi-view config; flvmia vs infonce with matched
    // epochs, batches and learning rate, gap measured on the test split.
    std::size_t flvmia_wins = 0;
    std::ostringstream per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig scfg;  // generator defaults: 500 entities, 4/5 views, 64/96 dims
        scfg.seed = seed;
        const Dataset ds = generate(scfg);
        const EmbeddingBlock test_x = gather_entities(ds.x, ds.test);
        const EmbeddingBlock test_y = gather_entities(ds.y, ds.test);

        TrainConfig base;
        base.head = HeadKind::Glu;
        base.out_dim = 32;
        base.lr = 2e-4;
        base.max_epochs = 10;
        base.patience = 10;
        base.entities_per_batch = 16;
        base.seed = seed;

        TrainConfig cfg_flv = base;
        cfg_flv.loss = LossKind::Flvmia;
        TrainConfig cfg_nce = base;
        cfg_nce.loss = LossKind::InfoNce;

        const ComparisonRun flv = train_and_measure(ds, cfg_flv, test_x, test_y);
        const ComparisonRun nce = train_and_measure(ds, cfg_nce, test_x, test_y);
        per_seed << " s" << seed << ": " << flv.centroid_gap << " vs " << nce.centroid_gap;
        if (flv.centroid_gap < nce.centroid_gap) ++flvmia_wins;
    }
    details << "flvmia gap < infonce gap in " << flvmia_wins << "/5 seeds;" << per_seed.str();
    return flvmia_wins >= 4;
}

bool criterion_multiview_advantage(std::ostringstream& details) {
    // flqmia on entity sets vs infonce on the same instances consumed as
    // singleton pairs (arbitrary within-entity pairing, as CLIP-style
    // training forms crop-caption pairs). Identical instance budget; shared
    // held-out test entities; recall@1 over the multi-view test gallery.
    std::size_t flqmia_wins = 0;
    bool chance_ok = true;
    double chance = 0.0;
    std::ostringstream per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const AspectData ad = make_aspect_data(300, 5, 1.5, 0.4, seed);
        chance = 1.0 / static_cast<double>(ad.sets.test.size());
        const EmbeddingBlock test_x = gather_entities(ad.sets.x, ad.sets.test);
        const EmbeddingBlock test_y = gather_entities(ad.sets.y, ad.sets.test);

        TrainConfig base;
        base.head = HeadKind::Glu;
        base.out_dim = 32;
        base.lr = 2e-4;
        base.max_epochs = 12;
        base.patience = 12;
        base.entities_per_batch = 16;
        base.seed = seed;

        TrainConfig cfg_flq = base;
        cfg_flq.loss = LossKind::Flqmia;
        TrainConfig cfg_nce = base;
        cfg_nce.loss = LossKind::InfoNce;
        cfg_nce.entities_per_batch = 80;  // same underlying rows per batch

        const ComparisonRun flq = train_and_measure(ad.sets, cfg_flq, test_x, test_y);
        const ComparisonRun nce = train_and_measure(ad.pairs, cfg_nce, test_x, test_y);
        per_seed << " s" << seed << ": " << flq.recall1 << " vs " << nce.recall1;
        if (flq.recall1 >= nce.recall1) ++flqmia_wins;
        if (flq.recall1 < 10.0 * chance || nce.recall1 < 10.0 * chance) chance_ok = false;
    }
    details << "flqmia recall@1 >= infonce-singleton-pairs in " << flqmia_wins
            << "/5 seeds (chance " << chance << ", 10x bar " << 10.0 * chance << ");"
            << per_seed.str();
    return flqmia_wins >= 4 && chance_ok;
}

bool criterion_quadratic_gap(std::ostringstream& details) {
    Rng rng(9007);
    std::size_t ok = 0;
    for (std::size_t t = 0; t < 20; ++t) {
        std::vector<double> X(3 + rng.below(5)), Y(3 + rng.below(5));
        for (auto& v : X) v = rng.uniform(-1.0, 1.0);
        for (auto& v : Y) v = rng.uniform(-1.0, 1.0);
        const double denom = static_cast<double>(X.size() + Y.size());
        const double lr = 0.1 / denom;  // gap shrinks 0.8x per step
        auto gap = [&] {
            double sx = 0.0, sy = 0.0;
            for (double v : X) sx += v;
            for (double v : Y) sy += v;
            return std::abs(sx - sy) / denom;
        };
        bool strict = true;
        double prev = gap();
        for (int step = 0; step < 100; ++step) {
            const auto rep = quadratic_smi_with_grad(X, Y);
            for (auto& v : X) v += lr * rep.grad_x;
            for (auto& v : Y) v += lr * rep.grad_y;
            const double cur = gap();
            if (!(cur < prev)) {
                strict = false;
                break;
            }
            prev = cur;
        }
        if (strict) ++ok;
    }
    details << ok << "/20 trials strictly decreasing over 100 ascent steps";
    return ok == 20;
}

bool criterion_determinism_io(std::ostringstream& details) {
    SynthConfig scfg;
    scfg.num_entities = 60;
    scfg.views_x = 2;
    scfg.views_y = 3;
    scfg.latent_dim = 8;
    scfg.dim_x = 16;
    scfg.dim_y = 20;
    scfg.seed = 42;
    const Dataset ds = generate(scfg);
    TrainConfig cfg;
    cfg.loss = LossKind::Flqmia;
    cfg.head = HeadKind::Glu;
    cfg.out_dim = 8;
    cfg.lr = 1e-3;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.entities_per_batch = 8;
    cfg.seed = 9;
    const TrainResult a = train(cfg, ds);
    const TrainResult b = train(cfg, ds);
    g_training_runs.emplace_back(a.history, a.best_epoch);
    if (!history_equal_ignoring_walltime(a.history, b.history)) {
        details << "metrics histories differ between identical runs";
        return false;
    }

    Rng rng(9008);
    for (std::size_t t = 0; t < 100; ++t) {
        EmbeddingBlock blk;
        blk.modality = (t % 2 == 0) ? Modality::X : Modality::Y;
        const std::size_t n = rng.below(32);
        const std::size_t dim = 1 + rng.below(16);
        blk.matrix = Matrix(n, dim);
        blk.entity_ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) blk.entity_ids[i] = rng.next_u64();
        for (std::size_t i = 0; i < blk.matrix.size(); ++i) {
            blk.matrix.data()[i] = static_cast<float>(rng.normal());
        }
        const std::string bytes = serialize_embedding_file(blk);
        if (serialize_embedding_file(parse_embedding_file(bytes)) != bytes) {
            details << "embedding file round trip not byte-exact at trial " << t;
            return false;
        }
    }
    details << "identical metrics histories (" << a.history.size()
            << " epochs); 100 embedding files byte-exact";
    return true;
}

bool criterion_early_stopping(std::ostringstream& details) {
    if (g_training_runs.empty()) {
        details << "no training runs recorded";
        return false;
    }
    for (const auto& [history, best_epoch] : g_training_runs) {
        double min_val = std::numeric_limits<double>::infinity();
        for (const auto& rec : history) min_val = std::min(min_val, rec.val_loss);
        if (history[best_epoch].val_loss != min_val) {
            details << "checkpoint val loss " << history[best_epoch].val_loss
                    << " != min recorded " << min_val;
            return false;
        }
    }
    details << g_training_runs.size()
            << " training runs: checkpoint val loss is the recorded minimum in every run";
    return true;
}

}  // namespace

int main() {
    std::printf("acceptance suite (losses reported lower-is-better)\n");
    run_criterion("1 submodularity oracle", criterion_submodularity, 60.0);
    run_criterion("2 smi monotonicity", criterion_monotonicity);
    run_criterion("3 singleton reduction to NT-Xent", criterion_singleton_reduction);
    run_criterion("4 gradient checks", criterion_grad_checks, 300.0);
    run_criterion("5 modality-gap direction", criterion_gap_direction, 600.0);
    run_criterion("6 multi-view advantage", criterion_multiview_advantage, 600.0);
    run_criterion("7 quadratic SMI gap descent", criterion_quadratic_gap);
    run_criterion("8 determinism and io", criterion_determinism_io);
    run_criterion("9 early stopping contract", criterion_early_stopping);

    std::size_t failed = 0;
    for (const auto& c : g_results) failed += c.passed ? 0 : 1;
    std::printf("%zu/%zu criteria passed\n", g_results.size() - failed, g_results.size());
    return failed == 0 ? 0 : 1;
}
