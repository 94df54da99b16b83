#include "sma/verify.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "sma/losses.hpp"
#include "sma/submodular.hpp"
#include "sma/trainer.hpp"

namespace sma {

namespace {

EntityBatch random_batch(std::size_t n_entities, std::size_t views_x, std::size_t views_y,
                         std::size_t dim, Rng& rng) {
    auto make = [&](std::size_t views, Modality mod) {
        EmbeddingBlock b;
        b.modality = mod;
        for (std::uint64_t e = 0; e < n_entities; ++e) {
            for (std::size_t v = 0; v < views; ++v) b.entity_ids.push_back(e);
        }
        Matrix raw(b.entity_ids.size(), dim);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            raw.data()[i] = static_cast<float>(rng.normal());
        }
        b.matrix = row_l2_normalize(raw);
        return b;
    };
    return build_entity_batch(make(views_x, Modality::X), make(views_y, Modality::Y));
}

SimilarityKernel random_nonneg_kernel(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix s(rows, cols);
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = static_cast<float>(rng.uniform());
    return SimilarityKernel(std::move(s), 0.0);
}

struct Runner {
    std::vector<CheckResult> results;

    template <typename F>
    void run(const std::string& name, F&& body) {
        CheckResult r;
        r.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::ostringstream details;
            r.passed = body(details);
            r.details = details.str();
        } catch (const std::exception& e) {
            r.passed = false;
            r.details = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back(std::move(r));
    }
};

}  // namespace

bool grad_check_detects_sign_flip() {
    Rng rng(404);
    EntityBatch b = random_batch(3, 1, 2, 4, rng);
    const LossReport rep = loss_flqmia(b, 1.0, 1.0);

    // Largest-magnitude coordinate of grad_x, finite-differenced directly.
    std::size_t worst = 0;
    for (std::size_t i = 0; i < rep.grad_x.size(); ++i) {
        if (std::abs(rep.grad_x.data()[i]) > std::abs(rep.grad_x.data()[worst])) worst = i;
    }
    const double h = 1e-3;
    EntityBatch bp = b, bm = b;
    bp.x.matrix.data()[worst] += static_cast<float>(h);
    bm.x.matrix.data()[worst] -= static_cast<float>(h);
    const double fd =
        (loss_flqmia(bp, 1.0, 1.0).value - loss_flqmia(bm, 1.0, 1.0).value) / (2.0 * h);

    const double flipped = -static_cast<double>(rep.grad_x.data()[worst]);
    const double rel = std::abs(fd - flipped) / std::max({std::abs(fd), std::abs(flipped), 1e-3});
    return rel > 1e-4;  // the injected sign bug must be caught
}

std::vector<CheckResult> run_verification(bool full) {
    Runner runner;
    const std::size_t kernels = full ? 50 : 10;
    const std::size_t chains = full ? 200 : 50;
    const std::size_t reduction_batches = full ? 20 : 5;
    const std::size_t grad_batches = full ? 20 : 3;
    const std::size_t quad_trials = full ? 20 : 5;
    const std::size_t roundtrips = full ? 100 : 10;

    runner.run("submodularity_facility_location", [&](std::ostringstream& details) {
        Rng rng(1001);
        std::size_t violations = 0, pairs = 0;
        for (std::size_t t = 0; t < kernels; ++t) {
            const std::size_t ground = 5 + t % 2;
            auto k = random_nonneg_kernel(4, ground, rng);
            auto f = GroundSetFn::facility_location(k);
            auto rep = check_submodular(f, ground, 0, rng);
            violations += rep.violations.size();
            pairs += rep.pairs_checked;
        }
        details << kernels << " kernels, " << pairs << " subset pairs, " << violations
                << " violations";
        return violations == 0;
    });

    runner.run("submodularity_checker_flags_supermodular", [&](std::ostringstream& details) {
        Rng rng(1002);
        auto f = GroundSetFn::custom(4, [](std::span<const std::size_t> set) {
            return static_cast<double>(set.size() * set.size());
        });
        auto rep = check_submodular(f, 4, 0, rng);
        details << rep.violations.size() << " violations flagged on |A|^2";
        return !rep.violations.empty();
    });

    runner.run("smi_monotonicity", [&](std::ostringstream& details) {
        Rng rng(1003);
        auto rep = check_smi_monotone(6, 6, chains, rng);
        details << rep.chains_checked << " chains, " << rep.violations
                << " violations, worst slack " << rep.worst_slack;
        return rep.ok();
    });

    runner.run("singleton_reduction_nt_xent", [&](std::ostringstream& details) {
        Rng rng(1004);
        double worst = 0.0;
        for (std::size_t t = 0; t < reduction_batches; ++t) {
            const std::size_t n = (t % 3 == 0) ? 4 : (t % 3 == 1) ? 8 : 16;
            EntityBatch b = random_batch(n, 1, 1, 6, rng);
            const LossReport flq = loss_flqmia(b, 1.0, 1.0);
            const LossReport nce = loss_infonce(b, 1.0, 1.0);
            for (std::size_t i = 0; i < flq.grad_x.size(); ++i) {
                worst = std::max(worst, std::abs(static_cast<double>(flq.grad_x.data()[i]) -
                                                 nce.grad_x.data()[i]));
            }
            for (std::size_t i = 0; i < flq.grad_y.size(); ++i) {
                worst = std::max(worst, std::abs(static_cast<double>(flq.grad_y.data()[i]) -
                                                 nce.grad_y.data()[i]));
            }
        }
        details << reduction_batches << " batches, worst gradient gap " << worst;
        return worst < 1e-6;
    });

    runner.run("loss_gradient_checks", [&](std::ostringstream& details) {
        Rng rng(1005);
        LossParams p;
        p.log_scale = 1.0;
        double worst = 0.0;
        std::string worst_name;
        for (LossKind kind :
             {LossKind::Flqmia, LossKind::Flvmia, LossKind::InfoNce, LossKind::Siglip}) {
            for (std::size_t t = 0; t < grad_batches; ++t) {
                EntityBatch b = random_batch(3, 1, 2, 4, rng);
                const GradCheckReport rep = grad_check(kind, b, p);
                if (rep.max_rel_err > worst) {
                    worst = rep.max_rel_err;
                    worst_name = std::string(loss_kind_name(kind)) + ":" + rep.worst_coord;
                }
            }
        }
        details << "worst rel err " << worst << " at " << worst_name;
        return worst < 1e-4;
    });

    runner.run("head_gradient_checks", [&](std::ostringstream& details) {
        Rng rng(1006);
        double worst = 0.0;
        for (std::size_t t = 0; t < grad_batches; ++t) {
            for (bool glu : {false, true}) {
                AlignHead h = glu ? AlignHead::glu(4, 3, 3, rng) : AlignHead::linear(4, 3, rng);
                EmbeddingBlock raw;
                raw.modality = Modality::X;
                raw.entity_ids = {0, 1, 2};
                Matrix m(3, 4);
                for (std::size_t i = 0; i < m.size(); ++i) {
                    m.data()[i] = static_cast<float>(rng.normal());
                }
                raw.matrix = m;
                Matrix probe(3, 3);
                for (std::size_t i = 0; i < probe.size(); ++i) {
                    probe.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
                }
                worst = std::max(worst, head_grad_check(h, raw, probe).max_rel_err);
            }
        }
        details << "worst rel err " << worst;
        return worst < 1e-4;
    });

    runner.run("grad_check_mutation_detection", [&](std::ostringstream& details) {
        const bool caught = grad_check_detects_sign_flip();
        details << (caught ? "sign flip detected" : "sign flip NOT detected");
        return caught;
    });

    runner.run("smooth_to_hard_convergence", [&](std::ostringstream& details) {
        Rng rng(1007);
        double worst_excess = 0.0;
        for (std::size_t t = 0; t < kernels; ++t) {
            auto k = random_nonneg_kernel(5, 5, rng);
            const std::vector<std::size_t> A = {0, 1, 2}, Q = {2, 3, 4};
            const std::vector<std::size_t> U = {0, 1, 2, 3, 4};
            for (double tau : {0.01, 0.1}) {
                const double dq = std::abs(flqmi(A, Q, k, SmiMode::Smooth, tau) -
                                           flqmi(A, Q, k, SmiMode::Hard));
                const double dv = std::abs(flvmi(U, A, Q, k, SmiMode::Smooth, tau) -
                                           flvmi(U, A, Q, k, SmiMode::Hard));
                worst_excess = std::max(worst_excess, dq - 6.0 * tau * std::log(3.0));
                worst_excess = std::max(worst_excess, dv - 10.0 * tau * std::log(3.0));
            }
        }
        details << "worst bound excess " << worst_excess;
        return worst_excess <= 1e-9;
    });

    runner.run("quadratic_smi_gap_direction", [&](std::ostringstream& details) {
        Rng rng(1008);
        std::size_t ok_trials = 0;
        for (std::size_t t = 0; t < quad_trials; ++t) {
            std::vector<double> X(3 + rng.below(4)), Y(3 + rng.below(4));
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
            bool monotone = true;
            double prev = gap();
            for (int step = 0; step < 100; ++step) {
                const auto rep = quadratic_smi_with_grad(X, Y);
                for (auto& v : X) v += lr * rep.grad_x;
                for (auto& v : Y) v += lr * rep.grad_y;
                const double cur = gap();
                if (!(cur < prev) && prev > 1e-300) {
                    monotone = false;
                    break;
                }
                prev = cur;
            }
            if (monotone) ++ok_trials;
        }
        details << ok_trials << "/" << quad_trials << " strictly decreasing";
        return ok_trials == quad_trials;
    });

    runner.run("embedding_file_roundtrip", [&](std::ostringstream& details) {
        Rng rng(1009);
        for (std::size_t t = 0; t < roundtrips; ++t) {
            EmbeddingBlock b;
            b.modality = (t % 2 == 0) ? Modality::X : Modality::Y;
            const std::size_t n = rng.below(16);
            const std::size_t dim = 1 + rng.below(8);
            b.matrix = Matrix(n, dim);
            b.entity_ids.resize(n);
            for (std::size_t i = 0; i < n; ++i) b.entity_ids[i] = rng.next_u64();
            for (std::size_t i = 0; i < b.matrix.size(); ++i) {
                b.matrix.data()[i] = static_cast<float>(rng.normal());
            }
            const std::string bytes = serialize_embedding_file(b);
            if (serialize_embedding_file(parse_embedding_file(bytes)) != bytes) {
                details << "round trip mismatch at trial " << t;
                return false;
            }
        }
        details << roundtrips << " files byte-exact";
        return true;
    });

    runner.run("train_determinism_and_early_stop", [&](std::ostringstream& details) {
        SynthConfig scfg;
        scfg.num_entities = 30;
        scfg.views_x = 2;
        scfg.views_y = 2;
        scfg.latent_dim = 4;
        scfg.dim_x = 8;
        scfg.dim_y = 8;
        scfg.seed = 77;
        Dataset ds = generate(scfg);
        TrainConfig tcfg;
        tcfg.loss = LossKind::Flqmia;
        tcfg.head = HeadKind::Linear;
        tcfg.out_dim = 6;
        tcfg.lr = 1e-3;
        tcfg.max_epochs = full ? 5 : 3;
        tcfg.patience = 5;
        tcfg.entities_per_batch = 8;
        tcfg.seed = 5;
        const TrainResult a = train(tcfg, ds);
        const TrainResult b = train(tcfg, ds);
        if (!history_equal_ignoring_walltime(a.history, b.history)) {
            details << "metrics histories differ between identical runs";
            return false;
        }
        double min_val = a.history.front().val_loss;
        for (const auto& rec : a.history) min_val = std::min(min_val, rec.val_loss);
        if (a.history[a.best_epoch].val_loss != min_val) {
            details << "best checkpoint is not the minimum validation loss";
            return false;
        }
        details << a.history.size() << " epochs, best " << a.best_epoch << ", val "
                << min_val;
        return true;
    });

    return runner.results;
}

std::string verification_report_json(const std::vector<CheckResult>& results) {
    nlohmann::json j;
    j["checks"] = nlohmann::json::array();
    bool all = true;
    for (const CheckResult& r : results) {
        j["checks"].push_back({{"name", r.name},
                               {"passed", r.passed},
                               {"details", r.details},
                               {"seconds", r.seconds}});
        all = all && r.passed;
    }
    j["all_passed"] = all;
    return j.dump(2) + "\n";
}

}  // namespace sma
