#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sma/dataset_io.hpp"
#include "sma/run_config.hpp"
#include "sma/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> loss;
};

sma::RunConfig load_config(const CommonOpts& opts) {
    sma::RunConfig cfg = opts.config_path.empty()
                             ? sma::parse_run_config("{}")
                             : sma::load_run_config(opts.config_path);
    if (opts.seed.has_value()) {
        cfg.train.seed = *opts.seed;
        if (cfg.synth.has_value()) cfg.synth->seed = *opts.seed;
    }
    if (opts.loss.has_value()) cfg.train.loss = sma::loss_kind_from_name(*opts.loss);
    return cfg;
}

sma::Dataset obtain_dataset(const sma::RunConfig& cfg, const std::string& data_dir) {
    if (!data_dir.empty()) return sma::load_dataset(data_dir);
    if (cfg.manifest.has_value()) return sma::load_dataset(*cfg.manifest);
    return sma::generate(*cfg.synth);
}

int cmd_gen(const CommonOpts& opts, const std::string& out_dir) {
    const sma::RunConfig cfg = load_config(opts);
    if (!cfg.synth.has_value()) {
        throw sma::ShapeError("gen: config must provide data.synth");
    }
    const sma::Dataset ds = sma::generate(*cfg.synth);
    const std::string manifest = sma::write_dataset_dir(out_dir, ds);
    sma::log_msg(sma::LogLevel::Info, "wrote " + manifest);
    std::cout << manifest << "\n";
    return kExitOk;
}

json checkpoint_meta(const sma::TrainResult& result, const sma::RunConfig& cfg) {
    json j;
    j["loss"] = sma::loss_kind_name(result.best.loss);
    j["log_scale"] = result.best.log_scale;
    j["bias"] = result.best.bias;
    j["best_epoch"] = result.best_epoch;
    j["val_loss"] = result.history.empty() ? 0.0 : result.history[result.best_epoch].val_loss;
    j["head_x"] = "head_x.smah";
    j["head_y"] = "head_y.smah";
    j["seed"] = cfg.train.seed;
    j["note"] = "loss (lower is better)";
    return j;
}

int cmd_train(const CommonOpts& opts, const std::string& out_dir, const std::string& data_dir,
              const std::string& resume_dir) {
    const sma::RunConfig cfg = load_config(opts);
    const sma::Dataset ds = obtain_dataset(cfg, data_dir);
    fs::create_directories(out_dir);

    std::optional<sma::Checkpoint> warm;
    if (!resume_dir.empty()) {
        sma::Checkpoint ck;
        const json meta = json::parse(sma::read_file(
            (fs::path(resume_dir) / "checkpoint.json").string()));
        ck.head_x = sma::load_head((fs::path(resume_dir) / "head_x.smah").string());
        ck.head_y = sma::load_head((fs::path(resume_dir) / "head_y.smah").string());
        ck.log_scale = meta.at("log_scale").get<double>();
        ck.bias = meta.at("bias").get<double>();
        ck.loss = sma::loss_kind_from_name(meta.at("loss").get<std::string>());
        warm = std::move(ck);
    }

    std::string jsonl;
    const sma::TrainResult result =
        sma::train(cfg.train, ds, warm.has_value() ? &*warm : nullptr,
                   [&](const sma::MetricsRecord& r) {
                       jsonl += sma::metrics_json_line(r, cfg.train.loss) + "\n";
                   });

    sma::save_head((fs::path(out_dir) / "head_x.smah").string(), result.best.head_x);
    sma::save_head((fs::path(out_dir) / "head_y.smah").string(), result.best.head_y);
    sma::write_file_atomic((fs::path(out_dir) / "checkpoint.json").string(),
                           checkpoint_meta(result, cfg).dump(2) + "\n");
    sma::write_file_atomic((fs::path(out_dir) / "metrics.jsonl").string(), jsonl);
    sma::write_file_atomic((fs::path(out_dir) / "metrics.csv").string(),
                           sma::metrics_csv(result.history));

    if (result.diverged) {
        sma::log_msg(sma::LogLevel::Error, "training diverged: " + result.diagnostic);
        return kExitNumeric;
    }
    sma::log_msg(sma::LogLevel::Info,
                 "best epoch " + std::to_string(result.best_epoch) + ", artifacts in " + out_dir);
    return kExitOk;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split, const std::string& out_file) {
    const sma::RunConfig cfg = load_config(opts);
    const sma::Dataset ds = obtain_dataset(cfg, data_dir);

    const json meta =
        json::parse(sma::read_file((fs::path(ckpt_dir) / "checkpoint.json").string()));
    const sma::AlignHead hx =
        sma::load_head((fs::path(ckpt_dir) / meta.at("head_x").get<std::string>()).string());
    const sma::AlignHead hy =
        sma::load_head((fs::path(ckpt_dir) / meta.at("head_y").get<std::string>()).string());

    if (hx.in_dim != ds.x.matrix.cols() || hy.in_dim != ds.y.matrix.cols()) {
        throw sma::ShapeError("eval: checkpoint dims (" + std::to_string(hx.in_dim) + "/" +
                              std::to_string(hy.in_dim) + ") do not match data (" +
                              std::to_string(ds.x.matrix.cols()) + "/" +
                              std::to_string(ds.y.matrix.cols()) + ")");
    }

    if (split != "train" && split != "val" && split != "test") {
        throw sma::ShapeError("eval: --split must be train, val or test");
    }
    const std::vector<std::uint64_t>& entities = split == "train" ? ds.train
                                                 : split == "val" ? ds.val
                                                                  : ds.test;
    if (entities.empty()) throw sma::ShapeError("eval: split \"" + split + "\" is empty");
    const sma::EmbeddingBlock bx = sma::gather_entities(ds.x, entities);
    const sma::EmbeddingBlock by = sma::gather_entities(ds.y, entities);

    const sma::RecallTable rt = sma::eval_retrieval(hx, hy, bx, by, cfg.eval_ks);
    const sma::GapMetrics gm = sma::eval_modality_gap(hx, hy, bx, by);

    std::map<std::uint64_t, std::uint64_t> class_map;
    if (cfg.class_map.has_value()) {
        const json cm = json::parse(sma::read_file(*cfg.class_map));
        for (auto it = cm.begin(); it != cm.end(); ++it) {
            class_map[std::stoull(it.key())] = it.value().get<std::uint64_t>();
        }
    } else {
        for (std::uint64_t e : entities) class_map[e] = e;  // entity identification
    }
    const double accuracy = sma::eval_prototype_classification(hx, hy, bx, by, class_map);

    json out;
    out["split"] = split;
    out["num_entities"] = entities.size();
    out["recall"] = json::object();
    for (std::size_t i = 0; i < rt.ks.size(); ++i) {
        out["recall"]["i2t@" + std::to_string(rt.ks[i])] = rt.i2t[i];
        out["recall"]["t2i@" + std::to_string(rt.ks[i])] = rt.t2i[i];
    }
    out["centroid_gap"] = gm.centroid_gap;
    out["mean_pair_gap"] = gm.mean_pair_gap;
    out["prototype_accuracy"] = accuracy;
    const std::string text = out.dump(2) + "\n";
    std::cout << text;
    if (!out_file.empty()) sma::write_file_atomic(out_file, text);
    return kExitOk;
}

int cmd_verify(const std::string& level, const std::string& report_file) {
    if (level != "fast" && level != "full") {
        throw sma::ShapeError("verify: --level must be fast or full");
    }
    const auto results = sma::run_verification(level == "full");
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %-40s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.details.c_str());
        all = all && r.passed;
    }
    const std::string report = sma::verification_report_json(results);
    if (!report_file.empty()) sma::write_file_atomic(report_file, report);
    return all ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Set-based multimodal alignment with submodular mutual information losses"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string out_dir = "out";
    std::string data_dir;
    std::string resume_dir;
    std::string split = "test";
    std::string ckpt_dir;
    std::string level = "fast";
    std::string report_file;
    std::string eval_out;
    bool dump_defaults = false;

    CLI::App* gen = app.add_subcommand("gen", "Generate synthetic embedding files");
    gen->add_option("--config", opts.config_path, "JSON run config");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--seed", opts.seed, "Override data seed");

    CLI::App* train = app.add_subcommand("train", "Train alignment heads");
    train->add_option("--config", opts.config_path, "JSON run config");
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--data", data_dir, "Dataset directory (manifest.json)");
    train->add_option("--seed", opts.seed, "Override training seed");
    train->add_option("--loss", opts.loss, "Override loss: flqmia|flvmia|infonce|siglip");
    train->add_option("--resume", resume_dir, "Warm-start from a checkpoint directory");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", ckpt_dir, "Checkpoint directory")->required();
    eval->add_option("--data", data_dir, "Dataset directory (manifest.json)");
    eval->add_option("--config", opts.config_path, "JSON run config");
    eval->add_option("--split", split, "train|val|test (default test)");
    eval->add_option("--out", eval_out, "Also write the JSON report here");

    CLI::App* verify = app.add_subcommand("verify", "Run the property verification suite");
    verify->add_option("--level", level, "fast|full");
    verify->add_option("--report", report_file, "Write machine-readable report JSON");

    CLI::App* config = app.add_subcommand("config", "Configuration utilities");
    config->add_flag("--dump-defaults", dump_defaults, "Print the default config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(opts, out_dir);
        if (train->parsed()) return cmd_train(opts, out_dir, data_dir, resume_dir);
        if (eval->parsed()) return cmd_eval(opts, ckpt_dir, data_dir, split, eval_out);
        if (verify->parsed()) return cmd_verify(level, report_file);
        if (config->parsed()) {
            if (dump_defaults) {
                std::cout << sma::dump_default_config();
                return kExitOk;
            }
            throw sma::ShapeError("config: nothing to do (try --dump-defaults)");
        }
    } catch (const sma::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
