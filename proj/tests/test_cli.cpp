#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "sma/core.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin_path() {
    const char* env = std::getenv("SMA_BIN");
    REQUIRE_MESSAGE(env != nullptr, "SMA_BIN must point at the sma binary");
    return env;
}

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file =
        fs::temp_directory_path() / ("sma_cli_out_" + std::to_string(counter++) + ".txt");
    const std::string cmd = bin_path() + " " + args + " > " + out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WEXITSTATUS(raw);
    std::ifstream in(out_file);
    r.out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    fs::remove(out_file);
    return r;
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("sma_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

const char* kSmallSynth = R"({
  "data": {"synth": {"num_entities": 24, "views_x": 2, "views_y": 2, "latent_dim": 4,
                      "dim_x": 8, "dim_y": 10, "noise_sigma": 0.05, "seed": 5}},
  "train": {"loss": "flqmia", "head": "linear", "out_dim": 6, "lr": 0.001,
             "max_epochs": 2, "patience": 2, "entities_per_batch": 8, "seed": 5},
  "eval": {"ks": [1, 2]}
})";

}  // namespace

TEST_CASE("config --dump-defaults prints parseable JSON") {
    CmdResult r = run_cli("config --dump-defaults");
    CHECK(r.exit_code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.contains("data"));
    CHECK(j["train"]["loss"] == "flqmia");
}

TEST_CASE("gen writes per-split-per-modality files and a manifest, deterministically") {
    const fs::path dir = fresh_dir("gen");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);

    const fs::path out1 = dir / "d1";
    const fs::path out2 = dir / "d2";
    CHECK(run_cli("gen --config " + cfg.string() + " --out " + out1.string()).exit_code == 0);
    CHECK(run_cli("gen --config " + cfg.string() + " --out " + out2.string()).exit_code == 0);

    for (const char* name : {"train_x.smae", "train_y.smae", "val_x.smae", "val_y.smae",
                             "test_x.smae", "test_y.smae", "manifest.json"}) {
        CHECK(fs::exists(out1 / name));
    }
    // Same seed, byte-identical embedding files.
    CHECK(sma::read_file((out1 / "train_x.smae").string()) ==
          sma::read_file((out2 / "train_x.smae").string()));
    CHECK(sma::read_file((out1 / "test_y.smae").string()) ==
          sma::read_file((out2 / "test_y.smae").string()));
}

TEST_CASE("invalid config key exits 2 naming the key") {
    const fs::path dir = fresh_dir("badcfg");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, R"({"train": {"momentum": 0.9}})");
    CmdResult r = run_cli("gen --config " + cfg.string() + " --out " + (dir / "o").string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("train.momentum") != std::string::npos);
}

TEST_CASE("train writes checkpoint, metrics jsonl and csv; eval consumes them") {
    const fs::path dir = fresh_dir("train");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);

    const fs::path run = dir / "run";
    CmdResult r = run_cli("train --config " + cfg.string() + " --out " + run.string());
    CHECK(r.exit_code == 0);
    for (const char* name :
         {"head_x.smah", "head_y.smah", "checkpoint.json", "metrics.jsonl", "metrics.csv"}) {
        CHECK(fs::exists(run / name));
    }
    const auto meta = nlohmann::json::parse(sma::read_file((run / "checkpoint.json").string()));
    CHECK(meta["loss"] == "flqmia");

    // Loss override lands in the metadata and metrics.
    const fs::path run2 = dir / "run2";
    CmdResult r2 = run_cli("train --config " + cfg.string() + " --out " + run2.string() +
                           " --loss flvmia");
    CHECK(r2.exit_code == 0);
    const auto meta2 =
        nlohmann::json::parse(sma::read_file((run2 / "checkpoint.json").string()));
    CHECK(meta2["loss"] == "flvmia");
    CHECK(sma::read_file((run2 / "metrics.jsonl").string()).find("\"flvmia\"") !=
          std::string::npos);

    // Eval: JSON with both gap metrics and the recall table, byte-stable
    // across reruns.
    CmdResult ev = run_cli("eval --checkpoint " + run.string() + " --config " + cfg.string());
    CHECK(ev.exit_code == 0);
    const auto out = nlohmann::json::parse(ev.out);
    CHECK(out.contains("centroid_gap"));
    CHECK(out.contains("mean_pair_gap"));
    CHECK(out["recall"].contains("i2t@1"));
    CHECK(out["recall"].contains("t2i@2"));
    CHECK(out.contains("prototype_accuracy"));
    CmdResult ev2 = run_cli("eval --checkpoint " + run.string() + " --config " + cfg.string());
    CHECK(ev2.out == ev.out);

    CHECK(run_cli("eval --checkpoint " + run.string() + " --config " + cfg.string() +
                  " --split bogus")
              .exit_code == 2);
}

TEST_CASE("eval rejects checkpoint/data dim mismatches with exit 2") {
    const fs::path dir = fresh_dir("mismatch");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);
    const fs::path run = dir / "run";
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + run.string()).exit_code == 0);

    const fs::path cfg_wide = dir / "cfg_wide.json";
    write_text(cfg_wide, R"({
      "data": {"synth": {"num_entities": 24, "latent_dim": 4, "dim_x": 12, "dim_y": 12,
                          "seed": 5}}
    })");
    CmdResult r = run_cli("eval --checkpoint " + run.string() + " --config " + cfg_wide.string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("match") != std::string::npos);
}

TEST_CASE("train on generated files via --data matches the manifest pipeline") {
    const fs::path dir = fresh_dir("files");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);
    const fs::path data = dir / "data";
    REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + data.string()).exit_code == 0);
    const fs::path run = dir / "run";
    CmdResult r = run_cli("train --config " + cfg.string() + " --out " + run.string() +
                          " --data " + data.string());
    CHECK(r.exit_code == 0);
}

TEST_CASE("resume from a checkpoint is rerun-deterministic") {
    const fs::path dir = fresh_dir("resume");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);
    const fs::path base = dir / "base";
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + base.string()).exit_code ==
            0);

    const fs::path ra = dir / "ra", rb = dir / "rb";
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + ra.string() + " --resume " +
                    base.string())
                .exit_code == 0);
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + rb.string() + " --resume " +
                    base.string())
                .exit_code == 0);
    // Everything except the wall_time column must match.
    auto strip_wall_time = [](const std::string& csv) {
        std::string out;
        std::istringstream in(csv);
        std::string line;
        while (std::getline(in, line)) {
            out += line.substr(0, line.rfind(',')) + "\n";
        }
        return out;
    };
    CHECK(strip_wall_time(sma::read_file((ra / "metrics.csv").string())) ==
          strip_wall_time(sma::read_file((rb / "metrics.csv").string())));
}

TEST_CASE("divergence (non-finite data) exits 3") {
    const fs::path dir = fresh_dir("nan");
    const fs::path cfg = dir / "cfg.json";
    write_text(cfg, kSmallSynth);
    const fs::path data = dir / "data";
    REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + data.string()).exit_code == 0);

    // Poison the first float of the first record (header is 20 bytes, then
    // 8-byte id + 1 modality byte) with a quiet NaN.
    std::string bytes = sma::read_file((data / "train_x.smae").string());
    bytes[29] = '\x00';
    bytes[30] = '\x00';
    bytes[31] = '\xc0';
    bytes[32] = '\x7f';
    sma::write_file_atomic((data / "train_x.smae").string(), bytes);

    CmdResult r = run_cli("train --config " + cfg.string() + " --out " + (dir / "run").string() +
                          " --data " + data.string());
    CHECK(r.exit_code == 3);
}

TEST_CASE("missing data files exit 2") {
    CmdResult r = run_cli("train --out /tmp/sma_cli_nodata --data /nonexistent/dir");
    CHECK(r.exit_code == 2);
}

TEST_CASE("verify fast passes on a fresh build and writes its report") {
    const fs::path dir = fresh_dir("verify");
    const fs::path report = dir / "report.json";
    CmdResult r = run_cli("verify --level fast --report " + report.string());
    CHECK(r.exit_code == 0);
    const auto j = nlohmann::json::parse(sma::read_file(report.string()));
    CHECK(j["all_passed"] == true);
    CHECK(j["checks"].size() >= 10);
}

TEST_CASE("unknown subcommand or flags exit 2") {
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("train").exit_code == 2);  // --out is required
}
