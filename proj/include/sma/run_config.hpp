#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sma/data.hpp"
#include "sma/trainer.hpp"

namespace sma {

// Parsed form of the JSON run configuration. Unknown keys anywhere in the
// document are rejected with the offending key named.
struct RunConfig {
    std::optional<SynthConfig> synth;        // data.synth
    std::optional<std::string> manifest;     // data.manifest (path)
    TrainConfig train;
    std::vector<std::size_t> eval_ks = {1, 5};
    std::optional<std::string> class_map;    // eval.class_map (path)
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Default configuration as pretty-printed JSON (config --dump-defaults).
std::string dump_default_config();

// Serialization helpers for the CLI outputs.
std::string metrics_json_line(const MetricsRecord& r, LossKind loss);
std::string metrics_csv(const std::vector<MetricsRecord>& history);

}  // namespace sma
