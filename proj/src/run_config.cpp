#include "sma/run_config.hpp"

#include <set>
#include <sstream>

#include "json.hpp"

namespace sma {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (known.find(it.key()) == known.end()) {
            throw ShapeError("config: unknown key \"" + where + it.key() + "\"");
        }
    }
}

SynthConfig parse_synth(const json& j) {
    reject_unknown_keys(j,
                        {"num_entities", "views_x", "views_y", "latent_dim", "dim_x", "dim_y",
                         "noise_sigma", "nonlinearity", "seed"},
                        "data.synth.");
    SynthConfig cfg;
    cfg.num_entities = j.value("num_entities", cfg.num_entities);
    cfg.views_x = j.value("views_x", cfg.views_x);
    cfg.views_y = j.value("views_y", cfg.views_y);
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    cfg.dim_x = j.value("dim_x", cfg.dim_x);
    cfg.dim_y = j.value("dim_y", cfg.dim_y);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("nonlinearity")) {
        const std::string nl = j.at("nonlinearity").get<std::string>();
        if (nl == "none") {
            cfg.nonlinearity = Nonlinearity::None;
        } else if (nl == "tanh") {
            cfg.nonlinearity = Nonlinearity::Tanh;
        } else {
            throw ShapeError("config: data.synth.nonlinearity must be \"none\" or \"tanh\"");
        }
    }
    return cfg;
}

TrainConfig parse_train(const json& j) {
    reject_unknown_keys(j,
                        {"loss", "head", "tau", "temperature", "lr", "max_epochs", "patience",
                         "entities_per_batch", "seed", "out_dim", "hidden_dim", "optimizer",
                         "weight_decay", "beta1", "beta2", "init_log_scale", "init_bias"},
                        "train.");
    TrainConfig cfg;
    if (j.contains("loss")) cfg.loss = loss_kind_from_name(j.at("loss").get<std::string>());
    if (j.contains("head")) {
        const std::string h = j.at("head").get<std::string>();
        if (h == "linear") {
            cfg.head = HeadKind::Linear;
        } else if (h == "glu") {
            cfg.head = HeadKind::Glu;
        } else {
            throw ShapeError("config: train.head must be \"linear\" or \"glu\"");
        }
    }
    if (j.contains("optimizer")) {
        const std::string o = j.at("optimizer").get<std::string>();
        if (o == "lion") {
            cfg.optimizer = OptimizerKind::Lion;
        } else if (o == "sgd") {
            cfg.optimizer = OptimizerKind::Sgd;
        } else {
            throw ShapeError("config: train.optimizer must be \"lion\" or \"sgd\"");
        }
    }
    cfg.tau = j.value("tau", cfg.tau);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.entities_per_batch = j.value("entities_per_batch", cfg.entities_per_batch);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dim = j.value("out_dim", cfg.out_dim);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.init_log_scale = j.value("init_log_scale", cfg.init_log_scale);
    cfg.init_bias = j.value("init_bias", cfg.init_bias);
    return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ShapeError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(j, {"data", "train", "eval"}, "");

    RunConfig cfg;
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown_keys(d, {"synth", "manifest"}, "data.");
        if (d.contains("synth") && d.contains("manifest")) {
            throw ShapeError("config: data.synth and data.manifest are mutually exclusive");
        }
        if (d.contains("synth")) cfg.synth = parse_synth(d.at("synth"));
        if (d.contains("manifest")) cfg.manifest = d.at("manifest").get<std::string>();
    }
    if (!cfg.synth.has_value() && !cfg.manifest.has_value()) cfg.synth = SynthConfig{};
    if (j.contains("train")) cfg.train = parse_train(j.at("train"));
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown_keys(e, {"ks", "class_map"}, "eval.");
        if (e.contains("ks")) cfg.eval_ks = e.at("ks").get<std::vector<std::size_t>>();
        if (e.contains("class_map")) cfg.class_map = e.at("class_map").get<std::string>();
    }
    if (cfg.eval_ks.empty()) throw ShapeError("config: eval.ks must not be empty");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_file(path));
}

std::string dump_default_config() {
    const SynthConfig s{};
    const TrainConfig t{};
    json j;
    j["data"]["synth"] = {{"num_entities", s.num_entities},
                          {"views_x", s.views_x},
                          {"views_y", s.views_y},
                          {"latent_dim", s.latent_dim},
                          {"dim_x", s.dim_x},
                          {"dim_y", s.dim_y},
                          {"noise_sigma", s.noise_sigma},
                          {"nonlinearity", "tanh"},
                          {"seed", s.seed}};
    j["train"] = {{"loss", loss_kind_name(t.loss)},
                  {"head", t.head == HeadKind::Glu ? "glu" : "linear"},
                  {"tau", t.tau},
                  {"temperature", t.temperature},
                  {"lr", t.lr},
                  {"max_epochs", t.max_epochs},
                  {"patience", t.patience},
                  {"entities_per_batch", t.entities_per_batch},
                  {"seed", t.seed},
                  {"out_dim", t.out_dim},
                  {"hidden_dim", t.hidden_dim},
                  {"optimizer", t.optimizer == OptimizerKind::Lion ? "lion" : "sgd"},
                  {"weight_decay", t.weight_decay},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"init_log_scale", t.init_log_scale},
                  {"init_bias", t.init_bias}};
    j["eval"] = {{"ks", {1, 5}}};
    return j.dump(2) + "\n";
}

std::string metrics_json_line(const MetricsRecord& r, LossKind loss) {
    json j = {{"epoch", r.epoch},
              {"loss", loss_kind_name(loss)},
              {"train_loss", r.train_loss},
              {"val_loss", r.val_loss},
              {"recall1_i2t", r.recall1_i2t},
              {"recall5_i2t", r.recall5_i2t},
              {"recall1_t2i", r.recall1_t2i},
              {"recall5_t2i", r.recall5_t2i},
              {"centroid_gap", r.centroid_gap},
              {"mean_pair_gap", r.mean_pair_gap},
              {"wall_time", r.wall_time}};
    return j.dump();
}

std::string metrics_csv(const std::vector<MetricsRecord>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,recall1_i2t,recall5_i2t,recall1_t2i,recall5_t2i,"
           "centroid_gap,mean_pair_gap,wall_time\n";
    out.precision(10);
    for (const MetricsRecord& r : history) {
        out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.recall1_i2t << ','
            << r.recall5_i2t << ',' << r.recall1_t2i << ',' << r.recall5_t2i << ','
            << r.centroid_gap << ',' << r.mean_pair_gap << ',' << r.wall_time << '\n';
    }
    return out.str();
}

}  // namespace sma
