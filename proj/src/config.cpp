#include "afd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

using ordered_json = nlohmann::ordered_json;

namespace afd {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known,
                const std::string& scope) {
    for (const auto& [key, value] : j.items()) {
        AFD_CHECK(known.count(key) > 0, "unknown config key '" + scope + key + "'");
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

TrainConfig RunConfig::to_train_config(const data::LabelMaps& maps) const {
    TrainConfig cfg;
    cfg.student = student;
    cfg.student.vocab = maps.tokens.size();
    cfg.student.n_intents = maps.intents.size();
    cfg.student.n_slots = maps.slots.size();
    cfg.adapter = adapter;
    cfg.adapter.d_es = cfg.student.d_es();
    cfg.distill = distill;
    cfg.optim = optim;
    cfg.batch_size = batch_size;
    cfg.ignore_index = ignore_index;
    cfg.seed = seed;
    return cfg;
}

std::string RunConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["student"] = {{"d_emb", student.d_emb},
                    {"d_h_lstm", student.d_h_lstm},
                    {"d_a", student.d_a},
                    {"dropout", student.dropout}};
    j["adapter"] = {{"d_et", adapter.d_et},
                    {"residual_width", to_string(adapter.residual_width)}};
    j["distill"] = {{"lambda_initial", distill.lambda_initial},
                    {"lambda_final", distill.lambda_final},
                    {"epochs", distill.epochs},
                    {"schedule", to_string(distill.schedule)},
                    {"clamp_nonnegative", distill.clamp_nonnegative},
                    {"ablation", to_string(distill.ablation)}};
    j["optimizer"] = {{"learning_rate", optim.learning_rate},
                      {"beta1", optim.beta1},
                      {"beta2", optim.beta2},
                      {"eps", optim.eps},
                      {"clip_norm", optim.clip_norm}};
    j["train"] = {{"batch_size", batch_size}, {"ignore_index", ignore_index}};
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        detail::fail(std::string("config: parse error: ") + e.what());
    }
    check_keys(j, {"seed", "student", "adapter", "distill", "optimizer", "train"}, "");

    RunConfig cfg;
    read(j, "seed", cfg.seed);
    if (j.contains("student")) {
        const auto& s = j["student"];
        check_keys(s, {"d_emb", "d_h_lstm", "d_a", "dropout"}, "student.");
        read(s, "d_emb", cfg.student.d_emb);
        read(s, "d_h_lstm", cfg.student.d_h_lstm);
        read(s, "d_a", cfg.student.d_a);
        read(s, "dropout", cfg.student.dropout);
    }
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        check_keys(a, {"d_et", "residual_width"}, "adapter.");
        read(a, "d_et", cfg.adapter.d_et);
        if (a.contains("residual_width")) {
            cfg.adapter.residual_width =
                residual_width_from_string(a["residual_width"].get<std::string>());
        }
    }
    if (j.contains("distill")) {
        const auto& d = j["distill"];
        check_keys(d,
                   {"lambda_initial", "lambda_final", "epochs", "schedule", "clamp_nonnegative",
                    "ablation"},
                   "distill.");
        read(d, "lambda_initial", cfg.distill.lambda_initial);
        read(d, "lambda_final", cfg.distill.lambda_final);
        read(d, "epochs", cfg.distill.epochs);
        if (d.contains("schedule")) {
            cfg.distill.schedule = schedule_from_string(d["schedule"].get<std::string>());
        }
        read(d, "clamp_nonnegative", cfg.distill.clamp_nonnegative);
        if (d.contains("ablation")) {
            cfg.distill.ablation = ablation_from_string(d["ablation"].get<std::string>());
        }
        AFD_CHECK(cfg.distill.lambda_initial >= 0.0 && cfg.distill.lambda_final >= 0.0,
                  "config: lambda values must be nonnegative");
        AFD_CHECK(cfg.distill.epochs >= 1, "config: distill.epochs must be >= 1");
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        check_keys(o, {"learning_rate", "beta1", "beta2", "eps", "clip_norm"}, "optimizer.");
        read(o, "learning_rate", cfg.optim.learning_rate);
        read(o, "beta1", cfg.optim.beta1);
        read(o, "beta2", cfg.optim.beta2);
        read(o, "eps", cfg.optim.eps);
        read(o, "clip_norm", cfg.optim.clip_norm);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, {"batch_size", "ignore_index"}, "train.");
        read(t, "batch_size", cfg.batch_size);
        read(t, "ignore_index", cfg.ignore_index);
        AFD_CHECK(cfg.batch_size >= 1, "config: train.batch_size must be >= 1");
    }
    AFD_CHECK(cfg.student.dropout >= 0.0 && cfg.student.dropout < 1.0,
              "config: student.dropout must be in [0, 1)");
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    AFD_CHECK(in.good(), "cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace afd
