#include "afd/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "afd/rng.hpp"

using ordered_json = nlohmann::ordered_json;

namespace afd {

namespace {

constexpr int kFormatVersion = 1;

ordered_json tensor_to_json(const Tensor& t) {
    ordered_json j;
    j["shape"] = t.shape();
    j["data"] = t.data();
    return j;
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
    AFD_CHECK(j.contains("shape") && j.contains("data"),
              "checkpoint: tensor '" + name + "' missing shape/data");
    std::vector<size_t> shape = j["shape"].get<std::vector<size_t>>();
    std::vector<double> data = j["data"].get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(data));
}

template <typename Params>
ordered_json params_to_json(const Params& params) {
    ordered_json j;
    for (const auto& [name, tensor] : params.named()) j[name] = tensor_to_json(*tensor);
    return j;
}

template <typename Params>
void params_from_json(Params& params, const nlohmann::json& j) {
    for (auto& [name, tensor] : params.named()) {
        AFD_CHECK(j.contains(name), "checkpoint: missing parameter '" + name + "'");
        *tensor = tensor_from_json(j[name], name);
    }
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    const StudentConfig& sc = ckpt.student.cfg;
    ordered_json j;
    j["format_version"] = kFormatVersion;
    j["student_config"] = {{"vocab", sc.vocab},       {"n_intents", sc.n_intents},
                           {"n_slots", sc.n_slots},   {"d_emb", sc.d_emb},
                           {"d_h_lstm", sc.d_h_lstm}, {"d_a", sc.d_a},
                           {"dropout", sc.dropout}};
    j["label_maps"] = {{"intents", ckpt.maps.intents},
                       {"slots", ckpt.maps.slots},
                       {"tokens", ckpt.maps.tokens}};
    j["student_params"] = params_to_json(ckpt.student);
    if (ckpt.adapter) {
        const AdapterConfig& ac = ckpt.adapter->cfg;
        j["adapter"] = {{"d_es", ac.d_es},
                        {"d_et", ac.d_et},
                        {"residual_width", to_string(ac.residual_width)},
                        {"params", params_to_json(*ckpt.adapter)}};
    } else {
        j["adapter"] = nullptr;
    }
    if (ckpt.linear_adapter) {
        j["linear_adapter"] = {{"d_es", ckpt.linear_adapter->d_es},
                               {"d_et", ckpt.linear_adapter->d_et},
                               {"params", params_to_json(*ckpt.linear_adapter)}};
    } else {
        j["linear_adapter"] = nullptr;
    }
    return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        detail::fail(std::string("checkpoint: parse error: ") + e.what());
    }
    AFD_CHECK(j.value("format_version", -1) == kFormatVersion,
              "checkpoint: unsupported format_version");

    Checkpoint ckpt;
    const auto& sc = j["student_config"];
    StudentConfig cfg;
    cfg.vocab = sc["vocab"].get<size_t>();
    cfg.n_intents = sc["n_intents"].get<size_t>();
    cfg.n_slots = sc["n_slots"].get<size_t>();
    cfg.d_emb = sc["d_emb"].get<size_t>();
    cfg.d_h_lstm = sc["d_h_lstm"].get<size_t>();
    cfg.d_a = sc["d_a"].get<size_t>();
    cfg.dropout = sc["dropout"].get<double>();
    ckpt.student.cfg = cfg;
    params_from_json(ckpt.student, j["student_params"]);

    const auto& lm = j["label_maps"];
    ckpt.maps.intents = lm["intents"].get<std::vector<std::string>>();
    ckpt.maps.slots = lm["slots"].get<std::vector<std::string>>();
    ckpt.maps.tokens = lm["tokens"].get<std::vector<std::string>>();
    for (size_t i = 0; i < ckpt.maps.intents.size(); ++i) {
        ckpt.maps.intent_id[ckpt.maps.intents[i]] = int(i);
    }
    for (size_t i = 0; i < ckpt.maps.slots.size(); ++i) {
        ckpt.maps.slot_id[ckpt.maps.slots[i]] = int(i);
    }
    for (size_t i = 0; i < ckpt.maps.tokens.size(); ++i) {
        ckpt.maps.token_id[ckpt.maps.tokens[i]] = int(i);
    }

    if (!j["adapter"].is_null()) {
        const auto& a = j["adapter"];
        AdapterConfig ac;
        ac.d_es = a["d_es"].get<size_t>();
        ac.d_et = a["d_et"].get<size_t>();
        ac.residual_width = residual_width_from_string(a["residual_width"].get<std::string>());
        AdapterParams params;
        params.cfg = ac;
        params_from_json(params, a["params"]);
        ckpt.adapter = std::move(params);
    }
    if (!j["linear_adapter"].is_null()) {
        const auto& a = j["linear_adapter"];
        LinearAdapterParams params;
        params.d_es = a["d_es"].get<size_t>();
        params.d_et = a["d_et"].get<size_t>();
        params_from_json(params, a["params"]);
        ckpt.linear_adapter = std::move(params);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    AFD_CHECK(out.good(), "cannot open for writing: " + path);
    out << checkpoint_to_json(ckpt) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    AFD_CHECK(in.good(), "cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
    std::string text = checkpoint_to_json(ckpt);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    AFD_CHECK(in.good(), "cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
    return buf;
}

}  // namespace afd
