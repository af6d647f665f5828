#include "afd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "afd/rng.hpp"
#include "afd/tensor.hpp"

using ordered_json = nlohmann::ordered_json;

namespace afd::data {

void validate_bio(const std::vector<std::string>& tags, const std::string& id) {
    std::string prev = "O";
    for (const std::string& tag : tags) {
        if (tag == "O") {
            prev = tag;
            continue;
        }
        AFD_CHECK(tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-',
                  "utterance " + id + ": malformed slot tag '" + tag + "'");
        if (tag[0] == 'I') {
            std::string type = tag.substr(2);
            bool continues = prev.size() >= 3 && (prev[0] == 'B' || prev[0] == 'I') &&
                             prev.substr(2) == type;
            AFD_CHECK(continues, "utterance " + id + ": BIO violation, '" + tag +
                                     "' not preceded by B-" + type + " or I-" + type);
        }
        prev = tag;
    }
}

LabelMaps LabelMaps::build(const std::vector<Utterance>& training) {
    std::set<std::string> intent_set, slot_set, token_set;
    for (const Utterance& u : training) {
        intent_set.insert(u.intent);
        for (const auto& t : u.tokens) token_set.insert(t);
        for (const auto& s : u.slot_tags) slot_set.insert(s);
    }
    LabelMaps maps;
    maps.intents.assign(intent_set.begin(), intent_set.end());
    maps.slots.assign(slot_set.begin(), slot_set.end());
    maps.tokens = {"<pad>", "<unk>"};
    maps.tokens.insert(maps.tokens.end(), token_set.begin(), token_set.end());
    for (size_t i = 0; i < maps.intents.size(); ++i) maps.intent_id[maps.intents[i]] = int(i);
    for (size_t i = 0; i < maps.slots.size(); ++i) maps.slot_id[maps.slots[i]] = int(i);
    for (size_t i = 0; i < maps.tokens.size(); ++i) maps.token_id[maps.tokens[i]] = int(i);
    return maps;
}

int LabelMaps::token_or_unk(const std::string& tok) const {
    auto it = token_id.find(tok);
    return it == token_id.end() ? kUnkToken : it->second;
}

int LabelMaps::require_intent(const std::string& label) const {
    auto it = intent_id.find(label);
    AFD_CHECK(it != intent_id.end(), "label error: unknown intent '" + label + "'");
    return it->second;
}

int LabelMaps::require_slot(const std::string& label) const {
    auto it = slot_id.find(label);
    AFD_CHECK(it != slot_id.end(), "label error: unknown slot tag '" + label + "'");
    return it->second;
}

size_t EncodedBatch::length(size_t i) const {
    size_t n = 0;
    for (double m : mask[i]) n += m == 1.0 ? 1 : 0;
    return n;
}

EncodedBatch encode_batch(const std::vector<Utterance>& utts, const LabelMaps& maps,
                          int ignore_index, bool require_labels) {
    AFD_CHECK(!utts.empty(), "encode_batch: empty utterance list");
    size_t max_len = 0;
    for (const Utterance& u : utts) max_len = std::max(max_len, u.tokens.size());

    EncodedBatch batch;
    for (const Utterance& u : utts) {
        AFD_CHECK(!u.tokens.empty(), "utterance " + u.id + ": no tokens");
        std::vector<int> ids(max_len, LabelMaps::kPadToken);
        std::vector<double> mask(max_len, 0.0);
        std::vector<int> slots(max_len, ignore_index);
        for (size_t j = 0; j < u.tokens.size(); ++j) {
            ids[j] = maps.token_or_unk(u.tokens[j]);
            mask[j] = 1.0;
            if (require_labels) {
                slots[j] = maps.require_slot(u.slot_tags[j]);
            } else {
                auto it = maps.slot_id.find(u.slot_tags[j]);
                slots[j] = it == maps.slot_id.end() ? ignore_index : it->second;
            }
        }
        int intent = -1;
        if (require_labels) {
            intent = maps.require_intent(u.intent);
        } else {
            auto it = maps.intent_id.find(u.intent);
            intent = it == maps.intent_id.end() ? -1 : it->second;
        }
        batch.token_ids.push_back(std::move(ids));
        batch.mask.push_back(std::move(mask));
        batch.slot_targets.push_back(std::move(slots));
        batch.intent_targets.push_back(intent);
        batch.ids.push_back(u.id);
    }
    return batch;
}

namespace {

std::vector<std::string> as_string_list(const nlohmann::json& j, const std::string& key,
                                        size_t line_no) {
    AFD_CHECK(j.contains(key) && j[key].is_array(),
              "parse error at line " + std::to_string(line_no) + ": missing array '" + key + "'");
    std::vector<std::string> out;
    for (const auto& v : j[key]) {
        AFD_CHECK(v.is_string(), "parse error at line " + std::to_string(line_no) +
                                     ": non-string entry in '" + key + "'");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

std::vector<Utterance> load_corpus(const std::string& path) {
    std::ifstream in(path);
    AFD_CHECK(in.good(), "cannot open corpus file: " + path);
    std::vector<Utterance> utts;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            detail::fail("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        AFD_CHECK(j.contains("id") && j["id"].is_string(),
                  "parse error at line " + std::to_string(line_no) + ": missing string 'id'");
        AFD_CHECK(j.contains("intent") && j["intent"].is_string(),
                  "parse error at line " + std::to_string(line_no) + ": missing string 'intent'");
        Utterance u;
        u.id = j["id"].get<std::string>();
        u.tokens = as_string_list(j, "tokens", line_no);
        u.slot_tags = as_string_list(j, "slots", line_no);
        u.intent = j["intent"].get<std::string>();

        AFD_CHECK(!u.tokens.empty(), "utterance " + u.id + ": no tokens");
        AFD_CHECK(u.tokens.size() == u.slot_tags.size(),
                  "utterance " + u.id + ": " + std::to_string(u.tokens.size()) + " tokens but " +
                      std::to_string(u.slot_tags.size()) + " slot tags");
        validate_bio(u.slot_tags, u.id);
        AFD_CHECK(seen.insert(u.id).second, "duplicate id '" + u.id + "'");
        utts.push_back(std::move(u));
    }
    return utts;
}

void write_corpus(const std::vector<Utterance>& utts, const std::string& path) {
    std::ofstream out(path);
    AFD_CHECK(out.good(), "cannot open for writing: " + path);
    for (const Utterance& u : utts) {
        ordered_json j;
        j["id"] = u.id;
        j["tokens"] = u.tokens;
        j["slots"] = u.slot_tags;
        j["intent"] = u.intent;
        out << j.dump() << "\n";
    }
}

TeacherTable load_teacher_embeddings(const std::string& path, size_t d_et) {
    std::ifstream in(path);
    AFD_CHECK(in.good(), "cannot open teacher embedding file: " + path);
    TeacherTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            detail::fail("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        AFD_CHECK(j.contains("id") && j["id"].is_string() && j.contains("embedding") &&
                      j["embedding"].is_array(),
                  "parse error at line " + std::to_string(line_no) +
                      ": expected keys id/embedding");
        std::string id = j["id"].get<std::string>();
        std::vector<double> vec = j["embedding"].get<std::vector<double>>();
        AFD_CHECK(vec.size() == d_et, "dimension error: embedding for id '" + id + "' has length " +
                                          std::to_string(vec.size()) + ", expected " +
                                          std::to_string(d_et));
        AFD_CHECK(table.emplace(id, std::move(vec)).second, "duplicate id '" + id + "'");
    }
    return table;
}

void write_teacher_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                              const std::string& path) {
    std::ofstream out(path);
    AFD_CHECK(out.good(), "cannot open for writing: " + path);
    for (const auto& [id, vec] : rows) {
        ordered_json j;
        j["id"] = id;
        j["embedding"] = vec;
        out << j.dump() << "\n";
    }
}

// --- synthetic generator ---

namespace {

struct TemplateItem {
    bool is_slot;
    size_t slot_type;  // valid when is_slot
};

using Template = std::vector<TemplateItem>;

struct SynthModel {
    std::vector<std::string> carrier_pool;
    std::vector<std::vector<std::string>> intent_pools;     // per intent
    std::vector<std::vector<std::string>> slot_pools;       // per slot type
    std::vector<std::vector<Template>> templates;           // per intent
    std::vector<std::vector<double>> projection;            // d_et x (n_int + n_slot)
};

SynthModel build_synth_model(const SynthSpec& spec, Rng& root) {
    AFD_CHECK(spec.n_train >= 1 && spec.n_dev >= 1 && spec.n_test >= 1 && spec.vocab >= 1 &&
                  spec.n_intents >= 1 && spec.n_slot_types >= 1 && spec.d_et >= 1,
              "gen_synthetic: all counts must be >= 1");

    size_t carrier = std::max<size_t>(4, spec.vocab * 2 / 5);
    AFD_CHECK(spec.vocab > carrier, "config error: vocab too small");
    size_t rest = spec.vocab - carrier;
    size_t per_intent = rest / 2 / spec.n_intents;
    size_t per_slot = (rest - per_intent * spec.n_intents) / spec.n_slot_types;
    AFD_CHECK(per_intent >= 2 && per_slot >= 2,
              "config error: n_intents/n_slot_types exceed vocab capacity (" +
                  std::to_string(spec.vocab) + " tokens for " + std::to_string(spec.n_intents) +
                  " intents and " + std::to_string(spec.n_slot_types) + " slot types)");

    SynthModel model;
    size_t next = 0;
    auto take = [&](size_t count) {
        std::vector<std::string> pool;
        for (size_t i = 0; i < count; ++i) pool.push_back("w" + std::to_string(next++));
        return pool;
    };
    model.carrier_pool = take(carrier);
    for (size_t i = 0; i < spec.n_intents; ++i) model.intent_pools.push_back(take(per_intent));
    for (size_t t = 0; t < spec.n_slot_types; ++t) model.slot_pools.push_back(take(per_slot));

    // every intent owns a few templates drawn over the full slot-type
    // inventory, so slot types alone pin the intent down only weakly
    Rng trng = root.stream("templates");
    for (size_t i = 0; i < spec.n_intents; ++i) {
        std::vector<Template> tpls;
        for (int v = 0; v < 3; ++v) {
            Template tpl;
            size_t n_items = 4 + size_t(trng.uniform_int(0, 3));
            size_t slots_left = 2;
            for (size_t k = 0; k < n_items; ++k) {
                if (slots_left > 0 && trng.uniform() < 0.5) {
                    size_t type = size_t(trng.uniform_int(0, int(spec.n_slot_types)));
                    tpl.push_back({true, type});
                    --slots_left;
                } else {
                    tpl.push_back({false, 0});
                }
            }
            tpls.push_back(std::move(tpl));
        }
        model.templates.push_back(std::move(tpls));
    }

    Rng prng = root.stream("projection");
    size_t dim = spec.n_intents + spec.n_slot_types;
    double sd = 1.0 / std::sqrt(double(spec.d_et));
    model.projection.assign(spec.d_et, std::vector<double>(dim));
    for (auto& row : model.projection) {
        for (auto& v : row) v = prng.normal(0.0, sd);
    }
    return model;
}

Utterance sample_utterance(const SynthSpec& spec, const SynthModel& model, Rng& rng,
                           const std::string& id, std::vector<double>& indicator) {
    size_t intent = size_t(rng.uniform_int(0, int(spec.n_intents)));
    const auto& tpls = model.templates[intent];
    const Template& tpl = tpls[size_t(rng.uniform_int(0, int(tpls.size())))];

    indicator.assign(spec.n_intents + spec.n_slot_types, 0.0);
    indicator[intent] = 1.0;

    Utterance u;
    u.id = id;
    u.intent = "intent" + std::to_string(intent);
    auto pick = [&](const std::vector<std::string>& pool) {
        return pool[size_t(rng.uniform_int(0, int(pool.size())))];
    };
    for (const TemplateItem& item : tpl) {
        if (!item.is_slot) {
            bool from_carrier = rng.uniform() < 0.88;
            u.tokens.push_back(
                pick(from_carrier ? model.carrier_pool : model.intent_pools[intent]));
            u.slot_tags.push_back("O");
        } else {
            indicator[spec.n_intents + item.slot_type] += 1.0;
            size_t span = rng.uniform() < 0.8 ? 1 : 2;
            std::string type = "slot" + std::to_string(item.slot_type);
            for (size_t k = 0; k < span; ++k) {
                u.tokens.push_back(pick(model.slot_pools[item.slot_type]));
                u.slot_tags.push_back((k == 0 ? "B-" : "I-") + type);
            }
        }
    }
    return u;
}

std::vector<double> project_indicator(const SynthModel& model, const std::vector<double>& v,
                                      double sigma, Rng& noise) {
    std::vector<double> e(model.projection.size());
    for (size_t j = 0; j < e.size(); ++j) {
        double sum = 0.0;
        for (size_t k = 0; k < v.size(); ++k) sum += model.projection[j][k] * v[k];
        e[j] = sum + sigma * noise.normal();
    }
    return e;
}

}  // namespace

SynthCorpus gen_synthetic(const SynthSpec& spec) {
    Rng root(spec.seed);
    SynthModel model = build_synth_model(spec, root);
    Rng srng = root.stream("samples");
    Rng nrng = root.stream("noise");

    SynthCorpus corpus;
    auto gen_split = [&](std::vector<Utterance>& split, const std::string& prefix, size_t count) {
        for (size_t i = 0; i < count; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s-%04zu", prefix.c_str(), i);
            std::vector<double> indicator;
            Utterance u = sample_utterance(spec, model, srng, buf, indicator);
            corpus.teacher.emplace_back(u.id,
                                        project_indicator(model, indicator, spec.noise_sigma,
                                                          nrng));
            split.push_back(std::move(u));
        }
    };
    gen_split(corpus.train, "train", spec.n_train);
    gen_split(corpus.dev, "dev", spec.n_dev);
    gen_split(corpus.test, "test", spec.n_test);
    return corpus;
}

void write_synth(const SynthCorpus& corpus, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_corpus(corpus.train, out_dir + "/train.jsonl");
    write_corpus(corpus.dev, out_dir + "/dev.jsonl");
    write_corpus(corpus.test, out_dir + "/test.jsonl");
    write_teacher_embeddings(corpus.teacher, out_dir + "/teacher.jsonl");
}

}  // namespace afd::data
