#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "afd/checkpoint.hpp"
#include "afd/config.hpp"
#include "afd/data.hpp"
#include "afd/grad_suite.hpp"
#include "afd/teacher.hpp"
#include "afd/trainer.hpp"

namespace {

using namespace afd;

std::string metrics_json(const Metrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "{\"intent_acc\": %.2f, \"slot_f1\": %.2f, \"overall_acc\": %.2f}",
                  m.intent_acc, m.slot_f1, m.overall_acc);
    return buf;
}

std::vector<data::Utterance> load_split(const std::string& dir, const std::string& split) {
    std::string path = dir + "/" + split + ".jsonl";
    auto utts = data::load_corpus(path);
    AFD_CHECK(!utts.empty(), "usage error: split '" + split + "' at " + path + " is empty");
    return utts;
}

// --teacher file:PATH or synth:SEED
std::unique_ptr<TeacherBackend> make_teacher(const std::string& uri, size_t d_et, size_t vocab) {
    auto colon = uri.find(':');
    AFD_CHECK(colon != std::string::npos,
              "usage error: --teacher expects file:PATH or synth:SEED, got '" + uri + "'");
    std::string kind = uri.substr(0, colon);
    std::string rest = uri.substr(colon + 1);
    if (kind == "file") return FileTeacher::load(rest, d_et);
    if (kind == "synth") {
        uint64_t seed = 0;
        try {
            seed = std::stoull(rest);
        } catch (const std::exception&) {
            detail::fail("usage error: synth teacher seed must be an integer, got '" + rest +
                         "'");
        }
        return std::make_unique<SyntheticFrozenTeacher>(seed, vocab, d_et);
    }
    detail::fail("usage error: unknown teacher kind '" + kind + "'");
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return RunConfig::load(path);
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<uint64_t> seeds;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) {
                seeds.push_back(std::stoull(cur));
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    AFD_CHECK(!seeds.empty(), "usage error: --seeds expects a comma-separated list");
    return seeds;
}

int cmd_gen_synth(const data::SynthSpec& spec, const std::string& out_dir) {
    data::SynthCorpus corpus = data::gen_synthetic(spec);
    data::write_synth(corpus, out_dir);
    std::cerr << "wrote " << out_dir << "/{train,dev,test,teacher}.jsonl\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& teacher_uri, const std::string& log_path,
              const std::string& out_dir) {
    RunConfig run_cfg = load_config_or_default(config_path);
    auto train_utts = load_split(data_dir, "train");
    auto dev_utts = load_split(data_dir, "dev");
    auto maps = data::LabelMaps::build(train_utts);
    TrainConfig cfg = run_cfg.to_train_config(maps);

    std::unique_ptr<TeacherBackend> teacher;
    if (!teacher_uri.empty()) {
        teacher = make_teacher(teacher_uri, cfg.adapter.d_et, maps.tokens.size());
    } else {
        AFD_CHECK(cfg.distill.ablation == Ablation::NoDistill,
                  "usage error: --teacher is required unless ablation is no_distill");
    }

    TrainResult result = train(train_utts, dev_utts, maps, teacher.get(), cfg);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir + "/config.json");
        cfg_out << run_cfg.to_json() << "\n";
    }
    std::string log_file = log_path.empty() ? out_dir + "/log.jsonl" : log_path;
    {
        std::ofstream log_out(log_file);
        for (const EpochLog& entry : result.log) log_out << to_json_line(entry) << "\n";
    }
    Checkpoint ckpt{result.student, maps, result.adapter, result.linear_adapter};
    std::string ckpt_path = out_dir + "/checkpoint.json";
    save_checkpoint(ckpt, ckpt_path);

    nlohmann::ordered_json summary;
    summary["best_epoch"] = result.best_epoch;
    summary["dev"] = nlohmann::ordered_json::parse(metrics_json(result.best_dev));
    summary["checkpoint"] = ckpt_path;
    summary["digest"] = file_digest(ckpt_path);
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto utts = load_split(data_dir, split);
    Metrics m = evaluate(ckpt.student, utts, ckpt.maps);
    std::cout << metrics_json(m) << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& teacher_uri, const std::string& seeds_csv,
               const std::string& out_path) {
    RunConfig run_cfg = load_config_or_default(config_path);
    auto train_utts = load_split(data_dir, "train");
    auto dev_utts = load_split(data_dir, "dev");
    auto test_utts = load_split(data_dir, "test");
    auto maps = data::LabelMaps::build(train_utts);
    TrainConfig cfg = run_cfg.to_train_config(maps);
    auto teacher = make_teacher(teacher_uri, cfg.adapter.d_et, maps.tokens.size());
    std::vector<uint64_t> seeds = parse_seed_list(seeds_csv);

    AblationReport report = ablate(train_utts, dev_utts, test_utts, maps, teacher.get(), cfg,
                                   seeds);
    std::string text = report.to_json();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

int cmd_grad_check(uint64_t seed) {
    auto results = run_grad_suite(seed);
    bool all_pass = true;
    std::printf("%-36s %-12s %s\n", "check", "max_rel_err", "status");
    for (const auto& r : results) {
        std::printf("%-36s %-12.3e %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

int cmd_schedule(const std::string& config_path) {
    RunConfig run_cfg = load_config_or_default(config_path);
    DistillConfig halved = run_cfg.distill;
    halved.schedule = ScheduleVariant::Halved;
    DistillConfig literal = run_cfg.distill;
    literal.schedule = ScheduleVariant::Literal;
    std::printf("%-6s %-18s %s\n", "epoch", "halved", "literal");
    for (int e = 0; e <= run_cfg.distill.epochs; ++e) {
        std::printf("%-6d %.12f %.12f\n", e, distill_weight(e, halved), distill_weight(e, literal));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive feature distillation for joint intent detection and slot filling"};
    app.require_subcommand(1);

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic corpus + teacher file");
    data::SynthSpec spec;
    std::string gen_out;
    gen->add_option("--seed", spec.seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n-train", spec.n_train, "Training utterances");
    gen->add_option("--n-dev", spec.n_dev, "Dev utterances");
    gen->add_option("--n-test", spec.n_test, "Test utterances");
    gen->add_option("--vocab", spec.vocab, "Surface vocabulary size");
    gen->add_option("--n-intents", spec.n_intents, "Number of intents");
    gen->add_option("--n-slot-types", spec.n_slot_types, "Number of slot types");
    gen->add_option("--d-et", spec.d_et, "Teacher embedding dimension");
    gen->add_option("--noise-sigma", spec.noise_sigma, "Teacher embedding noise");

    // train
    auto* tr = app.add_subcommand("train", "Train a student with feature distillation");
    std::string tr_config, tr_data, tr_teacher, tr_log, tr_out;
    tr->add_option("--config", tr_config, "Run config JSON");
    tr->add_option("--data", tr_data, "Directory with {train,dev,test}.jsonl")->required();
    tr->add_option("--teacher", tr_teacher, "file:PATH or synth:SEED");
    tr->add_option("--log", tr_log, "Epoch log path (default OUT/log.jsonl)");
    tr->add_option("--out", tr_out, "Run directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    std::string ev_ckpt, ev_data, ev_split = "test";
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
    ev->add_option("--data", ev_data, "Directory with {train,dev,test}.jsonl")->required();
    ev->add_option("--split", ev_split, "train, dev or test");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run the ablation arms over several seeds");
    std::string ab_config, ab_data, ab_teacher, ab_seeds, ab_out;
    ab->add_option("--config", ab_config, "Run config JSON");
    ab->add_option("--data", ab_data, "Directory with {train,dev,test}.jsonl")->required();
    ab->add_option("--teacher", ab_teacher, "file:PATH or synth:SEED")->required();
    ab->add_option("--seeds", ab_seeds, "Comma-separated seed list")->required();
    ab->add_option("--out", ab_out, "Optional report path");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
    uint64_t gc_seed = 0;
    gc->add_option("--seed", gc_seed, "Suite seed");

    // schedule
    auto* sc = app.add_subcommand("schedule", "Print the distillation coefficient per epoch");
    std::string sc_config;
    sc->add_option("--config", sc_config, "Run config JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_synth(spec, gen_out);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_teacher, tr_log, tr_out);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split);
        if (ab->parsed()) return cmd_ablate(ab_config, ab_data, ab_teacher, ab_seeds, ab_out);
        if (gc->parsed()) return cmd_grad_check(gc_seed);
        if (sc->parsed()) return cmd_schedule(sc_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
