#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "afd/checkpoint.hpp"
#include "afd/config.hpp"
#include "afd/rng.hpp"
#include "afd/trainer.hpp"

using namespace afd;

namespace {

DistillConfig paper_constants() {
    DistillConfig cfg;
    cfg.lambda_initial = 0.1;
    cfg.lambda_final = 0.7;
    cfg.epochs = 50;
    return cfg;
}

struct SmallSetup {
    std::vector<data::Utterance> train, dev;
    data::LabelMaps maps;
    std::unique_ptr<FileTeacher> teacher;
    TrainConfig cfg;
};

SmallSetup small_setup(int epochs, uint64_t seed, Ablation ablation = Ablation::Full) {
    data::SynthSpec spec;
    spec.seed = 99;
    spec.n_train = 48;
    spec.n_dev = 16;
    spec.n_test = 8;
    spec.vocab = 60;
    spec.n_intents = 3;
    spec.n_slot_types = 3;
    spec.d_et = 16;
    auto corpus = data::gen_synthetic(spec);

    SmallSetup s;
    s.train = corpus.train;
    s.dev = corpus.dev;
    s.maps = data::LabelMaps::build(s.train);
    data::TeacherTable table(corpus.teacher.begin(), corpus.teacher.end());
    s.teacher = std::make_unique<FileTeacher>(table, spec.d_et);

    RunConfig run;
    run.seed = seed;
    run.student.d_emb = 12;
    run.student.d_h_lstm = 10;
    run.student.d_a = 12;
    run.adapter.d_et = spec.d_et;
    run.distill.epochs = epochs;
    run.distill.ablation = ablation;
    s.cfg = run.to_train_config(s.maps);
    return s;
}

}  // namespace

TEST_CASE("distill_weight boundary values with the reference constants") {
    DistillConfig cfg = paper_constants();

    cfg.schedule = ScheduleVariant::Halved;
    CHECK(std::abs(distill_weight(0, cfg) - 0.1) <= 1e-12);
    CHECK(std::abs(distill_weight(cfg.epochs, cfg) - 0.7) <= 1e-12);

    cfg.schedule = ScheduleVariant::Literal;
    CHECK(std::abs(distill_weight(cfg.epochs, cfg) - 0.7) <= 1e-12);
    // halfway: 1 + cos(pi/2) = 1, so the literal form returns lambda_initial
    CHECK(std::abs(distill_weight(cfg.epochs / 2, cfg) - 0.1) <= 1e-10);
    // at zero the literal form dips negative and clamps
    CHECK(distill_weight(0, cfg) == 0.0);
    cfg.clamp_nonnegative = false;
    CHECK(std::abs(distill_weight(0, cfg) - (-0.5)) <= 1e-12);
}

TEST_CASE("distill_weight rejects out-of-range epochs") {
    DistillConfig cfg = paper_constants();
    CHECK_THROWS(distill_weight(cfg.epochs + 1, cfg));
    CHECK_THROWS(distill_weight(-1, cfg));
}

TEST_CASE("halved schedule is monotone for random coefficient pairs") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        DistillConfig cfg;
        cfg.schedule = ScheduleVariant::Halved;
        cfg.lambda_initial = rng.uniform(0.0, 2.0);
        cfg.lambda_final = rng.uniform(0.0, 2.0);
        cfg.epochs = 2 + rng.uniform_int(0, 58);
        if (rep == 0) cfg.lambda_final = cfg.lambda_initial;  // constant case

        double prev = distill_weight(0, cfg);
        for (int e = 1; e <= cfg.epochs; ++e) {
            double cur = distill_weight(e, cfg);
            if (cfg.lambda_final > cfg.lambda_initial) {
                CHECK(cur > prev);
            } else if (cfg.lambda_final < cfg.lambda_initial) {
                CHECK(cur < prev);
            } else {
                CHECK(cur == doctest::Approx(prev).epsilon(1e-15));
            }
            prev = cur;
        }
    }
}

TEST_CASE("total_loss is exact and linear in the distillation term") {
    CHECK(total_loss(1.5, 2.0, 0.1) == doctest::Approx(1.7).epsilon(1e-15));
    CHECK(total_loss(3.25, 99.0, 0.0) == 3.25);
    CHECK(total_loss(3.25, 0.0, 0.9) == 3.25);
    // slope in distill equals lambda, checked at three points
    double lam = 0.37, task = 2.0;
    double l0 = total_loss(task, 1.0, lam);
    double l1 = total_loss(task, 2.0, lam);
    double l2 = total_loss(task, 5.0, lam);
    CHECK(l1 - l0 == doctest::Approx(lam).epsilon(1e-12));
    CHECK((l2 - l0) / 4.0 == doctest::Approx(lam).epsilon(1e-12));
}

TEST_CASE("Adam with all-zero gradients leaves parameters unchanged") {
    OptimizerConfig ocfg;
    Adam adam(ocfg);
    Tensor p1({2, 2}, {1.0, -2.0, 3.0, -4.0});
    Tensor p2({3}, {0.5, 0.25, -0.125});
    std::vector<double> before1 = p1.data(), before2 = p2.data();
    for (int step = 0; step < 3; ++step) {
        adam.step({&p1, &p2}, {Tensor({2, 2}), Tensor({3})});
    }
    CHECK(p1.data() == before1);
    CHECK(p2.data() == before2);
}

TEST_CASE("Adam moves parameters against the gradient") {
    OptimizerConfig ocfg;
    Adam adam(ocfg);
    Tensor p({2}, {1.0, -1.0});
    adam.step({&p}, {Tensor({2}, {0.5, -0.5})});
    CHECK(p[0] < 1.0);
    CHECK(p[1] > -1.0);
}

TEST_CASE("gradient clipping bounds the applied global norm") {
    OptimizerConfig ocfg;
    ocfg.clip_norm = 1.0;
    ocfg.learning_rate = 1.0;
    ocfg.eps = 0.0;
    Adam adam(ocfg);
    Tensor p({2}, {0.0, 0.0});
    // giant gradient: the first Adam step is lr * g_clipped/|g_clipped| per
    // coordinate after bias correction, so the update magnitude stays ~lr
    adam.step({&p}, {Tensor({2}, {3e6, -4e6})});
    CHECK(std::abs(p[0]) <= 1.0 + 1e-9);
    CHECK(std::abs(p[1]) <= 1.0 + 1e-9);
}

TEST_CASE("training run: loss decreases and the teacher stays frozen") {
    auto s = small_setup(6, 4);
    std::string checksum_before = s.teacher->checksum();
    TrainResult result = train(s.train, s.dev, s.maps, s.teacher.get(), s.cfg);
    CHECK(s.teacher->checksum() == checksum_before);
    REQUIRE(result.log.size() == 6);
    CHECK(result.log.back().task_loss < result.log.front().task_loss);
    // lambda follows the halved schedule from lambda_initial
    CHECK(result.log[0].lambda == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("two identical runs produce identical logs and checkpoints") {
    auto s1 = small_setup(3, 11);
    auto s2 = small_setup(3, 11);
    TrainResult r1 = train(s1.train, s1.dev, s1.maps, s1.teacher.get(), s1.cfg);
    TrainResult r2 = train(s2.train, s2.dev, s2.maps, s2.teacher.get(), s2.cfg);
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t e = 0; e < r1.log.size(); ++e) {
        CHECK(to_json_line(r1.log[e]) == to_json_line(r2.log[e]));
    }
    Checkpoint c1{r1.student, s1.maps, r1.adapter, r1.linear_adapter};
    Checkpoint c2{r2.student, s2.maps, r2.adapter, r2.linear_adapter};
    CHECK(checkpoint_digest(c1) == checkpoint_digest(c2));
}

TEST_CASE("lambda_i = lambda_f = 0 reproduces the no-distillation run bitwise") {
    auto s1 = small_setup(3, 5);
    s1.cfg.distill.lambda_initial = 0.0;
    s1.cfg.distill.lambda_final = 0.0;
    auto s2 = small_setup(3, 5, Ablation::NoDistill);
    TrainResult r1 = train(s1.train, s1.dev, s1.maps, s1.teacher.get(), s1.cfg);
    TrainResult r2 = train(s2.train, s2.dev, s2.maps, s2.teacher.get(), s2.cfg);
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t e = 0; e < r1.log.size(); ++e) {
        CHECK(to_json_line(r1.log[e]) == to_json_line(r2.log[e]));
    }
    auto n1 = r1.student.named();
    auto n2 = r2.student.named();
    for (size_t k = 0; k < n1.size(); ++k) {
        CHECK(n1[k].second->data() == n2[k].second->data());
    }
}

TEST_CASE("NoSchedule uses the constant final coefficient") {
    auto s = small_setup(2, 3, Ablation::NoSchedule);
    TrainResult r = train(s.train, s.dev, s.maps, s.teacher.get(), s.cfg);
    CHECK(r.log[0].lambda == 0.7);
    CHECK(r.log[1].lambda == 0.7);
}

TEST_CASE("NoProjection distills raw embeddings through a frozen linear map") {
    auto s = small_setup(2, 3, Ablation::NoProjection);
    TrainResult r = train(s.train, s.dev, s.maps, s.teacher.get(), s.cfg);
    CHECK(!r.adapter.has_value());
    REQUIRE(r.linear_adapter.has_value());
    CHECK(r.log[0].distill_loss > 0.0);
    // the map never trains: it still equals its seeded initialization
    Rng root(s.cfg.seed);
    Rng arng = root.stream("init/adapter");
    auto expected = LinearAdapterParams::init(s.cfg.student.d_es(), s.cfg.adapter.d_et, arng);
    CHECK(r.linear_adapter->w.data() == expected.w.data());
    CHECK(r.linear_adapter->b.data() == expected.b.data());
}

TEST_CASE("mismatched teacher dimension is rejected") {
    auto s = small_setup(1, 1);
    s.cfg.adapter.d_et = 99;
    CHECK_THROWS(train(s.train, s.dev, s.maps, s.teacher.get(), s.cfg));
}

TEST_CASE("checkpoint JSON round-trips byte-exactly") {
    auto s = small_setup(2, 8);
    TrainResult r = train(s.train, s.dev, s.maps, s.teacher.get(), s.cfg);
    Checkpoint ckpt{r.student, s.maps, r.adapter, r.linear_adapter};
    std::string text = checkpoint_to_json(ckpt);
    Checkpoint loaded = checkpoint_from_json(text);
    CHECK(checkpoint_to_json(loaded) == text);
    // and the loaded model evaluates identically
    Metrics m1 = evaluate(ckpt.student, s.dev, s.maps);
    Metrics m2 = evaluate(loaded.student, s.dev, loaded.maps);
    CHECK(m1.intent_acc == m2.intent_acc);
    CHECK(m1.slot_f1 == m2.slot_f1);
    CHECK(m1.overall_acc == m2.overall_acc);
}

TEST_CASE("run config parses, rejects unknown keys and echoes defaults") {
    RunConfig cfg = RunConfig::from_json(R"({"seed": 9, "distill": {"epochs": 3}})");
    CHECK(cfg.seed == 9);
    CHECK(cfg.distill.epochs == 3);
    CHECK(cfg.distill.lambda_initial == 0.1);
    CHECK(cfg.distill.lambda_final == 0.7);
    CHECK(cfg.student.dropout == 0.4);
    CHECK(cfg.batch_size == 16);

    CHECK_THROWS(RunConfig::from_json(R"({"sead": 9})"));
    CHECK_THROWS(RunConfig::from_json(R"({"distill": {"epochz": 3}})"));
    CHECK_THROWS(RunConfig::from_json(R"({"student": {"dropout": 1.5}})"));

    // the echoed config parses back to the same resolved document
    RunConfig again = RunConfig::from_json(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
}

TEST_CASE("convergence: final-epoch training loss beats the first epoch on 5 seeds") {
    // desk-scale sanity oracle on the default synthetic task
    data::SynthSpec spec;  // 500/100/100, d_et 64
    auto corpus = data::gen_synthetic(spec);
    auto maps = data::LabelMaps::build(corpus.train);
    data::TeacherTable table(corpus.teacher.begin(), corpus.teacher.end());
    FileTeacher teacher(table, spec.d_et);

    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        RunConfig run;
        run.seed = seed;
        run.adapter.d_et = spec.d_et;
        run.distill.epochs = 15;
        TrainConfig cfg = run.to_train_config(maps);
        TrainResult r = train(corpus.train, corpus.dev, maps, &teacher, cfg);
        CHECK(r.log.back().task_loss < r.log.front().task_loss);
    }
}
