#include "afd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

using ordered_json = nlohmann::ordered_json;

namespace afd {

ScheduleVariant schedule_from_string(const std::string& s) {
    if (s == "literal") return ScheduleVariant::Literal;
    if (s == "halved") return ScheduleVariant::Halved;
    detail::fail("schedule must be 'literal' or 'halved', got '" + s + "'");
}

std::string to_string(ScheduleVariant v) {
    return v == ScheduleVariant::Literal ? "literal" : "halved";
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "no_projection") return Ablation::NoProjection;
    if (s == "no_schedule") return Ablation::NoSchedule;
    if (s == "no_distill") return Ablation::NoDistill;
    detail::fail("ablation must be full|no_projection|no_schedule|no_distill, got '" + s + "'");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoProjection: return "no_projection";
        case Ablation::NoSchedule: return "no_schedule";
        case Ablation::NoDistill: return "no_distill";
    }
    return "full";
}

double distill_weight(int epoch, const DistillConfig& cfg) {
    AFD_CHECK(cfg.epochs >= 1, "distill_weight: epochs must be >= 1");
    AFD_CHECK(epoch >= 0 && epoch <= cfg.epochs,
              "distill_weight: range error, epoch " + std::to_string(epoch) + " not in [0, " +
                  std::to_string(cfg.epochs) + "]");
    double phase = 1.0 + std::cos(double(epoch) * M_PI / double(cfg.epochs));
    if (cfg.schedule == ScheduleVariant::Halved) phase *= 0.5;
    double lambda = cfg.lambda_final + (cfg.lambda_initial - cfg.lambda_final) * phase;
    if (cfg.clamp_nonnegative) lambda = std::max(0.0, lambda);
    return lambda;
}

double total_loss(double task, double distill, double lambda) {
    return task + lambda * distill;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    AFD_CHECK(params.size() == grads.size(), "adam: param/grad count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }
    AFD_CHECK(m_.size() == params.size(), "adam: parameter list changed between steps");

    double sq_norm = 0.0;
    for (const Tensor& g : grads) {
        for (size_t i = 0; i < g.size(); ++i) sq_norm += g[i] * g[i];
    }
    double norm = std::sqrt(sq_norm);
    double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t k = 0; k < params.size(); ++k) {
        AFD_CHECK(params[k]->size() == grads[k].size(), "adam: grad shape mismatch");
        std::vector<double> next(params[k]->data());
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < next.size(); ++i) {
            double g = grads[k][i] * clip;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            next[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
        *params[k] = Tensor(params[k]->shape(), std::move(next));
    }
}

std::string to_json_line(const EpochLog& log) {
    ordered_json j;
    j["epoch"] = log.epoch;
    j["lambda"] = log.lambda;
    j["task_loss"] = log.task_loss;
    j["distill_loss"] = log.distill_loss;
    j["dev"] = {{"intent_acc", log.dev.intent_acc},
                {"slot_f1", log.dev.slot_f1},
                {"overall_acc", log.dev.overall_acc}};
    return j.dump();
}

namespace {

std::vector<Tensor*> collect_params(StudentParams& student,
                                    std::optional<AdapterParams>& adapter) {
    // the no-projection arm's linear map never trains, so only the student
    // and the projection network reach the optimizer
    std::vector<Tensor*> ptrs;
    for (auto& [name, t] : student.named()) ptrs.push_back(t);
    if (adapter) {
        for (auto& [name, t] : adapter->named()) ptrs.push_back(t);
    }
    return ptrs;
}

}  // namespace

TrainResult train(const std::vector<data::Utterance>& train_utts,
                  const std::vector<data::Utterance>& dev_utts, const data::LabelMaps& maps,
                  const TeacherBackend* teacher, const TrainConfig& cfg) {
    AFD_CHECK(!train_utts.empty(), "train: empty training split");
    AFD_CHECK(!dev_utts.empty(), "train: empty dev split");
    AFD_CHECK(cfg.distill.epochs >= 1, "train: epochs must be >= 1");
    AFD_CHECK(cfg.batch_size >= 1, "train: batch size must be >= 1");

    bool may_distill = cfg.distill.ablation != Ablation::NoDistill;
    if (may_distill) {
        AFD_CHECK(teacher != nullptr, "train: distillation requires a teacher backend");
        AFD_CHECK(teacher->dim() == cfg.adapter.d_et,
                  "train: teacher dimension " + std::to_string(teacher->dim()) +
                      " does not match adapter d_et " + std::to_string(cfg.adapter.d_et));
    }

    Rng root(cfg.seed);
    Rng init_student = root.stream("init/student");
    Rng init_adapter = root.stream("init/adapter");
    Rng data_rng = root.stream("data");
    Rng drop_rng = root.stream("dropout");

    TrainResult result;
    StudentParams student = StudentParams::init(cfg.student, init_student);
    std::optional<AdapterParams> adapter;
    std::optional<LinearAdapterParams> linear;
    if (cfg.distill.ablation == Ablation::NoProjection) {
        linear = LinearAdapterParams::init(cfg.student.d_es(), cfg.adapter.d_et, init_adapter);
    } else if (may_distill) {
        AdapterConfig acfg = cfg.adapter;
        acfg.d_es = cfg.student.d_es();
        adapter = AdapterParams::init(acfg, init_adapter);
    }

    Adam adam(cfg.optim);
    std::vector<Tensor*> params = collect_params(student, adapter);

    double best_overall = -1.0;
    std::vector<size_t> order(train_utts.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.distill.epochs; ++epoch) {
        double lambda = 0.0;
        if (may_distill) {
            lambda = cfg.distill.ablation == Ablation::NoSchedule
                         ? cfg.distill.lambda_final
                         : distill_weight(epoch, cfg.distill);
        }
        bool distill_active = may_distill && lambda != 0.0;

        data_rng.shuffle(order);
        double task_sum = 0.0, distill_sum = 0.0;
        size_t n_batches = 0;

        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<data::Utterance> chunk;
            chunk.reserve(end - start);
            for (size_t k = start; k < end; ++k) chunk.push_back(train_utts[order[k]]);
            auto batch = data::encode_batch(chunk, maps, cfg.ignore_index);

            Tape tape;
            for (Tensor* p : params) tape.watch(*p);

            StudentOutput out = student_forward(batch, student, /*training=*/true, &drop_rng);
            Tensor task = task_loss(out, batch, cfg.ignore_index);
            Tensor total = task;
            double distill_value = 0.0;
            if (distill_active) {
                Tensor e_t = teacher->embed(batch);
                Tensor e_s = linear ? project_linear(out.sentence_embedding, *linear)
                                    : project(out.sentence_embedding, *adapter);
                Tensor distill = mse_sum(e_t, e_s);
                distill_value = distill.value();
                total = add(task, scale(distill, lambda));
            }

            AFD_CHECK(std::isfinite(total.value()),
                      "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(n_batches) + " (ids " + batch.ids.front() + ".." +
                          batch.ids.back() + ")");

            tape.backward(total);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (Tensor* p : params) grads.push_back(tape.grad(*p));
            for (Tensor* p : params) {  // detach before the in-place update
                p->node = -1;
                p->tape = nullptr;
                p->requires_grad = false;
            }
            adam.step(params, grads);

            task_sum += task.value();
            distill_sum += distill_value;
            ++n_batches;
        }

        EpochLog log;
        log.epoch = epoch;
        log.lambda = lambda;
        log.task_loss = task_sum / double(n_batches);
        log.distill_loss = distill_sum / double(n_batches);
        log.dev = evaluate(student, dev_utts, maps, cfg.batch_size);
        result.log.push_back(log);

        if (log.dev.overall_acc > best_overall) {
            best_overall = log.dev.overall_acc;
            result.student = student;
            result.adapter = adapter;
            result.linear_adapter = linear;
            result.best_epoch = epoch;
            result.best_dev = log.dev;
        }
    }
    return result;
}

namespace {

Metrics metrics_mean(const std::vector<Metrics>& ms) {
    Metrics mean;
    for (const Metrics& m : ms) {
        mean.intent_acc += m.intent_acc;
        mean.slot_f1 += m.slot_f1;
        mean.overall_acc += m.overall_acc;
    }
    double n = double(ms.size());
    mean.intent_acc /= n;
    mean.slot_f1 /= n;
    mean.overall_acc /= n;
    return mean;
}

Metrics metrics_std(const std::vector<Metrics>& ms, const Metrics& mean) {
    if (ms.size() < 2) return {};
    Metrics acc;
    for (const Metrics& m : ms) {
        acc.intent_acc += (m.intent_acc - mean.intent_acc) * (m.intent_acc - mean.intent_acc);
        acc.slot_f1 += (m.slot_f1 - mean.slot_f1) * (m.slot_f1 - mean.slot_f1);
        acc.overall_acc +=
            (m.overall_acc - mean.overall_acc) * (m.overall_acc - mean.overall_acc);
    }
    double n = double(ms.size()) - 1.0;  // sample std over seeds
    return {std::sqrt(acc.intent_acc / n), std::sqrt(acc.slot_f1 / n),
            std::sqrt(acc.overall_acc / n)};
}

ordered_json metric_block(const std::vector<Metrics>& per_seed, const Metrics& mean,
                          const Metrics& stddev, double Metrics::*field) {
    ordered_json j;
    j["mean"] = mean.*field;
    j["std"] = stddev.*field;
    ordered_json seeds = ordered_json::array();
    for (const Metrics& m : per_seed) seeds.push_back(m.*field);
    j["per_seed"] = seeds;
    return j;
}

}  // namespace

const ArmStats& AblationReport::arm(const std::string& name) const {
    for (const auto& [n, stats] : arms) {
        if (n == name) return stats;
    }
    detail::fail("ablation report: no arm named '" + name + "'");
}

std::string AblationReport::to_json() const {
    ordered_json j;
    j["seeds"] = seeds;
    ordered_json arms_json;
    for (const auto& [name, stats] : arms) {
        ordered_json a;
        a["intent_acc"] = metric_block(stats.per_seed, stats.mean, stats.stddev,
                                       &Metrics::intent_acc);
        a["slot_f1"] = metric_block(stats.per_seed, stats.mean, stats.stddev, &Metrics::slot_f1);
        a["overall_acc"] = metric_block(stats.per_seed, stats.mean, stats.stddev,
                                        &Metrics::overall_acc);
        arms_json[name] = a;
    }
    j["arms"] = arms_json;
    return j.dump(2);
}

AblationReport ablate(const std::vector<data::Utterance>& train_utts,
                      const std::vector<data::Utterance>& dev_utts,
                      const std::vector<data::Utterance>& test_utts, const data::LabelMaps& maps,
                      const TeacherBackend* teacher, const TrainConfig& base,
                      const std::vector<uint64_t>& seeds) {
    AFD_CHECK(seeds.size() >= 3, "ablate: need at least 3 seeds");
    AblationReport report;
    report.seeds = seeds;
    for (Ablation arm :
         {Ablation::Full, Ablation::NoProjection, Ablation::NoSchedule, Ablation::NoDistill}) {
        ArmStats stats;
        for (uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.distill.ablation = arm;
            TrainResult run = train(train_utts, dev_utts, maps, teacher, cfg);
            stats.per_seed.push_back(evaluate(run.student, test_utts, maps, base.batch_size));
        }
        stats.mean = metrics_mean(stats.per_seed);
        stats.stddev = metrics_std(stats.per_seed, stats.mean);
        report.arms.emplace_back(to_string(arm), stats);
    }
    return report;
}

}  // namespace afd
