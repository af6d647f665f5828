#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "afd/adapter.hpp"
#include "afd/data.hpp"
#include "afd/student.hpp"
#include "afd/teacher.hpp"

// Distillation training: the cosine-interpolated distillation coefficient,
// the combined objective, Adam with global-norm clipping, best-dev-checkpoint
// selection, and the ablation arms.

namespace afd {

enum class ScheduleVariant { Literal, Halved };
enum class Ablation { Full, NoProjection, NoSchedule, NoDistill };

ScheduleVariant schedule_from_string(const std::string& s);
std::string to_string(ScheduleVariant v);
Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct DistillConfig {
    double lambda_initial = 0.1;
    double lambda_final = 0.7;
    int epochs = 50;
    ScheduleVariant schedule = ScheduleVariant::Halved;
    bool clamp_nonnegative = true;
    Ablation ablation = Ablation::Full;
};

// Coefficient at epoch e, 0 <= e <= epochs.
//   Literal: lambda_f + (lambda_i - lambda_f) * (1 + cos(e*pi/E))
//   Halved:  lambda_f + (lambda_i - lambda_f) * (1 + cos(e*pi/E)) / 2
// clamped at zero when clamp_nonnegative is set.
double distill_weight(int epoch, const DistillConfig& cfg);

// task + lambda * distill
double total_loss(double task, double distill, double lambda);

struct OptimizerConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
};

class Adam {
  public:
    explicit Adam(OptimizerConfig cfg) : cfg_(cfg) {}

    // Gradients are clipped to the configured global norm, then parameters
    // are replaced by their updated values. The param list must be the same
    // (same order, same shapes) on every call.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    int steps_taken() const { return t_; }

  private:
    OptimizerConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
    StudentConfig student;
    AdapterConfig adapter;
    DistillConfig distill;
    OptimizerConfig optim;
    size_t batch_size = 16;
    int ignore_index = -100;
    uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;
    double lambda = 0.0;
    double task_loss = 0.0;
    double distill_loss = 0.0;
    Metrics dev;
};

std::string to_json_line(const EpochLog& log);

struct TrainResult {
    StudentParams student;  // best dev checkpoint
    std::optional<AdapterParams> adapter;
    std::optional<LinearAdapterParams> linear_adapter;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    Metrics best_dev;
};

TrainResult train(const std::vector<data::Utterance>& train_utts,
                  const std::vector<data::Utterance>& dev_utts, const data::LabelMaps& maps,
                  const TeacherBackend* teacher, const TrainConfig& cfg);

struct ArmStats {
    std::vector<Metrics> per_seed;
    Metrics mean, stddev;
};

struct AblationReport {
    std::vector<uint64_t> seeds;
    std::vector<std::pair<std::string, ArmStats>> arms;  // full, no_projection, no_schedule, no_distill

    std::string to_json() const;
    const ArmStats& arm(const std::string& name) const;
};

// Trains every arm for every seed with identical data and rng substreams,
// then scores the best checkpoint of each run on the test split.
AblationReport ablate(const std::vector<data::Utterance>& train_utts,
                      const std::vector<data::Utterance>& dev_utts,
                      const std::vector<data::Utterance>& test_utts, const data::LabelMaps& maps,
                      const TeacherBackend* teacher, const TrainConfig& base,
                      const std::vector<uint64_t>& seeds);

}  // namespace afd
