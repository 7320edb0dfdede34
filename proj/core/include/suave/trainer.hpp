#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "suave/assign.hpp"
#include "suave/data.hpp"
#include "suave/model.hpp"
#include "suave/objective.hpp"
#include "suave/optim.hpp"

namespace suave {

enum class Method { suave, daino };

// Which network produces the target logits for the unlabeled views. Daino
// requires the teacher; Suave defaults to it.
enum class TargetNetwork { teacher, student };

struct TrainConfig {
  Method method = Method::suave;
  std::size_t epochs = 10;
  std::size_t unlabeled_batch = 256;
  std::size_t labeled_batch = 64;

  double base_lr = 0.3;
  double final_lr = 1e-3;
  std::size_t warmup_epochs = 2;
  double momentum = 0.9;
  double weight_decay = 1e-6;

  double teacher_eta = 0.99;
  TargetNetwork target_source = TargetNetwork::teacher;

  SinkhornConfig sinkhorn;  // Suave pseudo-labeler

  // Daino pseudo-labeler: debiasing EMA rate and the sharpening temperature
  // ramped linearly over the warmup epochs.
  double center_mu = 0.9;
  double teacher_eps_start = 0.04;
  double teacher_eps_end = 0.07;
  std::size_t teacher_eps_warmup_epochs = 10;

  LossConfig loss;
  AugPolicy aug;
  MixSpec mix;

  bool probes_enabled = true;
  double probe_lr = 0.1;  // fixed, no schedule

  std::size_t log_interval = 10;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string config_hash = "0";  // recorded into checkpoints

  void validate(std::size_t labeled_count) const;
};

// One metrics row; the CSV column order is exactly the field order.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double lr = 0.0;
  double assign_entropy_mean = 0.0;
  double center_norm = 0.0;
  double probe_acc_backbone = 0.0;
  double probe_acc_proj1 = 0.0;
  double probe_acc_proj2 = 0.0;
  double proto_acc = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

// Named-tensor snapshot of everything training needs to continue bitwise:
// student and teacher weights, optimizer momenta, center, queues, counters.
struct CheckpointState {
  std::string version = "1";
  std::string config_hash = "0";
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

// Textual manifest (name, shape, offset, bytes per tensor; config hash;
// format version) followed by a little-endian IEEE-754 f64 payload.
void save_checkpoint(const CheckpointState& state, const std::string& path);
CheckpointState load_checkpoint(const std::string& path);

// Index sets consumed by one optimizer step.
struct BatchPlan {
  std::size_t epoch = 0;
  std::size_t step_in_epoch = 0;
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

class Trainer {
 public:
  Trainer(Dataset dataset, Split split, EncoderConfig encoder_cfg, TrainConfig cfg);

  // ceil(|unlabeled| / unlabeled_batch); a labeled-only pass when
  // unlabeled_batch is 0.
  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const { return cfg_.epochs * steps_per_epoch(); }

  // Next step's index sets; advances the labeled cycling iterator.
  BatchPlan compose_batch();

  // One full optimizer step; throws TrainingAbort on a non-finite loss.
  MetricsRecord train_step();

  // Runs the remaining epochs. With a non-empty outdir writes
  // checkpoints/epoch_NNNN.ckpt per epoch plus checkpoints/final.ckpt.
  // Returns the metrics rows logged during this call.
  std::vector<MetricsRecord> run(const std::string& outdir);

  CheckpointState snapshot() const;
  void restore(const CheckpointState& state);

  // Weights-only load for fine-tuning: prototypes re-drawn from the run
  // seed, optimizer/queue/center state reset, teacher re-synced.
  void load_for_finetune(const CheckpointState& state);

  EncoderParams& student() { return student_; }
  const EncoderParams& student() const { return student_; }
  const TeacherState& teacher() const { return teacher_; }
  const CenterState& center() const { return center_; }
  std::size_t current_epoch() const { return epoch_; }
  std::size_t global_step() const { return global_step_; }
  const TrainConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return dataset_; }
  const Split& split() const { return split_; }

 private:
  struct StepOutcome;

  std::vector<std::size_t> labeled_chunk(std::size_t count);
  double teacher_epsilon(std::size_t step) const;
  MetricsRecord make_record(std::size_t epoch, std::size_t step, const StepOutcome& out) const;

  Dataset dataset_;
  Split split_;
  TrainConfig cfg_;

  EncoderParams student_;
  TeacherState teacher_;
  ParamSet encoder_opt_;
  ParamSet probe_opt_;
  CenterState center_;
  std::vector<LogitQueue> queues_;  // one per global view

  std::size_t epoch_ = 0;
  std::size_t step_in_epoch_ = 0;
  std::size_t global_step_ = 0;
  std::size_t labeled_cycle_ = 0;
  std::size_t labeled_pos_ = 0;
  std::vector<std::size_t> labeled_order_;
  std::size_t labeled_order_cycle_ = SIZE_MAX;
  std::vector<std::size_t> unlabeled_order_;
  std::size_t unlabeled_order_epoch_ = SIZE_MAX;
};

}  // namespace suave
