#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "suave/data.hpp"
#include "suave/model.hpp"
#include "suave/trainer.hpp"

namespace suave {

// Every runtime knob, one field per config key. Defaults here are the
// documented defaults; a config file and --set overrides layer on top.
struct RunConfig {
  // run.*
  std::string run_outdir = "runs/out";
  std::uint64_t run_seed = 1;
  int run_workers = 1;
  std::size_t run_log_interval = 10;
  std::string run_checkpoint;  // eval/export/finetune input; empty -> <outdir>/checkpoints/final.ckpt

  // data.*
  std::string data_kind = "gaussian_blobs";  // gaussian_blobs | two_moons | concentric_rings | csv | idx
  std::size_t data_n = 2000;
  std::size_t data_dim = 16;
  std::size_t data_classes = 8;
  double data_separation = 6.0;
  std::uint64_t data_seed = 1;
  std::string data_path;    // csv input
  std::string data_images;  // idx images
  std::string data_labels;  // idx labels
  std::string data_out;     // make-data output; empty -> <outdir>/dataset.csv

  // split.*
  std::size_t split_labeled_per_class = 0;
  double split_labeled_fraction = 0.0;
  std::uint64_t split_seed = 1;

  // model.*
  std::vector<std::size_t> model_hidden{128, 128};
  std::size_t model_proj_hidden = 128;
  std::size_t model_proj_out = 32;

  // train.*
  std::string train_method = "suave";  // suave | daino
  std::size_t train_epochs = 10;
  std::size_t train_unlabeled_batch = 256;
  std::size_t train_labeled_batch = 64;
  std::string train_target_source = "teacher";  // teacher | student

  // optim.*
  double optim_base_lr = 0.3;
  double optim_final_lr = 1e-3;
  std::size_t optim_warmup_epochs = 2;
  double optim_momentum = 0.9;
  double optim_weight_decay = 1e-6;

  // teacher.*
  double teacher_eta = 0.99;

  // sinkhorn.*
  double sinkhorn_epsilon = 0.05;
  int sinkhorn_iterations = 3;
  std::size_t sinkhorn_queue_capacity = 0;

  // daino.*
  double daino_center_mu = 0.9;
  double daino_eps_start = 0.04;
  double daino_eps_end = 0.07;
  std::size_t daino_eps_warmup_epochs = 10;

  // loss.*
  double loss_tau = 0.1;
  double loss_label_smoothing = 0.01;

  // aug.*
  std::size_t aug_global_views = 2;
  std::size_t aug_local_views = 4;
  double aug_global_noise = 0.1;
  double aug_local_noise = 0.25;
  double aug_labeled_noise = 0.05;
  double aug_global_mask = 0.1;
  double aug_local_mask = 0.3;
  double aug_jitter_min = 0.9;
  double aug_jitter_max = 1.1;

  // mix.*
  bool mix_enabled = true;
  double mix_beta_alpha = 1.0;
  double mix_cutmix_prob = 0.5;
  double mix_prob = 1.0;

  // probe.*
  bool probe_enabled = true;
  double probe_lr = 0.1;

  // eval.*
  std::size_t eval_batch = 512;
  double eval_tau = 0.1;
  bool eval_refit_probes = false;
  std::size_t eval_probe_steps = 500;
  std::size_t eval_probe_batch = 64;

  // export.*
  std::string export_depth = "proj2";  // backbone | proj1 | proj2
  std::string export_path;             // empty -> <outdir>/embeddings.csv

  // finetune.*
  double finetune_lr_scale = 0.05;
  std::size_t finetune_epochs = 0;  // 0 -> keep train.epochs
};

struct ConfigKey {
  std::string name;
  std::string type_name;  // "bool", "int", "float", "string", "size list"
  std::function<void(RunConfig&, const std::string&)> set;  // throws ConfigError on bad value
  std::function<std::string(const RunConfig&)> get;
};

// Declaration-ordered key table; the single source of truth for parsing,
// resolved-config output and nearest-key suggestions.
const std::vector<ConfigKey>& config_schema();

// Applies "key = value" lines ('#' lines and blanks skipped). Unknown keys
// and malformed lines raise ConfigError with the line number.
void apply_config_file(RunConfig& cfg, const std::string& path);

// One "key=value" assignment, as given to --set.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Every key in schema order as re-loadable "key = value" lines.
std::string resolved_config_text(const RunConfig& cfg);
void write_resolved_config(const RunConfig& cfg, const std::string& path);

// FNV-1a over the resolved text, as fixed-width hex.
std::string config_hash(const std::string& resolved_text);

// Closest schema key by edit distance (for error messages).
std::string nearest_key(const std::string& key);

// ---- assembly into module configs ----

Dataset build_dataset(const RunConfig& cfg);
SplitSpec build_split_spec(const RunConfig& cfg);
EncoderConfig build_encoder_config(const RunConfig& cfg, const Dataset& dataset);
TrainConfig build_train_config(const RunConfig& cfg);  // config_hash left to the caller
ProbeDepth parse_probe_depth(const std::string& name);

}  // namespace suave
