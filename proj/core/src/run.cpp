#include "suave/run.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <utility>

#include "suave/errors.hpp"
#include "suave/eval.hpp"
#include "suave/trainer.hpp"

namespace suave {

namespace {

namespace fs = std::filesystem;

int thread_cap_from_env() {
  const char* env = std::getenv("SUAVE_LAB_THREADS");
  if (env == nullptr || *env == '\0') {
    return 0;
  }
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    throw ConfigError("SUAVE_LAB_THREADS must be a positive integer, got '" + std::string(env) +
                      "'");
  }
  return static_cast<int>(v);
}

std::string checkpoint_path(const RunConfig& cfg) {
  if (!cfg.run_checkpoint.empty()) {
    return cfg.run_checkpoint;
  }
  return cfg.run_outdir + "/checkpoints/final.ckpt";
}

void ensure_outdir(const RunConfig& cfg) {
  if (cfg.run_outdir.empty()) {
    throw ConfigError("run.outdir must not be empty");
  }
  fs::create_directories(cfg.run_outdir);
}

// Loads the student weights of a checkpoint into freshly initialized encoder
// parameters (probe heads included).
EncoderParams params_from_checkpoint(const RunConfig& cfg, const Dataset& dataset,
                                     const std::string& path) {
  const CheckpointState state = load_checkpoint(path);
  EncoderParams params = init_encoder(build_encoder_config(cfg, dataset), cfg.run_seed);
  for_each_tensor(params, [&](const std::string& name, Tensor& t) {
    const Matrix* m = state.find("student/" + name);
    if (m == nullptr) {
      throw FormatError("checkpoint '" + path + "' is missing tensor 'student/" + name + "'");
    }
    if (m->rows != t.rows() || m->cols != t.cols()) {
      throw FormatError("checkpoint '" + path + "' tensor 'student/" + name +
                        "' does not match the configured model shape");
    }
    t.mutable_values() = m->data;
  });
  return params;
}

void write_report_for(EncoderParams& params, const Dataset& dataset, const RunConfig& cfg) {
  EvalOptions opts;
  opts.batch = cfg.eval_batch;
  opts.tau = cfg.eval_tau;
  const EvalReport report = evaluate(params, dataset, opts);
  write_eval_report(report, cfg.run_outdir + "/eval_report.txt");
  std::cout << report.to_text();
}

// Shared by pretrain and finetune; `from_checkpoint` selects the weights-only
// finetune load (prototype reinit, optimizer state reset) over a full resume.
void train_run(const RunConfig& cfg, bool finetune_load) {
  ensure_outdir(cfg);
  const std::string resolved = resolved_config_text(cfg);
  write_resolved_config(cfg, cfg.run_outdir + "/resolved_config.txt");

  Dataset dataset = build_dataset(cfg);
  Split split = split_labels(dataset, build_split_spec(cfg));
  EncoderConfig enc = build_encoder_config(cfg, dataset);
  TrainConfig tcfg = build_train_config(cfg);
  tcfg.config_hash = config_hash(resolved);

  Trainer trainer(std::move(dataset), std::move(split), enc, tcfg);
  if (finetune_load) {
    trainer.load_for_finetune(load_checkpoint(checkpoint_path(cfg)));
  } else if (!cfg.run_checkpoint.empty()) {
    trainer.restore(load_checkpoint(cfg.run_checkpoint));
  }
  const std::vector<MetricsRecord> rows = trainer.run(cfg.run_outdir);
  write_metrics_csv(rows, cfg.run_outdir + "/metrics.csv");
  write_report_for(trainer.student(), trainer.dataset(), cfg);
}

void cmd_eval(const RunConfig& cfg) {
  ensure_outdir(cfg);
  write_resolved_config(cfg, cfg.run_outdir + "/resolved_config.txt");
  Dataset dataset = build_dataset(cfg);
  EncoderParams params = params_from_checkpoint(cfg, dataset, checkpoint_path(cfg));
  if (cfg.eval_refit_probes) {
    Split split = split_labels(dataset, build_split_spec(cfg));
    ProbeFitSpec spec;
    spec.steps = cfg.eval_probe_steps;
    spec.batch = cfg.eval_probe_batch;
    spec.lr = cfg.probe_lr;
    spec.seed = cfg.run_seed;
    probe_fit_online(params, dataset, split.labeled, spec);
  }
  write_report_for(params, dataset, cfg);
}

void cmd_export_embeddings(const RunConfig& cfg) {
  ensure_outdir(cfg);
  Dataset dataset = build_dataset(cfg);
  EncoderParams params = params_from_checkpoint(cfg, dataset, checkpoint_path(cfg));
  const std::string path =
      cfg.export_path.empty() ? cfg.run_outdir + "/embeddings.csv" : cfg.export_path;
  export_embeddings(params, dataset, parse_probe_depth(cfg.export_depth), path, cfg.eval_batch);
  std::cout << "wrote " << path << "\n";
}

void cmd_make_data(const RunConfig& cfg) {
  ensure_outdir(cfg);
  const Dataset dataset = build_dataset(cfg);
  const std::string path = cfg.data_out.empty() ? cfg.run_outdir + "/dataset.csv" : cfg.data_out;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) {
    fs::create_directories(parent);
  }
  write_dataset_csv(dataset, path);
  std::cout << "wrote " << path << " (" << dataset.size() << " samples, " << dataset.dim()
            << " dims, " << dataset.classes << " classes)\n";
}

}  // namespace

RunConfig resolve_config(const CliOptions& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    apply_config_file(cfg, opts.config_path);
  }
  if (!opts.outdir.empty()) {
    cfg.run_outdir = opts.outdir;
  }
  if (opts.seed.has_value()) {
    cfg.run_seed = *opts.seed;
  }
  for (const auto& assignment : opts.overrides) {
    apply_override(cfg, assignment);
  }
  const int cap = thread_cap_from_env();
  if (cap > 0) {
    cfg.run_workers = std::min(cfg.run_workers, cap);
  }
  return cfg;
}

void run_command_checked(const CliOptions& opts) {
  RunConfig cfg = resolve_config(opts);
  if (opts.subcommand == "pretrain") {
    train_run(cfg, /*finetune_load=*/false);
  } else if (opts.subcommand == "finetune") {
    // The derived fine-tuning layer: short continuation of the same
    // objective with relaxed corruption, no multi-crop, fresh prototypes
    // (handled by the trainer load) and a scaled-down learning rate.
    // Explicit --set assignments are re-applied afterwards, so they win.
    cfg.optim_base_lr *= cfg.finetune_lr_scale;
    cfg.optim_warmup_epochs = 0;
    cfg.aug_local_views = 0;
    cfg.aug_global_noise *= 0.5;
    cfg.aug_local_noise *= 0.5;
    cfg.aug_global_mask = 0.0;
    cfg.aug_local_mask = 0.0;
    if (cfg.finetune_epochs > 0) {
      cfg.train_epochs = cfg.finetune_epochs;
    }
    for (const auto& assignment : opts.overrides) {
      apply_override(cfg, assignment);
    }
    if (cfg.run_checkpoint.empty()) {
      throw ConfigError("finetune needs run.checkpoint (the pre-trained weights to start from)");
    }
    train_run(cfg, /*finetune_load=*/true);
  } else if (opts.subcommand == "eval") {
    cmd_eval(cfg);
  } else if (opts.subcommand == "export-embeddings") {
    cmd_export_embeddings(cfg);
  } else if (opts.subcommand == "make-data") {
    cmd_make_data(cfg);
  } else if (opts.subcommand.empty()) {
    throw ConfigError(
        "missing subcommand: expected pretrain, finetune, eval, export-embeddings or make-data");
  } else {
    throw ConfigError("unknown subcommand '" + opts.subcommand +
                      "': expected pretrain, finetune, eval, export-embeddings or make-data");
  }
}

int run_command(const CliOptions& opts) {
  try {
    run_command_checked(opts);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace suave
