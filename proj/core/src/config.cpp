#include "suave/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "suave/errors.hpp"

namespace suave {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) {
    return "";
  }
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ConfigError("key '" + key + "' expects a bool (true/false), got '" + v + "'");
}

long long parse_int(const std::string& v, const std::string& key) {
  const std::string t = trim(v);
  if (t.empty()) {
    throw ConfigError("key '" + key + "' expects an int, got an empty value");
  }
  char* end = nullptr;
  errno = 0;
  const long long out = std::strtoll(t.c_str(), &end, 10);
  if (errno != 0 || end != t.c_str() + t.size()) {
    throw ConfigError("key '" + key + "' expects an int, got '" + v + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& key) {
  const long long out = parse_int(v, key);
  if (out < 0) {
    throw ConfigError("key '" + key + "' expects a non-negative int, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

double parse_double(const std::string& v, const std::string& key) {
  const std::string t = trim(v);
  if (t.empty()) {
    throw ConfigError("key '" + key + "' expects a float, got an empty value");
  }
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(t.c_str(), &end);
  if (errno != 0 || end != t.c_str() + t.size()) {
    throw ConfigError("key '" + key + "' expects a float, got '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_size(trim(item), key));
  }
  if (out.empty()) {
    throw ConfigError("key '" + key + "' expects a comma-separated size list, got '" + v + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += ',';
    }
    out += std::to_string(v[i]);
  }
  return out;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) {
    prev[j] = j;
  }
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Shorthand for building the schema table.
#define KEY_BOOL(name, field)                                                          \
  ConfigKey {                                                                          \
    name, "bool", [](RunConfig& c, const std::string& v) { c.field = parse_bool(v, name); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }     \
  }
#define KEY_SIZE(name, field)                                                          \
  ConfigKey {                                                                          \
    name, "int", [](RunConfig& c, const std::string& v) { c.field = parse_size(v, name); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                     \
  }
#define KEY_INT(name, field)                                                                    \
  ConfigKey {                                                                                   \
    name, "int",                                                                               \
        [](RunConfig& c, const std::string& v) {                                               \
          c.field = static_cast<int>(parse_int(v, name));                                      \
        },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.field); }                             \
  }
#define KEY_U64(name, field)                                                           \
  ConfigKey {                                                                          \
    name, "int",                                                                       \
        [](RunConfig& c, const std::string& v) {                                       \
          c.field = static_cast<std::uint64_t>(parse_size(v, name));                   \
        },                                                                             \
        [](const RunConfig& c) { return std::to_string(c.field); }                     \
  }
#define KEY_DOUBLE(name, field)                                                          \
  ConfigKey {                                                                            \
    name, "float", [](RunConfig& c, const std::string& v) { c.field = parse_double(v, name); }, \
        [](const RunConfig& c) { return format_double(c.field); }                        \
  }
#define KEY_STRING(name, field)                                               \
  ConfigKey {                                                                 \
    name, "string", [](RunConfig& c, const std::string& v) { c.field = v; },  \
        [](const RunConfig& c) { return c.field; }                            \
  }
#define KEY_SIZE_LIST(name, field)                                                     \
  ConfigKey {                                                                          \
    name, "size list",                                                                 \
        [](RunConfig& c, const std::string& v) { c.field = parse_size_list(v, name); }, \
        [](const RunConfig& c) { return format_size_list(c.field); }                   \
  }

std::vector<ConfigKey> make_schema() {
  return {
      KEY_STRING("run.outdir", run_outdir),
      KEY_U64("run.seed", run_seed),
      KEY_INT("run.workers", run_workers),
      KEY_SIZE("run.log_interval", run_log_interval),
      KEY_STRING("run.checkpoint", run_checkpoint),

      KEY_STRING("data.kind", data_kind),
      KEY_SIZE("data.n", data_n),
      KEY_SIZE("data.dim", data_dim),
      KEY_SIZE("data.classes", data_classes),
      KEY_DOUBLE("data.separation", data_separation),
      KEY_U64("data.seed", data_seed),
      KEY_STRING("data.path", data_path),
      KEY_STRING("data.images", data_images),
      KEY_STRING("data.labels", data_labels),
      KEY_STRING("data.out", data_out),

      KEY_SIZE("split.labeled_per_class", split_labeled_per_class),
      KEY_DOUBLE("split.labeled_fraction", split_labeled_fraction),
      KEY_U64("split.seed", split_seed),

      KEY_SIZE_LIST("model.hidden", model_hidden),
      KEY_SIZE("model.proj_hidden", model_proj_hidden),
      KEY_SIZE("model.proj_out", model_proj_out),

      KEY_STRING("train.method", train_method),
      KEY_SIZE("train.epochs", train_epochs),
      KEY_SIZE("train.unlabeled_batch", train_unlabeled_batch),
      KEY_SIZE("train.labeled_batch", train_labeled_batch),
      KEY_STRING("train.target_source", train_target_source),

      KEY_DOUBLE("optim.base_lr", optim_base_lr),
      KEY_DOUBLE("optim.final_lr", optim_final_lr),
      KEY_SIZE("optim.warmup_epochs", optim_warmup_epochs),
      KEY_DOUBLE("optim.momentum", optim_momentum),
      KEY_DOUBLE("optim.weight_decay", optim_weight_decay),

      KEY_DOUBLE("teacher.eta", teacher_eta),

      KEY_DOUBLE("sinkhorn.epsilon", sinkhorn_epsilon),
      KEY_INT("sinkhorn.iterations", sinkhorn_iterations),
      KEY_SIZE("sinkhorn.queue_capacity", sinkhorn_queue_capacity),

      KEY_DOUBLE("daino.center_mu", daino_center_mu),
      KEY_DOUBLE("daino.eps_start", daino_eps_start),
      KEY_DOUBLE("daino.eps_end", daino_eps_end),
      KEY_SIZE("daino.eps_warmup_epochs", daino_eps_warmup_epochs),

      KEY_DOUBLE("loss.tau", loss_tau),
      KEY_DOUBLE("loss.label_smoothing", loss_label_smoothing),

      KEY_SIZE("aug.global_views", aug_global_views),
      KEY_SIZE("aug.local_views", aug_local_views),
      KEY_DOUBLE("aug.global_noise", aug_global_noise),
      KEY_DOUBLE("aug.local_noise", aug_local_noise),
      KEY_DOUBLE("aug.labeled_noise", aug_labeled_noise),
      KEY_DOUBLE("aug.global_mask", aug_global_mask),
      KEY_DOUBLE("aug.local_mask", aug_local_mask),
      KEY_DOUBLE("aug.jitter_min", aug_jitter_min),
      KEY_DOUBLE("aug.jitter_max", aug_jitter_max),

      KEY_BOOL("mix.enabled", mix_enabled),
      KEY_DOUBLE("mix.beta_alpha", mix_beta_alpha),
      KEY_DOUBLE("mix.cutmix_prob", mix_cutmix_prob),
      KEY_DOUBLE("mix.prob", mix_prob),

      KEY_BOOL("probe.enabled", probe_enabled),
      KEY_DOUBLE("probe.lr", probe_lr),

      KEY_SIZE("eval.batch", eval_batch),
      KEY_DOUBLE("eval.tau", eval_tau),
      KEY_BOOL("eval.refit_probes", eval_refit_probes),
      KEY_SIZE("eval.probe_steps", eval_probe_steps),
      KEY_SIZE("eval.probe_batch", eval_probe_batch),

      KEY_STRING("export.depth", export_depth),
      KEY_STRING("export.path", export_path),

      KEY_DOUBLE("finetune.lr_scale", finetune_lr_scale),
      KEY_SIZE("finetune.epochs", finetune_epochs),
  };
}

#undef KEY_BOOL
#undef KEY_SIZE
#undef KEY_INT
#undef KEY_U64
#undef KEY_DOUBLE
#undef KEY_STRING
#undef KEY_SIZE_LIST

const ConfigKey* find_key(const std::string& name) {
  for (const auto& key : config_schema()) {
    if (key.name == name) {
      return &key;
    }
  }
  return nullptr;
}

void apply_assignment(RunConfig& cfg, const std::string& name, const std::string& value,
                      const std::string& where) {
  const ConfigKey* key = find_key(name);
  if (key == nullptr) {
    throw ConfigError(where + "unknown key '" + name + "'; did you mean '" + nearest_key(name) +
                      "'?");
  }
  key->set(cfg, value);
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = make_schema();
  return schema;
}

std::string nearest_key(const std::string& key) {
  const auto& schema = config_schema();
  std::size_t best = SIZE_MAX;
  std::string name;
  for (const auto& entry : schema) {
    const std::size_t d = edit_distance(key, entry.name);
    if (d < best) {
      best = d;
      name = entry.name;
    }
  }
  return name;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected 'key = value', got '" + stripped + "'");
    }
    const std::string name = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (name.empty()) {
      throw ConfigError(where + "expected 'key = value', got '" + stripped + "'");
    }
    apply_assignment(cfg, name, value, where);
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string name = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (name.empty()) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  apply_assignment(cfg, name, value, "");
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& key : config_schema()) {
    out += key.name;
    out += " = ";
    out += key.get(cfg);
    out += '\n';
  }
  return out;
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  out << resolved_config_text(cfg);
  if (!out) {
    throw FormatError("failed while writing '" + path + "'");
  }
}

std::string config_hash(const std::string& resolved_text) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  for (unsigned char c : resolved_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset build_dataset(const RunConfig& cfg) {
  if (cfg.data_kind == "csv") {
    if (cfg.data_path.empty()) {
      throw ConfigError("data.kind = csv requires data.path");
    }
    return load_dataset_csv(cfg.data_path);
  }
  if (cfg.data_kind == "idx") {
    if (cfg.data_images.empty() || cfg.data_labels.empty()) {
      throw ConfigError("data.kind = idx requires data.images and data.labels");
    }
    return load_idx(cfg.data_images, cfg.data_labels);
  }
  SyntheticSpec spec;
  spec.kind = synthetic_kind_from_name(cfg.data_kind);
  spec.n = cfg.data_n;
  spec.dim = cfg.data_dim;
  spec.classes = cfg.data_classes;
  spec.separation = cfg.data_separation;
  spec.seed = cfg.data_seed;
  return make_synthetic(spec);
}

SplitSpec build_split_spec(const RunConfig& cfg) {
  SplitSpec spec;
  spec.labeled_per_class = cfg.split_labeled_per_class;
  spec.labeled_fraction = cfg.split_labeled_fraction;
  spec.seed = cfg.split_seed;
  return spec;
}

EncoderConfig build_encoder_config(const RunConfig& cfg, const Dataset& dataset) {
  EncoderConfig enc;
  enc.input_dim = dataset.dim();
  enc.hidden_dims = cfg.model_hidden;
  enc.proj_hidden = cfg.model_proj_hidden;
  enc.proj_out = cfg.model_proj_out;
  enc.classes = dataset.classes;
  return enc;
}

TrainConfig build_train_config(const RunConfig& cfg) {
  TrainConfig t;
  if (cfg.train_method == "suave") {
    t.method = Method::suave;
  } else if (cfg.train_method == "daino") {
    t.method = Method::daino;
  } else {
    throw ConfigError("train.method must be 'suave' or 'daino', got '" + cfg.train_method + "'");
  }
  t.epochs = cfg.train_epochs;
  t.unlabeled_batch = cfg.train_unlabeled_batch;
  t.labeled_batch = cfg.train_labeled_batch;
  if (cfg.train_target_source == "teacher") {
    t.target_source = TargetNetwork::teacher;
  } else if (cfg.train_target_source == "student") {
    t.target_source = TargetNetwork::student;
  } else {
    throw ConfigError("train.target_source must be 'teacher' or 'student', got '" +
                      cfg.train_target_source + "'");
  }
  t.base_lr = cfg.optim_base_lr;
  t.final_lr = cfg.optim_final_lr;
  t.warmup_epochs = cfg.optim_warmup_epochs;
  t.momentum = cfg.optim_momentum;
  t.weight_decay = cfg.optim_weight_decay;
  t.teacher_eta = cfg.teacher_eta;
  t.sinkhorn.epsilon = cfg.sinkhorn_epsilon;
  t.sinkhorn.iterations = cfg.sinkhorn_iterations;
  t.sinkhorn.queue_capacity = cfg.sinkhorn_queue_capacity;
  t.center_mu = cfg.daino_center_mu;
  t.teacher_eps_start = cfg.daino_eps_start;
  t.teacher_eps_end = cfg.daino_eps_end;
  t.teacher_eps_warmup_epochs = cfg.daino_eps_warmup_epochs;
  t.loss.tau = cfg.loss_tau;
  t.loss.label_smoothing = cfg.loss_label_smoothing;
  t.aug.global_views = cfg.aug_global_views;
  t.aug.local_views = cfg.aug_local_views;
  t.aug.global_noise_sigma = cfg.aug_global_noise;
  t.aug.local_noise_sigma = cfg.aug_local_noise;
  t.aug.labeled_noise_sigma = cfg.aug_labeled_noise;
  t.aug.global_mask_frac = cfg.aug_global_mask;
  t.aug.local_mask_frac = cfg.aug_local_mask;
  t.aug.scale_jitter_min = cfg.aug_jitter_min;
  t.aug.scale_jitter_max = cfg.aug_jitter_max;
  t.mix.enabled = cfg.mix_enabled;
  t.mix.beta_alpha = cfg.mix_beta_alpha;
  t.mix.cutmix_prob = cfg.mix_cutmix_prob;
  t.mix.mix_prob = cfg.mix_prob;
  t.probes_enabled = cfg.probe_enabled;
  t.probe_lr = cfg.probe_lr;
  t.log_interval = cfg.run_log_interval;
  t.seed = cfg.run_seed;
  t.workers = cfg.run_workers;
  return t;
}

ProbeDepth parse_probe_depth(const std::string& name) {
  if (name == "backbone") {
    return ProbeDepth::backbone;
  }
  if (name == "proj1") {
    return ProbeDepth::proj1;
  }
  if (name == "proj2") {
    return ProbeDepth::proj2;
  }
  throw ConfigError("export.depth must be 'backbone', 'proj1' or 'proj2', got '" + name + "'");
}

}  // namespace suave
