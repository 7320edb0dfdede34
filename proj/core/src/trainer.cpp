#include "suave/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "suave/errors.hpp"

namespace suave {

namespace {

// Stacks matrices with equal column counts, top to bottom.
Matrix vstack(const std::vector<const Matrix*>& parts) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const Matrix* m : parts) {
    rows += m->rows;
    cols = std::max(cols, m->cols);
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const Matrix* m : parts) {
    if (m->rows > 0 && m->cols != cols) {
      throw ContractError("vstack: mismatched column counts");
    }
    std::copy(m->data.begin(), m->data.end(), out.data.begin() + at * cols);
    at += m->rows;
  }
  return out;
}

Matrix collect_views(const std::vector<ViewSet>& views, bool global, std::size_t view_index,
                     std::size_t dim) {
  Matrix out(views.size(), dim);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& row = global ? views[i].globals.at(view_index) : views[i].locals.at(view_index);
    if (row.size() != dim) {
      throw ContractError("augmented view width does not match the dataset");
    }
    std::copy(row.begin(), row.end(), out.data.begin() + i * dim);
  }
  return out;
}

double top1_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t rows) {
  if (rows == 0) {
    return 0.0;
  }
  const auto& v = logits.values();
  const std::size_t cols = logits.cols();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (v[i * cols + j] > v[i * cols + best]) {
        best = j;
      }
    }
    if (static_cast<int>(best) == labels[i]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(rows);
}

void checked_assign(Tensor& dst, const Matrix& src, const std::string& name) {
  if (src.rows != dst.rows() || src.cols != dst.cols()) {
    throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(src.rows) +
                      "x" + std::to_string(src.cols) + ", expected " +
                      std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
  }
  dst.mutable_values() = src.data;
}

}  // namespace

void TrainConfig::validate(std::size_t labeled_count) const {
  // epochs == 0 is a legal no-op run: initial weights, empty history.
  if (unlabeled_batch == 0 && labeled_batch == 0) {
    throw ConfigError("train.unlabeled_batch and train.labeled_batch cannot both be 0");
  }
  // Batch statistics need at least two rows per forward.
  if (unlabeled_batch == 1) {
    throw ConfigError("train.unlabeled_batch must be 0 or at least 2");
  }
  if (labeled_batch == 1) {
    throw ConfigError("train.labeled_batch must be 0 or at least 2");
  }
  if (labeled_batch > 0 && labeled_count == 0) {
    throw ConfigError(
        "the labeled objective needs a non-empty labeled split; "
        "set train.labeled_batch = 0 to train without labels");
  }
  if (!(base_lr > 0.0)) {
    throw ConfigError("optim.lr must be positive");
  }
  if (final_lr < 0.0) {
    throw ConfigError("optim.final_lr must be non-negative");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("optim.momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("optim.weight_decay must be non-negative");
  }
  if (epochs > 0 && warmup_epochs > epochs) {
    throw ConfigError("optim.warmup_epochs cannot exceed train.epochs");
  }
  if (teacher_eta < 0.0 || teacher_eta > 1.0) {
    throw ConfigError("teacher.eta must lie in [0, 1]");
  }
  if (method == Method::daino && target_source == TargetNetwork::student) {
    throw ConfigError("daino targets come from the teacher; train.target_source must be teacher");
  }
  if (method == Method::suave && unlabeled_batch > 0) {
    sinkhorn.validate(unlabeled_batch);
  }
  if (method == Method::daino) {
    if (center_mu < 0.0 || center_mu > 1.0) {
      throw ConfigError("daino.center_mu must lie in [0, 1]");
    }
    if (!(teacher_eps_start > 0.0) || !(teacher_eps_end > 0.0)) {
      throw ConfigError("daino.eps_start and daino.eps_end must be positive");
    }
  }
  loss.validate();
  aug.validate();
  mix.validate();
  if (unlabeled_batch > 0 && aug.global_views != 2) {
    throw ConfigError("training uses exactly two global views; set aug.global_views = 2");
  }
  if (!(probe_lr > 0.0)) {
    throw ConfigError("probe.lr must be positive");
  }
  if (log_interval == 0) {
    throw ConfigError("run.log_interval must be positive");
  }
  if (workers < 1) {
    throw ConfigError("run.workers must be at least 1");
  }
}

std::string MetricsRecord::csv_header() {
  return "epoch,step,loss_total,loss_sup,loss_unsup,lr,assign_entropy_mean,center_norm,"
         "probe_acc_backbone,probe_acc_proj1,probe_acc_proj2,proto_acc";
}

std::string MetricsRecord::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", epoch, step,
                loss_total, loss_sup, loss_unsup, lr, assign_entropy_mean, center_norm,
                probe_acc_backbone, probe_acc_proj1, probe_acc_proj2, proto_acc);
  return buf;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  out << MetricsRecord::csv_header() << '\n';
  for (const auto& rec : records) {
    out << rec.csv_row() << '\n';
  }
  if (!out) {
    throw FormatError("failed while writing '" + path + "'");
  }
}

const Matrix* CheckpointState::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) {
      return &m;
    }
  }
  return nullptr;
}

void save_checkpoint(const CheckpointState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  std::string manifest;
  manifest += "suave-checkpoint " + state.version + "\n";
  manifest += "config_hash " + state.config_hash + "\n";
  std::size_t offset = 0;
  for (const auto& [name, m] : state.tensors) {
    const std::size_t bytes = m.data.size() * sizeof(double);
    manifest += "tensor " + name + " " + std::to_string(m.rows) + " " + std::to_string(m.cols) +
                " " + std::to_string(offset) + " " + std::to_string(bytes) + "\n";
    offset += bytes;
  }
  manifest += "payload " + std::to_string(offset) + "\n";
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& [name, m] : state.tensors) {
    for (double v : m.data) {
      const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      unsigned char b[8];
      for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
      }
      out.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  if (!out) {
    throw FormatError("failed while writing '" + path + "'");
  }
}

CheckpointState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("'" + path + "' is empty");
  }
  CheckpointState st;
  {
    std::istringstream ls(line);
    std::string tag;
    std::string version;
    ls >> tag >> version;
    if (tag != "suave-checkpoint") {
      throw FormatError("'" + path + "' is not a checkpoint file");
    }
    if (version != "1") {
      throw FormatError("unsupported checkpoint version '" + version + "' in '" + path + "'");
    }
    st.version = version;
  }
  struct RawEntry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t bytes = 0;
  };
  std::vector<RawEntry> entries;
  std::size_t total = 0;
  bool saw_payload = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "config_hash") {
      ls >> st.config_hash;
      if (!ls) {
        throw FormatError("malformed config_hash line in '" + path + "'");
      }
    } else if (tag == "tensor") {
      RawEntry e;
      ls >> e.name >> e.rows >> e.cols >> e.offset >> e.bytes;
      if (!ls) {
        throw FormatError("malformed tensor line in '" + path + "'");
      }
      entries.push_back(std::move(e));
    } else if (tag == "payload") {
      ls >> total;
      if (!ls) {
        throw FormatError("malformed payload line in '" + path + "'");
      }
      saw_payload = true;
      break;
    } else {
      throw FormatError("unrecognized manifest line in '" + path + "'");
    }
  }
  if (!saw_payload) {
    throw FormatError("'" + path + "' has no payload marker");
  }
  std::string payload(total, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(in.gcount()) != total) {
    throw FormatError("truncated payload in '" + path + "'");
  }
  char extra = 0;
  in.read(&extra, 1);
  if (in.gcount() == 1) {
    throw FormatError("'" + path + "' has trailing bytes after the payload");
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  for (const auto& e : entries) {
    if (e.bytes != e.rows * e.cols * sizeof(double)) {
      throw FormatError("tensor '" + e.name + "' has an inconsistent byte count in '" + path +
                        "'");
    }
    if (e.offset + e.bytes > total) {
      throw FormatError("tensor '" + e.name + "' overruns the payload in '" + path + "'");
    }
    Matrix m(e.rows, e.cols);
    const unsigned char* p = bytes + e.offset;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(p[8 * i + b]) << (8 * b);
      }
      m.data[i] = std::bit_cast<double>(bits);
    }
    st.tensors.emplace_back(e.name, std::move(m));
  }
  return st;
}

struct Trainer::StepOutcome {
  double loss_total = 0.0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double lr = 0.0;
  double entropy = 0.0;
  double center_norm = 0.0;
  std::array<double, 3> probe_acc{0.0, 0.0, 0.0};
  double proto_acc = 0.0;
};

namespace {

EncoderParams make_student(const Dataset& dataset, const Split& split, EncoderConfig encoder_cfg,
                           const TrainConfig& cfg) {
  encoder_cfg.validate();
  cfg.validate(split.labeled.size());
  if (dataset.size() == 0) {
    throw ConfigError("cannot train on an empty dataset");
  }
  if (encoder_cfg.input_dim != dataset.dim()) {
    throw ConfigError("model.input_dim does not match the dataset width");
  }
  if (encoder_cfg.classes != dataset.classes) {
    throw ConfigError("the prototype count must equal the number of classes");
  }
  if (cfg.unlabeled_batch > 0) {
    if (split.unlabeled.empty()) {
      throw ConfigError("train.unlabeled_batch > 0 but the unlabeled split is empty");
    }
    if (split.unlabeled.size() % cfg.unlabeled_batch == 1) {
      throw ConfigError(
          "the last unlabeled batch would hold a single row (batch statistics need two); "
          "adjust train.unlabeled_batch");
    }
  }
  return init_encoder(encoder_cfg, cfg.seed);
}

}  // namespace

Trainer::Trainer(Dataset dataset, Split split, EncoderConfig encoder_cfg, TrainConfig cfg)
    : dataset_(std::move(dataset)),
      split_(std::move(split)),
      cfg_(std::move(cfg)),
      student_(make_student(dataset_, split_, std::move(encoder_cfg), cfg_)),
      teacher_(make_teacher(student_, cfg_.teacher_eta)),
      encoder_opt_(trainable_params(student_)),
      probe_opt_(probe_params(student_)) {
  center_.gamma.assign(dataset_.classes, 0.0);
  center_.mu = cfg_.center_mu;
  const std::size_t views = std::max<std::size_t>(cfg_.aug.global_views, 1);
  for (std::size_t v = 0; v < views; ++v) {
    queues_.emplace_back(cfg_.sinkhorn.queue_capacity, dataset_.classes);
  }
}

std::size_t Trainer::steps_per_epoch() const {
  if (cfg_.unlabeled_batch == 0) {
    return (split_.labeled.size() + cfg_.labeled_batch - 1) / cfg_.labeled_batch;
  }
  return (split_.unlabeled.size() + cfg_.unlabeled_batch - 1) / cfg_.unlabeled_batch;
}

std::vector<std::size_t> Trainer::labeled_chunk(std::size_t count) {
  const std::size_t total = split_.labeled.size();
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (labeled_order_cycle_ != labeled_cycle_) {
      labeled_order_ = split_.labeled;
      Rng rng(Rng::mix(
          {cfg_.seed, static_cast<std::uint64_t>(RngStream::labeled_cycle), labeled_cycle_}));
      rng.shuffle(labeled_order_);
      labeled_order_cycle_ = labeled_cycle_;
    }
    const std::size_t take = std::min(count - out.size(), total - labeled_pos_);
    out.insert(out.end(), labeled_order_.begin() + static_cast<std::ptrdiff_t>(labeled_pos_),
               labeled_order_.begin() + static_cast<std::ptrdiff_t>(labeled_pos_ + take));
    labeled_pos_ += take;
    if (labeled_pos_ == total) {
      labeled_pos_ = 0;
      ++labeled_cycle_;
    }
  }
  return out;
}

BatchPlan Trainer::compose_batch() {
  BatchPlan plan;
  plan.epoch = epoch_;
  plan.step_in_epoch = step_in_epoch_;
  if (cfg_.unlabeled_batch > 0) {
    if (unlabeled_order_epoch_ != epoch_) {
      unlabeled_order_ = split_.unlabeled;
      Rng rng(Rng::mix(
          {cfg_.seed, static_cast<std::uint64_t>(RngStream::shuffle_unlabeled), epoch_}));
      rng.shuffle(unlabeled_order_);
      unlabeled_order_epoch_ = epoch_;
    }
    const std::size_t begin = step_in_epoch_ * cfg_.unlabeled_batch;
    const std::size_t end = std::min(begin + cfg_.unlabeled_batch, unlabeled_order_.size());
    plan.unlabeled.assign(unlabeled_order_.begin() + static_cast<std::ptrdiff_t>(begin),
                          unlabeled_order_.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (cfg_.labeled_batch > 0 && !split_.labeled.empty()) {
    plan.labeled = labeled_chunk(cfg_.labeled_batch);
  }
  ++step_in_epoch_;
  if (step_in_epoch_ >= steps_per_epoch()) {
    step_in_epoch_ = 0;
    ++epoch_;
  }
  return plan;
}

double Trainer::teacher_epsilon(std::size_t step) const {
  const std::size_t warm = cfg_.teacher_eps_warmup_epochs * steps_per_epoch();
  if (warm == 0 || step >= warm) {
    return cfg_.teacher_eps_end;
  }
  const double t = static_cast<double>(step) / static_cast<double>(warm);
  return cfg_.teacher_eps_start + t * (cfg_.teacher_eps_end - cfg_.teacher_eps_start);
}

MetricsRecord Trainer::train_step() {
  const std::size_t step_index = global_step_;
  const BatchPlan plan = compose_batch();

  StepOutcome out;
  out.lr = cosine_lr(step_index, cfg_.warmup_epochs * steps_per_epoch(), total_steps(),
                     cfg_.base_lr, cfg_.final_lr);

  const std::size_t classes = dataset_.classes;
  auto target_logits = [&](const Matrix& batch) -> Matrix {
    if (cfg_.target_source == TargetNetwork::teacher) {
      return encoder_forward(teacher_.params, batch, ForwardMode::target).logits.to_matrix();
    }
    NoGradGuard guard;
    return encoder_forward(student_, batch, ForwardMode::target).logits.to_matrix();
  };

  MultiViewBatch mvb;
  Matrix center_batch(0, classes);

  if (!plan.unlabeled.empty()) {
    const auto views = batch_views(dataset_.samples, plan.unlabeled, cfg_.aug, cfg_.seed,
                                   plan.epoch, cfg_.workers);
    const std::size_t dim = dataset_.dim();

    std::vector<Matrix> global_mats;
    global_mats.reserve(cfg_.aug.global_views);
    for (std::size_t v = 0; v < cfg_.aug.global_views; ++v) {
      global_mats.push_back(collect_views(views, /*global=*/true, v, dim));
    }

    // Target logits come from a separate pass over the original (unmixed)
    // global views; batch statistics, running buffers untouched.
    std::vector<Matrix> tlogits;
    tlogits.reserve(global_mats.size());
    for (const auto& g : global_mats) {
      tlogits.push_back(target_logits(g));
    }

    std::vector<Assignment> assigns;
    assigns.reserve(tlogits.size());
    for (std::size_t v = 0; v < tlogits.size(); ++v) {
      if (cfg_.method == Method::suave) {
        assigns.push_back(sinkhorn_assign(tlogits[v], queues_[v], cfg_.sinkhorn));
      } else {
        assigns.push_back(center_sharpen_assign(tlogits[v], center_, teacher_epsilon(step_index)));
      }
    }

    {
      const Matrix combined = vstack({&assigns[0].values, &assigns[1].values});
      out.entropy = mean_assignment_entropy(Assignment{combined});
    }

    // Each global view is supervised by the assignment of the other one.
    std::vector<TargetBatch> view_targets(global_mats.size());
    for (std::size_t v = 0; v < global_mats.size(); ++v) {
      std::vector<TargetSource> sources(plan.unlabeled.size());
      for (std::size_t i = 0; i < sources.size(); ++i) {
        sources[i].assignment_row = i;
      }
      view_targets[v] =
          build_targets(sources, classes, assigns[(v + 1) % assigns.size()], cfg_.loss);
    }

    for (std::size_t v = 0; v < global_mats.size(); ++v) {
      Rng mix_rng(Rng::mix({cfg_.seed, static_cast<std::uint64_t>(RngStream::mix), step_index,
                            static_cast<std::uint64_t>(v)}));
      MixedBatch mixed = mix_batch(global_mats[v], view_targets[v], cfg_.mix, mix_rng);
      auto fwd = encoder_forward(student_, mixed.views, ForwardMode::train);
      mvb.globals.push_back(ViewTerm{fwd.logits, std::move(mixed.targets)});
    }

    if (cfg_.aug.local_views > 0) {
      for (std::size_t v = 0; v < cfg_.aug.local_views; ++v) {
        const Matrix local = collect_views(views, /*global=*/false, v, dim);
        mvb.local_logits.push_back(encoder_forward(student_, local, ForwardMode::train).logits);
      }
      mvb.local_targets = view_targets;  // the original, unmixed target batches
    }

    if (cfg_.method == Method::daino) {
      center_batch = vstack({&tlogits[0], &tlogits[1]});
    }
  }

  ForwardOutputs labeled_fwd;
  TargetBatch labeled_targets;
  std::vector<int> labeled_hard;
  bool have_labeled = false;
  if (!plan.labeled.empty()) {
    const Matrix labeled_views = batch_labeled_views(dataset_.samples, plan.labeled, cfg_.aug,
                                                     cfg_.seed, plan.epoch, cfg_.workers);
    std::vector<TargetSource> sources(plan.labeled.size());
    labeled_hard.reserve(plan.labeled.size());
    for (std::size_t i = 0; i < plan.labeled.size(); ++i) {
      const int label = dataset_.labels[plan.labeled[i]];
      sources[i].label = label;
      labeled_hard.push_back(label);
    }
    TargetBatch targets = build_targets(sources, classes, Assignment{Matrix(0, classes)},
                                        cfg_.loss);
    Rng mix_rng(Rng::mix({cfg_.seed, static_cast<std::uint64_t>(RngStream::mix), step_index,
                          static_cast<std::uint64_t>(2)}));
    MixedBatch mixed = mix_batch(labeled_views, targets, cfg_.mix, mix_rng);
    labeled_fwd = encoder_forward(student_, mixed.views, ForwardMode::train);
    labeled_targets = std::move(mixed.targets);
    mvb.labeled = ViewTerm{labeled_fwd.logits, labeled_targets};
    have_labeled = true;
  }

  LossBreakdown loss = multiview_loss(mvb, cfg_.loss);
  const double total_value = loss.total.scalar_value();
  if (!std::isfinite(total_value)) {
    throw TrainingAbort("non-finite loss at epoch " + std::to_string(plan.epoch) + " step " +
                        std::to_string(plan.step_in_epoch));
  }
  out.loss_total = total_value;
  out.loss_sup = loss.supervised;
  out.loss_unsup = loss.unsupervised;

  backward(loss.total);
  sgd_step(encoder_opt_, out.lr, cfg_.momentum, cfg_.weight_decay);

  if (have_labeled) {
    const std::size_t original_rows = plan.labeled.size();
    out.proto_acc = top1_accuracy(labeled_fwd.logits, labeled_hard, original_rows);
    if (cfg_.probes_enabled) {
      const std::array<std::pair<ProbeDepth, const Tensor*>, 3> taps{
          std::pair{ProbeDepth::backbone, &labeled_fwd.backbone_feat},
          std::pair{ProbeDepth::proj1, &labeled_fwd.proj1_feat},
          std::pair{ProbeDepth::proj2, &labeled_fwd.embedding}};
      Tensor probe_loss;
      bool first = true;
      for (const auto& [depth, feat] : taps) {
        Tensor logits = probe_forward(student_, *feat, depth);
        out.probe_acc[static_cast<std::size_t>(depth)] =
            top1_accuracy(logits, labeled_hard, original_rows);
        Tensor ce = soft_cross_entropy(logits, labeled_targets, 1.0);
        probe_loss = first ? ce : add(probe_loss, ce);
        first = false;
      }
      backward(probe_loss);
      sgd_step(probe_opt_, cfg_.probe_lr, cfg_.momentum, 0.0);
    }
  }

  ema_update(teacher_, student_);
  if (cfg_.method == Method::daino && center_batch.rows > 0) {
    update_center(center_, center_batch);
  }
  renormalize_prototypes(student_);
  out.center_norm = center_.norm();

  ++global_step_;
  return make_record(plan.epoch, step_index, out);
}

std::vector<MetricsRecord> Trainer::run(const std::string& outdir) {
  std::string ckpt_dir;
  if (!outdir.empty()) {
    ckpt_dir = outdir + "/checkpoints";
    std::filesystem::create_directories(ckpt_dir);
  }
  std::vector<MetricsRecord> rows;
  while (epoch_ < cfg_.epochs) {
    const std::size_t epoch_now = epoch_;
    while (epoch_ == epoch_now) {
      const std::size_t step_index = global_step_;
      MetricsRecord rec = train_step();
      if (step_index % cfg_.log_interval == 0) {
        rows.push_back(rec);
      }
    }
    if (!ckpt_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch_now + 1);
      save_checkpoint(snapshot(), ckpt_dir + "/" + name);
    }
  }
  if (!ckpt_dir.empty()) {
    save_checkpoint(snapshot(), ckpt_dir + "/final.ckpt");
  }
  return rows;
}

CheckpointState Trainer::snapshot() const {
  CheckpointState st;
  st.version = "1";
  st.config_hash = cfg_.config_hash;
  auto push = [&](const std::string& name, Matrix m) {
    st.tensors.emplace_back(name, std::move(m));
  };
  for_each_tensor(student_, [&](const std::string& name, const Tensor& t) {
    push("student/" + name, t.to_matrix());
  });
  for_each_tensor(teacher_.params, [&](const std::string& name, const Tensor& t) {
    push("teacher/" + name, t.to_matrix());
  });
  for (const auto& entry : encoder_opt_.entries()) {
    push("opt/" + entry.name, Matrix(1, entry.momentum.size(), entry.momentum));
  }
  for (const auto& entry : probe_opt_.entries()) {
    push("probe_opt/" + entry.name, Matrix(1, entry.momentum.size(), entry.momentum));
  }
  push("center/gamma", Matrix(1, center_.gamma.size(), center_.gamma));
  for (std::size_t q = 0; q < queues_.size(); ++q) {
    push("queue/" + std::to_string(q), queues_[q].snapshot());
  }
  Matrix counters(1, 5);
  counters.data[0] = static_cast<double>(epoch_);
  counters.data[1] = static_cast<double>(step_in_epoch_);
  counters.data[2] = static_cast<double>(global_step_);
  counters.data[3] = static_cast<double>(labeled_cycle_);
  counters.data[4] = static_cast<double>(labeled_pos_);
  push("state/counters", counters);
  return st;
}

void Trainer::restore(const CheckpointState& state) {
  auto require = [&](const std::string& name) -> const Matrix& {
    const Matrix* m = state.find(name);
    if (m == nullptr) {
      throw FormatError("checkpoint is missing tensor '" + name + "'");
    }
    return *m;
  };
  for_each_tensor(student_, [&](const std::string& name, Tensor& t) {
    checked_assign(t, require("student/" + name), "student/" + name);
  });
  for_each_tensor(teacher_.params, [&](const std::string& name, Tensor& t) {
    checked_assign(t, require("teacher/" + name), "teacher/" + name);
  });
  for (auto& entry : encoder_opt_.entries()) {
    const Matrix& m = require("opt/" + entry.name);
    if (m.data.size() != entry.momentum.size()) {
      throw FormatError("checkpoint tensor 'opt/" + entry.name + "' has the wrong size");
    }
    entry.momentum = m.data;
  }
  for (auto& entry : probe_opt_.entries()) {
    const Matrix& m = require("probe_opt/" + entry.name);
    if (m.data.size() != entry.momentum.size()) {
      throw FormatError("checkpoint tensor 'probe_opt/" + entry.name + "' has the wrong size");
    }
    entry.momentum = m.data;
  }
  {
    const Matrix& m = require("center/gamma");
    if (m.data.size() != center_.gamma.size()) {
      throw FormatError("checkpoint tensor 'center/gamma' has the wrong size");
    }
    center_.gamma = m.data;
  }
  for (std::size_t q = 0; q < queues_.size(); ++q) {
    const Matrix& m = require("queue/" + std::to_string(q));
    queues_[q].clear();
    if (m.rows > 0) {
      queues_[q].push_batch(m);
    }
  }
  {
    const Matrix& m = require("state/counters");
    if (m.data.size() != 5) {
      throw FormatError("checkpoint tensor 'state/counters' has the wrong size");
    }
    epoch_ = static_cast<std::size_t>(std::llround(m.data[0]));
    step_in_epoch_ = static_cast<std::size_t>(std::llround(m.data[1]));
    global_step_ = static_cast<std::size_t>(std::llround(m.data[2]));
    labeled_cycle_ = static_cast<std::size_t>(std::llround(m.data[3]));
    labeled_pos_ = static_cast<std::size_t>(std::llround(m.data[4]));
  }
  unlabeled_order_epoch_ = SIZE_MAX;
  labeled_order_cycle_ = SIZE_MAX;
}

void Trainer::load_for_finetune(const CheckpointState& state) {
  for_each_tensor(student_, [&](const std::string& name, Tensor& t) {
    const Matrix* m = state.find("student/" + name);
    if (m == nullptr) {
      throw FormatError("checkpoint is missing tensor 'student/" + name + "'");
    }
    checked_assign(t, *m, "student/" + name);
  });
  reinit_prototypes(student_, cfg_.seed);
  teacher_ = make_teacher(student_, cfg_.teacher_eta);
  encoder_opt_.reset_momentum();
  probe_opt_.reset_momentum();
  for (auto& queue : queues_) {
    queue.clear();
  }
  std::fill(center_.gamma.begin(), center_.gamma.end(), 0.0);
  epoch_ = 0;
  step_in_epoch_ = 0;
  global_step_ = 0;
  labeled_cycle_ = 0;
  labeled_pos_ = 0;
  unlabeled_order_epoch_ = SIZE_MAX;
  labeled_order_cycle_ = SIZE_MAX;
}

MetricsRecord Trainer::make_record(std::size_t epoch, std::size_t step,
                                   const StepOutcome& out) const {
  MetricsRecord rec;
  rec.epoch = epoch;
  rec.step = step;
  rec.loss_total = out.loss_total;
  rec.loss_sup = out.loss_sup;
  rec.loss_unsup = out.loss_unsup;
  rec.lr = out.lr;
  rec.assign_entropy_mean = out.entropy;
  rec.center_norm = out.center_norm;
  rec.probe_acc_backbone = out.probe_acc[0];
  rec.probe_acc_proj1 = out.probe_acc[1];
  rec.probe_acc_proj2 = out.probe_acc[2];
  rec.proto_acc = out.proto_acc;
  return rec;
}

}  // namespace suave
