#include "suave/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "suave/assign.hpp"
#include "suave/errors.hpp"
#include "suave/objective.hpp"
#include "suave/rng.hpp"

namespace suave {

namespace {

std::size_t argmax_row(const std::vector<double>& values, std::size_t row, std::size_t cols) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < cols; ++j) {
    if (values[row * cols + j] > values[row * cols + best]) {
      best = j;
    }
  }
  return best;
}

std::vector<double> softmax_row(const std::vector<double>& values, std::size_t row,
                                std::size_t cols, double tau) {
  std::vector<double> p(cols);
  double mx = values[row * cols];
  for (std::size_t j = 1; j < cols; ++j) {
    mx = std::max(mx, values[row * cols + j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    p[j] = std::exp((values[row * cols + j] - mx) / tau);
    sum += p[j];
  }
  for (double& v : p) {
    v /= sum;
  }
  return p;
}

std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out(end - begin);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

}  // namespace

std::string EvalReport::to_text() const {
  char buf[128];
  std::string out;
  auto line = [&](const char* key, double value) {
    std::snprintf(buf, sizeof(buf), "%s = %.6f\n", key, value);
    out += buf;
  };
  line("proto_top1", proto_top1);
  line("probe_top1_backbone", probe_top1[0]);
  line("probe_top1_proj1", probe_top1[1]);
  line("probe_top1_proj2", probe_top1[2]);
  line("mean_assignment_entropy", mean_assignment_entropy);
  line("cluster_purity", cluster_purity);
  out += "per_class_accuracy =";
  for (double acc : per_class_accuracy) {
    std::snprintf(buf, sizeof(buf), " %.6f", acc);
    out += buf;
  }
  out += '\n';
  return out;
}

EvalReport evaluate(EncoderParams& params, const Dataset& testset, const EvalOptions& opts) {
  if (testset.size() == 0) {
    throw ConfigError("cannot evaluate an empty dataset");
  }
  if (!(opts.tau > 0.0)) {
    throw ConfigError("eval.tau must be positive");
  }
  const std::size_t n = testset.size();
  const std::size_t classes = testset.classes;
  const std::size_t batch = std::max<std::size_t>(opts.batch, 1);

  std::size_t proto_correct = 0;
  std::array<std::size_t, 3> probe_correct{0, 0, 0};
  std::vector<std::size_t> class_count(classes, 0);
  std::vector<std::size_t> class_correct(classes, 0);
  // cluster_class[k * classes + c] = |cluster k  intersect  class c|
  std::vector<std::size_t> cluster_class(classes * classes, 0);
  double entropy_sum = 0.0;

  NoGradGuard guard;
  for (std::size_t begin = 0; begin < n; begin += batch) {
    const std::size_t end = std::min(begin + batch, n);
    const std::vector<std::size_t> idx = index_range(begin, end);
    const Matrix rows = gather_rows(testset.samples, idx);
    ForwardOutputs fwd = encoder_forward(params, rows, ForwardMode::eval);

    const std::vector<double>& logits = fwd.logits.values();
    const std::array<const Tensor*, 3> taps{&fwd.backbone_feat, &fwd.proj1_feat, &fwd.embedding};
    std::array<Tensor, 3> probe_logits;
    for (std::size_t d = 0; d < 3; ++d) {
      probe_logits[d] = probe_forward(params, *taps[d], static_cast<ProbeDepth>(d));
    }

    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int label = testset.labels[idx[i]];
      const std::size_t cluster = argmax_row(logits, i, classes);
      ++class_count[static_cast<std::size_t>(label)];
      ++cluster_class[cluster * classes + static_cast<std::size_t>(label)];
      if (cluster == static_cast<std::size_t>(label)) {
        ++proto_correct;
        ++class_correct[static_cast<std::size_t>(label)];
      }
      entropy_sum += entropy(softmax_row(logits, i, classes, opts.tau));
      for (std::size_t d = 0; d < 3; ++d) {
        if (argmax_row(probe_logits[d].values(), i, classes) ==
            static_cast<std::size_t>(label)) {
          ++probe_correct[d];
        }
      }
    }
  }

  EvalReport report;
  report.proto_top1 = static_cast<double>(proto_correct) / static_cast<double>(n);
  for (std::size_t d = 0; d < 3; ++d) {
    report.probe_top1[d] = static_cast<double>(probe_correct[d]) / static_cast<double>(n);
  }
  report.mean_assignment_entropy = entropy_sum / static_cast<double>(n);
  std::size_t purity_sum = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      best = std::max(best, cluster_class[k * classes + c]);
    }
    purity_sum += best;
  }
  report.cluster_purity = static_cast<double>(purity_sum) / static_cast<double>(n);
  report.per_class_accuracy.resize(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (class_count[c] > 0) {
      report.per_class_accuracy[c] =
          static_cast<double>(class_correct[c]) / static_cast<double>(class_count[c]);
    }
  }
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  out << report.to_text();
  if (!out) {
    throw FormatError("failed while writing '" + path + "'");
  }
}

void probe_fit_online(EncoderParams& params, const Dataset& dataset,
                      std::span<const std::size_t> indices, const ProbeFitSpec& spec) {
  if (indices.empty()) {
    throw ConfigError("probe fitting needs a non-empty labeled set");
  }
  if (spec.batch == 0) {
    throw ConfigError("probe fitting needs a positive batch size");
  }
  ParamSet heads = probe_params(params);
  const std::size_t classes = dataset.classes;

  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::size_t cycle = 0;
  std::size_t pos = 0;
  Rng rng(Rng::mix({spec.seed, static_cast<std::uint64_t>(RngStream::labeled_cycle), cycle}));
  rng.shuffle(order);

  for (std::size_t step = 0; step < spec.steps; ++step) {
    std::vector<std::size_t> batch;
    batch.reserve(spec.batch);
    while (batch.size() < spec.batch) {
      const std::size_t take = std::min(spec.batch - batch.size(), order.size() - pos);
      batch.insert(batch.end(), order.begin() + static_cast<std::ptrdiff_t>(pos),
                   order.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
      if (pos == order.size()) {
        pos = 0;
        ++cycle;
        Rng next(
            Rng::mix({spec.seed, static_cast<std::uint64_t>(RngStream::labeled_cycle), cycle}));
        next.shuffle(order);
      }
    }

    const Matrix rows = gather_rows(dataset.samples, batch);
    ForwardOutputs fwd;
    {
      NoGradGuard guard;
      fwd = encoder_forward(params, rows, ForwardMode::eval);
    }
    std::vector<int> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      labels[i] = dataset.labels[batch[i]];
    }
    TargetBatch targets{smooth_labels(labels, classes, 0.0),
                        std::vector<TargetOrigin>(batch.size(), TargetOrigin::label)};

    const std::array<const Tensor*, 3> taps{&fwd.backbone_feat, &fwd.proj1_feat, &fwd.embedding};
    Tensor loss;
    for (std::size_t d = 0; d < 3; ++d) {
      Tensor logits = probe_forward(params, *taps[d], static_cast<ProbeDepth>(d));
      Tensor ce = soft_cross_entropy(logits, targets, 1.0);
      loss = loss.defined() ? add(loss, ce) : ce;
    }
    backward(loss);
    sgd_step(heads, spec.lr, spec.momentum, 0.0);
  }
}

Matrix compute_embeddings(EncoderParams& params, const Dataset& dataset, ProbeDepth depth,
                          std::size_t batch) {
  if (dataset.size() == 0) {
    throw ConfigError("cannot export embeddings of an empty dataset");
  }
  const std::size_t n = dataset.size();
  const std::size_t width = params.probe_input_dim(depth);
  const std::size_t step = std::max<std::size_t>(batch, 1);
  Matrix out(n, width);
  NoGradGuard guard;
  for (std::size_t begin = 0; begin < n; begin += step) {
    const std::size_t end = std::min(begin + step, n);
    const std::vector<std::size_t> idx = index_range(begin, end);
    ForwardOutputs fwd = encoder_forward(params, gather_rows(dataset.samples, idx),
                                         ForwardMode::eval);
    const Tensor& tap = depth == ProbeDepth::backbone  ? fwd.backbone_feat
                        : depth == ProbeDepth::proj1   ? fwd.proj1_feat
                                                       : fwd.embedding;
    const std::vector<double>& values = tap.values();
    std::copy(values.begin(), values.end(), out.data.begin() + begin * width);
  }
  return out;
}

void export_embeddings(EncoderParams& params, const Dataset& dataset, ProbeDepth depth,
                       const std::string& path, std::size_t batch) {
  const Matrix emb = compute_embeddings(params, dataset, depth, batch);
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  out << "label";
  for (std::size_t j = 0; j < emb.cols; ++j) {
    out << ",e" << j;
  }
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < emb.rows; ++i) {
    out << dataset.labels[i];
    for (std::size_t j = 0; j < emb.cols; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", emb.data[i * emb.cols + j]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw FormatError("failed while writing '" + path + "'");
  }
}

}  // namespace suave
