#include "suave/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "suave/errors.hpp"

namespace suave {

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "gaussian_blobs") {
    return SyntheticKind::gaussian_blobs;
  }
  if (name == "two_moons") {
    return SyntheticKind::two_moons;
  }
  if (name == "concentric_rings") {
    return SyntheticKind::concentric_rings;
  }
  throw ConfigError("unknown synthetic dataset kind '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (n == 0 || classes == 0) {
    throw ConfigError("synthetic: n and classes must be positive");
  }
  if (dim < 2) {
    throw ConfigError("synthetic: dim must be at least 2");
  }
  if (separation <= 0.0) {
    throw ConfigError("synthetic: separation must be positive");
  }
  if (kind == SyntheticKind::two_moons && classes != 2) {
    throw ConfigError("two_moons requires exactly 2 classes");
  }
}

namespace {

// Class sizes n/classes rounded so the first n % classes classes get one
// extra sample.
std::vector<std::size_t> class_counts(std::size_t n, std::size_t classes) {
  std::vector<std::size_t> counts(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) {
    ++counts[c];
  }
  return counts;
}

// Random unit directions, orthonormalized when they fit in the ambient
// dimension so centroid distances are exactly separation * sqrt(2).
std::vector<std::vector<double>> class_directions(Rng& rng, std::size_t classes,
                                                  std::size_t dim) {
  std::vector<std::vector<double>> dirs(classes, std::vector<double>(dim));
  for (auto& d : dirs) {
    for (double& v : d) {
      v = rng.normal();
    }
  }
  const bool orthonormalize = classes <= dim;
  for (std::size_t c = 0; c < classes; ++c) {
    if (orthonormalize) {
      for (std::size_t prev = 0; prev < c; ++prev) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          dot += dirs[c][i] * dirs[prev][i];
        }
        for (std::size_t i = 0; i < dim; ++i) {
          dirs[c][i] -= dot * dirs[prev][i];
        }
      }
    }
    double sq = 0.0;
    for (double v : dirs[c]) {
      sq += v * v;
    }
    const double norm = std::max(std::sqrt(sq), 1e-9);
    for (double& v : dirs[c]) {
      v /= norm;
    }
  }
  return dirs;
}

Dataset make_blobs(const SyntheticSpec& spec, Rng& rng) {
  Dataset d;
  d.name = "gaussian_blobs";
  d.classes = spec.classes;
  d.samples = Matrix(spec.n, spec.dim);
  d.labels.resize(spec.n);
  const auto counts = class_counts(spec.n, spec.classes);
  const auto dirs = class_directions(rng, spec.classes, spec.dim);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
      d.labels[row] = static_cast<int>(c);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        d.samples.at(row, k) = spec.separation * dirs[c][k] + rng.normal();
      }
    }
  }
  return d;
}

Dataset make_moons(const SyntheticSpec& spec, Rng& rng) {
  Dataset d;
  d.name = "two_moons";
  d.classes = 2;
  d.samples = Matrix(spec.n, spec.dim);
  d.labels.resize(spec.n);
  const double sigma = 0.5 / spec.separation;
  const auto counts = class_counts(spec.n, 2);
  std::size_t row = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
      d.labels[row] = static_cast<int>(c);
      const double t = std::numbers::pi * rng.uniform();
      double x;
      double y;
      if (c == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      d.samples.at(row, 0) = x + sigma * rng.normal();
      d.samples.at(row, 1) = y + sigma * rng.normal();
      for (std::size_t k = 2; k < spec.dim; ++k) {
        d.samples.at(row, k) = sigma * rng.normal();
      }
    }
  }
  return d;
}

Dataset make_rings(const SyntheticSpec& spec, Rng& rng) {
  Dataset d;
  d.name = "concentric_rings";
  d.classes = spec.classes;
  d.samples = Matrix(spec.n, spec.dim);
  d.labels.resize(spec.n);
  // Radial noise 0.1; ring gap separation * 0.1 keeps the separation knob in
  // noise units like the other generators.
  const double radial_sigma = 0.1;
  const auto counts = class_counts(spec.n, spec.classes);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const double radius = 1.0 + static_cast<double>(c) * spec.separation * radial_sigma;
    for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
      d.labels[row] = static_cast<int>(c);
      const double theta = 2.0 * std::numbers::pi * rng.uniform();
      const double r = radius + radial_sigma * rng.normal();
      d.samples.at(row, 0) = r * std::cos(theta);
      d.samples.at(row, 1) = r * std::sin(theta);
      for (std::size_t k = 2; k < spec.dim; ++k) {
        d.samples.at(row, k) = radial_sigma * rng.normal();
      }
    }
  }
  return d;
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(Rng::mix({spec.seed, static_cast<std::uint64_t>(RngStream::dataset)}));
  switch (spec.kind) {
    case SyntheticKind::gaussian_blobs:
      return make_blobs(spec, rng);
    case SyntheticKind::two_moons:
      return make_moons(spec, rng);
    case SyntheticKind::concentric_rings:
      return make_rings(spec, rng);
  }
  throw ConfigError("unknown synthetic dataset kind");
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(path + ": truncated header");
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t expected_classes) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) {
    throw FormatError(images_path + ": cannot open");
  }
  if (read_be32(img, images_path) != 0x00000803u) {
    throw FormatError(images_path + ": bad magic, expected idx3 unsigned-byte images");
  }
  const std::uint32_t count = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);
  const std::size_t dim = std::size_t(rows) * cols;
  std::vector<unsigned char> pixels(std::size_t(count) * dim);
  if (!img.read(reinterpret_cast<char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size()))) {
    throw FormatError(images_path + ": truncated image payload");
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) {
    throw FormatError(labels_path + ": cannot open");
  }
  if (read_be32(lab, labels_path) != 0x00000801u) {
    throw FormatError(labels_path + ": bad magic, expected idx1 unsigned-byte labels");
  }
  const std::uint32_t label_count = read_be32(lab, labels_path);
  if (label_count != count) {
    throw FormatError(labels_path + ": label count " + std::to_string(label_count) +
                      " disagrees with image count " + std::to_string(count));
  }
  std::vector<unsigned char> raw_labels(label_count);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(raw_labels.size()))) {
    throw FormatError(labels_path + ": truncated label payload");
  }

  Dataset d;
  d.name = "idx";
  d.samples = Matrix(count, dim);
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      d.samples.at(i, j) = pixels[i * dim + j] / 255.0;
    }
    const unsigned char y = raw_labels[i];
    if (expected_classes > 0 && y >= expected_classes) {
      throw FormatError(labels_path + ": label " + std::to_string(int(y)) + " at row " +
                        std::to_string(i) + " exceeds class count " +
                        std::to_string(expected_classes));
    }
    d.labels[i] = static_cast<int>(y);
  }
  d.classes = expected_classes;
  if (d.classes == 0) {
    int mx = 0;
    for (int y : d.labels) {
      mx = std::max(mx, y);
    }
    d.classes = static_cast<std::size_t>(mx) + 1;
  }
  return d;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError(path + ": cannot open for writing");
  }
  out << "label";
  for (std::size_t c = 0; c < dataset.dim(); ++c) {
    out << ",x" << c;
  }
  out << "\n";
  char buf[40];
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out << dataset.labels[r];
    for (std::size_t c = 0; c < dataset.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", dataset.samples.at(r, c));
      out << buf;
    }
    out << "\n";
  }
  if (!out) {
    throw FormatError(path + ": write failed");
  }
}

Dataset load_dataset_csv(const std::string& path, std::size_t expected_classes) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError(path + ": cannot open");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path + ": empty file");
  }
  if (line.rfind("label", 0) != 0) {
    throw FormatError(path + ": line 1: header must start with 'label'");
  }
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (dim == 0) {
    throw FormatError(path + ": line 1: no feature columns");
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) {
      throw FormatError(path + ": line " + std::to_string(line_no) + ": missing label");
    }
    try {
      labels.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw FormatError(path + ": line " + std::to_string(line_no) + ": bad label '" + cell +
                        "'");
    }
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + ": line " + std::to_string(line_no) + ": bad value '" + cell +
                          "'");
      }
      ++got;
    }
    if (got != dim) {
      throw FormatError(path + ": line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " features, got " + std::to_string(got));
    }
  }

  Dataset d;
  d.name = "csv";
  d.samples = Matrix(labels.size(), dim, std::move(values));
  d.labels = std::move(labels);
  int mx = 0;
  for (int y : d.labels) {
    if (y < 0) {
      throw FormatError(path + ": negative label");
    }
    if (expected_classes > 0 && static_cast<std::size_t>(y) >= expected_classes) {
      throw FormatError(path + ": label " + std::to_string(y) + " exceeds class count " +
                        std::to_string(expected_classes));
    }
    mx = std::max(mx, y);
  }
  d.classes = expected_classes > 0 ? expected_classes : static_cast<std::size_t>(mx) + 1;
  return d;
}

void SplitSpec::validate() const {
  if (labeled_per_class > 0 && labeled_fraction > 0.0) {
    throw ConfigError("split: set labeled_per_class or labeled_fraction, not both");
  }
  if (labeled_fraction < 0.0 || labeled_fraction > 1.0) {
    throw ConfigError("split: labeled_fraction must lie in [0, 1]");
  }
}

Split split_labels(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::size_t>> by_class(dataset.classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }

  Rng rng(Rng::mix({spec.seed, static_cast<std::uint64_t>(RngStream::shuffle_labeled)}));
  Split split;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    std::size_t take = 0;
    if (spec.labeled_per_class > 0) {
      if (pool.size() < spec.labeled_per_class) {
        throw ConfigError("split: class " + std::to_string(c) + " has " +
                          std::to_string(pool.size()) + " samples, fewer than labeled_per_class " +
                          std::to_string(spec.labeled_per_class));
      }
      take = spec.labeled_per_class;
    } else if (spec.labeled_fraction > 0.0) {
      take = static_cast<std::size_t>(
          std::llround(spec.labeled_fraction * static_cast<double>(pool.size())));
      take = std::min(take, pool.size());
    }
    rng.shuffle(pool);
    split.labeled.insert(split.labeled.end(), pool.begin(), pool.begin() + take);
  }
  std::sort(split.labeled.begin(), split.labeled.end());

  split.unlabeled.resize(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    split.unlabeled[i] = i;
  }
  return split;
}

void AugPolicy::validate() const {
  auto frac_ok = [](double f) { return f >= 0.0 && f < 1.0; };
  if (!frac_ok(global_mask_frac) || !frac_ok(local_mask_frac)) {
    throw ConfigError("augment: mask fractions must lie in [0, 1)");
  }
  if (global_noise_sigma < 0.0 || local_noise_sigma < 0.0 || labeled_noise_sigma < 0.0) {
    throw ConfigError("augment: noise sigmas must be non-negative");
  }
  if (scale_jitter_min <= 0.0 || scale_jitter_max < scale_jitter_min) {
    throw ConfigError("augment: scale jitter range is invalid");
  }
  if (local_views > 0) {
    // Labeled views never mask, so a positive local mask fraction counts as
    // strictly stronger on its own.
    const bool stronger = local_noise_sigma >= labeled_noise_sigma &&
                          (local_noise_sigma > labeled_noise_sigma || local_mask_frac > 0.0);
    if (!stronger) {
      throw ConfigError("augment: local distortion must be strictly stronger than labeled");
    }
  }
}

namespace {

std::vector<double> corrupt(std::span<const double> sample, double mask_frac, double noise_sigma,
                            const AugPolicy& policy, Rng& rng) {
  std::vector<double> v(sample.begin(), sample.end());
  for (double& x : v) {
    if (rng.uniform() < mask_frac) {
      x = 0.0;
    }
  }
  for (double& x : v) {
    x += noise_sigma * rng.normal();
  }
  const double s = rng.uniform(policy.scale_jitter_min, policy.scale_jitter_max);
  for (double& x : v) {
    x *= s;
  }
  return v;
}

}  // namespace

ViewSet augment_views(std::span<const double> sample, const AugPolicy& policy, Rng& rng) {
  ViewSet out;
  out.globals.reserve(policy.global_views);
  out.locals.reserve(policy.local_views);
  for (std::size_t g = 0; g < policy.global_views; ++g) {
    out.globals.push_back(
        corrupt(sample, policy.global_mask_frac, policy.global_noise_sigma, policy, rng));
  }
  for (std::size_t l = 0; l < policy.local_views; ++l) {
    out.locals.push_back(
        corrupt(sample, policy.local_mask_frac, policy.local_noise_sigma, policy, rng));
  }
  return out;
}

std::vector<double> augment_labeled_view(std::span<const double> sample, const AugPolicy& policy,
                                         Rng& rng) {
  return corrupt(sample, 0.0, policy.labeled_noise_sigma, policy, rng);
}

namespace {

int resolve_workers(int workers, std::size_t jobs) {
  if (workers <= 1 || jobs < 2) {
    return 1;
  }
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), jobs));
}

template <typename Fn>
void parallel_over(std::size_t jobs, int workers, Fn fn) {
  const int n = resolve_workers(workers, jobs);
  if (n == 1) {
    for (std::size_t i = 0; i < jobs; ++i) {
      fn(i);
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) {
    pool.emplace_back([jobs, n, w, &fn]() {
      for (std::size_t i = static_cast<std::size_t>(w); i < jobs;
           i += static_cast<std::size_t>(n)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
}

}  // namespace

std::vector<ViewSet> batch_views(const Matrix& samples, std::span<const std::size_t> indices,
                                 const AugPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                                 int workers) {
  policy.validate();
  std::vector<ViewSet> out(indices.size());
  parallel_over(indices.size(), workers, [&](std::size_t i) {
    Rng rng(Rng::mix({seed, static_cast<std::uint64_t>(RngStream::augment), epoch,
                      static_cast<std::uint64_t>(indices[i])}));
    out[i] = augment_views({samples.row(indices[i]), samples.cols}, policy, rng);
  });
  return out;
}

Matrix batch_labeled_views(const Matrix& samples, std::span<const std::size_t> indices,
                           const AugPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                           int workers) {
  policy.validate();
  Matrix out(indices.size(), samples.cols);
  parallel_over(indices.size(), workers, [&](std::size_t i) {
    Rng rng(Rng::mix({seed, static_cast<std::uint64_t>(RngStream::augment), epoch,
                      static_cast<std::uint64_t>(indices[i]), 0x4C41424Cu}));
    const auto v = augment_labeled_view({samples.row(indices[i]), samples.cols}, policy, rng);
    std::copy(v.begin(), v.end(), out.row(i));
  });
  return out;
}

void MixSpec::validate() const {
  if (beta_alpha <= 0.0) {
    throw ConfigError("mix: beta_alpha must be positive");
  }
  if (cutmix_prob < 0.0 || cutmix_prob > 1.0 || mix_prob < 0.0 || mix_prob > 1.0) {
    throw ConfigError("mix: probabilities must lie in [0, 1]");
  }
}

MixedBatch mix_batch(const Matrix& views, const TargetBatch& targets, const MixSpec& spec,
                     Rng& rng) {
  spec.validate();
  if (views.rows != targets.rows()) {
    throw ShapeError("mix_batch: views and targets disagree on rows");
  }
  MixedBatch out;
  out.views = views;
  out.targets = targets;
  if (!spec.enabled || views.rows < 2) {
    return out;
  }
  if (rng.uniform() >= spec.mix_prob) {
    return out;
  }

  const std::size_t batch = views.rows;
  const std::size_t dim = views.cols;
  const double lambda = rng.beta_symmetric(spec.beta_alpha);
  const bool use_cutmix = rng.uniform() < spec.cutmix_prob;
  const auto partner = rng.permutation(batch);

  std::size_t block_len = 0;
  std::size_t block_start = 0;
  double realized = lambda;
  if (use_cutmix) {
    block_len = static_cast<std::size_t>(std::llround((1.0 - lambda) * static_cast<double>(dim)));
    block_start = rng.index(dim - block_len + 1);
    realized = 1.0 - static_cast<double>(block_len) / static_cast<double>(dim);
  }

  out.views = Matrix(2 * batch, dim);
  std::copy(views.data.begin(), views.data.end(), out.views.data.begin());
  out.targets.values = Matrix(2 * batch, targets.cols());
  std::copy(targets.values.data.begin(), targets.values.data.end(),
            out.targets.values.data.begin());
  out.targets.origin = targets.origin;
  out.targets.origin.reserve(2 * batch);

  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = partner[i];
    double* mixed = out.views.row(batch + i);
    const double* a = views.row(i);
    const double* b = views.row(j);
    if (use_cutmix) {
      std::copy(a, a + dim, mixed);
      for (std::size_t k = block_start; k < block_start + block_len; ++k) {
        mixed[k] = b[k];
      }
    } else {
      for (std::size_t k = 0; k < dim; ++k) {
        mixed[k] = lambda * a[k] + (1.0 - lambda) * b[k];
      }
    }
    for (std::size_t c = 0; c < targets.cols(); ++c) {
      out.targets.values.at(batch + i, c) =
          realized * targets.values.at(i, c) + (1.0 - realized) * targets.values.at(j, c);
    }
    out.targets.origin.push_back(targets.origin[i]);
  }
  out.applied = true;
  return out;
}

Matrix gather_rows(const Matrix& samples, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), samples.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy(samples.row(indices[i]), samples.row(indices[i]) + samples.cols, out.row(i));
  }
  return out;
}

}  // namespace suave
