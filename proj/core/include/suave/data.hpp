#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "suave/matrix.hpp"
#include "suave/objective.hpp"
#include "suave/rng.hpp"

namespace suave {

struct Dataset {
  std::string name;
  Matrix samples;  // N x dim
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return samples.rows; }
  std::size_t dim() const { return samples.cols; }
};

enum class SyntheticKind { gaussian_blobs, two_moons, concentric_rings };

SyntheticKind synthetic_kind_from_name(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::gaussian_blobs;
  std::size_t n = 2000;
  std::size_t dim = 16;
  std::size_t classes = 8;
  // Class separation in units of the per-axis noise scale; larger is cleaner.
  double separation = 6.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Deterministic under the spec seed; per-class counts within one of n/classes.
Dataset make_synthetic(const SyntheticSpec& spec);

// IDX image/label pair (big-endian magic and dims, unsigned byte payload).
// Pixels are scaled to [0, 1]. When expected_classes is nonzero any larger
// label is a format error; otherwise classes = max label + 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t expected_classes = 0);

// "label,x0,...,x{dim-1}" header then one row per sample.
void write_dataset_csv(const Dataset& dataset, const std::string& path);
Dataset load_dataset_csv(const std::string& path, std::size_t expected_classes = 0);

struct SplitSpec {
  std::size_t labeled_per_class = 0;  // exact per-class budget
  double labeled_fraction = 0.0;      // per-class rounded fraction
  std::uint64_t seed = 1;

  void validate() const;  // at most one budget form
};

// labeled: the sampled indices, ascending. unlabeled: every index of the
// dataset (labeled samples are revisited by the unlabeled objective).
struct Split {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

Split split_labels(const Dataset& dataset, const SplitSpec& spec);

struct AugPolicy {
  std::size_t global_views = 2;
  std::size_t local_views = 4;
  double global_noise_sigma = 0.1;
  double local_noise_sigma = 0.25;
  double labeled_noise_sigma = 0.05;
  double global_mask_frac = 0.1;  // probability of zeroing a coordinate
  double local_mask_frac = 0.3;
  double scale_jitter_min = 0.9;
  double scale_jitter_max = 1.1;

  // Local distortion must dominate labeled distortion whenever local views
  // are in play; fractions live in [0, 1).
  void validate() const;
};

// Corrupted copies of one sample: view = ((sample (.) mask) + noise) * s with
// a per-view scale s from the jitter range. Globals are weaker than locals.
struct ViewSet {
  std::vector<std::vector<double>> globals;
  std::vector<std::vector<double>> locals;
};

ViewSet augment_views(std::span<const double> sample, const AugPolicy& policy, Rng& rng);

// The single weakest view used for labeled samples: noise and scale jitter
// only, no masking.
std::vector<double> augment_labeled_view(std::span<const double> sample, const AugPolicy& policy,
                                         Rng& rng);

// Views for a batch of samples. Each sample's draws come from an RNG seeded
// by (seed, epoch, sample index), so worker parallelism cannot change the
// output. workers <= 1 runs serially.
std::vector<ViewSet> batch_views(const Matrix& samples, std::span<const std::size_t> indices,
                                 const AugPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                                 int workers);

Matrix batch_labeled_views(const Matrix& samples, std::span<const std::size_t> indices,
                           const AugPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
                           int workers);

struct MixSpec {
  bool enabled = true;
  double beta_alpha = 1.0;
  double cutmix_prob = 0.5;  // choose block swap over convex combination
  double mix_prob = 1.0;     // apply mixing at all this step

  void validate() const;
};

// Interpolates rows against a shuffled partner (convex combination, or a
// contiguous feature block swap whose realized fraction replaces lambda) and
// interpolates targets with the realized lambda. Mixed rows are concatenated
// to the originals, doubling the batch. Batches smaller than 2 rows pass
// through unchanged.
struct MixedBatch {
  Matrix views;
  TargetBatch targets;
  bool applied = false;
};

MixedBatch mix_batch(const Matrix& views, const TargetBatch& targets, const MixSpec& spec,
                     Rng& rng);

// Rows of `samples` selected by `indices`.
Matrix gather_rows(const Matrix& samples, std::span<const std::size_t> indices);

}  // namespace suave
