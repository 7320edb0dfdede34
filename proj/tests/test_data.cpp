#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "suave/data.hpp"
#include "suave/errors.hpp"
#include "support/test_util.hpp"

using namespace suave;
using suave::testing::TempDir;

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

// Minimal hand-rolled IDX pair: two 2x2 images and their labels.
void write_idx_fixture(const std::string& images, const std::string& labels,
                       std::uint32_t image_magic = 0x00000803,
                       std::uint32_t label_magic = 0x00000801,
                       std::uint32_t label_count = 2) {
  std::ofstream img(images, std::ios::binary);
  write_be32(img, image_magic);
  write_be32(img, 2);  // count
  write_be32(img, 2);  // rows
  write_be32(img, 2);  // cols
  const unsigned char pixels[8] = {0, 51, 102, 153, 204, 255, 0, 128};
  img.write(reinterpret_cast<const char*>(pixels), 8);
  img.close();

  std::ofstream lab(labels, std::ios::binary);
  write_be32(lab, label_magic);
  write_be32(lab, label_count);
  const unsigned char ys[2] = {1, 0};
  lab.write(reinterpret_cast<const char*>(ys), label_count <= 2 ? label_count : 2);
}

}  // namespace

TEST_CASE("synthetic kinds parse by name") {
  CHECK(synthetic_kind_from_name("gaussian_blobs") == SyntheticKind::gaussian_blobs);
  CHECK(synthetic_kind_from_name("two_moons") == SyntheticKind::two_moons);
  CHECK(synthetic_kind_from_name("concentric_rings") == SyntheticKind::concentric_rings);
  CHECK_THROWS_AS(synthetic_kind_from_name("mnist"), ConfigError);
}

TEST_CASE("gaussian blobs: determinism, balance and labeling") {
  SyntheticSpec spec;
  spec.n = 200;
  spec.dim = 5;
  spec.classes = 4;
  spec.separation = 3.0;
  spec.seed = 17;

  Dataset a = make_synthetic(spec);
  Dataset b = make_synthetic(spec);
  CHECK(a.samples.data == b.samples.data);
  CHECK(a.labels == b.labels);

  CHECK(a.size() == 200);
  CHECK(a.dim() == 5);
  CHECK(a.classes == 4);
  std::vector<int> counts(4, 0);
  for (int y : a.labels) {
    REQUIRE(y >= 0);
    REQUIRE(y < 4);
    ++counts[y];
  }
  for (int c : counts) {
    CHECK(std::abs(c - 50) <= 1);
  }

  spec.seed = 18;
  Dataset c = make_synthetic(spec);
  CHECK(a.samples.data != c.samples.data);
}

TEST_CASE("separation controls how clean the blobs are") {
  SyntheticSpec near_spec;
  near_spec.n = 400;
  near_spec.dim = 4;
  near_spec.classes = 2;
  near_spec.separation = 0.5;
  near_spec.seed = 3;
  SyntheticSpec far_spec = near_spec;
  far_spec.separation = 8.0;

  // Nearest-class-mean accuracy as a crude separability probe.
  auto ncm_accuracy = [](const Dataset& d) {
    std::vector<std::vector<double>> means(d.classes, std::vector<double>(d.dim(), 0.0));
    std::vector<double> counts(d.classes, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto y = static_cast<std::size_t>(d.labels[i]);
      counts[y] += 1.0;
      for (std::size_t k = 0; k < d.dim(); ++k) {
        means[y][k] += d.samples.at(i, k);
      }
    }
    for (std::size_t c = 0; c < d.classes; ++c) {
      for (double& m : means[c]) {
        m /= counts[c];
      }
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t c = 0; c < d.classes; ++c) {
        double dist = 0.0;
        for (std::size_t k = 0; k < d.dim(); ++k) {
          const double diff = d.samples.at(i, k) - means[c][k];
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      hits += best == static_cast<std::size_t>(d.labels[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(d.size());
  };

  CHECK(ncm_accuracy(make_synthetic(far_spec)) > 0.99);
  CHECK(ncm_accuracy(make_synthetic(near_spec)) < 0.95);
}

TEST_CASE("moons and rings keep their class conventions") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::two_moons;
  spec.n = 100;
  spec.dim = 2;
  spec.classes = 2;
  Dataset moons = make_synthetic(spec);
  CHECK(moons.classes == 2);
  CHECK(moons.size() == 100);

  spec.classes = 3;
  CHECK_THROWS_AS(make_synthetic(spec), ConfigError);

  spec.kind = SyntheticKind::concentric_rings;
  spec.classes = 3;
  Dataset rings = make_synthetic(spec);
  CHECK(rings.classes == 3);
  for (int y : rings.labels) {
    CHECK(y < 3);
  }

  SyntheticSpec bad;
  bad.dim = 1;
  CHECK_THROWS_AS(make_synthetic(bad), ConfigError);
  bad = SyntheticSpec{};
  bad.n = 0;
  CHECK_THROWS_AS(make_synthetic(bad), ConfigError);
  bad = SyntheticSpec{};
  bad.separation = 0.0;
  CHECK_THROWS_AS(make_synthetic(bad), ConfigError);
}

TEST_CASE("csv round trip is exact") {
  TempDir tmp("csv");
  SyntheticSpec spec;
  spec.n = 50;
  spec.dim = 3;
  spec.classes = 2;
  Dataset d = make_synthetic(spec);
  const std::string path = tmp.file("data.csv");
  write_dataset_csv(d, path);

  Dataset back = load_dataset_csv(path);
  CHECK(back.samples.data == d.samples.data);  // %.17g survives the round trip
  CHECK(back.labels == d.labels);
  CHECK(back.classes == d.classes);
  CHECK(back.dim() == 3);

  CHECK_THROWS_AS(load_dataset_csv(tmp.file("missing.csv")), FormatError);
  CHECK_THROWS_AS(load_dataset_csv(path, /*expected_classes=*/1), FormatError);

  suave::testing::write_file(tmp.file("bad.csv"), "label,x0\n0,notanumber\n");
  CHECK_THROWS_AS(load_dataset_csv(tmp.file("bad.csv")), FormatError);
  suave::testing::write_file(tmp.file("short.csv"), "label,x0,x1\n0,1.0\n");
  CHECK_THROWS_AS(load_dataset_csv(tmp.file("short.csv")), FormatError);
  suave::testing::write_file(tmp.file("noheader.csv"), "0,1.0\n");
  CHECK_THROWS_AS(load_dataset_csv(tmp.file("noheader.csv")), FormatError);
}

TEST_CASE("idx loader: payload scaling, classes, and format errors") {
  TempDir tmp("idx");
  const std::string images = tmp.file("img.idx");
  const std::string labels = tmp.file("lab.idx");

  write_idx_fixture(images, labels);
  Dataset d = load_idx(images, labels);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.classes == 2);  // max label + 1
  CHECK(d.labels[0] == 1);
  CHECK(d.labels[1] == 0);
  CHECK(d.samples.at(0, 0) == doctest::Approx(0.0));
  CHECK(d.samples.at(0, 1) == doctest::Approx(51.0 / 255.0));
  CHECK(d.samples.at(1, 1) == doctest::Approx(1.0));

  Dataset wide = load_idx(images, labels, /*expected_classes=*/5);
  CHECK(wide.classes == 5);
  CHECK_THROWS_AS(load_idx(images, labels, /*expected_classes=*/1), FormatError);

  write_idx_fixture(images, labels, /*image_magic=*/0x00000801);
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  write_idx_fixture(images, labels, 0x00000803, /*label_magic=*/0x00000803);
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  write_idx_fixture(images, labels, 0x00000803, 0x00000801, /*label_count=*/3);
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);
  CHECK_THROWS_AS(load_idx(tmp.file("nope.idx"), labels), FormatError);
}

TEST_CASE("label split: exact per-class budgets, every index unlabeled") {
  SyntheticSpec spec;
  spec.n = 120;
  spec.dim = 3;
  spec.classes = 3;
  Dataset d = make_synthetic(spec);

  SplitSpec s;
  s.labeled_per_class = 5;
  s.seed = 4;
  Split split = split_labels(d, s);
  CHECK(split.labeled.size() == 15);
  CHECK(std::is_sorted(split.labeled.begin(), split.labeled.end()));
  std::vector<int> per_class(3, 0);
  for (std::size_t idx : split.labeled) {
    ++per_class[static_cast<std::size_t>(d.labels[idx])];
  }
  CHECK(per_class == std::vector<int>{5, 5, 5});

  CHECK(split.unlabeled.size() == d.size());
  std::vector<std::size_t> iota(d.size());
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(split.unlabeled == iota);

  // Deterministic under the split seed, different under another.
  CHECK(split_labels(d, s).labeled == split.labeled);
  SplitSpec s2 = s;
  s2.seed = 5;
  CHECK(split_labels(d, s2).labeled != split.labeled);

  SplitSpec frac;
  frac.labeled_fraction = 0.1;  // 4 of each 40-strong class
  Split fsplit = split_labels(d, frac);
  CHECK(fsplit.labeled.size() == 12);

  SplitSpec both;
  both.labeled_per_class = 1;
  both.labeled_fraction = 0.5;
  CHECK_THROWS_AS(split_labels(d, both), ConfigError);

  SplitSpec greedy;
  greedy.labeled_per_class = 1000;
  CHECK_THROWS_AS(split_labels(d, greedy), ConfigError);
}

TEST_CASE("augmentation: view counts, masking and the labeled fast path") {
  AugPolicy policy;  // defaults: 2 globals, 4 locals
  Rng rng(8);
  std::vector<double> sample{1.0, -2.0, 3.0, -4.0};
  ViewSet views = augment_views(sample, policy, rng);
  CHECK(views.globals.size() == 2);
  CHECK(views.locals.size() == 4);
  CHECK(views.globals[0].size() == 4);

  // sigma = 0 and unit jitter isolate the masking: local views zero roughly
  // local_mask_frac of the coordinates, the labeled view is the identity.
  AugPolicy pure;
  pure.global_noise_sigma = 0.0;
  pure.local_noise_sigma = 0.0;
  pure.labeled_noise_sigma = 0.0;
  pure.scale_jitter_min = 1.0;
  pure.scale_jitter_max = 1.0;
  pure.global_mask_frac = 0.0;
  pure.local_mask_frac = 0.5;

  Rng rng2(9);
  std::size_t zeros = 0, total = 0;
  for (int trial = 0; trial < 500; ++trial) {
    ViewSet v = augment_views(sample, pure, rng2);
    for (const auto& g : v.globals) {
      for (double x : g) {
        CHECK(x != 0.0);  // no global masking requested
      }
    }
    for (const auto& l : v.locals) {
      for (double x : l) {
        zeros += x == 0.0;
        ++total;
      }
    }
    CHECK(augment_labeled_view(sample, pure, rng2) == sample);
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(total);
  CHECK(frac > 0.45);
  CHECK(frac < 0.55);

  AugPolicy bad;
  bad.scale_jitter_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AugPolicy{};
  bad.local_mask_frac = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("batched views are worker-count invariant and coordinate-seeded") {
  SyntheticSpec spec;
  spec.n = 16;
  spec.dim = 4;
  spec.classes = 2;
  Dataset d = make_synthetic(spec);
  std::vector<std::size_t> indices{0, 3, 5, 7, 8, 11};
  AugPolicy policy;

  auto flat = [](const std::vector<ViewSet>& vs) {
    std::vector<double> all;
    for (const auto& v : vs) {
      for (const auto& g : v.globals) {
        all.insert(all.end(), g.begin(), g.end());
      }
      for (const auto& l : v.locals) {
        all.insert(all.end(), l.begin(), l.end());
      }
    }
    return all;
  };

  const auto serial = batch_views(d.samples, indices, policy, 7, 2, 1);
  const auto threaded = batch_views(d.samples, indices, policy, 7, 2, 4);
  CHECK(flat(serial) == flat(threaded));

  const auto again = batch_views(d.samples, indices, policy, 7, 2, 1);
  CHECK(flat(serial) == flat(again));
  const auto other_epoch = batch_views(d.samples, indices, policy, 7, 3, 1);
  CHECK(flat(serial) != flat(other_epoch));

  const Matrix lab1 = batch_labeled_views(d.samples, indices, policy, 7, 2, 1);
  const Matrix lab4 = batch_labeled_views(d.samples, indices, policy, 7, 2, 4);
  CHECK(lab1.data == lab4.data);
  CHECK(lab1.rows == indices.size());
}

TEST_CASE("mix_batch: disabled and tiny batches pass through") {
  MixSpec spec;
  spec.enabled = false;
  Rng rng(10);
  Matrix views(3, 2, {1, 2, 3, 4, 5, 6});
  TargetBatch targets;
  targets.values = Matrix(3, 2, {1, 0, 0, 1, 1, 0});
  targets.origin = {TargetOrigin::label, TargetOrigin::label, TargetOrigin::label};

  MixedBatch off = mix_batch(views, targets, spec, rng);
  CHECK_FALSE(off.applied);
  CHECK(off.views.data == views.data);
  CHECK(off.targets.values.data == targets.values.data);

  MixSpec on;
  Matrix single(1, 2, {1, 2});
  TargetBatch single_t;
  single_t.values = Matrix(1, 2, {1, 0});
  single_t.origin = {TargetOrigin::label};
  MixedBatch tiny = mix_batch(single, single_t, on, rng);
  CHECK_FALSE(tiny.applied);
  CHECK(tiny.views.rows == 1);

  MixSpec never;
  never.mix_prob = 0.0;
  MixedBatch skipped = mix_batch(views, targets, never, rng);
  CHECK_FALSE(skipped.applied);
}

TEST_CASE("mix_batch doubles the batch with consistent row interpolation") {
  // Identity targets expose the realized lambda and the partner directly.
  const std::size_t b = 4, dim = 6;
  Matrix views(b, dim);
  Rng fill(11);
  for (double& v : views.data) {
    v = fill.uniform(-1.0, 1.0);
  }
  TargetBatch targets;
  targets.values = Matrix(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    targets.values.at(i, i) = 1.0;
    targets.origin.push_back(TargetOrigin::pseudo);
  }

  MixSpec spec;  // defaults: mixup or cutmix, coin per batch
  int applied_count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    MixedBatch mixed = mix_batch(views, targets, spec, rng);
    REQUIRE(mixed.applied);
    ++applied_count;
    REQUIRE(mixed.views.rows == 2 * b);
    REQUIRE(mixed.targets.rows() == 2 * b);

    // Originals ride in front, untouched.
    for (std::size_t i = 0; i < b * dim; ++i) {
      CHECK(mixed.views.data[i] == views.data[i]);
    }

    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t row = b + i;
      // Targets stay row-stochastic convex combinations.
      double sum = 0.0;
      for (std::size_t c = 0; c < b; ++c) {
        sum += mixed.targets.values.at(row, c);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

      const double lam = mixed.targets.values.at(row, i);
      REQUIRE(lam >= 0.0);
      REQUIRE(lam <= 1.0);
      // Find the partner: the only other positive target entry.
      std::size_t partner = i;
      for (std::size_t c = 0; c < b; ++c) {
        if (c != i && mixed.targets.values.at(row, c) > 1e-12) {
          partner = c;
        }
      }

      // The feature row must be either the lambda blend (mixup) or a
      // coordinate-wise selection (cutmix) against the same partner.
      bool blend_ok = true, select_ok = true;
      std::size_t partner_coords = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double got = mixed.views.at(row, k);
        const double a = views.at(i, k);
        const double p = views.at(partner, k);
        if (std::abs(got - (lam * a + (1.0 - lam) * p)) > 1e-9) {
          blend_ok = false;
        }
        if (std::abs(got - a) > 1e-12 && std::abs(got - p) > 1e-12) {
          select_ok = false;
        } else if (std::abs(got - a) > 1e-12) {
          ++partner_coords;
        }
      }
      if (partner == i) {
        CHECK(blend_ok);  // self-partner: both reduce to the identity
      } else {
        CHECK((blend_ok || select_ok));
        if (select_ok && !blend_ok) {
          // Cutmix lambda is the realized kept fraction.
          CHECK(static_cast<double>(dim - partner_coords) / static_cast<double>(dim) ==
                doctest::Approx(lam).epsilon(1e-9));
        }
      }
    }
  }
  CHECK(applied_count == 20);
}

TEST_CASE("gather_rows selects in order") {
  Matrix m(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<std::size_t> idx{2, 0};
  Matrix g = gather_rows(m, idx);
  REQUIRE(g.rows == 2);
  CHECK(g.at(0, 0) == 5);
  CHECK(g.at(0, 1) == 6);
  CHECK(g.at(1, 0) == 1);
  CHECK(g.at(1, 1) == 2);
}
