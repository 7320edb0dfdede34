#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "suave/data.hpp"
#include "suave/model.hpp"

namespace suave {

struct EvalOptions {
  std::size_t batch = 512;  // memory bound only; eval-mode values are per-sample
  double tau = 0.1;         // softmax temperature for the assignment entropy metric
};

struct EvalReport {
  double proto_top1 = 0.0;
  std::array<double, 3> probe_top1{0.0, 0.0, 0.0};  // backbone, proj1, proj2
  double mean_assignment_entropy = 0.0;
  double cluster_purity = 0.0;
  std::vector<double> per_class_accuracy;

  std::string to_text() const;
};

// Eval-mode pass over the whole dataset: prototype-head top-1, probe top-1 at
// the three depths, mean per-sample entropy of softmax(logits / tau), and
// cluster purity with prototypes as clusters (no matching needed; the
// prototype index is the class index).
EvalReport evaluate(EncoderParams& params, const Dataset& testset, const EvalOptions& opts = {});

void write_eval_report(const EvalReport& report, const std::string& path);

struct ProbeFitSpec {
  std::size_t steps = 500;
  std::size_t batch = 64;
  double lr = 0.1;  // fixed, no schedule
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

// Trains the probe heads in place on frozen eval-mode features over the given
// labeled indices. The encoder itself is never touched.
void probe_fit_online(EncoderParams& params, const Dataset& dataset,
                      std::span<const std::size_t> indices, const ProbeFitSpec& spec);

// Feature rows at the requested depth for every sample, eval mode.
Matrix compute_embeddings(EncoderParams& params, const Dataset& dataset, ProbeDepth depth,
                          std::size_t batch = 512);

// CSV with header "label,e0,e1,..." and one row per sample; byte-identical
// across repeated exports of the same weights.
void export_embeddings(EncoderParams& params, const Dataset& dataset, ProbeDepth depth,
                       const std::string& path, std::size_t batch = 512);

}  // namespace suave
