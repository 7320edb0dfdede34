#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "suave/matrix.hpp"
#include "suave/optim.hpp"
#include "suave/tensor.hpp"

namespace suave {

struct LinearLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;  // plain buffers, tracked by EMA and checkpoints
  Tensor running_var;
};

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{128, 128};
  std::size_t proj_hidden = 128;
  std::size_t proj_out = 32;
  std::size_t classes = 0;

  void validate() const;
};

// Feature taps exposed to linear probes.
enum class ProbeDepth { backbone = 0, proj1 = 1, proj2 = 2 };

// train: batch statistics, running buffers updated.
// target: batch statistics, running buffers untouched (teacher / target pass).
// eval: running buffers, per-sample deterministic.
enum class ForwardMode { train, target, eval };

// MLP backbone -> 2-layer projector (batchnorm on the hidden layer) ->
// L2-normalized embedding -> bias-free prototype logits. Prototype rows stay
// unit norm via renormalize_prototypes after every optimizer step, so logits
// are cosines in [-1, 1].
struct EncoderParams {
  EncoderConfig config;
  std::vector<LinearLayer> backbone;
  LinearLayer proj1;
  BatchNormLayer proj_bn;
  LinearLayer proj2;
  Tensor prototypes;  // classes x proj_out
  std::array<LinearLayer, 3> probes;

  std::size_t probe_input_dim(ProbeDepth depth) const;
};

struct ForwardOutputs {
  Tensor backbone_feat;
  Tensor proj1_feat;
  Tensor embedding;
  Tensor logits;
};

// Weights from fan-in scaled uniform init, biases zero, batchnorm identity,
// prototype rows unit norm. Same seed reproduces bitwise-identical values.
EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Deep copy; the copy's tensors require grad iff requires_grad is set.
EncoderParams clone_params(const EncoderParams& params, bool requires_grad);

ForwardOutputs encoder_forward(EncoderParams& params, const Matrix& batch, ForwardMode mode);

// Linear probe logits on internally detached features; gradients reach only
// the probe head.
Tensor probe_forward(const EncoderParams& params, const Tensor& features, ProbeDepth depth);

// Scales every prototype row back to unit norm (post-step hook).
void renormalize_prototypes(EncoderParams& params);

// Redraws prototype rows from the given seed; everything else is untouched.
void reinit_prototypes(EncoderParams& params, std::uint64_t seed);

// Enumerates every tensor (weights, biases, batchnorm buffers, prototypes,
// probes) under stable names; the single source of truth for EMA, checkpoints
// and teacher synchronization.
void for_each_tensor(EncoderParams& params,
                     const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const EncoderParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// Encoder-side trainable tensors (probes excluded).
ParamSet trainable_params(EncoderParams& params);

// The three probe heads.
ParamSet probe_params(EncoderParams& params);

// EMA copy of the student. Teacher tensors never require grad, so teacher
// forwards record no tape.
struct TeacherState {
  EncoderParams params;
  double eta = 0.99;
};

TeacherState make_teacher(const EncoderParams& student, double eta);

// phi <- eta * phi + (1 - eta) * theta elementwise over every tensor,
// batchnorm running statistics included.
void ema_update(TeacherState& teacher, const EncoderParams& student);

}  // namespace suave
