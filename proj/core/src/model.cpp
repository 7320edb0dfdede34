#include "suave/model.hpp"

#include <cmath>

#include "suave/errors.hpp"
#include "suave/rng.hpp"

namespace suave {

void EncoderConfig::validate() const {
  if (input_dim == 0 || classes == 0 || proj_hidden == 0 || proj_out == 0) {
    throw ConfigError("encoder: input_dim, classes, proj_hidden and proj_out must be positive");
  }
  if (hidden_dims.empty()) {
    throw ConfigError("encoder: at least one backbone hidden layer is required");
  }
  for (std::size_t h : hidden_dims) {
    if (h == 0) {
      throw ConfigError("encoder: hidden layer widths must be positive");
    }
  }
}

std::size_t EncoderParams::probe_input_dim(ProbeDepth depth) const {
  switch (depth) {
    case ProbeDepth::backbone:
      return config.hidden_dims.back();
    case ProbeDepth::proj1:
      return config.proj_hidden;
    case ProbeDepth::proj2:
      return config.proj_out;
  }
  throw ContractError("probe_input_dim: unknown depth");
}

namespace {

LinearLayer init_linear(Rng& rng, std::size_t in, std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) {
    v = rng.uniform(-bound, bound);
  }
  LinearLayer layer;
  layer.weight = Tensor::from_values(in, out, std::move(w), true);
  layer.bias = Tensor::zeros(1, out, true);
  return layer;
}

Tensor init_prototype_rows(Rng& rng, std::size_t classes, std::size_t dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> p(classes * dim);
  for (std::size_t k = 0; k < classes; ++k) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      p[k * dim + d] = rng.uniform(-bound, bound);
      sq += p[k * dim + d] * p[k * dim + d];
    }
    const double norm = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t d = 0; d < dim; ++d) {
      p[k * dim + d] /= norm;
    }
  }
  return Tensor::from_values(classes, dim, std::move(p), true);
}

Tensor clone_tensor(const Tensor& t, bool requires_grad) {
  return Tensor::from_values(t.rows(), t.cols(), t.values(), requires_grad);
}

LinearLayer clone_linear(const LinearLayer& l, bool rg) {
  return {clone_tensor(l.weight, rg), clone_tensor(l.bias, rg)};
}

// Linear -> bias; the building block of every trunk segment.
Tensor affine(const Tensor& x, const LinearLayer& layer) {
  return add(matmul(x, layer.weight), layer.bias);
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(Rng::mix({seed, static_cast<std::uint64_t>(RngStream::init)}));

  EncoderParams p;
  p.config = config;
  std::size_t in = config.input_dim;
  for (std::size_t h : config.hidden_dims) {
    p.backbone.push_back(init_linear(rng, in, h));
    in = h;
  }
  p.proj1 = init_linear(rng, in, config.proj_hidden);
  p.proj_bn.gamma = Tensor::from_values(1, config.proj_hidden,
                                        std::vector<double>(config.proj_hidden, 1.0), true);
  p.proj_bn.beta = Tensor::zeros(1, config.proj_hidden, true);
  p.proj_bn.running_mean = Tensor::zeros(1, config.proj_hidden, false);
  p.proj_bn.running_var = Tensor::from_values(
      1, config.proj_hidden, std::vector<double>(config.proj_hidden, 1.0), false);
  p.proj2 = init_linear(rng, config.proj_hidden, config.proj_out);
  p.prototypes = init_prototype_rows(rng, config.classes, config.proj_out);
  p.probes[0] = init_linear(rng, config.hidden_dims.back(), config.classes);
  p.probes[1] = init_linear(rng, config.proj_hidden, config.classes);
  p.probes[2] = init_linear(rng, config.proj_out, config.classes);
  return p;
}

EncoderParams clone_params(const EncoderParams& params, bool requires_grad) {
  EncoderParams c;
  c.config = params.config;
  for (const LinearLayer& l : params.backbone) {
    c.backbone.push_back(clone_linear(l, requires_grad));
  }
  c.proj1 = clone_linear(params.proj1, requires_grad);
  c.proj_bn.gamma = clone_tensor(params.proj_bn.gamma, requires_grad);
  c.proj_bn.beta = clone_tensor(params.proj_bn.beta, requires_grad);
  c.proj_bn.running_mean = clone_tensor(params.proj_bn.running_mean, false);
  c.proj_bn.running_var = clone_tensor(params.proj_bn.running_var, false);
  c.proj2 = clone_linear(params.proj2, requires_grad);
  c.prototypes = clone_tensor(params.prototypes, requires_grad);
  for (std::size_t i = 0; i < c.probes.size(); ++i) {
    c.probes[i] = clone_linear(params.probes[i], requires_grad);
  }
  return c;
}

ForwardOutputs encoder_forward(EncoderParams& params, const Matrix& batch, ForwardMode mode) {
  if (batch.cols != params.config.input_dim) {
    throw ShapeError("encoder_forward: batch width disagrees with input_dim");
  }
  if (batch.rows == 0) {
    throw ContractError("encoder_forward: empty batch");
  }
  const bool training = mode != ForwardMode::eval;
  const bool update_running = mode == ForwardMode::train;

  ForwardOutputs out;
  Tensor h = Tensor::from_matrix(batch, false);
  for (const LinearLayer& layer : params.backbone) {
    h = relu(affine(h, layer));
  }
  out.backbone_feat = h;

  Tensor p = affine(h, params.proj1);
  p = batch_norm(p, params.proj_bn.gamma, params.proj_bn.beta, params.proj_bn.running_mean,
                 params.proj_bn.running_var, training, update_running);
  p = relu(p);
  out.proj1_feat = p;

  out.embedding = l2_normalize_rows(affine(p, params.proj2));
  out.logits = matmul(out.embedding, params.prototypes, /*transpose_b=*/true);
  return out;
}

Tensor probe_forward(const EncoderParams& params, const Tensor& features, ProbeDepth depth) {
  const LinearLayer& head = params.probes[static_cast<std::size_t>(depth)];
  const Tensor detached = features.detach();
  if (detached.cols() != params.probe_input_dim(depth)) {
    throw ShapeError("probe_forward: feature width disagrees with probe depth");
  }
  return add(matmul(detached, head.weight), head.bias);
}

void renormalize_prototypes(EncoderParams& params) {
  auto& v = params.prototypes.mutable_values();
  const std::size_t dim = params.config.proj_out;
  for (std::size_t k = 0; k < params.config.classes; ++k) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      sq += v[k * dim + d] * v[k * dim + d];
    }
    const double norm = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t d = 0; d < dim; ++d) {
      v[k * dim + d] /= norm;
    }
  }
}

void reinit_prototypes(EncoderParams& params, std::uint64_t seed) {
  Rng rng(Rng::mix({seed, static_cast<std::uint64_t>(RngStream::prototype_reinit)}));
  const Tensor fresh = init_prototype_rows(rng, params.config.classes, params.config.proj_out);
  params.prototypes.mutable_values() = fresh.values();
}

void for_each_tensor(EncoderParams& params,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    const std::string base = "backbone." + std::to_string(i);
    fn(base + ".weight", params.backbone[i].weight);
    fn(base + ".bias", params.backbone[i].bias);
  }
  fn("proj1.weight", params.proj1.weight);
  fn("proj1.bias", params.proj1.bias);
  fn("proj_bn.gamma", params.proj_bn.gamma);
  fn("proj_bn.beta", params.proj_bn.beta);
  fn("proj_bn.running_mean", params.proj_bn.running_mean);
  fn("proj_bn.running_var", params.proj_bn.running_var);
  fn("proj2.weight", params.proj2.weight);
  fn("proj2.bias", params.proj2.bias);
  fn("prototypes", params.prototypes);
  static const char* probe_names[] = {"probe.backbone", "probe.proj1", "probe.proj2"};
  for (std::size_t i = 0; i < params.probes.size(); ++i) {
    fn(std::string(probe_names[i]) + ".weight", params.probes[i].weight);
    fn(std::string(probe_names[i]) + ".bias", params.probes[i].bias);
  }
}

void for_each_tensor(const EncoderParams& params,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  // Read-only view over the mutable enumeration; never writes.
  for_each_tensor(const_cast<EncoderParams&>(params),
                  [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

ParamSet trainable_params(EncoderParams& params) {
  ParamSet set;
  for_each_tensor(params, [&set](const std::string& name, Tensor& t) {
    if (name.rfind("probe.", 0) == 0 || name.rfind("proj_bn.running", 0) == 0) {
      return;
    }
    set.add(name, t);
  });
  return set;
}

ParamSet probe_params(EncoderParams& params) {
  ParamSet set;
  for_each_tensor(params, [&set](const std::string& name, Tensor& t) {
    if (name.rfind("probe.", 0) == 0) {
      set.add(name, t);
    }
  });
  return set;
}

TeacherState make_teacher(const EncoderParams& student, double eta) {
  if (eta < 0.0 || eta > 1.0) {
    throw ConfigError("teacher: eta must lie in [0, 1]");
  }
  return {clone_params(student, /*requires_grad=*/false), eta};
}

void ema_update(TeacherState& teacher, const EncoderParams& student) {
  // for_each_tensor enumerates both sides in the same order, so pair up the
  // tensors positionally.
  std::vector<Tensor*> mine;
  for_each_tensor(teacher.params,
                  [&mine](const std::string&, Tensor& t) { mine.push_back(&t); });
  std::size_t idx = 0;
  const double eta = teacher.eta;
  for_each_tensor(student, [&mine, &idx, eta](const std::string&, const Tensor& theta) {
    auto& phi = mine[idx++]->mutable_values();
    const auto& s = theta.values();
    for (std::size_t i = 0; i < phi.size(); ++i) {
      phi[i] = eta * phi[i] + (1.0 - eta) * s[i];
    }
  });
}

}  // namespace suave
