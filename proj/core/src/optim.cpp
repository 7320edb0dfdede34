#include "suave/optim.hpp"

#include <cmath>
#include <numbers>

#include "suave/errors.hpp"

namespace suave {

void ParamSet::add(std::string name, const Tensor& param) {
  if (!param.defined() || !param.requires_grad()) {
    throw ContractError("ParamSet::add: '" + name + "' must be a defined grad-enabled tensor");
  }
  for (const Entry& e : entries_) {
    if (e.name == name) {
      throw ContractError("ParamSet::add: duplicate name '" + name + "'");
    }
  }
  entries_.push_back({std::move(name), param, std::vector<double>(param.size(), 0.0)});
}

ParamSet::Entry* ParamSet::find(const std::string& name) {
  for (Entry& e : entries_) {
    if (e.name == name) {
      return &e;
    }
  }
  return nullptr;
}

void ParamSet::reset_momentum() {
  for (Entry& e : entries_) {
    e.momentum.assign(e.param.size(), 0.0);
  }
}

void sgd_step(ParamSet& params, double lr, double momentum, double weight_decay) {
  for (ParamSet::Entry& e : params.entries()) {
    if (!e.param.has_grad()) {
      throw ContractError("sgd_step: missing gradient for '" + e.name + "'");
    }
    const auto g = e.param.grad();
    auto& v = e.param.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      e.momentum[i] = momentum * e.momentum[i] + g[i] + weight_decay * v[i];
      v[i] -= lr * e.momentum[i];
    }
    e.param.clear_grad();
  }
}

double cosine_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                 double base_lr, double final_lr) {
  if (warmup_steps > total_steps) {
    throw ContractError("cosine_lr: warmup_steps exceeds total_steps");
  }
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) {
    return final_lr;
  }
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace suave
