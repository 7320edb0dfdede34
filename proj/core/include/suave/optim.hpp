#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "suave/tensor.hpp"

namespace suave {

// Named parameter tensors plus their momentum buffers. Names are unique and
// double as the checkpoint tensor names.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor param;
    std::vector<double> momentum;
  };

  // Rejects duplicate names and tensors that do not require grad.
  void add(std::string name, const Tensor& param);

  Entry* find(const std::string& name);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void reset_momentum();

 private:
  std::vector<Entry> entries_;
};

// One SGD update over every entry:
//   buffer <- momentum * buffer + grad + weight_decay * param
//   param  <- param - lr * buffer
// Gradients are cleared afterwards; an entry with no populated gradient is a
// contract error.
void sgd_step(ParamSet& params, double lr, double momentum, double weight_decay);

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to
// final_lr at total_steps; steps beyond total_steps hold final_lr.
double cosine_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                 double base_lr, double final_lr);

}  // namespace suave
