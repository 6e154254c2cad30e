#pragma once

#include <cstdint>
#include <vector>

#include "vtr/tensor.hpp"

namespace vtr::core {

// base_lr * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr);

// Decoupled-weight-decay Adam with bias-corrected moments.
struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
  double base_lr = 3e-5;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One update over a parameter list with externally supplied gradients.
// Moment buffers are created lazily on the first call.
void adamw_step(std::vector<Tensor>& params,
                const std::vector<const std::vector<double>*>& grads,
                OptimizerState& state, double lr_t);

// Wrapper bound to a parameter list; reads gradients from the parameters'
// grad buffers.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double base_lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void zero_grad();
  void step(double lr_t);
  const OptimizerState& state() const { return state_; }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimizerState state_;
};

// Scales all parameter gradients in place so the global L2 norm does not
// exceed max_norm. Returns the pre-clip norm.
double clip_grad_global_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace vtr::core
