#include "vtr/optim.hpp"

#include <cmath>

namespace vtr::core {

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr) {
  VTR_CHECK(step >= 0 && step <= total_steps, "cosine_lr: step ", step,
            " outside [0,", total_steps, "]");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(3.14159265358979323846 * frac)) / 2.0;
}

void adamw_step(std::vector<Tensor>& params,
                const std::vector<const std::vector<double>*>& grads,
                OptimizerState& state, double lr_t) {
  VTR_CHECK(params.size() == grads.size(), "adamw_step: param/grad count mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].vec().size(), 0.0);
      state.second_moment[i].assign(params[i].vec().size(), 0.0);
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].vec();
    const auto& g = *grads[i];
    VTR_CHECK(g.size() == theta.size(), "adamw_step: gradient shape mismatch for param ", i);
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr_t * (mhat / (std::sqrt(vhat) + state.eps) +
                          state.weight_decay * theta[j]);
    }
  }
}

AdamW::AdamW(std::vector<Tensor> params, double base_lr, double weight_decay,
             double beta1, double beta2, double eps)
    : params_(std::move(params)) {
  state_.base_lr = base_lr;
  state_.weight_decay = weight_decay;
  state_.beta1 = beta1;
  state_.beta2 = beta2;
  state_.eps = eps;
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step(double lr_t) {
  std::vector<const std::vector<double>*> grads;
  grads.reserve(params_.size());
  for (auto& p : params_) grads.push_back(&p.grad_buffer());
  adamw_step(params_, grads, state_, lr_t);
}

double clip_grad_global_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    for (double g : p.grad_buffer()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad_buffer()) g *= s;
  }
  return norm;
}

}  // namespace vtr::core
