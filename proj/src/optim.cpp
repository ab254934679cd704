#include "chunkgrpo/optim.hpp"

#include <cmath>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

OptimState OptimState::for_params(const ParamVector& params, double learning_rate, double weight_decay,
                                  double max_grad_norm) {
  OptimState s;
  s.first_moment.assign(params.size(), 0.0);
  s.second_moment.assign(params.size(), 0.0);
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  s.max_grad_norm = max_grad_norm;
  return s;
}

double global_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) {
    s += x * x;
  }
  return std::sqrt(s);
}

OptimStepResult optim_step(const ParamVector& params, std::span<const double> grads, const OptimState& state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw InputError("optim_step: shape mismatch between parameters, gradient and moments");
  }

  OptimStepResult out{params, state, global_norm(grads), 0.0};
  double scale = 1.0;
  if (state.max_grad_norm > 0.0 && out.grad_norm > state.max_grad_norm) {
    scale = state.max_grad_norm / out.grad_norm;
  }
  out.applied_norm = out.grad_norm * scale;

  OptimState& s = out.state;
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto theta = out.params.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i] * scale;
    s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g;
    s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.first_moment[i] / bc1;
    const double v_hat = s.second_moment[i] / bc2;
    theta[i] -= s.learning_rate * (m_hat / (std::sqrt(v_hat) + s.epsilon) + s.weight_decay * theta[i]);
  }
  return out;
}

}  // namespace chunkgrpo
