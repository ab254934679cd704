#pragma once

#include <cstdint>
#include <span>

#include "chunkgrpo/network.hpp"

namespace chunkgrpo {

/// AdamW moments and hyperparameters.
struct OptimState {
  Vec first_moment;
  Vec second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm ceiling applied before the update; <= 0 disables.
  double max_grad_norm = 0.01;

  static OptimState for_params(const ParamVector& params, double learning_rate, double weight_decay,
                               double max_grad_norm);

  bool operator==(const OptimState&) const = default;
};

struct OptimStepResult {
  ParamVector params;
  OptimState state;
  double grad_norm = 0.0;       // before clipping
  double applied_norm = 0.0;    // after clipping
};

double global_norm(std::span<const double> v);

/// One decoupled-weight-decay Adam step with global-norm clipping.
OptimStepResult optim_step(const ParamVector& params, std::span<const double> grads, const OptimState& state);

}  // namespace chunkgrpo
