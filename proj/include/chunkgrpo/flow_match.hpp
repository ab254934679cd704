#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "chunkgrpo/data.hpp"
#include "chunkgrpo/error.hpp"
#include "chunkgrpo/network.hpp"
#include "chunkgrpo/random.hpp"

namespace chunkgrpo {

/// Decreasing grid t_T = 1 > ... > t_0 = 0. In storage order times[0] = 1
/// and times[steps] = 0, so step k integrates from times[k] to times[k+1].
struct TimeSchedule {
  std::vector<double> times;
  double shift = 1.0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// t = s·u / (1 + (s-1)·u) applied to a uniform grid u on [0,1].
TimeSchedule make_schedule(std::size_t steps, double shift);
void validate_schedule(const TimeSchedule& schedule);

/// (1-t)·x0 + t·x1
Vec interpolate(std::span<const double> x0, std::span<const double> x1, double t);

struct FmSample {
  Vec x0;  // data
  Vec x1;  // noise
  double t = 0.5;
  std::size_t condition = 0;
};

/// mean ‖(x1 - x0) - v̂_θ(x_t, t, c)‖² and its parameter gradient.
LossAndGradient fm_loss(const ParamVector& params, std::span<const FmSample> batch);

struct PretrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 256;
  double learning_rate = 2e-3;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  ParamVector params;
  std::vector<double> losses;  // one per step
};

/// Raised when the loss diverges; keeps the parameters from the last finite step.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, ParamVector last_good, std::size_t step)
      : std::runtime_error(what), last_good_(std::move(last_good)), step_(step) {}

  const ParamVector& last_good() const { return last_good_; }
  std::size_t step() const { return step_; }

 private:
  ParamVector last_good_;
  std::size_t step_;
};

/// Trains a fresh network (initialized from config.seed) on `data`.
PretrainResult pretrain(const DataSpec& data, const Architecture& arch, const PretrainConfig& config);
PretrainResult pretrain(const DataSpec& data, ParamVector init, const PretrainConfig& config);

struct OdeResult {
  Vec final_state;
  std::vector<Vec> trajectory;  // steps + 1 states, trajectory[0] = initial noise
};

/// Euler integration of dx = v̂ dt from the given noise at t = 1 down to t = 0.
OdeResult ode_sample(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                     std::span<const double> initial_noise);
OdeResult ode_sample(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                     RandomStream& stream);

}  // namespace chunkgrpo
