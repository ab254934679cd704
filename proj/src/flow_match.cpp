#include "chunkgrpo/flow_match.hpp"

#include <cmath>
#include <string>

#include "chunkgrpo/optim.hpp"

namespace chunkgrpo {

TimeSchedule make_schedule(std::size_t steps, double shift) {
  if (steps < 2) {
    throw InputError("make_schedule: need at least 2 steps");
  }
  if (!(shift > 0.0) || !std::isfinite(shift)) {
    throw InputError("make_schedule: shift must be positive");
  }
  TimeSchedule s;
  s.shift = shift;
  s.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double u = static_cast<double>(steps - k) / static_cast<double>(steps);
    s.times[k] = shift * u / (1.0 + (shift - 1.0) * u);
  }
  s.times.front() = 1.0;
  s.times.back() = 0.0;
  return s;
}

void validate_schedule(const TimeSchedule& schedule) {
  if (schedule.times.size() < 3) {
    throw InputError("schedule: need at least 2 steps");
  }
  if (schedule.times.front() != 1.0 || schedule.times.back() != 0.0) {
    throw InputError("schedule: endpoints must be exactly 1 and 0");
  }
  for (std::size_t k = 0; k + 1 < schedule.times.size(); ++k) {
    if (!(schedule.times[k] > schedule.times[k + 1])) {
      throw InputError("schedule: times must be strictly decreasing (index " + std::to_string(k) + ")");
    }
  }
}

Vec interpolate(std::span<const double> x0, std::span<const double> x1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InputError("interpolate: t outside [0,1]");
  }
  if (x0.size() != x1.size()) {
    throw InputError("interpolate: dimension mismatch");
  }
  Vec out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - t) * x0[i] + t * x1[i];
  }
  return out;
}

LossAndGradient fm_loss(const ParamVector& params, std::span<const FmSample> batch) {
  if (batch.empty()) {
    throw InputError("fm_loss: empty batch");
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  return grad_params(params, [&](LossTape& tape) {
    double loss = 0.0;
    Vec residual;
    for (const auto& s : batch) {
      const Vec xt = interpolate(s.x0, s.x1, s.t);
      const std::size_t idx = tape.record(xt, s.t, s.condition);
      const Vec& v = tape.output(idx);
      residual.assign(v.size(), 0.0);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = v[i] - (s.x1[i] - s.x0[i]);
        residual[i] = 2.0 * r;
        loss += r * r;
      }
      tape.seed(idx, residual, inv_n);
    }
    return loss * inv_n;
  });
}

PretrainResult pretrain(const DataSpec& data, const Architecture& arch, const PretrainConfig& config) {
  RandomStream init_stream(config.seed, 0);
  return pretrain(data, ParamVector::initialize(arch, init_stream), config);
}

PretrainResult pretrain(const DataSpec& data, ParamVector init, const PretrainConfig& config) {
  const DataSampler sampler(data);
  if (init.arch().state_dim != data.dim || init.arch().num_conditions < data.num_conditions()) {
    throw InputError("pretrain: architecture does not match data spec");
  }
  if (config.steps > 0 && config.batch_size == 0) {
    throw InputError("pretrain: batch size must be positive");
  }
  PretrainResult result{std::move(init), {}};
  OptimState state =
      OptimState::for_params(result.params, config.learning_rate, config.weight_decay, config.max_grad_norm);
  RandomStream stream(config.seed, 1);
  std::vector<FmSample> batch(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& s : batch) {
      s.condition = stream.below(data.num_conditions());
      s.x0 = sampler.sample(s.condition, stream);
      s.x1 = draw_gaussian(stream, data.dim);
      s.t = stream.uniform();
    }
    LossAndGradient lg;
    try {
      lg = fm_loss(result.params, batch);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("pretrain diverged: ") + e.what(), result.params, step);
    }
    auto next = optim_step(result.params, lg.gradient, state);
    if (next.params.first_non_finite() < next.params.size()) {
      throw TrainingError("pretrain diverged: non-finite parameters", result.params, step);
    }
    result.params = std::move(next.params);
    state = std::move(next.state);
    result.losses.push_back(lg.loss);
  }
  return result;
}

OdeResult ode_sample(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                     std::span<const double> initial_noise) {
  validate_schedule(schedule);
  OdeResult out;
  out.trajectory.reserve(schedule.times.size());
  out.trajectory.emplace_back(initial_noise.begin(), initial_noise.end());
  Vec x(initial_noise.begin(), initial_noise.end());
  for (std::size_t k = 0; k < schedule.steps(); ++k) {
    const double t = schedule.times[k];
    const double dt = schedule.times[k + 1] - t;
    const Vec v = eval_velocity(params, x, t, condition);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += v[i] * dt;
      if (!std::isfinite(x[i])) {
        throw NumericError("ode_sample: non-finite state at step " + std::to_string(k));
      }
    }
    out.trajectory.push_back(x);
  }
  out.final_state = x;
  return out;
}

OdeResult ode_sample(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                     RandomStream& stream) {
  const Vec noise = draw_gaussian(stream, params.arch().state_dim);
  return ode_sample(params, condition, schedule, noise);
}

}  // namespace chunkgrpo
