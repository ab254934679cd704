#include "chunkgrpo/sde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

double sde_sigma(double t_hi, double t_lo, double eta) {
  double t = t_hi > 1.0 - kSigmaPoleGuard ? t_lo : t_hi;
  t = std::min(t, 1.0 - kSigmaPoleGuard);
  if (t <= 0.0) {
    return 0.0;
  }
  return eta * std::sqrt(t / (1.0 - t));
}

DriftCoefficients drift_coefficients(double t_hi, double t_lo, double sigma) {
  const double dt = t_lo - t_hi;
  const double a = sigma * sigma / (2.0 * t_hi);
  return {a * dt, (1.0 + a * (1.0 - t_hi)) * dt};
}

Vec transition_mean(std::span<const double> x, std::span<const double> v, const DriftCoefficients& k) {
  Vec mean(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean[i] = x[i] + k.x_coeff * x[i] + k.v_coeff * v[i];
  }
  return mean;
}

namespace {

void check_step(double t_hi, double t_lo, double eta) {
  if (!(t_hi > 0.0 && t_hi <= 1.0)) {
    throw InputError("sde_step: t_hi must lie in (0,1] (got " + std::to_string(t_hi) + ")");
  }
  if (!(t_lo < t_hi) || t_lo < 0.0) {
    throw InputError("sde_step: need 0 <= t_lo < t_hi");
  }
  if (!(eta >= 0.0)) {
    throw InputError("sde_step: eta must be non-negative");
  }
}

void check_finite(std::span<const double> x, const std::string& where) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw NumericError(where + ": non-finite state");
    }
  }
}

}  // namespace

SdeStep sde_step(const ParamVector& params, std::span<const double> x, double t_hi, double t_lo, double eta,
                 std::size_t condition, std::span<const double> noise) {
  check_step(t_hi, t_lo, eta);
  const double sigma = sde_sigma(t_hi, t_lo, eta);
  const Vec v = eval_velocity(params, x, t_hi, condition);
  SdeStep out;
  out.mean = transition_mean(x, v, drift_coefficients(t_hi, t_lo, sigma));
  out.sigma = sigma;
  out.std = sigma * std::sqrt(t_hi - t_lo);
  out.next = out.mean;
  if (out.std > 0.0) {
    if (noise.size() != x.size()) {
      throw InputError("sde_step: noise dimension mismatch");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.next[i] += out.std * noise[i];
    }
  }
  return out;
}

std::size_t Trajectory::optimizable() const {
  std::size_t n = 0;
  while (n < transitions.size() && transitions[n].stochastic) {
    ++n;
  }
  return n;
}

double gaussian_log_density(std::span<const double> sample, std::span<const double> mean, double std) {
  double sq = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double d = sample[i] - mean[i];
    sq += d * d;
  }
  const double d = static_cast<double>(sample.size());
  return -sq / (2.0 * std * std) - d * std::log(std) - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

TapedMean record_mean(LossTape& tape, const Transition& tr, std::size_t condition) {
  if (!(tr.std > 0.0)) {
    throw InputError("transition log-prob: std must be positive");
  }
  const auto k = drift_coefficients(tr.t_hi, tr.t_lo, tr.sigma);
  TapedMean out;
  out.index = tape.record(tr.state, tr.t_hi, condition);
  out.mean = transition_mean(tr.state, tape.output(out.index), k);
  out.dmean_dv = k.v_coeff;
  return out;
}

TapedLogProb record_log_prob(LossTape& tape, const Transition& tr, std::size_t condition) {
  const TapedMean m = record_mean(tape, tr, condition);
  TapedLogProb out;
  out.index = m.index;
  out.value = gaussian_log_density(tr.sample, m.mean, tr.std);
  out.dlogp_dv.resize(m.mean.size());
  const double inv_var = 1.0 / (tr.std * tr.std);
  for (std::size_t i = 0; i < m.mean.size(); ++i) {
    out.dlogp_dv[i] = (tr.sample[i] - m.mean[i]) * inv_var * m.dmean_dv;
  }
  return out;
}

LogProb transition_log_prob(const ParamVector& params, const Transition& transition, std::size_t condition) {
  LogProb out;
  auto lg = grad_params(params, [&](LossTape& tape) {
    const TapedLogProb lp = record_log_prob(tape, transition, condition);
    tape.seed(lp.index, lp.dlogp_dv);
    return lp.value;
  });
  out.value = lg.loss;
  out.gradient = std::move(lg.gradient);
  return out;
}

Trajectory rollout(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule, double eta,
                   std::span<const double> initial, RandomStream& stream) {
  validate_schedule(schedule);
  const std::size_t steps = schedule.steps();
  Trajectory traj;
  traj.condition = condition;
  traj.states.reserve(steps + 1);
  traj.transitions.reserve(steps);
  traj.states.emplace_back(initial.begin(), initial.end());
  for (std::size_t k = 0; k < steps; ++k) {
    Transition tr;
    tr.t_hi = schedule.times[k];
    tr.t_lo = schedule.times[k + 1];
    tr.state = traj.states.back();
    const bool last = k + 1 == steps;
    const double step_eta = last ? 0.0 : eta;
    if (step_eta > 0.0) {
      tr.noise = draw_gaussian(stream, tr.state.size());
    }
    SdeStep s = sde_step(params, tr.state, tr.t_hi, tr.t_lo, step_eta, condition, tr.noise);
    tr.mean = std::move(s.mean);
    tr.sigma = s.sigma;
    tr.std = s.std;
    tr.sample = std::move(s.next);
    tr.stochastic = tr.std > 0.0;
    if (!tr.stochastic) {
      tr.noise.clear();
    } else {
      tr.logp_old = gaussian_log_density(tr.sample, tr.mean, tr.std);
    }
    check_finite(tr.sample, "rollout step " + std::to_string(k));
    traj.states.push_back(tr.sample);
    traj.transitions.push_back(std::move(tr));
  }
  return traj;
}

TrajectoryGroup rollout_group(const ParamVector& params, std::size_t condition, std::size_t group_size,
                              const TimeSchedule& schedule, double eta, const RandomStream& stream) {
  if (group_size < 2) {
    throw InputError("rollout_group: group size must be at least 2");
  }
  TrajectoryGroup group;
  group.condition = condition;
  group.members.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    RandomStream member = stream.fork(i);
    const Vec initial = draw_gaussian(member, params.arch().state_dim);
    try {
      group.members.push_back(rollout(params, condition, schedule, eta, initial, member));
    } catch (const NumericError& e) {
      throw NumericError("rollout_group: trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return group;
}

Vec hybrid_sample(const ParamVector& trained, const ParamVector& reference, std::size_t split,
                  const TimeSchedule& schedule, std::size_t condition, std::span<const double> initial_noise) {
  validate_schedule(schedule);
  if (split > schedule.steps()) {
    throw InputError("hybrid_sample: split " + std::to_string(split) + " exceeds step count");
  }
  Vec x(initial_noise.begin(), initial_noise.end());
  for (std::size_t k = 0; k < schedule.steps(); ++k) {
    const ParamVector& policy = k < split ? trained : reference;
    const double t = schedule.times[k];
    const double dt = schedule.times[k + 1] - t;
    const Vec v = eval_velocity(policy, x, t, condition);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += v[i] * dt;
    }
    check_finite(x, "hybrid_sample step " + std::to_string(k));
  }
  return x;
}

std::size_t default_hybrid_split(std::size_t steps, double fraction) {
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(steps)));
}

}  // namespace chunkgrpo
