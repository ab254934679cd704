#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/network.hpp"
#include "chunkgrpo/random.hpp"

namespace chunkgrpo {

/// Times closer to 1 than this are treated as the t = 1 pole of σ_t.
inline constexpr double kSigmaPoleGuard = 1e-4;

/// σ_t = η·sqrt(t / (1 - t)) for the step (t_hi -> t_lo). At t_hi = 1 the
/// pole is sidestepped by evaluating at t_lo; t is then capped at 1 - 1e-4.
double sde_sigma(double t_hi, double t_lo, double eta);

/// Affine map from the velocity to the Euler-Maruyama mean:
/// mean = x·(1 + x_coeff) + v·v_coeff.
struct DriftCoefficients {
  double x_coeff = 0.0;  // σ²/(2t)·dt
  double v_coeff = 0.0;  // (1 + σ²(1-t)/(2t))·dt
};

DriftCoefficients drift_coefficients(double t_hi, double t_lo, double sigma);
Vec transition_mean(std::span<const double> x, std::span<const double> v, const DriftCoefficients& k);

struct SdeStep {
  Vec next;
  Vec mean;
  double sigma = 0.0;
  double std = 0.0;
};

/// One Euler-Maruyama step of the marginal-preserving SDE, drift at t_hi.
SdeStep sde_step(const ParamVector& params, std::span<const double> x, double t_hi, double t_lo, double eta,
                 std::size_t condition, std::span<const double> noise);

struct Transition {
  double t_hi = 1.0;
  double t_lo = 0.0;
  Vec state;   // x at t_hi
  Vec mean;    // under the generating policy
  double sigma = 0.0;  // σ_t used for the drift
  double std = 0.0;
  Vec noise;   // standard normal draw, empty for deterministic steps
  Vec sample;  // x at t_lo
  double logp_old = 0.0;
  bool stochastic = false;
};

struct Trajectory {
  std::size_t condition = 0;
  std::vector<Vec> states;
  std::vector<Transition> transitions;
  std::optional<double> reward;
  std::optional<double> advantage;

  /// Leading run of stochastic transitions.
  std::size_t optimizable() const;
  const Vec& final_state() const { return states.back(); }
};

struct TrajectoryGroup {
  std::size_t condition = 0;
  std::vector<Trajectory> members;
  double reward_mean = 0.0;
  double reward_std = 0.0;
};

/// log N(sample; mean, std² I).
double gaussian_log_density(std::span<const double> sample, std::span<const double> mean, double std);

struct LogProb {
  double value = 0.0;
  Vec gradient;
};

/// Log-density of transition.sample with the mean recomputed under `params`.
/// The std is taken from the transition and is independent of θ.
LogProb transition_log_prob(const ParamVector& params, const Transition& transition, std::size_t condition);

/// Tape-level pieces shared by the log-prob, ratio and KL computations.
struct TapedMean {
  std::size_t index = 0;  // tape evaluation index
  Vec mean;
  double dmean_dv = 0.0;  // scalar Jacobian of mean w.r.t. v
};

TapedMean record_mean(LossTape& tape, const Transition& transition, std::size_t condition);

/// log-prob value plus its gradient w.r.t. the recorded velocity.
struct TapedLogProb {
  std::size_t index = 0;
  double value = 0.0;
  Vec dlogp_dv;
};

TapedLogProb record_log_prob(LossTape& tape, const Transition& transition, std::size_t condition);

/// SDE rollout from a given initial state; per-step noise comes from `stream`.
/// The final transition into t = 0 is a deterministic ODE step. With
/// eta = 0 every transition is deterministic.
Trajectory rollout(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule, double eta,
                   std::span<const double> initial, RandomStream& stream);

/// G rollouts; member i draws from stream.fork(i).
TrajectoryGroup rollout_group(const ParamVector& params, std::size_t condition, std::size_t group_size,
                              const TimeSchedule& schedule, double eta, const RandomStream& stream);

/// Deterministic sampling: the first `split` steps use `trained`, the rest `reference`.
Vec hybrid_sample(const ParamVector& trained, const ParamVector& reference, std::size_t split,
                  const TimeSchedule& schedule, std::size_t condition, std::span<const double> initial_noise);

/// round(fraction·T), the default evaluation split.
std::size_t default_hybrid_split(std::size_t steps, double fraction = 0.6);

}  // namespace chunkgrpo
