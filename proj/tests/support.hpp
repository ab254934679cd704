#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/network.hpp"
#include "chunkgrpo/random.hpp"
#include "chunkgrpo/sde.hpp"

namespace testing {

using namespace chunkgrpo;

inline Architecture small_arch(std::size_t conditions = 2) {
  Architecture a;
  a.state_dim = 2;
  a.time_freqs = 3;
  a.num_conditions = conditions;
  a.hidden = {8, 8};
  return a;
}

/// Random parameters with a larger output layer than the default init so
/// gradients are not dominated by the 0.1 output scaling.
inline ParamVector random_params(const Architecture& arch, std::uint64_t seed) {
  RandomStream s(seed, 77);
  Vec v(arch.param_count());
  for (auto& x : v) {
    x = 0.4 * s.gaussian();
  }
  return ParamVector(arch, v);
}

inline ParamVector perturbed(const ParamVector& p, double scale, std::uint64_t seed) {
  RandomStream s(seed, 78);
  Vec v(p.values().begin(), p.values().end());
  for (auto& x : v) {
    x += scale * s.gaussian();
  }
  return ParamVector(p.arch(), v);
}

/// Central-difference gradient of f at p over every parameter.
inline Vec finite_difference(const ParamVector& p, const std::function<double(const ParamVector&)>& f,
                             double h = 1e-6) {
  Vec g(p.size());
  Vec v(p.values().begin(), p.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = f(ParamVector(p.arch(), v));
    v[i] = keep - h;
    const double down = f(ParamVector(p.arch(), v));
    v[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ‖a − b‖ / max(‖b‖, tiny).
inline double relative_error(const Vec& a, const Vec& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// Groups rolled out under `params` with rewards from a fixed linear score
/// of the final state, advantages attached.
inline std::vector<TrajectoryGroup> make_groups(const ParamVector& params, const TimeSchedule& schedule,
                                                std::size_t groups, std::size_t group_size, std::uint64_t seed,
                                                double eta = 0.7) {
  std::vector<TrajectoryGroup> out;
  const RandomStream base(seed, 5);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t c = g % params.arch().num_conditions;
    TrajectoryGroup group = rollout_group(params, c, group_size, schedule, eta, base.fork(g));
    for (auto& m : group.members) {
      m.reward = m.final_state()[0] - 0.5 * m.final_state()[1];
    }
    compute_advantages(group);
    out.push_back(std::move(group));
  }
  return out;
}

}  // namespace testing
