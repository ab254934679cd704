#include "chunkgrpo/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

DynamicsProfile l1_rel_profile(std::span<const std::vector<Vec>> paths, std::size_t length) {
  if (paths.empty()) {
    throw InputError("l1_rel_profile: no trajectories");
  }
  if (length == 0) {
    throw InputError("l1_rel_profile: profile length must be positive");
  }
  DynamicsProfile out;
  out.trajectories = paths.size();
  out.values.assign(length, 0.0);
  std::vector<std::size_t> counts(length, 0);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& states = paths[p];
    if (states.size() < length + 1) {
      throw InputError("l1_rel_profile: trajectory " + std::to_string(p) + " has too few states");
    }
    for (std::size_t k = 0; k < length; ++k) {
      const Vec& cur = states[k];
      const Vec& next = states[k + 1];
      if (cur.size() != next.size()) {
        throw InputError("l1_rel_profile: state dimension changes along trajectory");
      }
      double norm = 0.0;
      double diff = 0.0;
      for (std::size_t i = 0; i < cur.size(); ++i) {
        norm += std::abs(cur[i]);
        diff += std::abs(cur[i] - next[i]);
      }
      if (norm < kZeroNormGuard) {
        ++out.skipped;
        continue;
      }
      out.values[k] += diff / norm;
      ++counts[k];
    }
  }
  for (std::size_t k = 0; k < length; ++k) {
    out.values[k] = counts[k] == 0 ? 0.0 : out.values[k] / static_cast<double>(counts[k]);
  }
  return out;
}

DynamicsProfile measure_profile(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                                std::size_t rollouts, RandomStream stream) {
  validate_schedule(schedule);
  if (rollouts == 0) {
    throw InputError("measure_profile: need at least one rollout");
  }
  std::vector<std::vector<Vec>> paths;
  paths.reserve(rollouts);
  for (std::size_t i = 0; i < rollouts; ++i) {
    paths.push_back(ode_sample(params, condition, schedule, stream).trajectory);
  }
  DynamicsProfile out = l1_rel_profile(paths, schedule.steps() - 1);
  out.conditions = {condition};
  return out;
}

ChunkPlan segment_chunks(const DynamicsProfile& profile, std::size_t K, const SegmentConstraints& constraints) {
  const std::size_t L = profile.size();
  if (K == 0) {
    throw InputError("segment_chunks: K must be positive");
  }
  if (K > L) {
    throw InputError("segment_chunks: K = " + std::to_string(K) + " exceeds profile length " + std::to_string(L));
  }
  if (K == 1) {
    return ChunkPlan::single(L);
  }
  if (K == L) {
    return ChunkPlan::unit(L);
  }
  const std::size_t first = constraints.first_size;
  // Forcing the first chunk needs at least K-1 transitions after it.
  const bool forced = first > 0 && first < L && L - first >= K - 1;
  std::vector<std::size_t> boundaries;
  std::size_t lowest = 1;
  if (forced) {
    boundaries.push_back(first);
    lowest = first + 1;
  }
  const std::size_t wanted = K - 1 - boundaries.size();

  auto score = [&](std::size_t b) {
    if (b < 2) {
      return 0.0;
    }
    const auto& p = profile.values;
    return std::abs(p[b] - 2.0 * p[b - 1] + p[b - 2]);
  };
  std::vector<std::size_t> candidates;
  for (std::size_t b = lowest; b < L; ++b) {
    candidates.push_back(b);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  boundaries.insert(boundaries.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(wanted));
  std::sort(boundaries.begin(), boundaries.end());

  std::vector<std::size_t> sizes;
  std::size_t prev = 0;
  for (std::size_t b : boundaries) {
    sizes.push_back(b - prev);
    prev = b;
  }
  sizes.push_back(L - prev);
  return ChunkPlan::from_sizes(std::move(sizes));
}

ChunkPlan fallback_plan(std::size_t transitions) {
  constexpr std::array<std::size_t, 4> shape{2, 3, 4, 7};
  constexpr std::size_t shape_total = 16;
  if (transitions == 0) {
    throw InputError("fallback_plan: no transitions");
  }
  if (transitions < shape.size()) {
    return ChunkPlan::unit(transitions);
  }
  std::vector<std::size_t> sizes(shape.size());
  std::vector<double> remainder(shape.size());
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < shape.size(); ++j) {
    const double exact = static_cast<double>(shape[j] * transitions) / static_cast<double>(shape_total);
    sizes[j] = static_cast<std::size_t>(std::floor(exact));
    remainder[j] = exact - static_cast<double>(sizes[j]);
    assigned += sizes[j];
  }
  std::vector<std::size_t> order(shape.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < transitions; ++i, ++assigned) {
    ++sizes[order[i % order.size()]];
  }
  // Every chunk must keep at least one transition; borrow from the largest.
  for (auto& s : sizes) {
    if (s == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      s = 1;
    }
  }
  return ChunkPlan::from_sizes(std::move(sizes));
}

std::vector<double> sampling_weights(const DynamicsProfile& profile, const ChunkPlan& plan) {
  plan.validate(profile.size());
  const double global = std::accumulate(profile.values.begin(), profile.values.end(), 0.0) /
                        static_cast<double>(profile.size());
  std::vector<double> weights(plan.count(), 1.0);
  if (!(global > 0.0)) {
    return weights;
  }
  std::size_t begin = 0;
  for (std::size_t j = 0; j < plan.count(); ++j) {
    const std::size_t end = begin + plan.sizes[j];
    double sum = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      sum += profile.values[k];
    }
    weights[j] = sum / static_cast<double>(plan.sizes[j]) / global;
    begin = end;
  }
  return weights;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("pearson: length mismatch");
  }
  if (a.size() < 2) {
    return std::nullopt;
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    return std::nullopt;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

InvarianceReport profile_invariance(std::span<const DynamicsProfile> profiles) {
  if (profiles.size() < 2) {
    throw InputError("profile_invariance: need at least 2 profiles");
  }
  for (const auto& p : profiles) {
    if (p.size() != profiles.front().size()) {
      throw InputError("profile_invariance: profiles differ in length");
    }
  }
  InvarianceReport out;
  const std::size_t n = profiles.size();
  out.correlation.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const auto r = pearson(profiles[i].values, profiles[j].values);
      out.correlation[i][j] = r;
      out.correlation[j][i] = r;
      if (i == j) {
        continue;
      }
      if (!r) {
        ++out.undefined_pairs;
      } else if (!out.min_correlation || *r < *out.min_correlation) {
        out.min_correlation = r;
      }
    }
  }
  return out;
}

}  // namespace chunkgrpo
