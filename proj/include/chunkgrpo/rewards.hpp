#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "chunkgrpo/data.hpp"
#include "chunkgrpo/network.hpp"
#include "chunkgrpo/random.hpp"

namespace chunkgrpo {

enum class RewardKind { mode_preference, fidelity, composite };

std::string_view reward_name(RewardKind kind);
RewardKind parse_reward(std::string_view name);

struct RewardSpec {
  RewardKind kind = RewardKind::composite;
  /// preferred[c] = mode ids rewarded under condition c.
  std::vector<std::vector<std::size_t>> preferred;
  double temperature = 1.0;
  double preference_weight = 0.7;
  double fidelity_weight = 0.3;

  void validate(const DataSpec& data) const;

  /// The first mode of each condition is preferred.
  static RewardSpec first_mode_per_condition(const DataSpec& data, RewardKind kind = RewardKind::composite);
};

/// max over centers μ of exp(−‖x − μ‖² / (2τ²)).
double mode_preference_reward(std::span<const double> x, std::span<const Vec> centers, double temperature);

/// Deterministic reward r(x0, c) built from a spec and the data distribution.
class RewardModel {
 public:
  RewardModel(RewardSpec spec, DataSpec data);

  const RewardSpec& spec() const { return spec_; }
  const DataSampler& sampler() const { return sampler_; }

  double operator()(std::span<const double> x, std::size_t condition) const;
  double mode_preference(std::span<const double> x, std::size_t condition) const;
  /// min(1, p_c(x) / max_k p_c(μ_k)) with p_c the condition's mixture density.
  double fidelity(std::span<const double> x, std::size_t condition) const;

  /// Component centers of every preferred mode of `condition`.
  const std::vector<Vec>& preferred_centers(std::size_t condition) const;

 private:
  RewardSpec spec_;
  DataSampler sampler_;
  std::vector<std::vector<Vec>> centers_;
  std::vector<double> peak_log_density_;
};

/// Two trajectories with per-step ground-truth quality. Trajectory 1 is good
/// (+1) except on `inaccurate`, trajectory 2 is its negation.
struct AttributionScenario {
  std::size_t steps = 0;
  std::vector<std::size_t> inaccurate;  // sorted 0-based step ids, |inaccurate| = m
  std::vector<int> labels_first;
  std::vector<int> labels_second;

  std::size_t m() const { return inaccurate.size(); }
  std::vector<std::size_t> accurate() const;
};

AttributionScenario make_attribution_scenario(std::size_t steps, std::vector<std::size_t> inaccurate);
/// Mis-attributed steps drawn uniformly without replacement.
AttributionScenario build_attribution_scenario(std::size_t steps, std::size_t m, RandomStream& stream);

}  // namespace chunkgrpo
