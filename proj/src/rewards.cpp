#include "chunkgrpo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

std::string_view reward_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::mode_preference:
      return "mode-preference";
    case RewardKind::fidelity:
      return "fidelity";
    case RewardKind::composite:
      return "composite";
  }
  return "composite";
}

RewardKind parse_reward(std::string_view name) {
  if (name == "mode-preference") {
    return RewardKind::mode_preference;
  }
  if (name == "fidelity") {
    return RewardKind::fidelity;
  }
  if (name == "composite") {
    return RewardKind::composite;
  }
  throw InputError("unknown reward kind '" + std::string(name) + "'");
}

void RewardSpec::validate(const DataSpec& data) const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InputError("RewardSpec: temperature must be positive");
  }
  if (kind == RewardKind::composite) {
    if (preference_weight < 0.0 || fidelity_weight < 0.0 ||
        std::abs(preference_weight + fidelity_weight - 1.0) > 1e-12) {
      throw InputError("RewardSpec: composite weights must be non-negative and sum to 1");
    }
  }
  if (kind != RewardKind::fidelity) {
    if (preferred.size() != data.num_conditions()) {
      throw InputError("RewardSpec: need preferred modes for each of " + std::to_string(data.num_conditions()) +
                       " conditions");
    }
    const std::size_t modes = data.num_modes();
    for (std::size_t c = 0; c < preferred.size(); ++c) {
      if (preferred[c].empty()) {
        throw InputError("RewardSpec: condition " + std::to_string(c) + " has no preferred mode");
      }
      for (std::size_t m : preferred[c]) {
        if (m >= modes) {
          throw InputError("RewardSpec: preferred mode " + std::to_string(m) + " does not exist");
        }
      }
    }
  }
}

RewardSpec RewardSpec::first_mode_per_condition(const DataSpec& data, RewardKind kind) {
  RewardSpec spec;
  spec.kind = kind;
  for (const auto& comps : data.conditions) {
    std::size_t mode = std::numeric_limits<std::size_t>::max();
    for (std::size_t k : comps) {
      mode = std::min(mode, data.components.at(k).mode);
    }
    spec.preferred.push_back({mode});
  }
  return spec;
}

double mode_preference_reward(std::span<const double> x, std::span<const Vec> centers, double temperature) {
  if (centers.empty()) {
    throw InputError("mode_preference_reward: no preferred centers");
  }
  double best = 0.0;
  const double scale = 1.0 / (2.0 * temperature * temperature);
  for (const auto& mu : centers) {
    if (mu.size() != x.size()) {
      throw InputError("mode_preference_reward: dimension mismatch");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sq += (x[i] - mu[i]) * (x[i] - mu[i]);
    }
    best = std::max(best, std::exp(-sq * scale));
  }
  return best;
}

RewardModel::RewardModel(RewardSpec spec, DataSpec data) : spec_(std::move(spec)), sampler_(std::move(data)) {
  const DataSpec& d = sampler_.spec();
  spec_.validate(d);
  centers_.resize(d.num_conditions());
  if (spec_.kind != RewardKind::fidelity) {
    for (std::size_t c = 0; c < d.num_conditions(); ++c) {
      for (std::size_t mode : spec_.preferred[c]) {
        for (std::size_t k : d.mode_components(mode)) {
          centers_[c].push_back(d.components[k].mean);
        }
      }
    }
  }
  for (std::size_t c = 0; c < d.num_conditions(); ++c) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k : d.conditions[c]) {
      peak = std::max(peak, sampler_.log_density(d.components[k].mean, c));
    }
    peak_log_density_.push_back(peak);
  }
}

const std::vector<Vec>& RewardModel::preferred_centers(std::size_t condition) const {
  if (condition >= centers_.size()) {
    throw InputError("reward: condition " + std::to_string(condition) + " out of range");
  }
  return centers_[condition];
}

double RewardModel::mode_preference(std::span<const double> x, std::size_t condition) const {
  return mode_preference_reward(x, preferred_centers(condition), spec_.temperature);
}

double RewardModel::fidelity(std::span<const double> x, std::size_t condition) const {
  if (condition >= peak_log_density_.size()) {
    throw InputError("reward: condition " + std::to_string(condition) + " out of range");
  }
  return std::min(1.0, std::exp(sampler_.log_density(x, condition) - peak_log_density_[condition]));
}

double RewardModel::operator()(std::span<const double> x, std::size_t condition) const {
  switch (spec_.kind) {
    case RewardKind::mode_preference:
      return mode_preference(x, condition);
    case RewardKind::fidelity:
      return fidelity(x, condition);
    case RewardKind::composite:
      return spec_.preference_weight * mode_preference(x, condition) +
             spec_.fidelity_weight * fidelity(x, condition);
  }
  return 0.0;
}

std::vector<std::size_t> AttributionScenario::accurate() const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < steps; ++t) {
    if (!std::binary_search(inaccurate.begin(), inaccurate.end(), t)) {
      out.push_back(t);
    }
  }
  return out;
}

AttributionScenario make_attribution_scenario(std::size_t steps, std::vector<std::size_t> inaccurate) {
  if (steps == 0) {
    throw InputError("attribution scenario: need at least one step");
  }
  std::sort(inaccurate.begin(), inaccurate.end());
  if (std::adjacent_find(inaccurate.begin(), inaccurate.end()) != inaccurate.end()) {
    throw InputError("attribution scenario: repeated step in the inaccurate set");
  }
  if (inaccurate.empty() || inaccurate.size() > steps) {
    throw InputError("attribution scenario: need 1 <= m <= T");
  }
  if (inaccurate.back() >= steps) {
    throw InputError("attribution scenario: step " + std::to_string(inaccurate.back()) + " out of range");
  }
  AttributionScenario s;
  s.steps = steps;
  s.inaccurate = std::move(inaccurate);
  s.labels_first.assign(steps, 1);
  for (std::size_t t : s.inaccurate) {
    s.labels_first[t] = -1;
  }
  s.labels_second.resize(steps);
  std::transform(s.labels_first.begin(), s.labels_first.end(), s.labels_second.begin(), [](int v) { return -v; });
  return s;
}

AttributionScenario build_attribution_scenario(std::size_t steps, std::size_t m, RandomStream& stream) {
  if (m < 1 || m > steps) {
    throw InputError("build_attribution_scenario: need 1 <= m <= T (got m=" + std::to_string(m) +
                     ", T=" + std::to_string(steps) + ")");
  }
  std::vector<std::size_t> pool(steps);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(steps - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return make_attribution_scenario(steps, std::move(pool));
}

}  // namespace chunkgrpo
