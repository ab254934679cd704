#include "chunkgrpo/prop_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

namespace {

void check_range(std::size_t steps, std::size_t m, const char* where) {
  if (steps < 1 || m < 1 || m > steps) {
    throw InputError(std::string(where) + ": need 1 <= m <= T (got m=" + std::to_string(m) +
                     ", T=" + std::to_string(steps) + ")");
  }
}

long long as_ll(std::size_t v) { return static_cast<long long>(v); }

}  // namespace

std::vector<Rational> CoefficientVectors::hat_exact() const {
  return {j_hat.begin(), j_hat.end()};
}

std::vector<Rational> CoefficientVectors::grpo_exact() const {
  return {j_grpo.begin(), j_grpo.end()};
}

CoefficientVectors build_vectors(std::size_t steps, std::span<const std::size_t> inaccurate) {
  return build_vectors(make_attribution_scenario(steps, {inaccurate.begin(), inaccurate.end()}));
}

CoefficientVectors build_vectors(const AttributionScenario& scenario) {
  const std::size_t T = scenario.steps;
  check_range(T, scenario.m(), "build_vectors");
  CoefficientVectors v;
  v.steps = T;
  v.m = scenario.m();
  v.j_hat.reserve(2 * T);
  v.j_grpo.reserve(2 * T);
  // Advantages A¹ = +1, A² = −1 spread over every step.
  v.j_hat.insert(v.j_hat.end(), scenario.labels_first.begin(), scenario.labels_first.end());
  v.j_hat.insert(v.j_hat.end(), scenario.labels_second.begin(), scenario.labels_second.end());
  v.j_grpo.insert(v.j_grpo.end(), T, 1);
  v.j_grpo.insert(v.j_grpo.end(), T, -1);
  v.j_chunk.reserve(2 * T);
  for (int c : v.j_grpo) {
    v.j_chunk.emplace_back(c, as_ll(T));
  }
  return v;
}

Rational distance_sq(std::span<const Rational> a, std::span<const Rational> b) {
  if (a.size() != b.size()) {
    throw InputError("distance_sq: length mismatch");
  }
  Rational sum(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Rational d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double distance_sq(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("distance_sq: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return sum;
}

Rational chunk_distance_closed_form(std::size_t steps, std::size_t m) {
  check_range(steps, m, "chunk_distance_closed_form");
  const long long T = as_ll(steps);
  return Rational(2 * T - 4) + Rational(8 * as_ll(m) + 2, T);
}

bool chunk_wins(std::size_t steps, std::size_t m) {
  check_range(steps, m, "chunk_wins");
  const long long T = as_ll(steps);
  return (T - 1) * (T - 4 * as_ll(m) - 1) <= 0;
}

bool printed_threshold_holds(std::size_t steps, std::size_t m) {
  check_range(steps, m, "printed_threshold_holds");
  const long long T = as_ll(steps);
  const long long mm = as_ll(m);
  return T * T - (2 * mm + 4) * T + (4 * mm + 1) <= 0;
}

double first_order_check(std::span<const double> eps) {
  if (eps.empty()) {
    throw InputError("first_order_check: no perturbations");
  }
  double log_sum = 0.0;
  double sum = 0.0;
  for (double e : eps) {
    if (!(1.0 + e > 0.0)) {
      throw InputError("first_order_check: 1 + eps must be positive");
    }
    log_sum += std::log1p(e);
    sum += e;
  }
  const double n = static_cast<double>(eps.size());
  return std::abs(std::exp(log_sum / n) - (1.0 + sum / n));
}

std::vector<WinRegionRow> win_region(std::size_t max_steps) {
  std::vector<WinRegionRow> rows;
  for (std::size_t T = 2; T <= max_steps; ++T) {
    for (std::size_t m = 1; m <= T; ++m) {
      std::vector<std::size_t> ia(m);
      std::iota(ia.begin(), ia.end(), std::size_t{0});
      const CoefficientVectors v = build_vectors(T, ia);
      const auto hat = v.hat_exact();
      WinRegionRow row;
      row.steps = T;
      row.m = m;
      row.grpo_distance = distance_sq(hat, v.grpo_exact());
      row.chunk_distance = distance_sq(hat, v.j_chunk);
      row.chunk_wins = chunk_wins(T, m);
      row.printed_rule = printed_threshold_holds(T, m);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace chunkgrpo
