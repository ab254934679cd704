#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <boost/rational.hpp>

#include "chunkgrpo/rewards.hpp"

namespace chunkgrpo {

using Rational = boost::rational<long long>;

/// Per-step objective coefficients of the two-trajectory attribution model,
/// laid out as [trajectory 1 steps..., trajectory 2 steps...] (length 2T).
struct CoefficientVectors {
  std::size_t steps = 0;
  std::size_t m = 0;
  std::vector<int> j_hat;          // ground-truth step quality times advantage
  std::vector<int> j_grpo;         // final advantage copied to every step
  std::vector<Rational> j_chunk;   // j_grpo / T

  std::vector<Rational> hat_exact() const;
  std::vector<Rational> grpo_exact() const;
};

/// `inaccurate` holds 0-based step ids of trajectory 1 whose true quality is negative.
CoefficientVectors build_vectors(std::size_t steps, std::span<const std::size_t> inaccurate);
CoefficientVectors build_vectors(const AttributionScenario& scenario);

Rational distance_sq(std::span<const Rational> a, std::span<const Rational> b);
double distance_sq(std::span<const double> a, std::span<const double> b);

/// 2T − 4 + (8m + 2)/T, the closed form of ‖Ĵ − J_chunk‖².
Rational chunk_distance_closed_form(std::size_t steps, std::size_t m);

/// ‖Ĵ − J_chunk‖² ≤ ‖Ĵ − J_GRPO‖², decided in closed form: (T−1)(T−4m−1) ≤ 0.
bool chunk_wins(std::size_t steps, std::size_t m);

/// Quadratic threshold T² − (2m+4)T + (4m+1) ≤ 0.
/// Disagrees with chunk_wins for m ≥ 2 and 2m+2 < T ≤ 4m+1.
bool printed_threshold_holds(std::size_t steps, std::size_t m);

/// |(Π(1+ε_t))^{1/T} − (1 + mean ε)|, evaluated in log space.
double first_order_check(std::span<const double> eps);

struct WinRegionRow {
  std::size_t steps = 0;
  std::size_t m = 0;
  Rational grpo_distance;
  Rational chunk_distance;
  bool chunk_wins = false;
  bool printed_rule = false;
};

/// Every (T, m) with 2 ≤ T ≤ max_steps, 1 ≤ m ≤ T, distances computed from
/// the coefficient vectors with the first m steps mis-attributed.
std::vector<WinRegionRow> win_region(std::size_t max_steps);

}  // namespace chunkgrpo
