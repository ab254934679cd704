#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/network.hpp"

namespace chunkgrpo {

/// Norms below this are treated as zero and the transition is left out of the average.
inline constexpr double kZeroNormGuard = 1e-12;

struct DynamicsProfile {
  std::vector<double> values;  // mean relative L1 change per transition
  std::size_t trajectories = 0;
  std::vector<std::size_t> conditions;
  std::size_t skipped = 0;     // (trajectory, transition) pairs dropped by the zero-norm guard

  std::size_t size() const { return values.size(); }
};

/// ‖x_k − x_{k+1}‖₁ / ‖x_k‖₁ for the first `length` transitions of each state
/// path, averaged over paths. Paths run from t = 1 towards t = 0.
DynamicsProfile l1_rel_profile(std::span<const std::vector<Vec>> paths, std::size_t length);

/// Profile of deterministic rollouts of `params` for one condition, over the
/// transitions that are stochastic during training (all but the last).
DynamicsProfile measure_profile(const ParamVector& params, std::size_t condition, const TimeSchedule& schedule,
                                std::size_t rollouts, RandomStream stream);

struct SegmentConstraints {
  /// Size forced on the first chunk; 0 disables the constraint.
  std::size_t first_size = 2;
};

/// K contiguous chunks. Internal boundaries sit where the discrete second
/// difference |p[b] − 2p[b−1] + p[b−2]| is largest, ties broken towards
/// earlier b. When the forced first chunk leaves too little room the
/// constraint is dropped; K equal to the length gives unit chunks.
ChunkPlan segment_chunks(const DynamicsProfile& profile, std::size_t K, const SegmentConstraints& constraints = {});

/// [2,3,4,7]/16 rescaled to `transitions` with largest-remainder rounding;
/// below 4 transitions the plan is unit-sized.
ChunkPlan fallback_plan(std::size_t transitions);

/// w_j = mean of the profile over chunk j / global mean; all ones when the
/// global mean is zero.
std::vector<double> sampling_weights(const DynamicsProfile& profile, const ChunkPlan& plan);

struct InvarianceReport {
  /// correlation[i][j]; empty when either profile has zero variance.
  std::vector<std::vector<std::optional<double>>> correlation;
  std::optional<double> min_correlation;  // over defined off-diagonal pairs
  std::size_t undefined_pairs = 0;
};

std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
InvarianceReport profile_invariance(std::span<const DynamicsProfile> profiles);

}  // namespace chunkgrpo
