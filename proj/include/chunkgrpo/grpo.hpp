#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "chunkgrpo/network.hpp"
#include "chunkgrpo/optim.hpp"
#include "chunkgrpo/random.hpp"
#include "chunkgrpo/sde.hpp"

namespace chunkgrpo {

/// Contiguous partition of the optimizable transitions. Chunk j covers
/// transitions [offset(j), offset(j) + sizes[j]) in rollout order, so chunk 0
/// starts at t = 1.
struct ChunkPlan {
  std::vector<std::size_t> sizes;
  std::vector<double> weights;  // selection weights, one per chunk

  static ChunkPlan from_sizes(std::vector<std::size_t> sizes, std::vector<double> weights = {});
  static ChunkPlan unit(std::size_t transitions);
  static ChunkPlan single(std::size_t transitions);

  std::size_t count() const { return sizes.size(); }
  std::size_t total() const;
  std::size_t offset(std::size_t chunk) const;
  bool is_unit() const;

  /// Throws InputError unless every size is positive, weights are positive
  /// and sizes sum to `transitions`.
  void validate(std::size_t transitions) const;

  bool operator==(const ChunkPlan&) const = default;
};

enum class Variant { step, chunk, sequence };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct GrpoConfig {
  double clip = 5e-5;
  double beta = 0.0;
  double eta = 0.7;
  std::size_t group_size = 12;
  double fraction = 0.5;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double max_grad_norm = 0.01;
  /// Groups averaged into one optimizer step.
  std::size_t grad_accum = 2;
  bool weighted_sampling = false;
  /// When non-empty, only these chunk indices are trained (fraction ignored).
  std::vector<std::size_t> train_chunks;

  void validate() const;
};

/// Below this population std a group carries no learning signal.
inline constexpr double kDegenerateRewardStd = 1e-8;

struct Advantages {
  std::vector<double> values;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  bool degenerate = false;
};

/// (r - mean) / std with population std; writes group statistics and each
/// member's advantage. Degenerate groups get zero advantages.
Advantages compute_advantages(TrajectoryGroup& group);
bool is_degenerate(const TrajectoryGroup& group);

/// exp(logp_θ - logp_old) for one stochastic transition.
double step_ratio(const ParamVector& params, const Transition& transition, std::size_t condition);
/// exp(mean_t (logp_θ - logp_old)) over a chunk.
double chunk_ratio(const ParamVector& params, std::span<const Transition> chunk, std::size_t condition);

struct SurrogateResult {
  double value = 0.0;
  /// ∂value/∂ratio, same shape as the ratios.
  std::vector<std::vector<double>> d_ratio;
  std::size_t units = 0;
  std::size_t clipped = 0;  // units with |r - 1| > ε
};

/// mean_i mean_u min(r·A, clip(r, 1-ε, 1+ε)·A). Row i holds the units of
/// trajectory i, which carries advantage A_i.
SurrogateResult clipped_objective(const std::vector<std::vector<double>>& ratios, std::span<const double> advantages,
                                  double epsilon);

/// KL between two isotropic Gaussians with a shared std: ‖μ_a − μ_b‖² / (2σ²).
double gaussian_kl(std::span<const double> mean_a, std::span<const double> mean_b, double std);

/// β · mean_t ‖μ_θ - μ_ref‖² / (2σ²) over the given stochastic transitions.
double kl_penalty(const ParamVector& params, const ParamVector& reference, std::span<const Transition> transitions,
                  std::size_t condition, double beta);

/// max(1, round(fraction·K)) distinct chunk ids, drawn sequentially with
/// probability proportional to weight among those not yet taken. Sorted.
std::vector<std::size_t> select_chunks(const ChunkPlan& plan, double fraction, RandomStream& stream);

/// Unit partition actually optimized by a variant.
ChunkPlan effective_plan(Variant variant, const ChunkPlan& plan, std::size_t transitions);

/// selection[g][i] = unit ids trained for member i of group g.
using Selection = std::vector<std::vector<std::vector<std::size_t>>>;

Selection draw_selection(std::span<const TrajectoryGroup> groups, const ChunkPlan& plan, const GrpoConfig& config,
                         RandomStream& stream);

struct ObjectiveResult {
  double objective = 0.0;  // surrogate - kl
  double surrogate = 0.0;
  double kl = 0.0;
  Vec gradient;            // ∂objective/∂θ
  double ratio_mean = 1.0;
  double ratio_max = 1.0;
  std::size_t units = 0;
  std::size_t clipped = 0;
  std::size_t active_groups = 0;
  std::vector<std::size_t> selection_counts;  // per unit of the effective plan
};

/// Value and gradient of the selected variant's objective. Groups must carry
/// advantages; degenerate groups are excluded. `reference` is only read when
/// config.beta > 0.
ObjectiveResult grpo_objective(const ParamVector& params, const ParamVector& reference,
                               std::span<const TrajectoryGroup> groups, const ChunkPlan& plan,
                               const GrpoConfig& config, Variant variant, const Selection& selection);

struct UpdateMetrics {
  double objective = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double ratio_mean = 1.0;
  double ratio_max = 1.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  std::size_t skipped_groups = 0;
  std::vector<std::size_t> selection_counts;
  bool skipped = false;
};

struct UpdateResult {
  ParamVector params;
  OptimState state;
  UpdateMetrics metrics;
};

/// One ascent step on the variant's objective over `groups`.
/// All-degenerate input leaves params and state untouched and sets skipped.
UpdateResult grpo_update(const ParamVector& params, const ParamVector& reference,
                         std::span<const TrajectoryGroup> groups, const ChunkPlan& plan, const GrpoConfig& config,
                         Variant variant, const OptimState& state, RandomStream& selection_stream);

}  // namespace chunkgrpo
