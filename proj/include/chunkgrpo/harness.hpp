#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chunkgrpo/config.hpp"
#include "chunkgrpo/dynamics.hpp"
#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/rewards.hpp"

namespace chunkgrpo {

/// Stream ids; every random draw in a run derives from (seed, id).
inline constexpr std::uint64_t kRolloutStream = 101;
inline constexpr std::uint64_t kSelectionStream = 102;
inline constexpr std::uint64_t kEvalStream = 103;
inline constexpr std::uint64_t kProfileStream = 104;
inline constexpr std::uint64_t kPostProfileStream = 105;

/// Derived, immutable objects shared by the pipeline stages.
struct Context {
  explicit Context(RunConfig cfg);

  RunConfig config;
  DataSpec data;
  TimeSchedule schedule;
  Architecture arch;
  RewardModel reward;

  std::size_t optimizable() const { return schedule.steps() - 1; }
};

struct MetricsRow {
  std::size_t update = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double objective = 0.0;
  double ratio_mean = 1.0;
  double ratio_max = 1.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  std::size_t skipped_groups = 0;
  std::vector<std::size_t> selection_counts;
  std::optional<double> eval_reward;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct EvalSample {
  std::size_t condition = 0;
  Vec x;
  double reward = 0.0;
  std::size_t mode = 0;
};

struct EvalResult {
  double mean_reward = 0.0;               // mean over conditions
  std::vector<double> per_condition;
  std::size_t split = 0;
  std::vector<EvalSample> samples;
};

/// Hybrid sampling from the fixed evaluation noise: the first `split` steps
/// use `trained`, the rest `reference`. Defaults to round(hybrid_fraction·T).
EvalResult evaluate(const Context& ctx, const ParamVector& trained, const ParamVector& reference,
                    std::optional<std::size_t> split = std::nullopt, bool keep_samples = false);

/// Pretrained policy from pretrain.checkpoint, the shared cache under the
/// output root, or a fresh pretraining run that fills the cache.
ParamVector pretrained_policy(const Context& ctx, std::ostream* log = nullptr);
std::filesystem::path pretrain_cache_path(const RunConfig& config);

struct ProfileSet {
  std::vector<DynamicsProfile> per_condition;
  DynamicsProfile pooled;  // mean over conditions
  InvarianceReport invariance;
};

ProfileSet profile_policy(const Context& ctx, const ParamVector& params, std::uint64_t stream_id = kProfileStream);

/// Units the run trains: chunk plans from chunks.source, unit steps for the
/// step variant, one chunk for the sequence variant. With weighted sampling
/// the weights come from the profile.
ChunkPlan resolve_plan(const Context& ctx, const DynamicsProfile& profile);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_row;
  std::function<void(std::size_t update, const ParamVector&)> on_checkpoint;
  std::function<double(const ParamVector&)> eval;
};

struct TrainResult {
  ParamVector params;
  std::vector<MetricsRow> rows;
  std::vector<double> update_seconds;
};

TrainResult train_policy(const Context& ctx, const ParamVector& reference, const ChunkPlan& plan,
                         const TrainHooks& hooks = {});

struct RunSummary {
  std::filesystem::path dir;
  ChunkPlan plan;
  double baseline_reward = 0.0;  // reference policy on the eval noise
  double final_reward = 0.0;     // hybrid sampling with the trained policy
  double policy_reward = 0.0;    // trained policy for every step
  std::optional<double> min_profile_correlation;
  std::vector<MetricsRow> rows;
};

/// pretrain → profile → segment → train → evaluate, writing everything into
/// config.run_dir(). A failing stage leaves a FAILED marker naming it.
RunSummary run_pipeline(const RunConfig& config, std::ostream* log = nullptr);

enum class Suite { chunk_settings, specific_chunks, weighted_sampling };

std::string_view suite_name(Suite s);
Suite parse_suite(std::string_view name);

struct AblationEntry {
  std::string label;
  RunConfig config;  // seed and output location filled per run
};

/// Preset grid of a suite, derived from `base`.
std::vector<AblationEntry> ablation_grid(Suite suite, const RunConfig& base);

struct AblationRow {
  std::string label;
  std::vector<double> final_rewards;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::filesystem::path> runs;
};

struct AblationReport {
  Suite suite = Suite::chunk_settings;
  std::filesystem::path dir;
  double baseline_reward = 0.0;
  std::vector<AblationRow> rows;  // ranked by mean final reward
};

/// Runs every grid entry for every seed, `jobs` runs at a time.
AblationReport ablation_suite(Suite suite, const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                              std::size_t jobs = 1, std::ostream* log = nullptr);

/// Markdown summary plus SVG plots for the given run directories; returns
/// the path of report.md.
std::filesystem::path emit_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

/// Plots of one run directory into <run>/plots.
void write_run_plots(const std::filesystem::path& run);

/// (T, m) win-region table as CSV and SVG heatmap.
void write_oracle_outputs(std::size_t max_steps, const std::filesystem::path& out);

}  // namespace chunkgrpo
