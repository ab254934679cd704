#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "chunkgrpo/data.hpp"
#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/network.hpp"
#include "chunkgrpo/rewards.hpp"

namespace chunkgrpo {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "CHUNKGRPO_OUT";

enum class PlanSource { dynamics, fixed, file, fallback };

std::string_view plan_source_name(PlanSource s);
PlanSource parse_plan_source(std::string_view name);

struct RunConfig {
  // [run]
  std::string name = "run";
  std::uint64_t seed = 0;
  Variant variant = Variant::chunk;
  std::size_t updates = 150;
  std::size_t groups_per_update = 4;
  std::size_t eval_every = 25;
  std::size_t checkpoint_every = 50;
  std::string output_root;  // empty: $CHUNKGRPO_OUT, then ./runs

  // [data]
  DistributionKind data_kind = DistributionKind::gaussian_mixture;
  std::size_t modes = 8;
  double radius = 4.0;
  double mode_sigma = 0.3;
  std::size_t conditions = 4;
  double moon_noise = 0.1;
  std::size_t moon_points = 24;

  // [model]
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t time_freqs = 8;
  Activation activation = Activation::silu;

  // [schedule]
  std::size_t steps = 17;
  double shift = 3.0;

  // [pretrain]
  PretrainConfig pretrain;
  std::string pretrain_checkpoint;  // reuse instead of training when set

  // [grpo]
  GrpoConfig grpo;

  // [chunks]
  PlanSource plan_source = PlanSource::dynamics;
  std::vector<std::size_t> plan_sizes{2, 3, 4, 7};
  std::size_t chunk_count = 4;
  std::size_t first_chunk = 2;
  std::string plan_file;

  // [reward]
  RewardKind reward_kind = RewardKind::composite;
  double temperature = 1.0;
  double preference_weight = 0.7;
  double fidelity_weight = 0.3;
  std::string preferred = "first";  // "first" or per-condition lists "0;2,3;4;6"

  // [eval]
  std::size_t eval_samples = 512;  // per condition
  double hybrid_fraction = 0.6;
  std::uint64_t eval_seed = 1234;

  // [dynamics]
  std::size_t profile_rollouts = 256;
  bool post_rl_profile = true;

  DataSpec data_spec() const;
  Architecture architecture() const;
  TimeSchedule schedule() const;
  RewardSpec reward_spec(const DataSpec& data) const;

  /// Throws InputError on inconsistent settings and missing referenced files.
  void validate() const;

  /// output_root, else $CHUNKGRPO_OUT, else "runs".
  std::filesystem::path resolved_output_root() const;
  std::filesystem::path run_dir() const { return resolved_output_root() / name; }
};

/// One config key, named "section.key", with typed access into RunConfig.
struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigField>& config_fields();

/// Apply "section.key" = value; unknown keys and unparsable values throw InputError.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// INI text with one section per key prefix, every field written.
std::string to_ini(const RunConfig& config);
void write_ini(const RunConfig& config, const std::filesystem::path& path);
/// Start from defaults and apply every key in the file.
RunConfig read_ini(const std::filesystem::path& path);
RunConfig parse_ini(std::istream& in);

std::vector<std::size_t> parse_size_list(std::string_view text);
std::string format_size_list(const std::vector<std::size_t>& values);
/// Round-trip formatting for doubles (shortest form that parses back exactly).
std::string format_double(double v);

}  // namespace chunkgrpo
