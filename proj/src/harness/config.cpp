#include "chunkgrpo/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

std::string_view plan_source_name(PlanSource s) {
  switch (s) {
    case PlanSource::dynamics:
      return "dynamics";
    case PlanSource::fixed:
      return "fixed";
    case PlanSource::file:
      return "file";
    case PlanSource::fallback:
      return "fallback";
  }
  return "dynamics";
}

PlanSource parse_plan_source(std::string_view name) {
  if (name == "dynamics") {
    return PlanSource::dynamics;
  }
  if (name == "fixed") {
    return PlanSource::fixed;
  }
  if (name == "file") {
    return PlanSource::file;
  }
  if (name == "fallback") {
    return PlanSource::fallback;
  }
  throw InputError("unknown plan source '" + std::string(name) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) {
    throw InputError("config " + key + ": '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) {
    throw InputError("config " + key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") {
    return true;
  }
  if (t == "false" || t == "0" || t == "no" || t == "off") {
    return false;
  }
  throw InputError("config " + key + ": '" + text + "' is not a boolean");
}

template <class T>
ConfigField field(std::string key, std::string help, T RunConfig::*member) {
  ConfigField f;
  f.key = key;
  f.help = std::move(help);
  f.get = [member](const RunConfig& c) {
    const T& v = c.*member;
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_same_v<T, double>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      return format_size_list(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [member, key](RunConfig& c, const std::string& text) {
    T& v = c.*member;
    if constexpr (std::is_same_v<T, bool>) {
      v = parse_bool(key, text);
    } else if constexpr (std::is_same_v<T, double>) {
      v = parse_double(key, text);
    } else if constexpr (std::is_same_v<T, std::string>) {
      v = trim(text);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      v = parse_size_list(text);
    } else {
      v = static_cast<T>(parse_u64(key, text));
    }
  };
  return f;
}

template <class Outer, class T>
ConfigField nested(std::string key, std::string help, Outer RunConfig::*outer, T Outer::*member) {
  ConfigField f;
  f.key = key;
  f.help = std::move(help);
  f.get = [outer, member](const RunConfig& c) {
    const T& v = c.*outer.*member;
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_same_v<T, double>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      return format_size_list(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [outer, member, key](RunConfig& c, const std::string& text) {
    T& v = c.*outer.*member;
    if constexpr (std::is_same_v<T, bool>) {
      v = parse_bool(key, text);
    } else if constexpr (std::is_same_v<T, double>) {
      v = parse_double(key, text);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      v = parse_size_list(text);
    } else {
      v = static_cast<T>(parse_u64(key, text));
    }
  };
  return f;
}

template <class E>
ConfigField enumerated(std::string key, std::string help, E RunConfig::*member, std::string_view (*name)(E),
                       E (*parse)(std::string_view)) {
  ConfigField f;
  f.key = key;
  f.help = std::move(help);
  f.get = [member, name](const RunConfig& c) { return std::string(name(c.*member)); };
  f.set = [member, parse](RunConfig& c, const std::string& text) { c.*member = parse(trim(text)); };
  return f;
}

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  f.push_back(field("run.name", "run directory name under the output root", &RunConfig::name));
  f.push_back(field("run.seed", "seed for rollouts and chunk selection", &RunConfig::seed));
  f.push_back(enumerated("run.variant", "step | chunk | sequence", &RunConfig::variant, variant_name, parse_variant));
  f.push_back(field("run.updates", "GRPO updates", &RunConfig::updates));
  f.push_back(field("run.groups_per_update", "groups rolled out per update, conditions cycled",
                    &RunConfig::groups_per_update));
  f.push_back(field("run.eval_every", "updates between evaluations (0: final only)", &RunConfig::eval_every));
  f.push_back(field("run.checkpoint_every", "updates between checkpoints (0: final only)",
                    &RunConfig::checkpoint_every));
  f.push_back(field("run.output_root", "output root; empty uses $CHUNKGRPO_OUT or ./runs", &RunConfig::output_root));

  f.push_back(enumerated("data.kind", "gaussian-mixture | two-moons", &RunConfig::data_kind, distribution_name,
                         parse_distribution));
  f.push_back(field("data.modes", "mixture modes on the circle", &RunConfig::modes));
  f.push_back(field("data.radius", "circle radius", &RunConfig::radius));
  f.push_back(field("data.sigma", "per-mode standard deviation", &RunConfig::mode_sigma));
  f.push_back(field("data.conditions", "number of conditions", &RunConfig::conditions));
  f.push_back(field("data.moon_noise", "two-moons noise", &RunConfig::moon_noise));
  f.push_back(field("data.moon_points", "Gaussians per moon", &RunConfig::moon_points));

  f.push_back(field("model.hidden", "hidden widths", &RunConfig::hidden));
  f.push_back(field("model.time_freqs", "time embedding frequencies", &RunConfig::time_freqs));
  f.push_back(enumerated("model.activation", "silu | tanh", &RunConfig::activation, activation_name,
                         parse_activation));

  f.push_back(field("schedule.steps", "sampling steps T", &RunConfig::steps));
  f.push_back(field("schedule.shift", "time shift", &RunConfig::shift));

  f.push_back(nested("pretrain.steps", "flow-matching steps", &RunConfig::pretrain, &PretrainConfig::steps));
  f.push_back(nested("pretrain.batch", "batch size", &RunConfig::pretrain, &PretrainConfig::batch_size));
  f.push_back(nested("pretrain.lr", "learning rate", &RunConfig::pretrain, &PretrainConfig::learning_rate));
  f.push_back(nested("pretrain.weight_decay", "weight decay", &RunConfig::pretrain, &PretrainConfig::weight_decay));
  f.push_back(nested("pretrain.max_grad_norm", "gradient clip norm", &RunConfig::pretrain,
                     &PretrainConfig::max_grad_norm));
  f.push_back(nested("pretrain.seed", "pretraining seed", &RunConfig::pretrain, &PretrainConfig::seed));
  f.push_back(field("pretrain.checkpoint", "reuse this checkpoint instead of pretraining",
                    &RunConfig::pretrain_checkpoint));

  f.push_back(nested("grpo.clip", "clip range", &RunConfig::grpo, &GrpoConfig::clip));
  f.push_back(nested("grpo.beta", "KL weight", &RunConfig::grpo, &GrpoConfig::beta));
  f.push_back(nested("grpo.eta", "SDE noise level", &RunConfig::grpo, &GrpoConfig::eta));
  f.push_back(nested("grpo.group_size", "rollouts per group", &RunConfig::grpo, &GrpoConfig::group_size));
  f.push_back(nested("grpo.fraction", "fraction of units trained per trajectory", &RunConfig::grpo,
                     &GrpoConfig::fraction));
  f.push_back(nested("grpo.lr", "learning rate", &RunConfig::grpo, &GrpoConfig::learning_rate));
  f.push_back(nested("grpo.weight_decay", "weight decay", &RunConfig::grpo, &GrpoConfig::weight_decay));
  f.push_back(nested("grpo.max_grad_norm", "gradient clip norm", &RunConfig::grpo, &GrpoConfig::max_grad_norm));
  f.push_back(nested("grpo.grad_accum", "groups per optimizer step", &RunConfig::grpo, &GrpoConfig::grad_accum));
  f.push_back(nested("grpo.weighted_sampling", "select chunks by dynamics weight", &RunConfig::grpo,
                     &GrpoConfig::weighted_sampling));
  f.push_back(nested("grpo.train_chunks", "train only these chunk ids (empty: all)", &RunConfig::grpo,
                     &GrpoConfig::train_chunks));

  f.push_back(enumerated("chunks.source", "dynamics | fixed | file | fallback", &RunConfig::plan_source,
                         plan_source_name, parse_plan_source));
  f.push_back(field("chunks.sizes", "chunk sizes for source=fixed", &RunConfig::plan_sizes));
  f.push_back(field("chunks.count", "chunk count K for source=dynamics", &RunConfig::chunk_count));
  f.push_back(field("chunks.first", "forced first chunk size (0: none)", &RunConfig::first_chunk));
  f.push_back(field("chunks.file", "plan.json for source=file", &RunConfig::plan_file));

  f.push_back(enumerated("reward.kind", "mode-preference | fidelity | composite", &RunConfig::reward_kind,
                         reward_name, parse_reward));
  f.push_back(field("reward.temperature", "mode-preference temperature", &RunConfig::temperature));
  f.push_back(field("reward.preference_weight", "composite weight of mode preference",
                    &RunConfig::preference_weight));
  f.push_back(field("reward.fidelity_weight", "composite weight of fidelity", &RunConfig::fidelity_weight));
  f.push_back(field("reward.preferred", "'first' or per-condition mode lists, e.g. 0;2,3;4;6",
                    &RunConfig::preferred));

  f.push_back(field("eval.samples", "evaluation samples per condition", &RunConfig::eval_samples));
  f.push_back(field("eval.hybrid_fraction", "share of steps sampled with the trained policy",
                    &RunConfig::hybrid_fraction));
  f.push_back(field("eval.seed", "seed of the fixed evaluation noise", &RunConfig::eval_seed));

  f.push_back(field("dynamics.rollouts", "profiling rollouts per condition", &RunConfig::profile_rollouts));
  f.push_back(field("dynamics.post_rl", "re-profile after training", &RunConfig::post_rl_profile));
  return f;
}

const ConfigField& find_field(const std::string& key) {
  for (const auto& f : config_fields()) {
    if (f.key == key) {
      return f;
    }
  }
  throw InputError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_field(key).get(config); }

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  const std::string t = trim(text);
  if (t.empty()) {
    return out;
  }
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<std::size_t>(parse_u64("list", item)));
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += (i ? "," : "") + std::to_string(values[i]);
  }
  return out;
}

DataSpec RunConfig::data_spec() const {
  switch (data_kind) {
    case DistributionKind::gaussian_mixture:
      return DataSpec::circle_mixture(modes, radius, mode_sigma, conditions);
    case DistributionKind::two_moons:
      return DataSpec::two_moons(moon_noise, conditions, moon_points);
  }
  throw InputError("unsupported data kind");
}

Architecture RunConfig::architecture() const {
  Architecture a;
  a.state_dim = 2;
  a.time_freqs = time_freqs;
  a.num_conditions = conditions;
  a.hidden = hidden;
  a.activation = activation;
  return a;
}

TimeSchedule RunConfig::schedule() const { return make_schedule(steps, shift); }

RewardSpec RunConfig::reward_spec(const DataSpec& data) const {
  RewardSpec spec = RewardSpec::first_mode_per_condition(data, reward_kind);
  if (trim(preferred) != "first") {
    spec.preferred.clear();
    std::stringstream ss(trim(preferred));
    std::string item;
    while (std::getline(ss, item, ';')) {
      spec.preferred.push_back(parse_size_list(item));
    }
  }
  spec.temperature = temperature;
  spec.preference_weight = preference_weight;
  spec.fidelity_weight = fidelity_weight;
  spec.validate(data);
  return spec;
}

void RunConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw InputError("run.name must be a non-empty single path component");
  }
  if (groups_per_update == 0) {
    throw InputError("run.groups_per_update must be positive");
  }
  if (steps < 2) {
    throw InputError("schedule.steps must be at least 2");
  }
  if (!(hybrid_fraction >= 0.0 && hybrid_fraction <= 1.0)) {
    throw InputError("eval.hybrid_fraction must lie in [0,1]");
  }
  if (eval_samples == 0 || profile_rollouts == 0) {
    throw InputError("eval.samples and dynamics.rollouts must be positive");
  }
  grpo.validate();
  const DataSpec data = data_spec();
  data.validate();
  reward_spec(data);
  (void)architecture().param_count();
  if (!pretrain_checkpoint.empty() && !std::filesystem::exists(pretrain_checkpoint)) {
    throw InputError("pretrain.checkpoint '" + pretrain_checkpoint + "' does not exist");
  }
  if (plan_source == PlanSource::file && !std::filesystem::exists(plan_file)) {
    throw InputError("chunks.file '" + plan_file + "' does not exist");
  }
  if (plan_source == PlanSource::fixed) {
    ChunkPlan::from_sizes(plan_sizes).validate(steps - 1);
  }
  if (plan_source == PlanSource::dynamics && (chunk_count == 0 || chunk_count > steps - 1)) {
    throw InputError("chunks.count must lie in [1, steps-1]");
  }
}

std::filesystem::path RunConfig::resolved_output_root() const {
  if (!output_root.empty()) {
    return output_root;
  }
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') {
    return env;
  }
  return "runs";
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : config_fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void write_ini(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw StateError("cannot write " + path.string());
  }
  out << to_ini(config);
}

RunConfig parse_ini(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw InputError("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      set_config_value(config, section + "." + key, value.data());
    }
  }
  return config;
}

RunConfig read_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot read config " + path.string());
  }
  return parse_ini(in);
}

}  // namespace chunkgrpo
