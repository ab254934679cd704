#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "chunkgrpo/checkpoint.hpp"
#include "chunkgrpo/error.hpp"
#include "chunkgrpo/harness.hpp"
#include "chunkgrpo/serialize.hpp"

namespace chunkgrpo {

namespace fs = std::filesystem;

Context::Context(RunConfig cfg)
    : config(std::move(cfg)),
      data(config.data_spec()),
      schedule(config.schedule()),
      arch(config.architecture()),
      reward(config.reward_spec(data), data) {
  config.validate();
}

namespace {

void log_line(std::ostream* log, const std::string& line) {
  static std::mutex mu;
  if (log != nullptr) {
    std::lock_guard lock(mu);
    *log << line << '\n' << std::flush;
  }
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mutex& pretrain_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

std::string metrics_header() {
  return "update,reward_mean,reward_std,objective,ratio_mean,ratio_max,clip_frac,kl,grad_norm,skipped_groups,"
         "selected,eval_reward";
}

std::string format_metrics_row(const MetricsRow& r) {
  std::ostringstream o;
  o << r.update << ',' << format_double(r.reward_mean) << ',' << format_double(r.reward_std) << ','
    << format_double(r.objective) << ',' << format_double(r.ratio_mean) << ',' << format_double(r.ratio_max) << ','
    << format_double(r.clip_fraction) << ',' << format_double(r.kl) << ',' << format_double(r.grad_norm) << ','
    << r.skipped_groups << ',';
  for (std::size_t j = 0; j < r.selection_counts.size(); ++j) {
    o << (j ? ";" : "") << r.selection_counts[j];
  }
  o << ',';
  if (r.eval_reward) {
    o << format_double(*r.eval_reward);
  }
  return o.str();
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw StateError("cannot write " + path.string());
  }
  out << metrics_header() << '\n';
  for (const auto& r : rows) {
    out << format_metrics_row(r) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot read " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw InputError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
      cells.emplace_back();
    }
    if (cells.size() != 12) {
      throw InputError(path.string() + ": malformed row '" + line + "'");
    }
    try {
      MetricsRow r;
      r.update = std::stoull(cells[0]);
      r.reward_mean = std::stod(cells[1]);
      r.reward_std = std::stod(cells[2]);
      r.objective = std::stod(cells[3]);
      r.ratio_mean = std::stod(cells[4]);
      r.ratio_max = std::stod(cells[5]);
      r.clip_fraction = std::stod(cells[6]);
      r.kl = std::stod(cells[7]);
      r.grad_norm = std::stod(cells[8]);
      r.skipped_groups = std::stoull(cells[9]);
      std::stringstream sel(cells[10]);
      std::string item;
      while (std::getline(sel, item, ';')) {
        r.selection_counts.push_back(std::stoull(item));
      }
      if (!cells[11].empty()) {
        r.eval_reward = std::stod(cells[11]);
      }
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

EvalResult evaluate(const Context& ctx, const ParamVector& trained, const ParamVector& reference,
                    std::optional<std::size_t> split, bool keep_samples) {
  EvalResult out;
  out.split = split.value_or(default_hybrid_split(ctx.schedule.steps(), ctx.config.hybrid_fraction));
  const std::size_t C = ctx.data.num_conditions();
  const RandomStream base(ctx.config.eval_seed, kEvalStream);
  for (std::size_t c = 0; c < C; ++c) {
    RandomStream stream = base.fork(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < ctx.config.eval_samples; ++i) {
      const Vec noise = draw_gaussian(stream, ctx.data.dim);
      Vec x = hybrid_sample(trained, reference, out.split, ctx.schedule, c, noise);
      const double r = ctx.reward(x, c);
      sum += r;
      if (keep_samples) {
        out.samples.push_back({c, x, r, ctx.reward.sampler().nearest_mode(x)});
      }
    }
    out.per_condition.push_back(sum / static_cast<double>(ctx.config.eval_samples));
  }
  for (double v : out.per_condition) {
    out.mean_reward += v;
  }
  out.mean_reward /= static_cast<double>(C);
  return out;
}

fs::path pretrain_cache_path(const RunConfig& config) {
  std::string key;
  for (const auto& f : config_fields()) {
    const bool relevant = f.key.starts_with("data.") || f.key.starts_with("model.") ||
                          (f.key.starts_with("pretrain.") && f.key != "pretrain.checkpoint");
    if (relevant) {
      key += f.key + "=" + f.get(config) + "\n";
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
  return config.resolved_output_root() / "pretrained" / (std::string(hex) + ".ckpt");
}

ParamVector pretrained_policy(const Context& ctx, std::ostream* log) {
  const RunConfig& cfg = ctx.config;
  if (!cfg.pretrain_checkpoint.empty()) {
    ParamVector p = load_checkpoint(cfg.pretrain_checkpoint);
    if (!(p.arch() == ctx.arch)) {
      throw InputError("pretrain.checkpoint architecture '" + p.arch().describe() + "' does not match config '" +
                       ctx.arch.describe() + "'");
    }
    return p;
  }
  const fs::path cache = pretrain_cache_path(cfg);
  std::lock_guard lock(pretrain_mutex());
  if (fs::exists(cache)) {
    ParamVector p = load_checkpoint(cache);
    if (p.arch() == ctx.arch) {
      log_line(log, "pretrain: reusing " + cache.string());
      return p;
    }
  }
  log_line(log, "pretrain: " + std::to_string(cfg.pretrain.steps) + " flow-matching steps");
  PretrainResult res = pretrain(ctx.data, ctx.arch, cfg.pretrain);
  if (!res.losses.empty()) {
    log_line(log, "pretrain: final loss " + fixed(res.losses.back()));
  }
  fs::create_directories(cache.parent_path());
  const fs::path tmp = cache.string() + ".tmp" + std::to_string(fnv1a(cfg.name));
  save_checkpoint(res.params, tmp);
  fs::rename(tmp, cache);
  std::ofstream(cache.string() + ".ini") << to_ini(cfg);
  return res.params;
}

ProfileSet profile_policy(const Context& ctx, const ParamVector& params, std::uint64_t stream_id) {
  ProfileSet out;
  const RandomStream base(ctx.config.pretrain.seed, stream_id);
  const std::size_t C = ctx.data.num_conditions();
  for (std::size_t c = 0; c < C; ++c) {
    out.per_condition.push_back(measure_profile(params, c, ctx.schedule, ctx.config.profile_rollouts, base.fork(c)));
  }
  out.pooled.values.assign(ctx.optimizable(), 0.0);
  for (const auto& p : out.per_condition) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      out.pooled.values[k] += p.values[k] / static_cast<double>(C);
    }
    out.pooled.trajectories += p.trajectories;
    out.pooled.skipped += p.skipped;
    out.pooled.conditions.push_back(p.conditions.front());
  }
  if (C >= 2) {
    out.invariance = profile_invariance(out.per_condition);
  }
  return out;
}

ChunkPlan resolve_plan(const Context& ctx, const DynamicsProfile& profile) {
  const RunConfig& cfg = ctx.config;
  const std::size_t L = ctx.optimizable();
  ChunkPlan plan;
  switch (cfg.variant) {
    case Variant::step:
      plan = ChunkPlan::unit(L);
      break;
    case Variant::sequence:
      plan = ChunkPlan::single(L);
      break;
    case Variant::chunk:
      switch (cfg.plan_source) {
        case PlanSource::dynamics:
          plan = segment_chunks(profile, cfg.chunk_count, {cfg.first_chunk});
          break;
        case PlanSource::fixed:
          plan = ChunkPlan::from_sizes(cfg.plan_sizes);
          break;
        case PlanSource::file:
          plan = plan_from_json(read_json(cfg.plan_file));
          break;
        case PlanSource::fallback:
          plan = fallback_plan(L);
          break;
      }
      break;
  }
  plan.validate(L);
  if (cfg.grpo.weighted_sampling) {
    plan.weights = sampling_weights(profile, plan);
  } else if (cfg.plan_source != PlanSource::file || cfg.variant != Variant::chunk) {
    plan.weights.assign(plan.count(), 1.0);
  }
  return plan;
}

TrainResult train_policy(const Context& ctx, const ParamVector& reference, const ChunkPlan& plan,
                         const TrainHooks& hooks) {
  const RunConfig& cfg = ctx.config;
  const GrpoConfig& g = cfg.grpo;
  TrainResult out{reference, {}, {}};
  OptimState state = OptimState::for_params(reference, g.learning_rate, g.weight_decay, g.max_grad_norm);
  const RandomStream rollout_base(cfg.seed, kRolloutStream);
  const RandomStream selection_base(cfg.seed, kSelectionStream);
  const std::size_t C = ctx.data.num_conditions();

  for (std::size_t u = 0; u < cfg.updates; ++u) {
    const auto started = std::chrono::steady_clock::now();
    const ParamVector old = out.params;
    const RandomStream update_stream = rollout_base.fork(u);
    std::vector<TrajectoryGroup> groups;
    groups.reserve(cfg.groups_per_update);
    for (std::size_t q = 0; q < cfg.groups_per_update; ++q) {
      const std::size_t c = (u * cfg.groups_per_update + q) % C;
      TrajectoryGroup group = rollout_group(old, c, g.group_size, ctx.schedule, g.eta, update_stream.fork(q));
      for (auto& m : group.members) {
        m.reward = ctx.reward(m.final_state(), c);
      }
      compute_advantages(group);
      groups.push_back(std::move(group));
    }

    MetricsRow row;
    row.update = u;
    RandomStream selection = selection_base.fork(u);
    std::size_t applied = 0;
    double reward_sum = 0.0;
    double reward_sq = 0.0;
    std::size_t n = 0;
    for (const auto& group : groups) {
      for (const auto& m : group.members) {
        reward_sum += *m.reward;
        reward_sq += *m.reward * *m.reward;
        ++n;
      }
    }
    row.reward_mean = reward_sum / static_cast<double>(n);
    row.reward_std = std::sqrt(std::max(0.0, reward_sq / static_cast<double>(n) - row.reward_mean * row.reward_mean));
    row.ratio_mean = 0.0;
    row.ratio_max = 0.0;
    for (std::size_t begin = 0; begin < groups.size(); begin += g.grad_accum) {
      const std::size_t end = std::min(groups.size(), begin + g.grad_accum);
      const std::span<const TrajectoryGroup> batch(groups.data() + begin, end - begin);
      UpdateResult res = grpo_update(out.params, reference, batch, plan, g, cfg.variant, state, selection);
      const auto& m = res.metrics;
      row.skipped_groups += m.skipped_groups;
      if (row.selection_counts.empty()) {
        row.selection_counts.assign(m.selection_counts.size(), 0);
      }
      for (std::size_t j = 0; j < m.selection_counts.size(); ++j) {
        row.selection_counts[j] += m.selection_counts[j];
      }
      if (m.skipped) {
        continue;
      }
      ++applied;
      row.objective += m.objective;
      row.ratio_mean += m.ratio_mean;
      row.ratio_max = std::max(row.ratio_max, m.ratio_max);
      row.clip_fraction += m.clip_fraction;
      row.kl += m.kl;
      row.grad_norm += m.grad_norm;
      out.params = std::move(res.params);
      state = std::move(res.state);
    }
    if (applied > 0) {
      const double inv = 1.0 / static_cast<double>(applied);
      row.objective *= inv;
      row.ratio_mean *= inv;
      row.clip_fraction *= inv;
      row.kl *= inv;
      row.grad_norm *= inv;
    } else {
      row.ratio_mean = 1.0;
      row.ratio_max = 1.0;
    }
    if (out.params.first_non_finite() < out.params.size()) {
      throw NumericError("train: non-finite parameters after update " + std::to_string(u));
    }
    const bool last = u + 1 == cfg.updates;
    if (hooks.eval && (last || (cfg.eval_every > 0 && (u + 1) % cfg.eval_every == 0))) {
      row.eval_reward = hooks.eval(out.params);
    }
    if (hooks.on_checkpoint && !last && cfg.checkpoint_every > 0 && (u + 1) % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(u + 1, out.params);
    }
    out.update_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (hooks.on_row) {
      hooks.on_row(row);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace {

Json samples_json(const EvalResult& r) {
  Json arr = Json::array();
  for (const auto& s : r.samples) {
    arr.push_back(Json{{"condition", s.condition}, {"x", s.x}, {"reward", s.reward}, {"mode", s.mode}});
  }
  return arr;
}

}  // namespace

RunSummary run_pipeline(const RunConfig& config, std::ostream* log) {
  const fs::path dir = config.run_dir();
  fs::create_directories(dir / "checkpoints");
  fs::remove(dir / "FAILED");
  write_ini(config, dir / "config.ini");

  std::string stage = "setup";
  try {
    const Context ctx(config);
    RunSummary summary;
    summary.dir = dir;
    const std::string tag = config.name + ": ";

    stage = "pretrain";
    const ParamVector reference = pretrained_policy(ctx, log);
    save_checkpoint(reference, dir / "checkpoints" / "pretrained.ckpt");

    stage = "profile";
    const ProfileSet profile = profile_policy(ctx, reference);
    summary.min_profile_correlation = profile.invariance.min_correlation;
    Json profile_doc{{"pretrained", to_json(profile.pooled)}, {"per_condition", Json::array()}};
    for (const auto& p : profile.per_condition) {
      profile_doc["per_condition"].push_back(to_json(p));
    }
    profile_doc["invariance"] = to_json(profile.invariance);
    write_json(profile_doc, dir / "profile.json");

    stage = "segment";
    summary.plan = resolve_plan(ctx, profile.pooled);
    Json plan_doc = to_json(summary.plan);
    plan_doc["variant"] = variant_name(config.variant);
    plan_doc["source"] = config.variant == Variant::chunk ? plan_source_name(config.plan_source) : "variant";
    write_json(plan_doc, dir / "plan.json");
    log_line(log, tag + "plan [" + format_size_list(summary.plan.sizes) + "]");

    stage = "evaluate-baseline";
    const EvalResult baseline = evaluate(ctx, reference, reference, std::nullopt, true);
    summary.baseline_reward = baseline.mean_reward;
    log_line(log, tag + "baseline reward " + fixed(baseline.mean_reward));

    stage = "train";
    TrainHooks hooks;
    hooks.eval = [&](const ParamVector& p) { return evaluate(ctx, p, reference).mean_reward; };
    hooks.on_checkpoint = [&](std::size_t u, const ParamVector& p) {
      char name[32];
      std::snprintf(name, sizeof name, "update_%04zu.ckpt", u);
      save_checkpoint(p, dir / "checkpoints" / name);
    };
    hooks.on_row = [&](const MetricsRow& r) {
      if (r.eval_reward) {
        log_line(log, tag + "update " + std::to_string(r.update + 1) + " eval reward " + fixed(*r.eval_reward) +
                          " clip " + fixed(r.clip_fraction, 3));
      }
    };
    TrainResult trained = train_policy(ctx, reference, summary.plan, hooks);
    summary.rows = trained.rows;
    write_metrics_csv(trained.rows, dir / "metrics.csv");
    {
      std::ofstream timing(dir / "timing.csv");
      timing << "update,seconds\n";
      for (std::size_t u = 0; u < trained.update_seconds.size(); ++u) {
        timing << u << ',' << format_double(trained.update_seconds[u]) << '\n';
      }
    }
    save_checkpoint(trained.params, dir / "checkpoints" / "final.ckpt");

    stage = "evaluate";
    const EvalResult final_eval = evaluate(ctx, trained.params, reference, std::nullopt, true);
    const EvalResult policy_eval = evaluate(ctx, trained.params, reference, ctx.schedule.steps());
    summary.final_reward = final_eval.mean_reward;
    summary.policy_reward = policy_eval.mean_reward;
    write_json(Json{{"split", final_eval.split},
                    {"baseline", samples_json(baseline)},
                    {"trained", samples_json(final_eval)}},
               dir / "samples.json");

    if (config.post_rl_profile) {
      stage = "post-profile";
      const ProfileSet post = profile_policy(ctx, trained.params, kPostProfileStream);
      profile_doc["post_rl"] = to_json(post.pooled);
      write_json(profile_doc, dir / "profile.json");
    }

    write_json(Json{{"name", config.name},
                    {"seed", config.seed},
                    {"variant", variant_name(config.variant)},
                    {"plan", to_json(summary.plan)},
                    {"updates", config.updates},
                    {"baseline_reward", summary.baseline_reward},
                    {"final_reward", summary.final_reward},
                    {"policy_reward", summary.policy_reward},
                    {"baseline_per_condition", baseline.per_condition},
                    {"final_per_condition", final_eval.per_condition},
                    {"min_profile_correlation", summary.min_profile_correlation
                                                    ? Json(*summary.min_profile_correlation)
                                                    : Json(nullptr)}},
               dir / "summary.json");

    stage = "plots";
    write_run_plots(dir);
    log_line(log, tag + "final reward " + fixed(summary.final_reward) + " (baseline " +
                      fixed(summary.baseline_reward) + ")");
    return summary;
  } catch (const std::exception& e) {
    std::ofstream(dir / "FAILED") << "stage: " << stage << "\nerror: " << e.what() << '\n';
    throw;
  }
}

}  // namespace chunkgrpo
