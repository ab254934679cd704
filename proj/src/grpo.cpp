#include "chunkgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {

ChunkPlan ChunkPlan::from_sizes(std::vector<std::size_t> sizes, std::vector<double> weights) {
  ChunkPlan plan;
  plan.sizes = std::move(sizes);
  plan.weights = weights.empty() ? std::vector<double>(plan.sizes.size(), 1.0) : std::move(weights);
  plan.validate(plan.total());
  return plan;
}

ChunkPlan ChunkPlan::unit(std::size_t transitions) {
  return from_sizes(std::vector<std::size_t>(transitions, 1));
}

ChunkPlan ChunkPlan::single(std::size_t transitions) { return from_sizes({transitions}); }

std::size_t ChunkPlan::total() const { return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}); }

std::size_t ChunkPlan::offset(std::size_t chunk) const {
  return std::accumulate(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(chunk), std::size_t{0});
}

bool ChunkPlan::is_unit() const {
  return std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 1; });
}

void ChunkPlan::validate(std::size_t transitions) const {
  if (sizes.empty()) {
    throw InputError("ChunkPlan: at least one chunk is required");
  }
  if (weights.size() != sizes.size()) {
    throw InputError("ChunkPlan: one weight per chunk is required");
  }
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] == 0) {
      throw InputError("ChunkPlan: chunk " + std::to_string(j) + " is empty");
    }
    if (!(weights[j] > 0.0) || !std::isfinite(weights[j])) {
      throw InputError("ChunkPlan: chunk " + std::to_string(j) + " has a non-positive weight");
    }
  }
  if (total() != transitions) {
    throw InputError("ChunkPlan: sizes sum to " + std::to_string(total()) + ", expected " +
                     std::to_string(transitions));
  }
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::step:
      return "step";
    case Variant::chunk:
      return "chunk";
    case Variant::sequence:
      return "sequence";
  }
  return "chunk";
}

Variant parse_variant(std::string_view name) {
  if (name == "step") {
    return Variant::step;
  }
  if (name == "chunk") {
    return Variant::chunk;
  }
  if (name == "sequence") {
    return Variant::sequence;
  }
  throw InputError("unknown variant '" + std::string(name) + "'");
}

void GrpoConfig::validate() const {
  if (!(clip > 0.0)) {
    throw InputError("GrpoConfig: clip range must be positive");
  }
  if (!(beta >= 0.0)) {
    throw InputError("GrpoConfig: KL weight must be non-negative");
  }
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InputError("GrpoConfig: fraction must lie in (0,1]");
  }
  if (group_size < 2) {
    throw InputError("GrpoConfig: group size must be at least 2");
  }
  if (grad_accum == 0) {
    throw InputError("GrpoConfig: grad_accum must be positive");
  }
}

Advantages compute_advantages(TrajectoryGroup& group) {
  const std::size_t n = group.members.size();
  if (n < 2) {
    throw InputError("compute_advantages: group needs at least 2 members");
  }
  Advantages out;
  for (const auto& m : group.members) {
    if (!m.reward) {
      throw StateError("compute_advantages: member without reward");
    }
    if (m.condition != group.condition) {
      throw StateError("compute_advantages: member condition differs from group");
    }
    out.reward_mean += *m.reward;
  }
  out.reward_mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& m : group.members) {
    const double d = *m.reward - out.reward_mean;
    var += d * d;
  }
  out.reward_std = std::sqrt(var / static_cast<double>(n));
  out.degenerate = out.reward_std < kDegenerateRewardStd;
  out.values.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.degenerate) {
      out.values[i] = (*group.members[i].reward - out.reward_mean) / out.reward_std;
    }
    group.members[i].advantage = out.values[i];
  }
  group.reward_mean = out.reward_mean;
  group.reward_std = out.reward_std;
  return out;
}

bool is_degenerate(const TrajectoryGroup& group) { return group.reward_std < kDegenerateRewardStd; }

double step_ratio(const ParamVector& params, const Transition& transition, std::size_t condition) {
  if (!transition.stochastic) {
    throw InputError("step_ratio: transition is deterministic");
  }
  const double lr = transition_log_prob(params, transition, condition).value - transition.logp_old;
  if (!std::isfinite(lr)) {
    throw NumericError("step_ratio: non-finite log-ratio");
  }
  return std::exp(lr);
}

double chunk_ratio(const ParamVector& params, std::span<const Transition> chunk, std::size_t condition) {
  if (chunk.empty()) {
    throw InputError("chunk_ratio: empty chunk");
  }
  double sum = 0.0;
  for (const auto& tr : chunk) {
    if (!tr.stochastic) {
      throw InputError("chunk_ratio: chunk contains a deterministic transition");
    }
    sum += transition_log_prob(params, tr, condition).value - tr.logp_old;
  }
  if (!std::isfinite(sum)) {
    throw NumericError("chunk_ratio: non-finite log-ratio");
  }
  return std::exp(sum / static_cast<double>(chunk.size()));
}

namespace {

struct ClipTerm {
  double value;
  double d_ratio;
  bool outside;
};

ClipTerm clip_term(double r, double advantage, double epsilon) {
  const double clipped = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon);
  const double unclipped_v = r * advantage;
  const double clipped_v = clipped * advantage;
  const bool outside = r < 1.0 - epsilon || r > 1.0 + epsilon;
  if (unclipped_v <= clipped_v) {
    return {unclipped_v, advantage, outside};
  }
  return {clipped_v, 0.0, outside};
}

}  // namespace

SurrogateResult clipped_objective(const std::vector<std::vector<double>>& ratios, std::span<const double> advantages,
                                  double epsilon) {
  if (ratios.size() != advantages.size()) {
    throw InputError("clipped_objective: " + std::to_string(ratios.size()) + " ratio rows for " +
                     std::to_string(advantages.size()) + " advantages");
  }
  if (ratios.empty()) {
    throw InputError("clipped_objective: no trajectories");
  }
  SurrogateResult out;
  out.d_ratio.resize(ratios.size());
  const double row_w = 1.0 / static_cast<double>(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i].empty()) {
      throw InputError("clipped_objective: trajectory " + std::to_string(i) + " has no units");
    }
    const double unit_w = row_w / static_cast<double>(ratios[i].size());
    out.d_ratio[i].resize(ratios[i].size());
    for (std::size_t u = 0; u < ratios[i].size(); ++u) {
      const ClipTerm term = clip_term(ratios[i][u], advantages[i], epsilon);
      out.value += unit_w * term.value;
      out.d_ratio[i][u] = unit_w * term.d_ratio;
      out.clipped += term.outside ? 1 : 0;
      ++out.units;
    }
  }
  return out;
}

double gaussian_kl(std::span<const double> mean_a, std::span<const double> mean_b, double std) {
  if (!(std > 0.0)) {
    throw InputError("gaussian_kl: std must be positive");
  }
  if (mean_a.size() != mean_b.size()) {
    throw InputError("gaussian_kl: dimension mismatch");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < mean_a.size(); ++i) {
    sq += (mean_a[i] - mean_b[i]) * (mean_a[i] - mean_b[i]);
  }
  return sq / (2.0 * std * std);
}

double kl_penalty(const ParamVector& params, const ParamVector& reference, std::span<const Transition> transitions,
                  std::size_t condition, double beta) {
  if (!(beta >= 0.0)) {
    throw InputError("kl_penalty: beta must be non-negative");
  }
  if (beta == 0.0 || transitions.empty()) {
    return 0.0;
  }
  double total = 0.0;
  for (const auto& tr : transitions) {
    if (!(tr.std > 0.0)) {
      throw InputError("kl_penalty: transition with zero std");
    }
    const auto k = drift_coefficients(tr.t_hi, tr.t_lo, tr.sigma);
    const Vec mu = transition_mean(tr.state, eval_velocity(params, tr.state, tr.t_hi, condition), k);
    const Vec mu_ref = transition_mean(tr.state, eval_velocity(reference, tr.state, tr.t_hi, condition), k);
    total += gaussian_kl(mu, mu_ref, tr.std);
  }
  return beta * total / static_cast<double>(transitions.size());
}

std::vector<std::size_t> select_chunks(const ChunkPlan& plan, double fraction, RandomStream& stream) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InputError("select_chunks: fraction must lie in (0,1]");
  }
  plan.validate(plan.total());
  const std::size_t K = plan.count();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(K))));
  std::vector<std::size_t> chosen;
  if (k >= K) {
    chosen.resize(K);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    return chosen;
  }
  std::vector<bool> taken(K, false);
  for (std::size_t draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      total += taken[j] ? 0.0 : plan.weights[j];
    }
    const double target = stream.uniform() * total;
    double acc = 0.0;
    std::size_t pick = K;
    for (std::size_t j = 0; j < K; ++j) {
      if (taken[j]) {
        continue;
      }
      acc += plan.weights[j];
      pick = j;
      if (target < acc) {
        break;
      }
    }
    taken[pick] = true;
    chosen.push_back(pick);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

ChunkPlan effective_plan(Variant variant, const ChunkPlan& plan, std::size_t transitions) {
  switch (variant) {
    case Variant::step:
      if (plan.is_unit() && plan.total() == transitions) {
        return plan;
      }
      return ChunkPlan::unit(transitions);
    case Variant::sequence:
      return ChunkPlan::single(transitions);
    case Variant::chunk:
      plan.validate(transitions);
      return plan;
  }
  return plan;
}

Selection draw_selection(std::span<const TrajectoryGroup> groups, const ChunkPlan& plan, const GrpoConfig& config,
                         RandomStream& stream) {
  for (std::size_t j : config.train_chunks) {
    if (j >= plan.count()) {
      throw InputError("draw_selection: trained chunk " + std::to_string(j) + " does not exist");
    }
  }
  std::vector<std::size_t> fixed(config.train_chunks);
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());

  Selection sel(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    sel[g].resize(groups[g].members.size());
    for (auto& s : sel[g]) {
      s = fixed.empty() ? select_chunks(plan, config.fraction, stream) : fixed;
    }
  }
  return sel;
}

namespace {

std::size_t common_transition_count(std::span<const TrajectoryGroup> groups) {
  std::size_t n = 0;
  bool first = true;
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      const std::size_t k = m.optimizable();
      if (first) {
        n = k;
        first = false;
      } else if (k != n) {
        throw InputError("grpo: trajectories differ in optimizable transition count");
      }
    }
  }
  if (first || n == 0) {
    throw InputError("grpo: no optimizable transitions");
  }
  return n;
}

}  // namespace

ObjectiveResult grpo_objective(const ParamVector& params, const ParamVector& reference,
                               std::span<const TrajectoryGroup> groups, const ChunkPlan& plan,
                               const GrpoConfig& config, Variant variant, const Selection& selection) {
  config.validate();
  const std::size_t transitions = common_transition_count(groups);
  const ChunkPlan units = effective_plan(variant, plan, transitions);
  if (selection.size() != groups.size()) {
    throw InputError("grpo_objective: selection does not match groups");
  }

  ObjectiveResult out;
  out.selection_counts.assign(units.count(), 0);
  std::vector<std::size_t> active;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (selection[g].size() != groups[g].members.size()) {
      throw InputError("grpo_objective: selection does not match group members");
    }
    if (!is_degenerate(groups[g])) {
      active.push_back(g);
    }
  }
  out.active_groups = active.size();
  if (active.empty()) {
    out.gradient.assign(params.size(), 0.0);
    return out;
  }

  const bool with_kl = config.beta > 0.0;
  double ratio_sum = 0.0;
  double ratio_max = -std::numeric_limits<double>::infinity();

  auto lg = grad_params(params, [&](LossTape& tape) {
    const double group_w = 1.0 / static_cast<double>(active.size());
    for (std::size_t g : active) {
      const auto& group = groups[g];
      const double member_w = group_w / static_cast<double>(group.members.size());
      for (std::size_t i = 0; i < group.members.size(); ++i) {
        const auto& member = group.members[i];
        if (!member.advantage) {
          throw StateError("grpo_objective: member without advantage");
        }
        const double A = *member.advantage;
        const auto& chosen = selection[g][i];
        if (chosen.empty()) {
          throw InputError("grpo_objective: empty selection for a trajectory");
        }
        const double unit_w = member_w / static_cast<double>(chosen.size());
        std::size_t selected_transitions = 0;
        for (std::size_t j : chosen) {
          selected_transitions += units.sizes.at(j);
        }
        const double kl_w = member_w / static_cast<double>(selected_transitions);

        for (std::size_t j : chosen) {
          ++out.selection_counts[j];
          const std::size_t begin = units.offset(j);
          const std::size_t size = units.sizes[j];
          std::vector<TapedMean> means;
          means.reserve(size);
          double log_ratio = 0.0;
          for (std::size_t t = begin; t < begin + size; ++t) {
            const Transition& tr = member.transitions[t];
            means.push_back(record_mean(tape, tr, group.condition));
            log_ratio += gaussian_log_density(tr.sample, means.back().mean, tr.std) - tr.logp_old;
          }
          log_ratio /= static_cast<double>(size);
          const double r = std::exp(log_ratio);
          if (!std::isfinite(r)) {
            throw NumericError("grpo_objective: non-finite importance ratio");
          }
          const ClipTerm term = clip_term(r, A, config.clip);
          out.surrogate += unit_w * term.value;
          ratio_sum += r;
          ratio_max = std::max(ratio_max, r);
          ++out.units;
          out.clipped += term.outside ? 1 : 0;

          // d(surrogate)/d(logp_t) = unit_w · ∂term/∂r · r / cs
          const double coeff = unit_w * term.d_ratio * r / static_cast<double>(size);
          for (std::size_t t = begin; t < begin + size; ++t) {
            const Transition& tr = member.transitions[t];
            const TapedMean& m = means[t - begin];
            const double inv_var = 1.0 / (tr.std * tr.std);
            Vec dv(m.mean.size());
            for (std::size_t d = 0; d < dv.size(); ++d) {
              dv[d] = (tr.sample[d] - m.mean[d]) * inv_var * m.dmean_dv;
            }
            if (coeff != 0.0) {
              tape.seed(m.index, dv, coeff);
            }
            if (with_kl) {
              const auto k = drift_coefficients(tr.t_hi, tr.t_lo, tr.sigma);
              const Vec mu_ref =
                  transition_mean(tr.state, eval_velocity(reference, tr.state, tr.t_hi, group.condition), k);
              double sq = 0.0;
              for (std::size_t d = 0; d < dv.size(); ++d) {
                const double diff = m.mean[d] - mu_ref[d];
                sq += diff * diff;
                dv[d] = diff * inv_var * m.dmean_dv;
              }
              out.kl += kl_w * sq * 0.5 * inv_var;
              tape.seed(m.index, dv, -config.beta * kl_w);
            }
          }
        }
      }
    }
    out.objective = out.surrogate - config.beta * out.kl;
    return out.objective;
  });

  out.gradient = std::move(lg.gradient);
  out.ratio_mean = ratio_sum / static_cast<double>(out.units);
  out.ratio_max = ratio_max;
  return out;
}

UpdateResult grpo_update(const ParamVector& params, const ParamVector& reference,
                         std::span<const TrajectoryGroup> groups, const ChunkPlan& plan, const GrpoConfig& config,
                         Variant variant, const OptimState& state, RandomStream& selection_stream) {
  const std::size_t transitions = common_transition_count(groups);
  const ChunkPlan units = effective_plan(variant, plan, transitions);
  const Selection selection = draw_selection(groups, units, config, selection_stream);
  ObjectiveResult obj = grpo_objective(params, reference, groups, units, config, variant, selection);

  UpdateResult out{params, state, {}};
  auto& m = out.metrics;
  m.skipped_groups = groups.size() - obj.active_groups;
  m.selection_counts = obj.selection_counts;
  double reward_sum = 0.0;
  double reward_sq = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (const auto& member : g.members) {
      const double r = member.reward.value_or(0.0);
      reward_sum += r;
      reward_sq += r * r;
      ++n;
    }
  }
  m.reward_mean = reward_sum / static_cast<double>(n);
  m.reward_std = std::sqrt(std::max(0.0, reward_sq / static_cast<double>(n) - m.reward_mean * m.reward_mean));
  if (obj.active_groups == 0) {
    m.skipped = true;
    return out;
  }
  m.objective = obj.objective;
  m.surrogate = obj.surrogate;
  m.kl = obj.kl;
  m.ratio_mean = obj.ratio_mean;
  m.ratio_max = obj.ratio_max;
  m.clip_fraction = static_cast<double>(obj.clipped) / static_cast<double>(obj.units);

  Vec descent(obj.gradient.size());
  for (std::size_t i = 0; i < descent.size(); ++i) {
    descent[i] = -obj.gradient[i];
  }
  auto step = optim_step(params, descent, state);
  m.grad_norm = step.grad_norm;
  out.params = std::move(step.params);
  out.state = std::move(step.state);
  return out;
}

}  // namespace chunkgrpo
