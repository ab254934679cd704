#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chunkgrpo/config.hpp"
#include "chunkgrpo/dynamics.hpp"
#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/harness.hpp"
#include "chunkgrpo/prop_oracle.hpp"
#include "support.hpp"

using namespace chunkgrpo;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": " << what << " -- " << detail << std::endl;
  if (!pass) {
    ++failures;
  }
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

Selection every_unit(std::span<const TrajectoryGroup> groups, std::size_t units) {
  std::vector<std::size_t> all(units);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Selection s(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    s[g].assign(groups[g].members.size(), all);
  }
  return s;
}

void oracle_exactness() {
  const auto start = Clock::now();
  bool grpo_exact = true;
  double chunk_err = 0.0;
  bool wins_match = true;
  for (std::size_t T = 2; T <= 12; ++T) {
    for (std::size_t m = 1; m <= T; ++m) {
      std::vector<std::size_t> inaccurate(m);
      std::iota(inaccurate.begin(), inaccurate.end(), std::size_t{0});
      const CoefficientVectors v = build_vectors(T, inaccurate);
      const Rational dg = distance_sq(v.hat_exact(), v.grpo_exact());
      const Rational dc = distance_sq(v.hat_exact(), v.j_chunk);
      grpo_exact = grpo_exact && dg == Rational(static_cast<long long>(8 * m));
      const double closed = 2.0 * T - 4.0 + (8.0 * m + 2.0) / T;
      chunk_err = std::max(chunk_err, std::abs(boost::rational_cast<double>(dc) - closed));
      wins_match = wins_match && chunk_wins(T, m) == (dc <= dg);
    }
  }
  const bool b51 = chunk_wins(5, 1);
  const bool b72 = chunk_wins(7, 2);
  const double elapsed = seconds_since(start);
  const bool pass = grpo_exact && chunk_err <= 1e-12 && wins_match && b51 && !b72 && elapsed < 1.0;
  report(1, pass, "attribution distances exact, win rule exhaustive",
         std::string("8m exact=") + (grpo_exact ? "yes" : "no") + ", max chunk closed-form err=" + num(chunk_err) +
             ", chunk_wins vs distances " + (wins_match ? "match" : "MISMATCH") +
             ", (T=5,m=1)=" + (b51 ? "true" : "false") + " (want true), (T=7,m=2)=" + (b72 ? "true" : "false") +
             " (want false; distances give 14-4+18/7=12.57 < 16), " + num(elapsed * 1000, 3) + " ms");
}

void reduction_identities() {
  RandomStream s(2024, 1);
  double value_err = 0.0;
  double grad_err = 0.0;
  double seq_value_err = 0.0;
  double seq_grad_err = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto arch = testing::small_arch(2);
    const ParamVector p = testing::random_params(arch, 1000 + inst);
    const ParamVector q = testing::perturbed(p, 0.01 + 0.04 * s.uniform(), inst);
    const std::size_t T = 3 + s.below(8);
    const auto groups = testing::make_groups(p, make_schedule(T, 3.0), 1 + s.below(3), 2 + s.below(4), inst);
    GrpoConfig cfg;
    cfg.clip = 0.01 + 0.3 * s.uniform();
    cfg.beta = s.uniform() < 0.5 ? 0.0 : 0.1 * s.uniform();
    cfg.fraction = 0.1 + 0.9 * s.uniform();
    const std::size_t L = T - 1;
    const ChunkPlan unit = ChunkPlan::unit(L);
    RandomStream sel_a(inst, 9);
    RandomStream sel_b(inst, 9);
    const Selection a = draw_selection(groups, unit, cfg, sel_a);
    const Selection b = draw_selection(groups, unit, cfg, sel_b);
    const auto chunk = grpo_objective(q, p, groups, unit, cfg, Variant::chunk, a);
    const auto step = grpo_objective(q, p, groups, ChunkPlan::single(L), cfg, Variant::step, b);
    value_err = std::max(value_err, std::abs(chunk.objective - step.objective));
    grad_err = std::max(grad_err, max_abs_diff(chunk.gradient, step.gradient));

    const Selection one = every_unit(groups, 1);
    const auto seq = grpo_objective(q, p, groups, unit, cfg, Variant::sequence, one);
    const auto k1 = grpo_objective(q, p, groups, ChunkPlan::single(L), cfg, Variant::chunk, one);
    seq_value_err = std::max(seq_value_err, std::abs(seq.objective - k1.objective));
    seq_grad_err = std::max(seq_grad_err, max_abs_diff(seq.gradient, k1.gradient));
  }
  const bool pass = value_err <= 1e-12 && grad_err <= 1e-12 && seq_value_err <= 1e-12 && seq_grad_err <= 1e-12;
  report(2, pass, "cs=1 chunk == step, sequence == K=1 (100 instances)",
         "max |dJ|=" + num(value_err) + ", max |dgrad|=" + num(grad_err) + ", sequence |dJ|=" + num(seq_value_err) +
             ", |dgrad|=" + num(seq_grad_err));
}

void old_policy_fixed_point() {
  RunConfig cfg;
  const Architecture arch = cfg.architecture();
  const TimeSchedule sched = cfg.schedule();
  double ratio_err = 0.0;
  double surrogate_err = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RandomStream init(seed, 3);
    const ParamVector p = ParamVector::initialize(arch, init);
    const auto groups = testing::make_groups(p, sched, 2, 4, 300 + seed);
    for (const auto& g : groups) {
      for (const auto& m : g.members) {
        for (std::size_t k = 0; k < m.optimizable(); ++k) {
          ratio_err = std::max(ratio_err, std::abs(step_ratio(p, m.transitions[k], g.condition) - 1.0));
          ++checked;
        }
        const auto all = std::span(m.transitions).subspan(0, m.optimizable());
        ratio_err = std::max(ratio_err, std::abs(chunk_ratio(p, all, g.condition) - 1.0));
      }
    }
    for (Variant v : {Variant::step, Variant::chunk, Variant::sequence}) {
      GrpoConfig gc;
      const ChunkPlan plan = ChunkPlan::from_sizes({2, 3, 4, 7});
      const ChunkPlan units = effective_plan(v, plan, 16);
      const auto res = grpo_objective(p, p, groups, plan, gc, v, every_unit(groups, units.count()));
      surrogate_err = std::max(surrogate_err, std::abs(res.surrogate));
      ratio_err = std::max(ratio_err, std::abs(res.ratio_max - 1.0));
    }
  }
  report(3, ratio_err <= 1e-10 && surrogate_err <= 1e-9, "ratios are 1 and surrogate is 0 at theta_old",
         "max |r-1|=" + num(ratio_err) + " over " + std::to_string(checked) + " transitions, max |J|=" +
             num(surrogate_err));
}

void gradient_soundness() {
  const auto arch = testing::small_arch(2);
  const ParamVector p = testing::random_params(arch, 77);
  const ParamVector q = testing::perturbed(p, 0.03, 78);
  const TimeSchedule sched = make_schedule(3, 3.0);

  double logp_err = 0.0;
  const auto groups = testing::make_groups(p, sched, 2, 2, 79);
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      for (std::size_t k = 0; k < m.optimizable(); ++k) {
        const Transition& tr = m.transitions[k];
        auto f = [&](const ParamVector& r) { return transition_log_prob(r, tr, g.condition).value; };
        logp_err = std::max(logp_err, testing::relative_error(transition_log_prob(q, tr, g.condition).gradient,
                                                              testing::finite_difference(q, f)));
      }
    }
  }

  std::vector<FmSample> batch;
  RandomStream s(80, 1);
  for (int i = 0; i < 8; ++i) {
    batch.push_back({{s.gaussian(), s.gaussian()}, {s.gaussian(), s.gaussian()}, s.uniform(), std::size_t(i % 2)});
  }
  auto fm = [&](const ParamVector& r) { return fm_loss(r, batch).loss; };
  const double fm_err = testing::relative_error(fm_loss(q, batch).gradient, testing::finite_difference(q, fm));

  GrpoConfig cfg;
  cfg.clip = 0.5;
  cfg.beta = 0.2;
  const ChunkPlan plan = ChunkPlan::single(2);
  const Selection sel = every_unit(groups, 1);
  auto obj = [&](const ParamVector& r) { return grpo_objective(r, p, groups, plan, cfg, Variant::chunk, sel).objective; };
  const double obj_err = testing::relative_error(grpo_objective(q, p, groups, plan, cfg, Variant::chunk, sel).gradient,
                                                 testing::finite_difference(q, obj));
  report(4, logp_err < 1e-4 && fm_err < 1e-4 && obj_err < 1e-4, "analytic gradients match central differences",
         "rel err log-prob=" + num(logp_err) + ", fm loss=" + num(fm_err) + ", chunk objective=" + num(obj_err));
}

void normalization_identities() {
  RandomStream s(55, 5);
  double adv_mean = 0.0;
  double adv_std = 0.0;
  for (int g = 0; g < 200; ++g) {
    TrajectoryGroup group;
    const std::size_t n = 2 + s.below(30);
    const double scale = std::exp(4 * (s.uniform() - 0.5));
    for (std::size_t i = 0; i < n; ++i) {
      Trajectory t;
      t.reward = scale * s.gaussian() + 3.0;
      group.members.push_back(t);
    }
    const Advantages a = compute_advantages(group);
    double m = 0.0;
    double sq = 0.0;
    for (double v : a.values) {
      m += v;
      sq += v * v;
    }
    m /= static_cast<double>(n);
    adv_mean = std::max(adv_mean, std::abs(m));
    adv_std = std::max(adv_std, std::abs(std::sqrt(sq / static_cast<double>(n) - m * m) - 1.0));
  }
  double weight_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 4 + s.below(40);
    DynamicsProfile p;
    p.values.resize(L);
    for (auto& v : p.values) {
      v = s.uniform() * (s.uniform() < 0.1 ? 10.0 : 1.0);
    }
    const std::size_t K = 1 + s.below(std::min<std::uint64_t>(L, 10));
    const ChunkPlan plan = s.uniform() < 0.5 ? segment_chunks(p, K) : fallback_plan(L);
    const auto w = sampling_weights(p, plan);
    double total = 0.0;
    for (std::size_t j = 0; j < plan.count(); ++j) {
      total += static_cast<double>(plan.sizes[j]) * w[j];
    }
    weight_err = std::max(weight_err, std::abs(total - static_cast<double>(L)));
  }
  report(5, adv_mean <= 1e-9 && adv_std <= 1e-9 && weight_err <= 1e-9, "advantage and weight normalization",
         "max |mean A|=" + num(adv_mean) + ", max |std A - 1|=" + num(adv_std) + ", max |sum cs*w - T|=" +
             num(weight_err));
}

const AblationRow& row_of(const AblationReport& r, const std::string& label) {
  for (const auto& row : r.rows) {
    if (row.label == label) {
      return row;
    }
  }
  throw std::runtime_error("ablation row " + label + " missing");
}

RunConfig preference_config(const fs::path& root) {
  RunConfig c;
  c.reward_kind = RewardKind::mode_preference;
  c.output_root = root.string();
  return c;
}

void preference_and_ablation(const fs::path& out, double single_run_seconds) {
  const RunConfig base = preference_config(out / "ablation");
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  const auto start = Clock::now();
  const AblationReport r = ablation_suite(Suite::chunk_settings, base, seeds, 1, &std::cerr);
  const double per_seed = seconds_since(start) / static_cast<double>(seeds.size());

  const AblationRow& step = row_of(r, "step");
  const AblationRow& dyn = row_of(r, "dynamics");
  std::size_t dyn_wins = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    dyn_wins += dyn.final_rewards[s] >= step.final_rewards[s] ? 1 : 0;
  }
  const bool a = step.mean > r.baseline_reward && dyn.mean > r.baseline_reward;
  const bool b = dyn_wins >= 4;
  const bool fast = single_run_seconds < 900.0;
  report(6, a && b && fast, "preference alignment: both beat baseline, dynamics >= step in >= 4/5 seeds",
         "baseline=" + num(r.baseline_reward) + ", step=" + num(step.mean) + ", dynamics=" + num(dyn.mean) +
             ", dynamics>=step in " + std::to_string(dyn_wins) + "/5 seeds, single run " +
             num(single_run_seconds, 3) + " s");

  const std::vector<std::string> equal{"equal-2", "equal-4", "equal-8", "equal-16"};
  bool all_ran = true;
  std::string best_label;
  double best = -1.0;
  for (const auto& label : equal) {
    const AblationRow& row = row_of(r, label);
    all_ran = all_ran && row.final_rewards.size() == seeds.size();
    if (row.mean > best) {
      best = row.mean;
      best_label = label;
    }
  }
  const bool pass7 = all_ran && dyn.mean >= best - 0.02;
  std::string ranking;
  for (const auto& row : r.rows) {
    ranking += (ranking.empty() ? "" : ", ") + row.label + "=" + num(row.mean);
  }
  report(7, pass7, "dynamics plan within 0.02 of the best equal-size plan",
         "dynamics=" + num(dyn.mean) + ", best equal " + best_label + "=" + num(best) + " [" + ranking + "], " +
             num(per_seed, 3) + " s per seed for 6 settings");
}

void profile_invariance_check(const Context& ctx, const ParamVector& reference) {
  const ProfileSet set = profile_policy(ctx, reference);
  const bool defined = set.invariance.min_correlation.has_value() && set.invariance.undefined_pairs == 0;
  const double minr = set.invariance.min_correlation.value_or(-2.0);
  report(8, defined && set.per_condition.size() >= 4 && minr > 0.9,
         "minimum pairwise profile correlation > 0.9",
         "conditions=" + std::to_string(set.per_condition.size()) + ", rollouts=" +
             std::to_string(ctx.config.profile_rollouts) + ", min r=" + num(minr) + ", undefined pairs=" +
             std::to_string(set.invariance.undefined_pairs));
}

void weighted_sampling_check(const Context& ctx, const ParamVector& reference) {
  const ProfileSet set = profile_policy(ctx, reference);
  ChunkPlan plan = segment_chunks(set.pooled, ctx.config.chunk_count, {ctx.config.first_chunk});
  plan.weights = sampling_weights(set.pooled, plan);
  const double total = std::accumulate(plan.weights.begin(), plan.weights.end(), 0.0);
  RandomStream s(ctx.config.seed, kSelectionStream);
  const int draws = 10000;
  std::vector<int> hits(plan.count(), 0);
  const double single = 1.0 / static_cast<double>(plan.count());
  for (int i = 0; i < draws; ++i) {
    for (std::size_t j : select_chunks(plan, single, s)) {
      ++hits[j];
    }
  }
  double worst = 0.0;
  std::string detail;
  for (std::size_t j = 0; j < plan.count(); ++j) {
    const double freq = hits[j] / static_cast<double>(draws);
    const double want = plan.weights[j] / total;
    worst = std::max(worst, std::abs(freq - want));
    detail += (detail.empty() ? "" : ", ") + num(freq, 3) + " vs " + num(want, 3);
  }
  report(9, worst <= 0.02, "selection frequencies match normalized weights",
         "plan [" + format_size_list(plan.sizes) + "], freq vs weight: " + detail + ", max abs dev=" + num(worst));
}

void determinism(const fs::path& first_run, const fs::path& out) {
  RunConfig c = preference_config(out / "determinism-b");
  c.name = "repeat";
  const RunSummary again = run_pipeline(c, &std::cerr);
  const std::string a = slurp(first_run / "metrics.csv");
  const std::string b = slurp(again.dir / "metrics.csv");
  report(10, !a.empty() && a == b, "repeated runs give byte-identical metrics.csv",
         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " bytes, " + (a == b ? "identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_runs";
  app.add_option("--out", out, "output root for the pipeline runs");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(out);
  fs::remove_all(root);
  fs::create_directories(root);

  auto guarded = [](int id, const auto& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, "raised an exception", e.what());
    }
  };

  guarded(1, oracle_exactness);
  guarded(2, reduction_identities);
  guarded(3, old_policy_fixed_point);
  guarded(4, gradient_soundness);
  guarded(5, normalization_identities);

  // A complete default run with mode-preference reward from a cold cache;
  // its wall time is the per-seed runtime and its metrics seed the
  // determinism check.
  fs::path first_run;
  double single_run_seconds = 1e30;
  guarded(10, [&] {
    RunConfig c = preference_config(root / "determinism-a");
    c.name = "repeat";
    const auto start = Clock::now();
    first_run = run_pipeline(c, &std::cerr).dir;
    single_run_seconds = seconds_since(start);
  });

  guarded(6, [&] { preference_and_ablation(root, single_run_seconds); });

  guarded(8, [&] {
    const Context ctx(preference_config(root / "determinism-a"));
    profile_invariance_check(ctx, pretrained_policy(ctx));
  });
  guarded(9, [&] {
    RunConfig c = preference_config(root / "determinism-a");
    c.grpo.weighted_sampling = true;
    const Context ctx(c);
    weighted_sampling_check(ctx, pretrained_policy(ctx));
  });
  guarded(10, [&] { determinism(first_run, root); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
