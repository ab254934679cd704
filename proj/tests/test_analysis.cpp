#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "chunkgrpo/dynamics.hpp"
#include "chunkgrpo/error.hpp"
#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/prop_oracle.hpp"
#include "chunkgrpo/rewards.hpp"
#include "support.hpp"

using namespace chunkgrpo;

namespace {

DynamicsProfile profile_of(std::vector<double> values) {
  DynamicsProfile p;
  p.values = std::move(values);
  p.trajectories = 1;
  return p;
}

DynamicsProfile random_profile(std::size_t length, RandomStream& s) {
  std::vector<double> v(length);
  for (auto& x : v) {
    x = 0.01 + s.uniform();
  }
  return profile_of(v);
}

double second_difference(const std::vector<double>& p, std::size_t b) {
  return b < 2 ? 0.0 : std::abs(p[b] - 2 * p[b - 1] + p[b - 2]);
}

}  // namespace

TEST_CASE("relative L1 worked example and zero-norm guard") {
  const std::vector<std::vector<Vec>> paths{{{2.0, 2.0}, {1.0, 1.0}}};
  const DynamicsProfile p = l1_rel_profile(paths, 1);
  REQUIRE(p.size() == 1);
  CHECK(p.values[0] == doctest::Approx(0.5));

  const std::vector<std::vector<Vec>> two{{{2.0, 2.0}, {1.0, 1.0}}, {{0.0, 0.0}, {1.0, 0.0}}, {{-1.0, 0.0}, {0.0, 0.0}}};
  const DynamicsProfile q = l1_rel_profile(two, 1);
  CHECK(q.skipped == 1);
  CHECK(q.values[0] == doctest::Approx(0.75));
  CHECK_THROWS_AS(l1_rel_profile(two, 2), InputError);
}

TEST_CASE("measured profile covers the stochastic transitions and is reproducible") {
  const ParamVector p = testing::random_params(testing::small_arch(), 51);
  const TimeSchedule sched = make_schedule(17, 3.0);
  const DynamicsProfile a = measure_profile(p, 1, sched, 32, RandomStream(4, 104));
  CHECK(a.size() == 16);
  CHECK(a.trajectories == 32);
  CHECK(a.conditions == std::vector<std::size_t>{1});
  CHECK(measure_profile(p, 1, sched, 32, RandomStream(4, 104)).values == a.values);
  for (double v : a.values) {
    CHECK(v >= 0.0);
  }
}

TEST_CASE("constant profile keeps only the forced first chunk") {
  const DynamicsProfile flat = profile_of(std::vector<double>(8, 0.3));
  CHECK(segment_chunks(flat, 2).sizes == std::vector<std::size_t>{2, 6});
  CHECK(segment_chunks(flat, 3).sizes == std::vector<std::size_t>{2, 1, 5});
  CHECK(segment_chunks(flat, 1).sizes == std::vector<std::size_t>{8});
  CHECK(segment_chunks(flat, 8).is_unit());
  CHECK_THROWS_AS(segment_chunks(flat, 9), InputError);
  CHECK(segment_chunks(flat, 3, {0}).sizes == std::vector<std::size_t>{1, 1, 6});
}

TEST_CASE("segmentation places boundaries at the sharpest curvature") {
  // Kink at index 5: second difference peaks at b = 5 and b = 6.
  const DynamicsProfile p = profile_of({1, 1, 1, 1, 1, 3, 3, 3, 3, 3});
  CHECK(segment_chunks(p, 3).sizes == std::vector<std::size_t>{2, 3, 5});
  CHECK(segment_chunks(p, 4).sizes == std::vector<std::size_t>{2, 3, 1, 4});
}

TEST_CASE("segmentation picks the top-scoring boundaries on random profiles") {
  RandomStream s(7, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 6 + s.below(20);
    const std::size_t K = 2 + s.below(std::min<std::uint64_t>(L - 2, 6));
    const DynamicsProfile p = random_profile(L, s);
    const ChunkPlan plan = segment_chunks(p, K);
    REQUIRE(plan.count() == K);
    CHECK(plan.total() == L);
    CHECK(plan.sizes[0] == 2);
    std::set<std::size_t> chosen;
    for (std::size_t j = 1; j + 1 < K; ++j) {
      chosen.insert(plan.offset(j + 1));
    }
    double worst_chosen = 1e300;
    for (std::size_t b : chosen) {
      worst_chosen = std::min(worst_chosen, second_difference(p.values, b));
    }
    for (std::size_t b = 3; b < L; ++b) {
      if (!chosen.contains(b)) {
        CHECK(second_difference(p.values, b) <= worst_chosen);
      }
    }
  }
}

TEST_CASE("fallback plan") {
  CHECK(fallback_plan(16).sizes == std::vector<std::size_t>{2, 3, 4, 7});
  CHECK(fallback_plan(8).sizes == std::vector<std::size_t>{1, 2, 2, 3});
  CHECK(fallback_plan(3).is_unit());
  for (std::size_t n = 4; n < 40; ++n) {
    CHECK(fallback_plan(n).total() == n);
  }
}

TEST_CASE("sampling weights example and normalization identity") {
  const DynamicsProfile p = profile_of({3, 3, 1, 1});
  const auto w = sampling_weights(p, ChunkPlan::from_sizes({2, 2}));
  CHECK(w[0] == doctest::Approx(1.5));
  CHECK(w[1] == doctest::Approx(0.5));
  CHECK(sampling_weights(profile_of({0, 0, 0}), ChunkPlan::unit(3)) == std::vector<double>{1, 1, 1});

  RandomStream s(12, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 4 + s.below(30);
    const DynamicsProfile q = random_profile(L, s);
    const std::size_t K = 1 + s.below(std::min<std::uint64_t>(L, 8));
    const ChunkPlan plan = segment_chunks(q, K);
    const auto ws = sampling_weights(q, plan);
    double total = 0.0;
    for (std::size_t j = 0; j < plan.count(); ++j) {
      total += plan.sizes[j] * ws[j];
    }
    CHECK(total == doctest::Approx(double(L)).epsilon(1e-12));
  }
}

TEST_CASE("pearson correlation and invariance report") {
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{2, 4, 6, 8};
  const std::vector<double> c{4, 3, 2, 1};
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK(*pearson(a, b) == doctest::Approx(1.0));
  CHECK(*pearson(a, c) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson(a, flat).has_value());
  const std::vector<DynamicsProfile> ps{profile_of(a), profile_of(b), profile_of(flat)};
  const InvarianceReport r = profile_invariance(ps);
  CHECK(r.undefined_pairs == 2);
  CHECK(*r.min_correlation == doctest::Approx(1.0));
  CHECK_FALSE(r.correlation[0][2].has_value());
}

TEST_CASE("mode preference reward worked examples") {
  const std::vector<Vec> centers{{0.0, 0.0}, {10.0, 0.0}};
  CHECK(mode_preference_reward(Vec{0.0, 0.0}, centers, 1.0) == doctest::Approx(1.0));
  // Distance τ√2 gives exp(-1).
  CHECK(mode_preference_reward(Vec{0.0, 0.5 * std::sqrt(2.0)}, centers, 0.5) == doctest::Approx(std::exp(-1.0)));
  CHECK(mode_preference_reward(Vec{10.0, 1.0}, centers, 1.0) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("reward model on the circle mixture") {
  const DataSpec data = DataSpec::circle_mixture();
  const RewardModel pref(RewardSpec::first_mode_per_condition(data, RewardKind::mode_preference), data);
  const RewardModel fid(RewardSpec::first_mode_per_condition(data, RewardKind::fidelity), data);
  const RewardModel comp(RewardSpec::first_mode_per_condition(data), data);
  const Vec m0 = data.components[0].mean;
  const Vec m1 = data.components[1].mean;
  CHECK(pref(m0, 0) == doctest::Approx(1.0));
  CHECK(pref(m1, 0) < 0.05);
  CHECK(fid(m0, 0) == doctest::Approx(1.0));
  CHECK(fid(m1, 0) == doctest::Approx(1.0));
  CHECK(fid(Vec{0.0, 0.0}, 0) < 0.01);
  CHECK(comp(m1, 0) == doctest::Approx(0.7 * pref(m1, 0) + 0.3 * fid(m1, 0)));
  RandomStream s(3, 3);
  for (int i = 0; i < 100; ++i) {
    const Vec x{4 * s.gaussian(), 4 * s.gaussian()};
    for (const RewardModel* r : {&pref, &fid, &comp}) {
      const double v = (*r)(x, 1);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK_THROWS_AS(pref(m0, 4), InputError);
}

TEST_CASE("reward spec validation") {
  const DataSpec data = DataSpec::circle_mixture();
  RewardSpec s = RewardSpec::first_mode_per_condition(data);
  s.temperature = 0.0;
  CHECK_THROWS_AS(s.validate(data), InputError);
  s = RewardSpec::first_mode_per_condition(data);
  s.preferred[0] = {9};
  CHECK_THROWS_AS(s.validate(data), InputError);
  s = RewardSpec::first_mode_per_condition(data);
  s.fidelity_weight = 0.5;
  CHECK_THROWS_AS(s.validate(data), InputError);
  CHECK(parse_reward(reward_name(RewardKind::mode_preference)) == RewardKind::mode_preference);
  CHECK_THROWS_AS(parse_reward("clip"), InputError);
}

TEST_CASE("attribution scenario labels are mirror images") {
  const AttributionScenario a = make_attribution_scenario(6, {4, 1});
  CHECK(a.inaccurate == std::vector<std::size_t>{1, 4});
  CHECK(a.accurate() == std::vector<std::size_t>{0, 2, 3, 5});
  CHECK(a.labels_first == std::vector<int>{1, -1, 1, 1, -1, 1});
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(a.labels_second[t] == -a.labels_first[t]);
  }
  CHECK_THROWS_AS(make_attribution_scenario(4, {}), InputError);
  CHECK_THROWS_AS(make_attribution_scenario(4, {1, 1}), InputError);
  CHECK_THROWS_AS(make_attribution_scenario(4, {4}), InputError);

  RandomStream s(2, 2);
  const AttributionScenario b = build_attribution_scenario(10, 3, s);
  CHECK(b.m() == 3);
  CHECK(std::is_sorted(b.inaccurate.begin(), b.inaccurate.end()));
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 20000; ++i) {
    for (std::size_t t : build_attribution_scenario(10, 3, s).inaccurate) {
      ++hits[t];
    }
  }
  for (int h : hits) {
    CHECK(std::abs(h / 20000.0 - 0.3) < 0.015);
  }
}

TEST_CASE("coefficient vector distances match an independent computation") {
  for (std::size_t T = 2; T <= 12; ++T) {
    for (std::size_t m = 1; m <= T; ++m) {
      // Oracle: labels are +1 except m steps, second trajectory negated;
      // GRPO copies ±1, chunk copies ±1/T.
      std::vector<double> hat;
      std::vector<double> grpo;
      std::vector<double> chunk;
      for (int traj = 0; traj < 2; ++traj) {
        const double sign = traj == 0 ? 1.0 : -1.0;
        for (std::size_t t = 0; t < T; ++t) {
          hat.push_back(sign * (t < m ? -1.0 : 1.0));
          grpo.push_back(sign);
          chunk.push_back(sign / double(T));
        }
      }
      std::vector<std::size_t> inaccurate(m);
      std::iota(inaccurate.begin(), inaccurate.end(), std::size_t{0});
      const CoefficientVectors v = build_vectors(T, inaccurate);
      CHECK(distance_sq(v.hat_exact(), v.grpo_exact()) == Rational(static_cast<long long>(8 * m)));
      const double dc = distance_sq(hat, chunk);
      const double dg = distance_sq(hat, grpo);
      CHECK(boost::rational_cast<double>(distance_sq(v.hat_exact(), v.j_chunk)) == doctest::Approx(dc).epsilon(1e-13));
      CHECK(distance_sq(v.hat_exact(), v.j_chunk) == chunk_distance_closed_form(T, m));
      CHECK(chunk_wins(T, m) == (dc <= dg + 1e-12));
    }
  }
  CHECK(chunk_distance_closed_form(3, 1) == Rational(16, 3));
}

TEST_CASE("distances do not depend on which steps are mis-attributed") {
  RandomStream s(5, 5);
  for (int i = 0; i < 50; ++i) {
    const std::size_t T = 2 + s.below(11);
    const std::size_t m = 1 + s.below(T);
    const CoefficientVectors v = build_vectors(build_attribution_scenario(T, m, s));
    CHECK(distance_sq(v.hat_exact(), v.grpo_exact()) == Rational(static_cast<long long>(8 * m)));
    CHECK(distance_sq(v.hat_exact(), v.j_chunk) == chunk_distance_closed_form(T, m));
  }
}

TEST_CASE("printed threshold boundary cases") {
  CHECK(printed_threshold_holds(5, 1));
  CHECK(printed_threshold_holds(6, 2));
  CHECK_FALSE(printed_threshold_holds(7, 2));
  // The exact comparison still favours chunks at (T, m) = (7, 2).
  CHECK(chunk_wins(7, 2));
  CHECK(chunk_wins(5, 1));
  CHECK_FALSE(chunk_wins(6, 1));
  for (std::size_t T = 2; T <= 12; ++T) {
    CHECK(chunk_wins(T, 1) == printed_threshold_holds(T, 1));
  }
}

TEST_CASE("geometric mean ratio agrees with the arithmetic mean to first order") {
  const std::vector<double> tiny{1e-4, -2e-4, 3e-4};
  CHECK(first_order_check(tiny) < 1e-7);
  const std::vector<double> big{0.1, -0.2, 0.3};
  CHECK(first_order_check(big) > first_order_check(tiny));
  CHECK(first_order_check(std::vector<double>{0.05}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("win region table covers every pair") {
  const auto rows = win_region(6);
  CHECK(rows.size() == 2 + 3 + 4 + 5 + 6);
  for (const auto& r : rows) {
    CHECK(r.chunk_wins == (r.chunk_distance <= r.grpo_distance));
  }
}
