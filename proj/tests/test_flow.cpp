#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chunkgrpo/data.hpp"
#include "chunkgrpo/error.hpp"
#include "chunkgrpo/flow_match.hpp"
#include "chunkgrpo/sde.hpp"
#include "support.hpp"

using namespace chunkgrpo;
using testing::finite_difference;
using testing::random_params;
using testing::relative_error;
using testing::small_arch;

TEST_CASE("circle mixture layout and condition blocks") {
  const DataSpec s = DataSpec::circle_mixture(8, 4.0, 0.3, 4);
  CHECK(s.num_modes() == 8);
  REQUIRE(s.num_conditions() == 4);
  CHECK(s.conditions[1] == std::vector<std::size_t>{2, 3});
  CHECK(s.components[2].mean[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.components[2].mean[1] == doctest::Approx(4.0));
  CHECK_THROWS_AS(DataSpec::circle_mixture(2, 4.0, 0.3, 3), InputError);
}

TEST_CASE("mixture log density matches the analytic isotropic formula") {
  const DataSampler d(DataSpec::single_gaussian({1.0, -2.0}, 0.5));
  const Vec x{1.3, -1.6};
  const double sq = 0.09 + 0.16;
  const double expect = -sq / (2 * 0.25) - std::log(2 * std::numbers::pi * 0.25);
  CHECK(d.log_density(x, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(d.component_log_density(x, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("samples concentrate on their condition's modes") {
  const DataSampler d(DataSpec::circle_mixture());
  RandomStream s(3, 1);
  for (std::size_t c = 0; c < 4; ++c) {
    for (int i = 0; i < 200; ++i) {
      const Vec x = d.sample(c, s);
      const std::size_t m = d.nearest_mode(x);
      CHECK((m == 2 * c || m == 2 * c + 1));
    }
  }
  CHECK_THROWS_AS(d.sample(4, s), InputError);
}

TEST_CASE("two moons labels components by moon") {
  const DataSpec s = DataSpec::two_moons(0.1, 2, 24);
  CHECK(s.num_modes() == 2);
  CHECK(s.conditions[0].size() == 24);
  CHECK(s.mode_components(1).size() == 24);
  CHECK_THROWS_AS(DataSpec::two_moons(0.1, 3, 24), InputError);
}

TEST_CASE("schedule follows the shifted map with exact endpoints") {
  const TimeSchedule s = make_schedule(17, 3.0);
  REQUIRE(s.times.size() == 18);
  CHECK(s.times.front() == 1.0);
  CHECK(s.times.back() == 0.0);
  for (std::size_t k = 1; k < 17; ++k) {
    const double u = (17.0 - k) / 17.0;
    CHECK(s.times[k] == doctest::Approx(3 * u / (1 + 2 * u)).epsilon(1e-15));
    CHECK(s.times[k] < s.times[k - 1]);
  }
  CHECK_THROWS_AS(make_schedule(1, 3.0), InputError);
  CHECK_THROWS_AS(make_schedule(5, 0.0), InputError);
  TimeSchedule bad = s;
  bad.times[3] = bad.times[2];
  CHECK_THROWS_AS(validate_schedule(bad), InputError);
}

TEST_CASE("interpolation endpoints") {
  const Vec a{1.0, 2.0};
  const Vec b{-3.0, 5.0};
  CHECK(interpolate(a, b, 0.0) == a);
  CHECK(interpolate(a, b, 1.0) == b);
  CHECK(interpolate(a, b, 0.25)[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(interpolate(a, b, 1.1), InputError);
}

TEST_CASE("flow-matching loss value and gradient") {
  const ParamVector p = random_params(small_arch(), 21);
  std::vector<FmSample> batch;
  RandomStream s(1, 9);
  for (int i = 0; i < 5; ++i) {
    batch.push_back({{s.gaussian(), s.gaussian()}, {s.gaussian(), s.gaussian()}, s.uniform(), std::size_t(i % 2)});
  }
  auto value = [&](const ParamVector& q) {
    double total = 0.0;
    for (const auto& b : batch) {
      const Vec xt = interpolate(b.x0, b.x1, b.t);
      const Vec v = eval_velocity(q, xt, b.t, b.condition);
      for (std::size_t i = 0; i < 2; ++i) {
        const double r = (b.x1[i] - b.x0[i]) - v[i];
        total += r * r;
      }
    }
    return total / batch.size();
  };
  const LossAndGradient lg = fm_loss(p, batch);
  CHECK(lg.loss == doctest::Approx(value(p)).epsilon(1e-12));
  CHECK(relative_error(lg.gradient, finite_difference(p, value)) < 1e-6);
  CHECK_THROWS_AS(fm_loss(p, std::span<const FmSample>{}), InputError);
}

TEST_CASE("pretraining reduces the loss and the ODE lands near the data") {
  Architecture a = small_arch(1);
  a.hidden = {32, 32};
  a.time_freqs = 4;
  PretrainConfig cfg;
  cfg.steps = 600;
  cfg.batch_size = 128;
  const DataSpec data = DataSpec::single_gaussian({2.0, -1.0}, 0.3);
  const PretrainResult r = pretrain(data, a, cfg);
  REQUIRE(r.losses.size() == 600);
  double early = 0.0;
  double late = 0.0;
  for (int i = 0; i < 50; ++i) {
    early += r.losses[i];
    late += r.losses[550 + i];
  }
  CHECK(late < 0.5 * early);

  const TimeSchedule sched = make_schedule(17, 3.0);
  RandomStream s(2, 4);
  double mx = 0.0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const OdeResult o = ode_sample(r.params, 0, sched, s);
    CHECK(o.trajectory.size() == 18);
    mx += o.final_state[0];
  }
  CHECK(std::abs(mx / n - 2.0) < 0.3);

  // Same seed, same result.
  CHECK(pretrain(data, a, cfg).params == r.params);
}

TEST_CASE("sigma handles the t = 1 pole and vanishes at t = 0") {
  CHECK(sde_sigma(0.5, 0.4, 0.7) == doctest::Approx(0.7));
  CHECK(sde_sigma(1.0, 0.8, 0.7) == doctest::Approx(0.7 * 2.0));
  CHECK(sde_sigma(0.2, 0.0, 0.7) == doctest::Approx(0.7 * 0.5));
  CHECK(sde_sigma(1.0, 0.99999, 0.7) == doctest::Approx(0.7 * std::sqrt((1 - 1e-4) / 1e-4)));
  CHECK(sde_sigma(0.5, 0.4, 0.0) == 0.0);
}

TEST_CASE("transition mean matches the drift formula and eta 0 reduces to Euler") {
  const ParamVector p = random_params(small_arch(), 22);
  const Vec x{0.4, -0.3};
  const Vec noise{0.5, -1.5};
  const double th = 0.6;
  const double tl = 0.45;
  const SdeStep s = sde_step(p, x, th, tl, 0.7, 1, noise);
  const Vec v = eval_velocity(p, x, th, 1);
  const double sig = 0.7 * std::sqrt(th / (1 - th));
  const double dt = tl - th;
  for (std::size_t i = 0; i < 2; ++i) {
    const double drift = v[i] + sig * sig / (2 * th) * (x[i] + (1 - th) * v[i]);
    CHECK(s.mean[i] == doctest::Approx(x[i] + drift * dt).epsilon(1e-13));
    CHECK(s.next[i] == doctest::Approx(s.mean[i] + sig * std::sqrt(th - tl) * noise[i]).epsilon(1e-13));
  }
  const SdeStep e = sde_step(p, x, th, tl, 0.0, 1, noise);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(e.next[i] == doctest::Approx(x[i] + v[i] * dt).epsilon(1e-14));
  }
  CHECK_THROWS_AS(sde_step(p, x, 0.4, 0.6, 0.7, 1, noise), InputError);
}

TEST_CASE("rollout structure: T transitions, last deterministic, stored logp consistent") {
  const ParamVector p = random_params(small_arch(), 23);
  const TimeSchedule sched = make_schedule(17, 3.0);
  RandomStream s(5, 1);
  const Vec init{0.3, 1.2};
  const Trajectory tr = rollout(p, 0, sched, 0.7, init, s);
  REQUIRE(tr.transitions.size() == 17);
  CHECK(tr.states.size() == 18);
  CHECK(tr.optimizable() == 16);
  CHECK_FALSE(tr.transitions.back().stochastic);
  for (std::size_t k = 0; k < 16; ++k) {
    const Transition& t = tr.transitions[k];
    CHECK(t.stochastic);
    CHECK(t.state == tr.states[k]);
    CHECK(t.sample == tr.states[k + 1]);
    const LogProb lp = transition_log_prob(p, t, 0);
    CHECK(lp.value == doctest::Approx(t.logp_old).epsilon(1e-12));
    CHECK(lp.value == doctest::Approx(gaussian_log_density(t.sample, t.mean, t.std)).epsilon(1e-12));
  }
  RandomStream s2(5, 1);
  const Trajectory again = rollout(p, 0, sched, 0.7, init, s2);
  CHECK(again.states == tr.states);

  const Trajectory ode = rollout(p, 0, sched, 0.0, init, s2);
  CHECK(ode.optimizable() == 0);
  CHECK(ode.final_state() == ode_sample(p, 0, sched, init).final_state);
}

TEST_CASE("transition log-prob gradient matches central differences") {
  const ParamVector p = random_params(small_arch(), 24);
  const TimeSchedule sched = make_schedule(5, 3.0);
  RandomStream s(6, 1);
  const Trajectory tr = rollout(p, 1, sched, 0.7, Vec{-0.2, 0.8}, s);
  const ParamVector q = testing::perturbed(p, 0.05, 3);
  for (std::size_t k : {std::size_t{0}, std::size_t{2}}) {
    const Transition& t = tr.transitions[k];
    auto f = [&](const ParamVector& r) { return transition_log_prob(r, t, 1).value; };
    CHECK(relative_error(transition_log_prob(q, t, 1).gradient, finite_difference(q, f)) < 1e-5);
  }
}

TEST_CASE("group members use forked streams and the group needs two members") {
  const ParamVector p = random_params(small_arch(), 25);
  const TimeSchedule sched = make_schedule(6, 3.0);
  const RandomStream base(8, 2);
  const TrajectoryGroup g = rollout_group(p, 1, 4, sched, 0.7, base);
  REQUIRE(g.members.size() == 4);
  CHECK(g.members[0].states[0] != g.members[1].states[0]);
  CHECK(rollout_group(p, 1, 4, sched, 0.7, base).members[3].states == g.members[3].states);
  CHECK_THROWS_AS(rollout_group(p, 1, 1, sched, 0.7, base), InputError);
}

TEST_CASE("hybrid sampling switches policy at the split") {
  const ParamVector a = random_params(small_arch(), 26);
  const ParamVector b = random_params(small_arch(), 27);
  const TimeSchedule sched = make_schedule(17, 3.0);
  const Vec z{0.1, -0.4};
  CHECK(hybrid_sample(a, b, 17, sched, 0, z) == ode_sample(a, 0, sched, z).final_state);
  CHECK(hybrid_sample(a, b, 0, sched, 0, z) == ode_sample(b, 0, sched, z).final_state);
  CHECK(hybrid_sample(a, a, 10, sched, 0, z) == ode_sample(a, 0, sched, z).final_state);
  CHECK(default_hybrid_split(17) == 10);
  CHECK_THROWS_AS(hybrid_sample(a, b, 18, sched, 0, z), InputError);
}
