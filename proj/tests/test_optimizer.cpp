#include "support.hpp"

#include <gtest/gtest.h>

using namespace pmon;
using namespace pmon::test;

namespace {

template <class Model>
void expect_gradient_matches(const Scenario& sc, const Model& model, Mode mode, int steps) {
  const EvalOptions eo = tight_eval(steps);
  const Vec g = evaluate(sc, model, mode, eo).gradient;
  auto cost = [&](const Model& m) { return evaluate(sc, m, mode, eo, false).cost; };
  for (int d = 0; d < model.num_params(); ++d) {
    const double fd = central_difference(sc, model, d, steps, cost, mode);
    ASSERT_TRUE(std::isfinite(fd)) << "no kink-free step for " << model.param_name(d);
    EXPECT_TRUE(close(g(d), fd, 1e-3, 1e-6)) << model.param_name(d) << ": adjoint " << g(d) << " fd " << fd;
  }
}

// Gradient assembled parameter by parameter from the forward steady-state
// sensitivities, independent of the adjoint sweep used by evaluate().
template <class Model>
Vec forward_steady_gradient(const Scenario& sc, const Model& model, const EvalOptions& eo) {
  const auto prof = build_eta_profile(sc, model, eo.steps, true);
  Vec g = Vec::Zero(model.num_params());
  for (int i = 0; i < sc.num_targets(); ++i) {
    const auto& t = sc.targets[static_cast<std::size_t>(i)];
    const auto& eta = prof.eta[static_cast<std::size_t>(i)];
    const auto omega = solve_periodic_riccati(t, eta, model.period(), eo.steps, {eo.periodic_tol, eo.max_periods, std::nullopt});
    for (int d = 0; d < model.num_params(); ++d)
      g(d) += steady_state_sensitivity(t, eta, prof.derivative(i, d), omega, d == 0 ? 1.0 : 0.0, d).mean_trace();
  }
  Vec ge = Vec::Zero(model.num_params());
  model.effort_gradient(ge);
  return g + sc.beta * ge;
}

}  // namespace

TEST(Gradient, FourierSteadyAndTransientMatchFiniteDifferences) {
  std::mt19937_64 rng(101);
  for (int point = 0; point < 2; ++point) {
    const auto c = random_fourier_case(rng);
    expect_gradient_matches(c.sc, c.model, Mode::steady, 300);
    expect_gradient_matches(c.sc, c.model, Mode::transient, 300);
  }
}

TEST(Gradient, DwellMoveSteadyAndTransientMatchFiniteDifferences) {
  std::mt19937_64 rng(202);
  for (int point = 0; point < 2; ++point) {
    const auto c = random_1d_case(rng);
    expect_gradient_matches(c.sc, c.model, Mode::steady, 300);
    expect_gradient_matches(c.sc, c.model, Mode::transient, 300);
  }
}

TEST(Gradient, ContinuousAdjointAgreesWithForwardSensitivities) {
  std::mt19937_64 rng(303);
  const auto f = random_fourier_case(rng);
  EvalOptions eo = tight_eval(200);
  eo.discrete_adjoint = false;
  const Vec adj = evaluate(f.sc, f.model, Mode::steady, eo).gradient;
  const Vec fwd = forward_steady_gradient(f.sc, f.model, eo);
  EXPECT_LE((adj - fwd).norm(), 1e-7 * (1.0 + fwd.norm()));

  const auto d = random_1d_case(rng);
  const Vec adj1 = evaluate(d.sc, d.model, Mode::steady, eo).gradient;
  const Vec fwd1 = forward_steady_gradient(d.sc, d.model, eo);
  EXPECT_LE((adj1 - fwd1).norm(), 1e-7 * (1.0 + fwd1.norm()));
}

TEST(Gradient, DiscreteSteadyAdjointIsExactOnCoarseGrid) {
  // near-cancelling components are where a discretization mismatch shows
  std::mt19937_64 rng(202);
  random_1d_case(rng);
  const auto c = random_1d_case(rng);
  const EvalOptions eo = tight_eval(300);
  const Vec g = evaluate(c.sc, c.model, Mode::steady, eo).gradient;
  auto cost = [&](const DwellMoveModel& m) { return evaluate(c.sc, m, Mode::steady, eo, false).cost; };
  for (int d = 0; d < c.model.num_params(); ++d) {
    const double fd = central_difference(c.sc, c.model, d, 300, cost);
    ASSERT_TRUE(std::isfinite(fd));
    EXPECT_NEAR(g(d), fd, 1e-6 * g.norm()) << c.model.param_name(d);
  }
}

TEST(Gradient, DiscreteAndContinuousAdjointsConvergeTogether) {
  // dwell/move case whose signal power has kinks in time, so the two differ visibly
  std::mt19937_64 rng(202);
  random_1d_case(rng);
  const auto c = random_1d_case(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (int steps : {300, 600, 1200}) {
    EvalOptions eo = tight_eval(steps);
    const Vec gd = evaluate(c.sc, c.model, Mode::steady, eo).gradient;
    eo.discrete_adjoint = false;
    const Vec gc = evaluate(c.sc, c.model, Mode::steady, eo).gradient;
    const double gap = (gd - gc).norm() / gd.norm();
    EXPECT_LT(gap, prev) << steps;
    EXPECT_LT(gap, 1e-3) << steps;
    prev = gap;
  }
}

TEST(Gradient, TransientPinsPeriod) {
  std::mt19937_64 rng(5);
  const auto c = random_fourier_case(rng);
  const Vec g = gradient_transient(c.sc, c.model, tight_eval(100));
  EXPECT_EQ(g(0), 0.0);
}

TEST(Evaluate, RejectsMismatchedModel) {
  std::mt19937_64 rng(5);
  const auto c = random_fourier_case(rng);
  Scenario three_d = c.sc;
  three_d.dimension = 3;
  for (auto& t : three_d.targets) t.position = Vec::Zero(3);
  EXPECT_THROW(cost_steady(three_d, c.model), std::invalid_argument);
}

TEST(Evaluate, RelabelingIdenticalAgentsKeepsCost) {
  const Scenario sc = make_scenario(2,
                                    {paper_target(Vec(Eigen::Vector2d(0.0, 0.5)), 0.5, 2),
                                     paper_target(Vec(Eigen::Vector2d(1.5, 0.0)), 0.5, 2)},
                                    {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}, 1e-3);
  ParamsFourier p = ParamsFourier::zeros(2, 2, default_frequencies(2), 1.0);
  p.agents[0].s0 = Vec(Eigen::Vector2d(0.0, 0.4));
  p.agents[0].a(0, 0) = 0.2;
  p.agents[1].s0 = Vec(Eigen::Vector2d(1.4, 0.0));
  p.agents[1].b(1, 1) = 0.1;
  ParamsFourier swapped = p;
  std::swap(swapped.agents[0], swapped.agents[1]);
  EXPECT_NEAR(cost_steady(sc, FourierModel(p)), cost_steady(sc, FourierModel(swapped)), 1e-12);
}

TEST(Descend, ZeroIterationsReturnsInput) {
  std::mt19937_64 rng(7);
  const auto c = random_fourier_case(rng);
  DescentOptions o;
  o.max_iters = 0;
  o.eval.steps = 100;
  const auto res = descend(c.sc, c.model, Mode::steady, o);
  EXPECT_EQ(res.model.pack(), c.model.pack());
  ASSERT_EQ(res.log.size(), 1u);
  EXPECT_EQ(res.status, DescentStatus::max_iterations);

  const auto d = random_1d_case(rng);
  const auto r1 = descend(d.sc, d.model, Mode::steady, o);
  EXPECT_EQ(r1.model.pack(), d.model.pack());
}

TEST(Descend, StationaryPointStopsAfterOneEvaluation) {
  // agent parked on the only target with no effort weight: every sample sits
  // at the gain peak where the sensing gradient vanishes
  const Scenario sc = make_scenario(2, {paper_target(Vec::Zero(2), 0.5, 1)}, {std::numeric_limits<double>::infinity()});
  const FourierModel model(ParamsFourier::zeros(1, 2, default_frequencies(2), 1.0));
  DescentOptions o;
  o.eps = 1e-6;
  o.eval.steps = 100;
  int calls = 0;
  o.on_iteration = [&](const IterationRecord&) { ++calls; };
  const auto res = descend(sc, model, Mode::steady, o);
  EXPECT_EQ(res.status, DescentStatus::converged);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(res.model.pack(), model.pack());
}

TEST(Descend, PureEffortShrinksCoefficientsGeometrically) {
  // target far outside the reachable region: tracking is constant and only
  // the effort quadratic drives the transient descent
  Scenario sc = make_scenario(2, {paper_target(Vec(Eigen::Vector2d(50.0, 50.0)), 0.5, 1)},
                              {std::numeric_limits<double>::infinity()}, 1.0, 2.0);
  ParamsFourier p = ParamsFourier::zeros(1, 2, default_frequencies(2), 2.0);
  p.agents[0].a(0, 0) = 0.5;
  p.agents[0].b(1, 1) = -0.3;
  DescentOptions o;
  o.step = 1e-3;
  o.max_iters = 30;
  o.eps = 0.0;
  o.eval.steps = 50;
  const auto res = descend(sc, FourierModel(p), Mode::transient, o);
  const double w1 = std::pow(2 * kPi * 1, 2) / 4.0, w2 = std::pow(2 * kPi * 2, 2) / 4.0;  // (2 pi f)^2 / T^2
  const auto& out = res.model.params().agents[0];
  EXPECT_NEAR(out.a(0, 0), 0.5 * std::pow(1 - o.step * w1, 30), 1e-12);
  EXPECT_NEAR(out.b(1, 1), -0.3 * std::pow(1 - o.step * w2, 30), 1e-12);
  for (std::size_t l = 1; l < res.log.size(); ++l) EXPECT_LT(res.log[l].cost, res.log[l - 1].cost);
}

TEST(Descend, ThreeTargetCostDecreasesWithConstantStep) {
  const Scenario sc = make_scenario(2,
                                    {paper_target(Vec(Eigen::Vector2d(0.0, 0.5)), 0.5, 1),
                                     paper_target(Vec(Eigen::Vector2d(0.5, 0.0)), 0.5, 1),
                                     paper_target(Vec(Eigen::Vector2d(-0.5, 0.0)), 0.5, 1)},
                                    {std::numeric_limits<double>::infinity()}, 1e-3);
  GaOptions ga;
  ga.generations = 50;
  const auto sched = mtsp_solve(target_positions(sc), 1, ga);
  const FourierModel model(fourier_fit(sched, sc, 5));
  DescentOptions o;
  o.step = 1e-4;
  o.max_iters = 50;
  o.eval.steps = 500;
  o.timing = false;
  const auto res = descend(sc, model, Mode::steady, o);
  ASSERT_EQ(res.log.size(), 51u);
  for (std::size_t l = 1; l < res.log.size(); ++l) EXPECT_LE(res.log[l].cost, res.log[l - 1].cost);
  for (const auto& r : res.log) EXPECT_EQ(r.wall_ms, 0.0);
}

TEST(Descend, ArmijoNeverIncreasesCost) {
  std::mt19937_64 rng(13);
  const auto c = random_1d_case(rng);
  DescentOptions o;
  o.step = 0.05;
  o.max_iters = 15;
  o.armijo = true;
  o.eval.steps = 200;
  const auto res = descend(c.sc, c.model, Mode::steady, o);
  EXPECT_NE(res.status, DescentStatus::diverged);
  for (std::size_t l = 1; l < res.log.size(); ++l) EXPECT_LE(res.log[l].cost, res.log[l - 1].cost);
  EXPECT_TRUE(feasible_1d(res.model.params(), true, 1e-8));
}

TEST(Descend, LostTargetReportsDivergenceWithLastFiniteIterate) {
  std::mt19937_64 rng(17);
  const auto c = random_1d_case(rng);
  DescentOptions o;
  o.step = 50.0;  // throws the agent far off the targets
  o.max_iters = 10;
  o.eval.steps = 100;
  const auto res = descend(c.sc, c.model, Mode::steady, o);
  EXPECT_EQ(res.status, DescentStatus::diverged);
  EXPECT_FALSE(res.message.empty());
  EXPECT_TRUE(res.model.pack().allFinite());
  for (const auto& r : res.log) EXPECT_TRUE(std::isfinite(r.cost));
  EXPECT_NO_THROW(cost_steady(c.sc, res.model, EvalOptions{100, 1e-9, 500}));
}
