#pragma once

#include "pmon/pmon.hpp"

#include <random>

namespace pmon::test {

inline Mat m2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Mat scalar(double v) { return Mat::Constant(1, 1, v); }

inline TargetSpec scalar_target(double A, double Q = 1.0, double H = 1.0, double R = 1.0, double x = 0.0,
                                double r = 1.0, int agents = 1) {
  TargetSpec t;
  t.position = Vec::Constant(1, x);
  t.A = scalar(A);
  t.Q = scalar(Q);
  t.H = scalar(H);
  t.R = scalar(R);
  t.radii.assign(static_cast<std::size_t>(agents), r);
  return t;
}

/// Target with the 2x2 experiment dynamics and identity Q, H, R.
inline TargetSpec paper_target(const Vec& x, double r, int agents) {
  TargetSpec t;
  t.position = x;
  t.A = m2(-1.0, -0.1, -0.1, 0.01);
  t.Q = t.H = t.R = Mat::Identity(2, 2);
  t.radii.assign(static_cast<std::size_t>(agents), r);
  return t;
}

inline Scenario make_scenario(int dim, std::vector<TargetSpec> targets, std::vector<double> speeds, double beta = 0.0,
                              double horizon = 0.0) {
  Scenario sc;
  sc.dimension = dim;
  sc.beta = beta;
  sc.horizon = horizon;
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i].id = static_cast<int>(i);
  sc.targets = std::move(targets);
  for (std::size_t j = 0; j < speeds.size(); ++j) sc.agents.push_back({static_cast<int>(j), speeds[j]});
  validate(sc);
  return sc;
}

/// Constant signal power on the half-node lattice.
inline std::vector<double> constant_eta(double v, int steps) {
  return std::vector<double>(static_cast<std::size_t>(sample_count(steps)), v);
}

/// Piecewise signal power: `high` for q < split, 0 afterwards.
inline std::vector<double> pulse_eta(double high, double split, int steps) {
  std::vector<double> e(static_cast<std::size_t>(sample_count(steps)));
  for (int m = 0; m < sample_count(steps); ++m) e[static_cast<std::size_t>(m)] = sample_q(m, steps) < split ? high : 0.0;
  return e;
}

/// |a - b| <= max(abs_floor, rel * |b|).
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::abs(b));
}

/// Which side of every sensing kink each sampled position lies on: inside or
/// outside each disc, the sign of every coordinate offset, and the sampled
/// velocity (segment type for the dwell/move model).
template <class Model>
std::vector<int> kink_signature(const Scenario& sc, const Model& model, int steps) {
  std::vector<int> sig;
  for (int m = 0; m < fine_count(steps); ++m) {
    const double q = fine_q(m, steps);
    for (int j = 0; j < model.num_agents(); ++j) {
      const Vec s = model.position(j, q);
      const Vec v = model.velocity(j, q);
      for (int e = 0; e < v.size(); ++e) sig.push_back(v(e) > 0.0 ? 1 : (v(e) < 0.0 ? -1 : 0));
      for (const auto& t : sc.targets) {
        const Vec d = s - t.position;
        sig.push_back(d.norm() < t.radius(j) ? 1 : 0);
        for (int e = 0; e < d.size(); ++e) sig.push_back(d(e) > 0.0 ? 1 : (d(e) < 0.0 ? -1 : 0));
      }
    }
  }
  return sig;
}

/// Central difference of `cost` along coordinate d. The step starts at
/// 1e-5 max(1, |theta_d|) and shrinks tenfold while either probe moves a
/// sample across a sensing or segment kink.
template <class Model, class Cost>
double central_difference(const Scenario& sc, const Model& model, int d, int steps, Cost&& cost,
                          Mode mode = Mode::steady) {
  // transient evaluation runs the trajectory with its period pinned to the horizon
  auto signature = [&](const Model& m) {
    return kink_signature(sc, mode == Mode::transient ? detail::with_period(m, sc.horizon) : m, steps);
  };
  const Vec th = model.pack();
  const auto base = signature(model);
  double h = 1e-5 * std::max(1.0, std::abs(th(d)));
  for (int shrink = 0; shrink < 5; ++shrink, h *= 0.1) {
    Vec p = th, m = th;
    p(d) += h;
    m(d) -= h;
    const Model mp = model.unpack(p), mm = model.unpack(m);
    if (signature(mp) != base || signature(mm) != base) continue;
    return (cost(mp) - cost(mm)) / (2.0 * h);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Oracle-grade evaluation: tight periodic tolerance so finite differences
/// see the discretized cost, not the fixed-point stopping error.
inline EvalOptions tight_eval(int steps) {
  EvalOptions o;
  o.steps = steps;
  o.periodic_tol = 1e-13;
  o.max_periods = 20000;
  return o;
}

/// Random 1-agent, 2-target Fourier scenario data (2D, r = 0.5) with a
/// trajectory that visits both targets at a non-lattice-aligned point.
struct FourierCase {
  Scenario sc;
  FourierModel model;
};

inline FourierCase random_fourier_case(std::mt19937_64& rng, double horizon = 1.5) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (;;) {
    const Vec x1 = Vec::Constant(2, 0.0) + 0.1 * Vec(Eigen::Vector2d(U(rng), U(rng))) + Vec(Eigen::Vector2d(-0.4, 0.0));
    const Vec x2 = 0.1 * Vec(Eigen::Vector2d(U(rng), U(rng))) + Vec(Eigen::Vector2d(0.4, 0.0));
    Scenario sc = make_scenario(2, {paper_target(x1, 0.5, 1), paper_target(x2, 0.5, 1)},
                                {std::numeric_limits<double>::infinity()}, 1e-3, horizon);
    ParamsFourier p = ParamsFourier::zeros(1, 2, default_frequencies(3), 1.0 + 0.3 * U(rng));
    p.agents[0].s0 = x1 + 0.1 * Vec(Eigen::Vector2d(U(rng), U(rng)));
    // ellipse through both discs plus small higher harmonics
    p.agents[0].b(0, 0) = -0.4 + 0.05 * U(rng);
    p.agents[0].a(1, 0) = 0.25 + 0.05 * U(rng);
    for (int e = 0; e < 2; ++e)
      for (int k = 1; k < 3; ++k) {
        p.agents[0].a(e, k) = 0.03 * U(rng);
        p.agents[0].b(e, k) = 0.03 * U(rng);
      }
    FourierModel model(p);
    const auto prof = build_eta_profile(sc, model, 200, false);
    if (prof.visited(0) && prof.visited(1)) return {sc, model};
  }
}

/// Random 1-agent, 2-target dwell/move case on a line: targets near 1 and 3,
/// r = 0.9, u_max = 1, two move segments closing the cycle.
struct OneDCase {
  Scenario sc;
  DwellMoveModel model;
};

inline OneDCase random_1d_case(std::mt19937_64& rng, double horizon = 6.0) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (;;) {
    Scenario sc = make_scenario(1, {scalar_target(-0.5, 1.0, 1.0, 1.0, 1.0 + 0.1 * U(rng), 0.9),
                                    scalar_target(0.2, 1.0, 1.0, 1.0, 3.0 + 0.1 * U(rng), 0.9)},
                                {1.0}, 0.0, horizon);
    Params1D p;
    p.T = 5.0 + 0.5 * U(rng);
    Params1D::Agent a;
    a.s0 = 1.0 + 0.2 * U(rng);
    const double tau = (2.0 + 0.2 * U(rng)) / p.T;
    a.tau = {tau, tau};
    a.omega = {0.08 + 0.03 * U(rng), 0.08 + 0.03 * U(rng)};
    p.agents.push_back(a);
    const Params1D pp = project_params_1d(p, true);
    // stay clear of the feasible-set boundary, where the cost is one-sided
    const auto& b = pp.agents[0];
    double used = 0.0, smallest = 1.0;
    for (std::size_t m = 0; m < b.tau.size(); ++m) {
      used += b.tau[m] + b.omega[m];
      smallest = std::min({smallest, b.tau[m], b.omega[m]});
    }
    if (used > 0.98 || smallest < 0.02) continue;
    DwellMoveModel model(pp, {1.0});
    const auto prof = build_eta_profile(sc, model, 200, false);
    if (prof.visited(0) && prof.visited(1)) return {sc, model};
  }
}

}  // namespace pmon::test
