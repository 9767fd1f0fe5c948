#pragma once

#include "pmon/steady_sensitivity.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pmon {

struct EvalOptions {
  int steps = 2000;
  double periodic_tol = 1e-9;
  int max_periods = 500;
  // Steady gradient: exact derivative of the computed (RK4) cost, or the
  // transposed continuous sensitivity construction, which agrees with it up
  // to discretization error.
  bool discrete_adjoint = true;
};

/// Per-target steady covariance at q = 1 from the previous evaluation, used
/// as the starting guess of the next periodic solve.
struct WarmStart {
  std::vector<Mat> omega;
};

struct Evaluation {
  double cost = 0.0;
  double tracking = 0.0;  // sum_i integral tr(Omega_i) dq
  double effort = 0.0;    // integral |u|^2 dq summed over agents (unweighted)
  Vec gradient;           // empty unless requested
  std::vector<double> target_cost;
  std::vector<CovarianceTrajectory> covariance;  // filled when keep_trajectories
};

namespace detail {

struct TargetEval {
  double cost = 0.0;
  std::vector<double> eta_bar;
  double period_bar = 0.0;
  Mat last;
  std::optional<CovarianceTrajectory> traj;
};

template <int N>
TargetEval evaluate_target(const TargetSpec& t, const std::vector<double>& eta, Mode mode, double span,
                           const EvalOptions& opt, bool want_grad, const Mat* warm, bool keep) {
  const Lti<N> m(t);
  const int steps = opt.steps;
  TargetEval out;
  SqVec<N> nodes;
  if (mode == Mode::steady) {
    const Sq<N> start = (warm && warm->rows() == m.n) ? Sq<N>(*warm) : m.eye();
    auto res = periodic_fixed_point<N>(m, eta, span, steps, start, opt.periodic_tol, opt.max_periods);
    nodes = std::move(res.nodes);
    if (want_grad) {
      auto adj = opt.discrete_adjoint ? discrete_steady_adjoint<N>(m, eta, nodes, span)
                                      : steady_adjoint<N>(m, eta, nodes, span);
      out.eta_bar = std::move(adj.eta_bar);
      out.period_bar = adj.period_bar;
    }
    if (keep) {
      CovarianceTrajectory c;
      c.target = t.id;
      c.span = span;
      c.steady = true;
      c.periods = res.periods;
      c.residual = res.residual;
      c.omega = to_dynamic(nodes);
      out.traj = std::move(c);
    }
  } else {
    sweep<N>(m, eta, span, steps, Sq<N>(t.initial_covariance()), &nodes);
    if (want_grad) {
      std::vector<double> w(static_cast<std::size_t>(steps) + 1);
      for (int k = 0; k <= steps; ++k) w[static_cast<std::size_t>(k)] = trapz_weight(k, steps);
      out.eta_bar = riccati_adjoint<N>(m, eta, nodes, span, steps, w);
    }
    if (keep) {
      CovarianceTrajectory c;
      c.target = t.id;
      c.span = span;
      c.omega = to_dynamic(nodes);
      out.traj = std::move(c);
    }
  }
  for (int k = 0; k <= steps; ++k) out.cost += trapz_weight(k, steps) * nodes[static_cast<std::size_t>(k)].trace();
  out.last = Mat(nodes.back());
  return out;
}

template <class Model>
Model with_period(const Model& model, double T) {
  Vec th = model.pack();
  th(0) = T;
  return model.unpack(th);
}

}  // namespace detail

/// Cost J = sum_i integral_0^1 tr(Omega_i) dq + beta * effort and, when
/// `want_grad`, its gradient in the model's flat parameter layout.
/// Steady mode uses the periodic Riccati solution with period T. Transient
/// mode integrates from each target's initial covariance over the scenario
/// horizon; the period parameter is pinned to the horizon there, so its
/// gradient component is zero.
template <class Model>
Evaluation evaluate(const Scenario& sc, const Model& model_in, Mode mode, const EvalOptions& opt = {},
                    bool want_grad = true, WarmStart* warm = nullptr, bool keep_trajectories = false) {
  if (opt.steps < 2) throw std::invalid_argument("evaluate: grid size must be at least 2");
  if (model_in.num_agents() != sc.num_agents())
    throw std::invalid_argument("evaluate: parameter document and scenario disagree on the agent count");
  if (model_in.dimension() != sc.dimension)
    throw std::invalid_argument("evaluate: parameter dimension does not match the scenario");
  const Model model = (mode == Mode::transient) ? detail::with_period(model_in, sc.horizon) : model_in;
  const double span = model.period();
  if (!(span > 0.0) || !std::isfinite(span)) throw std::invalid_argument("evaluate: period must be positive");

  const int steps = opt.steps;
  const int nf = fine_count(steps);
  const auto pos = fine_positions(model, steps);

  Evaluation ev;
  ev.target_cost.resize(sc.targets.size());
  std::vector<std::vector<double>> eta_bar(sc.targets.size());
  double period_bar = 0.0;
  if (warm && warm->omega.size() != sc.targets.size()) warm->omega.assign(sc.targets.size(), Mat());

  std::vector<double> fine(static_cast<std::size_t>(nf));
  for (int i = 0; i < sc.num_targets(); ++i) {
    const auto& t = sc.targets[static_cast<std::size_t>(i)];
    for (int m = 0; m < nf; ++m) {
      double e = 0.0;
      for (int j = 0; j < sc.num_agents(); ++j)
        e += gamma_sq(pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)] - t.position, t.radius(j));
      fine[static_cast<std::size_t>(m)] = e;
    }
    const std::vector<double> eta = collapse_samples(fine, steps);
    const Mat* w = (warm && mode == Mode::steady) ? &warm->omega[static_cast<std::size_t>(i)] : nullptr;
    auto te = detail::with_state_dim(t.A.rows(), [&](auto dim) {
      constexpr int N = decltype(dim)::value;
      return detail::evaluate_target<N>(t, eta, mode, span, opt, want_grad, w, keep_trajectories);
    });
    ev.target_cost[static_cast<std::size_t>(i)] = te.cost;
    ev.tracking += te.cost;
    eta_bar[static_cast<std::size_t>(i)] = std::move(te.eta_bar);
    period_bar += te.period_bar;
    if (warm && mode == Mode::steady) warm->omega[static_cast<std::size_t>(i)] = te.last;
    if (keep_trajectories) ev.covariance.push_back(std::move(*te.traj));
  }
  ev.effort = model.effort();
  ev.cost = ev.tracking + sc.beta * ev.effort;

  if (want_grad) {
    Vec g = Vec::Zero(model.num_params());
    Vec v(model.dimension());
    std::vector<double> fine_bar(sc.targets.size());
    for (int m = 0; m < nf; ++m) {
      const double q = fine_q(m, steps);
      for (int i = 0; i < sc.num_targets(); ++i) {
        double b = 0.0;
        for_each_lattice_weight(m, steps, [&](int c, double w) { b += w * eta_bar[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]; });
        fine_bar[static_cast<std::size_t>(i)] = b;
      }
      for (int j = 0; j < sc.num_agents(); ++j) {
        const Vec& s = pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)];
        v.setZero();
        bool any = false;
        for (int i = 0; i < sc.num_targets(); ++i) {
          const double wb = fine_bar[static_cast<std::size_t>(i)];
          if (wb == 0.0) continue;
          const auto& t = sc.targets[static_cast<std::size_t>(i)];
          const double r = t.radius(j);
          const Vec d = s - t.position;
          const double dn = d.norm();
          if (dn >= r || dn == 0.0) continue;
          v.noalias() -= (wb / (r * dn)) * d;
          any = true;
        }
        if (any) model.position_vjp(j, q, v, g);
      }
    }
    if (sc.beta != 0.0) {
      Vec ge = Vec::Zero(model.num_params());
      model.effort_gradient(ge);
      g += sc.beta * ge;
    }
    if (mode == Mode::steady)
      g(0) += period_bar;
    else
      g(0) = 0.0;
    ev.gradient = std::move(g);
  }
  return ev;
}

template <class Model>
double cost_steady(const Scenario& sc, const Model& model, const EvalOptions& opt = {}) {
  return evaluate(sc, model, Mode::steady, opt, false).cost;
}

template <class Model>
double cost_transient(const Scenario& sc, const Model& model, const EvalOptions& opt = {}) {
  return evaluate(sc, model, Mode::transient, opt, false).cost;
}

template <class Model>
Vec gradient_steady(const Scenario& sc, const Model& model, const EvalOptions& opt = {}) {
  return evaluate(sc, model, Mode::steady, opt, true).gradient;
}

template <class Model>
Vec gradient_transient(const Scenario& sc, const Model& model, const EvalOptions& opt = {}) {
  return evaluate(sc, model, Mode::transient, opt, true).gradient;
}

// ---------------------------------------------------------------------------
// Projected gradient descent
// ---------------------------------------------------------------------------

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double wall_ms = 0.0;
  Vec params;
};

enum class DescentStatus { converged, max_iterations, diverged };

inline const char* to_string(DescentStatus s) {
  switch (s) {
    case DescentStatus::converged: return "converged";
    case DescentStatus::max_iterations: return "max_iterations";
    case DescentStatus::diverged: return "diverged";
  }
  return "?";
}

struct DescentOptions {
  double step = 1e-4;
  double eps = 1e-4;
  int max_iters = 4000;
  bool armijo = false;
  double armijo_c = 1e-4;
  int armijo_max_halvings = 40;
  bool timing = true;  // false records wall_ms = 0 for reproducible logs
  EvalOptions eval;
  std::function<void(const IterationRecord&)> on_iteration;
};

template <class Model>
struct DescentResult {
  Model model;
  std::vector<IterationRecord> log;
  DescentStatus status = DescentStatus::max_iterations;
  std::string message;
};

/// theta <- proj(theta - kappa * grad J) until |grad J| <= eps or max_iters
/// updates have been taken. On a non-finite cost or a numerical failure the
/// last finite iterate is returned with status `diverged`.
template <class Model>
DescentResult<Model> descend(const Scenario& sc, const Model& model0, Mode mode, const DescentOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const bool periodic = mode == Mode::steady;

  Model model = model0.unpack(model0.project(model0.pack(), periodic));
  if (mode == Mode::transient) model = detail::with_period(model, sc.horizon);
  WarmStart warm;
  DescentResult<Model> res{model, {}, DescentStatus::max_iterations, ""};

  auto fail = [&](const std::string& why) {
    res.status = DescentStatus::diverged;
    res.message = why;
    return res;
  };

  std::optional<Evaluation> ev;
  for (int l = 0;; ++l) {
    if (!ev) {
      try {
        ev = evaluate(sc, model, mode, opt.eval, true, &warm);
      } catch (const std::exception& e) {
        res.model = model;
        return fail(std::string("evaluation failed at iteration ") + std::to_string(l) + ": " + e.what());
      }
    }
    if (!std::isfinite(ev->cost) || !ev->gradient.allFinite()) {
      res.model = model;
      return fail("non-finite cost or gradient at iteration " + std::to_string(l));
    }
    const Vec theta = model.pack();
    const Vec& g = ev->gradient;
    IterationRecord rec;
    rec.iteration = l;
    rec.cost = ev->cost;
    rec.grad_norm = g.norm();
    rec.params = theta;
    res.model = model;

    const bool done = rec.grad_norm <= opt.eps;
    const bool capped = l >= opt.max_iters;
    if (done || capped) {
      rec.step = 0.0;
      rec.wall_ms = opt.timing ? std::chrono::duration<double, std::milli>(clock::now() - t0).count() : 0.0;
      res.log.push_back(rec);
      if (opt.on_iteration) opt.on_iteration(rec);
      res.status = done ? DescentStatus::converged : DescentStatus::max_iterations;
      return res;
    }

    double kappa = opt.step;
    Vec next = model.project(theta - kappa * g, periodic);
    std::optional<Evaluation> next_ev;
    if (opt.armijo) {
      for (int h = 0;; ++h) {
        try {
          WarmStart trial = warm;
          auto e = evaluate(sc, model.unpack(next), mode, opt.eval, true, &trial);
          if (std::isfinite(e.cost) && e.cost <= ev->cost + opt.armijo_c * g.dot(next - theta)) {
            next_ev = std::move(e);
            warm = std::move(trial);
            break;
          }
        } catch (const std::exception&) {
        }
        if (h >= opt.armijo_max_halvings) break;
        kappa *= 0.5;
        next = model.project(theta - kappa * g, periodic);
      }
    }
    rec.step = kappa;
    rec.wall_ms = opt.timing ? std::chrono::duration<double, std::milli>(clock::now() - t0).count() : 0.0;
    res.log.push_back(rec);
    if (opt.on_iteration) opt.on_iteration(rec);

    model = model.unpack(next);
    if (mode == Mode::transient) model = detail::with_period(model, sc.horizon);
    ev = std::move(next_ev);
    if (!ev) {
      // evaluated at the top of the next iteration; failures there keep the
      // previous iterate as the result
      try {
        ev = evaluate(sc, model, mode, opt.eval, true, &warm);
      } catch (const std::exception& e) {
        return fail(std::string("evaluation failed at iteration ") + std::to_string(l + 1) + ": " + e.what());
      }
      if (!std::isfinite(ev->cost) || !ev->gradient.allFinite())
        return fail("non-finite cost or gradient at iteration " + std::to_string(l + 1));
    }
  }
}

}  // namespace pmon
