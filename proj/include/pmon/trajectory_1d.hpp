#pragma once

#include "pmon/core.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace pmon {

inline constexpr double kMinPeriod = 1e-3;

/// Dwell/move parameters. Each agent alternates dwell omega[m] and a
/// full-speed move tau[m]; move m heads right for even m, left for odd m.
/// Times are fractions of the period T.
struct Params1D {
  struct Agent {
    double s0 = 0.0;
    std::vector<double> tau;
    std::vector<double> omega;
  };
  double T = 1.0;
  std::vector<Agent> agents;
};

struct Gradient1D {
  double T = 0.0;
  double s0 = 0.0;
  std::vector<double> tau;
  std::vector<double> omega;
};

inline double move_direction(std::size_t m) { return (m % 2 == 0) ? 1.0 : -1.0; }

inline void check_agent_1d(const Params1D::Agent& a) {
  if (a.tau.size() != a.omega.size())
    throw std::invalid_argument("Params1D: tau and omega must have equal length");
}

namespace detail {

// Position of one agent; fills partials when `g` is non-null. Segment ends are
// inclusive on the left segment.
inline double eval_1d(const Params1D::Agent& a, double T, double u_max, double q, Gradient1D* g,
                      double* rate = nullptr) {
  const double v = T * u_max;
  const std::size_t P = a.tau.size();
  if (g) {
    g->tau.assign(P, 0.0);
    g->omega.assign(P, 0.0);
    g->s0 = 1.0;
  }
  double t = 0.0, disp = 0.0;  // disp = sum_{p<m} c_p tau_p
  for (std::size_t m = 0; m < P; ++m) {
    t += a.omega[m];
    if (q <= t) {  // dwell m
      if (g) {
        for (std::size_t p = 0; p < m; ++p) g->tau[p] = v * move_direction(p);
        g->T = u_max * disp;
      }
      if (rate) *rate = 0.0;
      return a.s0 + v * disp;
    }
    const double c = move_direction(m);
    if (q <= t + a.tau[m]) {  // move m
      const double s = a.s0 + v * disp + c * v * (q - t);
      if (g) {
        for (std::size_t p = 0; p < m; ++p) g->tau[p] = v * (move_direction(p) - c);
        for (std::size_t p = 0; p <= m; ++p) g->omega[p] = -c * v;
        g->T = (s - a.s0) / T;
      }
      if (rate) *rate = c * u_max;
      return s;
    }
    t += a.tau[m];
    disp += c * a.tau[m];
  }
  // final dwell
  if (g) {
    for (std::size_t p = 0; p < P; ++p) g->tau[p] = v * move_direction(p);
    g->T = u_max * disp;
  }
  if (rate) *rate = 0.0;
  return a.s0 + v * disp;
}

}  // namespace detail

/// Position of agent j at normalized time q.
inline double position_1d(const Params1D& p, double u_max, int j, double q) {
  const auto& a = p.agents.at(static_cast<std::size_t>(j));
  check_agent_1d(a);
  return detail::eval_1d(a, p.T, u_max, q, nullptr);
}

/// Velocity ds/dt (0 while dwelling, +-u_max while moving).
inline double velocity_1d(const Params1D& p, double u_max, int j, double q) {
  double rate = 0.0;
  detail::eval_1d(p.agents.at(static_cast<std::size_t>(j)), p.T, u_max, q, nullptr, &rate);
  return rate;
}

inline Gradient1D position_gradients_1d(const Params1D& p, double u_max, int j, double q) {
  const auto& a = p.agents.at(static_cast<std::size_t>(j));
  check_agent_1d(a);
  Gradient1D g;
  detail::eval_1d(a, p.T, u_max, q, &g);
  return g;
}

struct ProjectionOptions {
  double tol = 1e-10;
  int max_sweeps = 10000;
};

/// Euclidean projection of one agent's (tau, omega) onto
///   {z >= 0} and {sum z <= 1} and (periodic only) {sum c_m tau_m = 0}
/// by Dykstra's alternating projections.
inline void project_agent_1d(Params1D::Agent& a, bool periodic, const ProjectionOptions& opt = {}) {
  check_agent_1d(a);
  const std::size_t P = a.tau.size();
  const Eigen::Index n = static_cast<Eigen::Index>(2 * P);
  if (n == 0) return;
  Vec x(n);
  for (std::size_t m = 0; m < P; ++m) {
    x(static_cast<Eigen::Index>(m)) = a.tau[m];
    x(static_cast<Eigen::Index>(P + m)) = a.omega[m];
  }
  if (!x.allFinite()) throw ProjectionError("project_params_1d: non-finite parameters");
  Vec c = Vec::Zero(n);
  for (std::size_t m = 0; m < P; ++m) c(static_cast<Eigen::Index>(m)) = move_direction(m);
  const double cc = c.squaredNorm();

  auto violation = [&](const Vec& z) {
    double v = std::max(0.0, -z.minCoeff());
    v = std::max(v, z.sum() - 1.0);
    if (periodic) v = std::max(v, std::abs(c.dot(z)));
    return v;
  };
  if (violation(x) <= opt.tol) {
    x = x.cwiseMax(0.0);  // clears tiny negative round-off only
  } else {
    Vec p1 = Vec::Zero(n), p2 = Vec::Zero(n), p3 = Vec::Zero(n);
    int sweep = 0;
    for (;; ++sweep) {
      if (sweep >= opt.max_sweeps)
        throw ProjectionError("project_params_1d: Dykstra did not converge in " +
                              std::to_string(opt.max_sweeps) + " sweeps");
      const Vec prev = x;
      Vec y = (x + p1).cwiseMax(0.0);
      p1 = x + p1 - y;
      x = y;
      y = x + p2;
      const double excess = y.sum() - 1.0;
      if (excess > 0.0) y.array() -= excess / static_cast<double>(n);
      p2 = x + p2 - y;
      x = y;
      if (periodic) {
        y = x + p3;
        y -= (c.dot(y) / cc) * c;
        p3 = x + p3 - y;
        x = y;
      }
      if ((x - prev).norm() < opt.tol && violation(x) <= opt.tol) break;
    }
  }
  for (std::size_t m = 0; m < P; ++m) {
    a.tau[m] = x(static_cast<Eigen::Index>(m));
    a.omega[m] = x(static_cast<Eigen::Index>(P + m));
  }
}

inline Params1D project_params_1d(Params1D p, bool periodic = true, const ProjectionOptions& opt = {}) {
  if (!std::isfinite(p.T)) throw ProjectionError("project_params_1d: non-finite period");
  p.T = std::max(p.T, kMinPeriod);
  for (auto& a : p.agents) {
    if (!std::isfinite(a.s0)) throw ProjectionError("project_params_1d: non-finite initial position");
    project_agent_1d(a, periodic, opt);
  }
  return p;
}

/// Feasibility check of the consistency and closure constraints.
inline bool feasible_1d(const Params1D& p, bool periodic = true, double tol = 1e-10) {
  if (!(p.T > 0.0)) return false;
  for (const auto& a : p.agents) {
    if (a.tau.size() != a.omega.size()) return false;
    double total = 0.0, closure = 0.0;
    for (std::size_t m = 0; m < a.tau.size(); ++m) {
      if (a.tau[m] < -tol || a.omega[m] < -tol) return false;
      total += a.tau[m] + a.omega[m];
      closure += move_direction(m) * a.tau[m];
    }
    if (total > 1.0 + tol) return false;
    if (periodic && std::abs(closure) > tol) return false;
  }
  return true;
}

/// Dwell/move parameterization behind the flat-vector interface used by the
/// optimizer. Layout: [T, then per agent: s0, tau[0..P), omega[0..P)].
class DwellMoveModel {
 public:
  DwellMoveModel(Params1D params, std::vector<double> speeds)
      : p_(std::move(params)), speeds_(std::move(speeds)) {
    if (speeds_.size() != p_.agents.size())
      throw std::invalid_argument("DwellMoveModel: one speed bound per agent required");
    for (double u : speeds_)
      if (!(u > 0.0) || !std::isfinite(u))
        throw std::invalid_argument("DwellMoveModel: 1D agents need a finite positive speed bound");
    offsets_.push_back(1);
    for (const auto& a : p_.agents) {
      check_agent_1d(a);
      offsets_.push_back(offsets_.back() + 1 + 2 * static_cast<int>(a.tau.size()));
    }
  }

  const Params1D& params() const { return p_; }
  const std::vector<double>& speeds() const { return speeds_; }

  int num_agents() const { return static_cast<int>(p_.agents.size()); }
  int dimension() const { return 1; }
  int num_params() const { return offsets_.back(); }
  double period() const { return p_.T; }
  int agent_offset(int j) const { return offsets_[static_cast<std::size_t>(j)]; }

  Vec position(int j, double q) const { return Vec::Constant(1, position_1d(p_, speeds_[static_cast<std::size_t>(j)], j, q)); }

  Vec velocity(int j, double q) const { return Vec::Constant(1, velocity_1d(p_, speeds_[static_cast<std::size_t>(j)], j, q)); }

  /// grad += (ds_j(q)/dtheta)' v
  void position_vjp(int j, double q, const Vec& v, Vec& grad) const {
    const auto g = position_gradients_1d(p_, speeds_[static_cast<std::size_t>(j)], j, q);
    const double w = v(0);
    int o = agent_offset(j);
    grad(0) += w * g.T;
    grad(o) += w * g.s0;
    const auto P = static_cast<int>(g.tau.size());
    for (int m = 0; m < P; ++m) {
      grad(o + 1 + m) += w * g.tau[static_cast<std::size_t>(m)];
      grad(o + 1 + P + m) += w * g.omega[static_cast<std::size_t>(m)];
    }
  }

  /// Integral over q of |ds/dt|^2 summed over agents.
  double effort() const {
    double e = 0.0;
    for (std::size_t j = 0; j < p_.agents.size(); ++j) {
      const double u2 = speeds_[j] * speeds_[j];
      for (double t : p_.agents[j].tau) e += u2 * t;
    }
    return e;
  }

  void effort_gradient(Vec& grad) const {
    for (int j = 0; j < num_agents(); ++j) {
      const double u2 = speeds_[static_cast<std::size_t>(j)] * speeds_[static_cast<std::size_t>(j)];
      const int o = agent_offset(j);
      for (int m = 0; m < static_cast<int>(p_.agents[static_cast<std::size_t>(j)].tau.size()); ++m) grad(o + 1 + m) += u2;
    }
  }

  Vec pack() const {
    Vec th(num_params());
    th(0) = p_.T;
    for (int j = 0; j < num_agents(); ++j) {
      const auto& a = p_.agents[static_cast<std::size_t>(j)];
      const int o = agent_offset(j);
      const auto P = static_cast<int>(a.tau.size());
      th(o) = a.s0;
      for (int m = 0; m < P; ++m) {
        th(o + 1 + m) = a.tau[static_cast<std::size_t>(m)];
        th(o + 1 + P + m) = a.omega[static_cast<std::size_t>(m)];
      }
    }
    return th;
  }

  DwellMoveModel unpack(const Vec& th) const {
    if (th.size() != num_params()) throw std::invalid_argument("DwellMoveModel::unpack: size mismatch");
    Params1D p = p_;
    p.T = th(0);
    for (int j = 0; j < num_agents(); ++j) {
      auto& a = p.agents[static_cast<std::size_t>(j)];
      const int o = agent_offset(j);
      const auto P = static_cast<int>(a.tau.size());
      a.s0 = th(o);
      for (int m = 0; m < P; ++m) {
        a.tau[static_cast<std::size_t>(m)] = th(o + 1 + m);
        a.omega[static_cast<std::size_t>(m)] = th(o + 1 + P + m);
      }
    }
    return DwellMoveModel(std::move(p), speeds_);
  }

  Vec project(const Vec& th, bool periodic) const {
    return unpack(th).projected(periodic).pack();
  }

  DwellMoveModel projected(bool periodic) const {
    return DwellMoveModel(project_params_1d(p_, periodic), speeds_);
  }

  std::string param_name(int d) const {
    if (d == 0) return "T";
    for (int j = 0; j < num_agents(); ++j) {
      const int o = agent_offset(j);
      const auto P = static_cast<int>(p_.agents[static_cast<std::size_t>(j)].tau.size());
      if (d >= o && d < o + 1 + 2 * P) {
        const std::string base = "agents[" + std::to_string(j) + "].";
        if (d == o) return base + "s0";
        if (d < o + 1 + P) return base + "tau[" + std::to_string(d - o - 1) + "]";
        return base + "omega[" + std::to_string(d - o - 1 - P) + "]";
      }
    }
    return "?";
  }

 private:
  Params1D p_;
  std::vector<double> speeds_;
  std::vector<int> offsets_;
};

}  // namespace pmon
