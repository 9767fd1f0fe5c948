#pragma once

#include "pmon/riccati.hpp"

#include <algorithm>
#include <vector>

namespace pmon {

/// Piecewise-constant velocity policies over [0, horizon] for 1D agents.
/// Agent j applies controls[k] on [breaks[k], breaks[k+1]); breaks starts at
/// 0 and ends at the horizon.
struct Policy1D {
  struct Agent {
    double s0 = 0.0;
    std::vector<double> breaks;
    std::vector<double> controls;
  };
  double horizon = 1.0;
  std::vector<Agent> agents;
};

inline void check_policy_agent(const Policy1D::Agent& a, double horizon) {
  if (a.breaks.size() != a.controls.size() + 1 || a.controls.empty())
    throw std::invalid_argument("Policy1D: breaks must have one more entry than controls");
  if (a.breaks.front() != 0.0 || std::abs(a.breaks.back() - horizon) > 1e-12 * std::max(1.0, horizon))
    throw std::invalid_argument("Policy1D: breaks must span [0, horizon]");
  for (std::size_t k = 0; k + 1 < a.breaks.size(); ++k)
    if (!(a.breaks[k + 1] >= a.breaks[k])) throw std::invalid_argument("Policy1D: breaks must be nondecreasing");
}

/// Positions at every break point.
inline std::vector<double> policy_knots(const Policy1D::Agent& a) {
  std::vector<double> s(a.breaks.size());
  s[0] = a.s0;
  for (std::size_t k = 0; k < a.controls.size(); ++k)
    s[k + 1] = s[k] + a.controls[k] * (a.breaks[k + 1] - a.breaks[k]);
  return s;
}

inline double policy_position(const Policy1D::Agent& a, double t) {
  double s = a.s0;
  for (std::size_t k = 0; k < a.controls.size(); ++k) {
    const double t0 = a.breaks[k], t1 = a.breaks[k + 1];
    if (t <= t1) return s + a.controls[k] * (std::max(t, t0) - t0);
    s += a.controls[k] * (t1 - t0);
  }
  return s;
}

/// Number of discontinuities of the control signal.
inline int switch_count(const Policy1D::Agent& a) {
  int n = 0;
  for (std::size_t k = 0; k + 1 < a.controls.size(); ++k)
    if (a.controls[k + 1] != a.controls[k]) ++n;
  return n;
}

/// Minimum gap between sensing regions: min |x_i - x_k| - 2 r_max
/// (+inf for a single target).
inline double visible_gap(const Scenario& sc) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sc.targets.size(); ++i)
    for (std::size_t k = i + 1; k < sc.targets.size(); ++k)
      d = std::min(d, (sc.targets[i].position - sc.targets[k].position).norm());
  return d - 2.0 * sc.max_radius();
}

/// Upper bound on control switches of the canonical policy for an agent with
/// speed bound u over [0, horizon].
inline double switch_bound(const Scenario& sc, double horizon, double u_max) {
  return 2.0 * horizon * u_max / visible_gap(sc) + 4.0;
}

/// Signal power of every target on the half-node lattice over [0, horizon].
inline std::vector<std::vector<double>> policy_eta(const Scenario& sc, const Policy1D& p, int steps) {
  const int ns = sample_count(steps);
  std::vector<std::vector<double>> eta(sc.targets.size(), std::vector<double>(static_cast<std::size_t>(ns), 0.0));
  for (int m = 0; m < ns; ++m) {
    const double t = sample_q(m, steps) * p.horizon;
    std::vector<Vec> pos;
    for (const auto& a : p.agents) pos.push_back(Vec::Constant(1, policy_position(a, t)));
    for (int i = 0; i < sc.num_targets(); ++i) eta[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = eta_eval(sc, i, pos);
  }
  return eta;
}

/// Finite-horizon cost (1/t) integral_0^t sum_i tr(Omega_i) from each
/// target's initial covariance.
inline double policy_cost(const Scenario& sc, const Policy1D& p, int steps = 2000) {
  const auto eta = policy_eta(sc, p, steps);
  double j = 0.0;
  for (std::size_t i = 0; i < sc.targets.size(); ++i)
    j += propagate_covariance(sc.targets[i], eta[i], sc.targets[i].initial_covariance(), p.horizon, steps).mean_trace();
  return j;
}

struct CanonicalizeOptions {
  bool allow_non_isolated = false;  // compute the transform even without the optimality guarantee
};

namespace detail {

struct Visit {
  double start;
  int target;
};

// Times where an agent is strictly inside some target's sensing interval,
// reduced to the sequence of visit starts with consecutive repeats removed.
inline std::vector<Visit> visit_sequence(const Scenario& sc, const Policy1D::Agent& a, int j) {
  struct Span {
    double t0, t1;
    int target;
  };
  std::vector<Span> spans;
  const auto s = policy_knots(a);
  for (std::size_t k = 0; k < a.controls.size(); ++k) {
    const double ta = a.breaks[k], tb = a.breaks[k + 1];
    if (tb <= ta) continue;
    const double u = a.controls[k];
    for (int i = 0; i < sc.num_targets(); ++i) {
      const auto& t = sc.targets[static_cast<std::size_t>(i)];
      const double x = t.position(0), r = t.radius(j);
      double lo, hi;
      if (u == 0.0) {
        if (std::abs(s[k] - x) >= r) continue;
        lo = ta;
        hi = tb;
      } else {
        // s[k] + u (tau - ta) in (x - r, x + r)
        double e0 = ta + (x - r - s[k]) / u, e1 = ta + (x + r - s[k]) / u;
        if (e0 > e1) std::swap(e0, e1);
        lo = std::max(ta, e0);
        hi = std::min(tb, e1);
        if (!(hi > lo)) continue;
      }
      spans.push_back({lo, hi, i});
    }
  }
  std::sort(spans.begin(), spans.end(), [](const Span& l, const Span& r) {
    return l.t0 < r.t0 || (l.t0 == r.t0 && l.target < r.target);
  });
  std::vector<Visit> out;
  for (const auto& sp : spans)
    if (out.empty() || out.back().target != sp.target) out.push_back({sp.t0, sp.target});
  return out;
}

// Pointwise nearest-to-anchor trajectory on [ta, tb] that starts at a, ends
// at b and respects |ds/dt| <= u. Appends (break, control) pairs.
inline void clamp_segment(double ta, double tb, double a, double b, double anchor, double u,
                          std::vector<double>& breaks, std::vector<double>& controls) {
  if (!(tb > ta)) return;
  auto lower = [&](double t) { return std::max(a - u * (t - ta), b - u * (tb - t)); };
  auto upper = [&](double t) { return std::min(a + u * (t - ta), b + u * (tb - t)); };
  auto path = [&](double t) {
    const double lo = lower(t), hi = upper(t);
    return std::clamp(anchor, std::min(lo, hi), std::max(lo, hi));
  };
  std::vector<double> cand{ta, tb,
                           (a - b + u * (ta + tb)) / (2.0 * u),
                           (b - a + u * (ta + tb)) / (2.0 * u),
                           ta + (a - anchor) / u, tb - (b - anchor) / u,
                           ta + (anchor - a) / u, tb - (anchor - b) / u};
  std::vector<double> ts;
  for (double c : cand)
    if (c >= ta && c <= tb && std::isfinite(c)) ts.push_back(c);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end(), [&](double l, double r) { return r - l <= 1e-12 * std::max(1.0, tb); }),
           ts.end());
  ts.back() = tb;
  double prev_pos = a;
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double t0 = ts[k], t1 = ts[k + 1];
    const double p1 = (k + 2 == ts.size()) ? b : path(t1);
    double c = (p1 - prev_pos) / (t1 - t0);
    if (std::abs(c - u) <= 1e-6 * u) c = u;
    else if (std::abs(c + u) <= 1e-6 * u) c = -u;
    else if (std::abs(c) <= 1e-6 * u) c = 0.0;
    else
      throw std::logic_error("canonicalize_policy_1d: slope off the bang/dwell set");
    breaks.push_back(t0);
    controls.push_back(c);
    prev_pos += c * (t1 - t0);
  }
}

}  // namespace detail

/// Bang/dwell replacement of an arbitrary speed-feasible policy. Visit start
/// times and positions are kept; between them each agent heads to the target
/// it is visiting at full speed and dwells on it, leaving just in time to
/// reach the next visit start. Before the first visit it dwells at its start
/// position. Signal power never decreases, so the finite-horizon cost does
/// not increase when targets are isolated.
inline Policy1D canonicalize_policy_1d(const Policy1D& in, const Scenario& sc, const CanonicalizeOptions& opt = {}) {
  if (sc.dimension != 1) throw std::invalid_argument("canonicalize_policy_1d: scenario must be one-dimensional");
  if (in.agents.size() != sc.agents.size()) throw std::invalid_argument("canonicalize_policy_1d: agent count mismatch");
  if (!(visible_gap(sc) > 0.0) && !opt.allow_non_isolated)
    throw PreconditionError("canonicalize_policy_1d: targets are not isolated (min gap " +
                            std::to_string(visible_gap(sc)) + " <= 0)");
  Policy1D out;
  out.horizon = in.horizon;
  for (std::size_t j = 0; j < in.agents.size(); ++j) {
    const auto& a = in.agents[j];
    check_policy_agent(a, in.horizon);
    const double u = sc.agents[j].u_max;
    if (!std::isfinite(u)) throw std::invalid_argument("canonicalize_policy_1d: agents need a finite speed bound");
    for (double c : a.controls)
      if (std::abs(c) > u * (1.0 + 1e-12)) throw std::invalid_argument("canonicalize_policy_1d: control exceeds u_max");

    const auto visits = detail::visit_sequence(sc, a, static_cast<int>(j));
    Policy1D::Agent b;
    b.s0 = a.s0;
    std::vector<double> ts{0.0};
    std::vector<double> anchors{a.s0};
    for (const auto& v : visits) {
      if (v.start > ts.back()) {
        ts.push_back(v.start);
        anchors.push_back(sc.targets[static_cast<std::size_t>(v.target)].position(0));
      } else {
        anchors.back() = sc.targets[static_cast<std::size_t>(v.target)].position(0);
      }
    }
    ts.push_back(in.horizon);
    for (std::size_t p = 0; p + 1 < ts.size(); ++p)
      detail::clamp_segment(ts[p], ts[p + 1], policy_position(a, ts[p]), policy_position(a, ts[p + 1]), anchors[p], u,
                            b.breaks, b.controls);
    // merge equal neighbours
    Policy1D::Agent m;
    m.s0 = b.s0;
    for (std::size_t k = 0; k < b.controls.size(); ++k) {
      if (!m.controls.empty() && m.controls.back() == b.controls[k]) continue;
      m.breaks.push_back(b.breaks[k]);
      m.controls.push_back(b.controls[k]);
    }
    m.breaks.push_back(in.horizon);
    out.agents.push_back(std::move(m));
  }
  return out;
}

}  // namespace pmon
