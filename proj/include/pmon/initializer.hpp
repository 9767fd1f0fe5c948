#pragma once

#include "pmon/mtsp.hpp"
#include "pmon/scenario.hpp"
#include "pmon/trajectory_1d.hpp"
#include "pmon/trajectory_fourier.hpp"

#include <algorithm>
#include <vector>

namespace pmon {

inline std::vector<Vec> target_positions(const Scenario& sc) {
  std::vector<Vec> pts;
  for (const auto& t : sc.targets) pts.push_back(t.position);
  return pts;
}

/// Full-speed dwell/move parameters tracing each agent's cyclic tour. Tours
/// are rotated to start at their leftmost stop so the first move heads
/// right; agents with shorter tours dwell at the start to share the common
/// period T = max_j D_j / u_j. Agents with an empty tour park on target
/// (j mod M). `segments` pads every agent to that many move segments
/// (0 keeps the exact count).
inline Params1D schedule_to_params_1d(const Schedule& sched, const Scenario& sc, int segments = 0) {
  if (sc.dimension != 1) throw std::invalid_argument("schedule_to_params_1d: scenario must be one-dimensional");
  if (sched.num_agents() != sc.num_agents()) throw std::invalid_argument("schedule_to_params_1d: agent count mismatch");

  struct Plan {
    double s0;
    std::vector<double> legs;  // signed distances, alternating sign, starting positive
  };
  std::vector<Plan> plans;
  double T = 0.0;
  for (int j = 0; j < sc.num_agents(); ++j) {
    const auto& tour = sched.tours[static_cast<std::size_t>(j)];
    const double u = sc.agents[static_cast<std::size_t>(j)].u_max;
    if (!std::isfinite(u)) throw std::invalid_argument("schedule_to_params_1d: agents need a finite speed bound");
    Plan p;
    if (tour.empty()) {
      p.s0 = sc.targets[static_cast<std::size_t>(j % sc.num_targets())].position(0);
      plans.push_back(p);
      continue;
    }
    std::vector<double> xs;
    for (int i : tour) xs.push_back(sc.targets[static_cast<std::size_t>(i)].position(0));
    const auto first = static_cast<std::size_t>(std::min_element(xs.begin(), xs.end()) - xs.begin());
    std::rotate(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(first), xs.end());
    p.s0 = xs.front();
    for (std::size_t m = 0; m < xs.size(); ++m) {
      const double leg = xs[(m + 1) % xs.size()] - xs[m];
      if (leg == 0.0) continue;
      if (!p.legs.empty() && (p.legs.back() > 0.0) == (leg > 0.0))
        p.legs.back() += leg;
      else
        p.legs.push_back(leg);
    }
    double dist = 0.0;
    for (double l : p.legs) dist += std::abs(l);
    T = std::max(T, dist / u);
    plans.push_back(std::move(p));
  }
  if (T <= 0.0) T = 1.0;

  std::size_t P = static_cast<std::size_t>(std::max(segments, 0));
  for (const auto& p : plans) P = std::max(P, p.legs.size());
  P = std::max<std::size_t>(P, 1);

  Params1D out;
  out.T = T;
  for (int j = 0; j < sc.num_agents(); ++j) {
    const auto& p = plans[static_cast<std::size_t>(j)];
    const double u = sc.agents[static_cast<std::size_t>(j)].u_max;
    Params1D::Agent a;
    a.s0 = p.s0;
    a.tau.assign(P, 0.0);
    a.omega.assign(P, 0.0);
    double used = 0.0;
    for (std::size_t m = 0; m < p.legs.size(); ++m) {
      a.tau[m] = std::abs(p.legs[m]) / (u * T);
      used += a.tau[m];
    }
    a.omega[0] = std::max(0.0, 1.0 - used);
    out.agents.push_back(std::move(a));
  }
  return out;
}

struct FitOptions {
  double delta = 0.1;        // waypoint slack: radius shrink factor
  int max_iterations = 50000;
  double rho = 1.0;
  double tol = 1e-10;
  double feasibility_tol = 1e-8;
};

/// Weighted L1 objective sum_k f_k (|a_k| + |b_k|) over all agents and axes.
inline double fit_objective(const ParamsFourier& p) {
  double obj = 0.0;
  for (const auto& ag : p.agents)
    for (int k = 0; k < p.harmonics(); ++k)
      obj += p.frequencies[static_cast<std::size_t>(k)] * (ag.a.col(k).cwiseAbs().sum() + ag.b.col(k).cwiseAbs().sum());
  return obj;
}

/// Largest waypoint violation of a Fourier start: max over agents and stops
/// of |s(d/D) - x| - (1 - delta) r (nonpositive when feasible).
inline double waypoint_violation(const ParamsFourier& p, const Schedule& sched, const Scenario& sc, double delta) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < sched.num_agents(); ++j) {
    const auto& tour = sched.tours[static_cast<std::size_t>(j)];
    const double D = sched.lengths[static_cast<std::size_t>(j)];
    for (std::size_t m = 0; m < tour.size(); ++m) {
      const double q = D > 0.0 ? sched.cumulative[static_cast<std::size_t>(j)][m] / D : 0.0;
      const auto& t = sc.targets[static_cast<std::size_t>(tour[m])];
      worst = std::max(worst, (fourier_position(p, j, q) - t.position).norm() - (1.0 - delta) * t.radius(j));
    }
  }
  return worst;
}

namespace detail {

inline Vec project_ball(const Vec& z, double radius) {
  const double n = z.norm();
  return n <= radius ? z : Vec(z * (radius / n));
}

}  // namespace detail

/// Sparse smooth Fourier start through the schedule's waypoints:
///   min sum_k f_k (|a| + |b|)  s.t.  |s(d_m / D) - x_m| <= (1 - delta) r
/// solved per agent by ADMM (soft-threshold and ball-projection splitting),
/// followed by a least-squares polish onto the shrunk balls and an
/// independent re-check of every waypoint. s0 is the first stop; T = 1.
inline ParamsFourier fourier_fit(const Schedule& sched, const Scenario& sc, std::vector<int> freqs,
                                 const FitOptions& opt = {}) {
  if (!(opt.delta > 0.0 && opt.delta < 1.0)) throw std::invalid_argument("fourier_fit: delta must lie in (0, 1)");
  if (sched.num_agents() != sc.num_agents()) throw std::invalid_argument("fourier_fit: agent count mismatch");
  const int P = sc.dimension;
  ParamsFourier out = ParamsFourier::zeros(sc.num_agents(), P, std::move(freqs), 1.0);
  check_fourier(out);
  const int K = out.harmonics();
  const int nc = 2 * P * K;
  int longest = 0;

  for (int j = 0; j < sc.num_agents(); ++j) {
    const auto& tour = sched.tours[static_cast<std::size_t>(j)];
    auto& ag = out.agents[static_cast<std::size_t>(j)];
    if (tour.empty()) {
      ag.s0 = sc.targets[static_cast<std::size_t>(j % sc.num_targets())].position;
      continue;
    }
    longest = std::max(longest, static_cast<int>(tour.size()));
    ag.s0 = sc.targets[static_cast<std::size_t>(tour.front())].position;
    const int nw = static_cast<int>(tour.size()) - 1;
    if (nw == 0) continue;
    const double D = sched.lengths[static_cast<std::size_t>(j)];

    // B c - d stacks s(q_m) - x_m for the waypoints after the first stop.
    Mat B = Mat::Zero(nw * P, nc);
    Vec d(nw * P);
    std::vector<double> rad(static_cast<std::size_t>(nw));
    for (int m = 0; m < nw; ++m) {
      const auto& t = sc.targets[static_cast<std::size_t>(tour[static_cast<std::size_t>(m + 1)])];
      const double q = sched.cumulative[static_cast<std::size_t>(j)][static_cast<std::size_t>(m + 1)] / D;
      rad[static_cast<std::size_t>(m)] = (1.0 - opt.delta) * t.radius(j);
      d.segment(m * P, P) = t.position - ag.s0;
      for (int k = 0; k < K; ++k) {
        const double w = omega_k(out.frequencies[static_cast<std::size_t>(k)]) * q;
        for (int e = 0; e < P; ++e) {
          B(m * P + e, e * 2 * K + k) = std::sin(w);
          B(m * P + e, e * 2 * K + K + k) = std::cos(w) - 1.0;
        }
      }
    }
    Vec wts(nc);
    for (int e = 0; e < P; ++e)
      for (int k = 0; k < K; ++k)
        wts(e * 2 * K + k) = wts(e * 2 * K + K + k) = out.frequencies[static_cast<std::size_t>(k)];

    const double rho = opt.rho;
    const Eigen::LDLT<Mat> sys(Mat::Identity(nc, nc) + B.transpose() * B);
    Vec c = Vec::Zero(nc), v = Vec::Zero(nc), u1 = Vec::Zero(nc);
    Vec z = -d, u2 = Vec::Zero(nw * P);
    auto project_all = [&](const Vec& r, double shrink) {
      Vec o(r.size());
      for (int m = 0; m < nw; ++m) o.segment(m * P, P) = detail::project_ball(r.segment(m * P, P), shrink * rad[static_cast<std::size_t>(m)]);
      return o;
    };
    for (int it = 0; it < opt.max_iterations; ++it) {
      c = sys.solve((v - u1) + B.transpose() * (d + z - u2));
      const Vec vold = v, zold = z;
      const Vec cv = c + u1;
      v = (cv.array().abs() - wts.array() / rho).max(0.0) * cv.array().sign();
      const Vec bc = B * c - d;
      z = project_all(bc + u2, 1.0);
      u1 += c - v;
      u2 += bc - z;
      const double primal = std::sqrt((c - v).squaredNorm() + (bc - z).squaredNorm());
      const double dual = rho * std::sqrt((v - vold).squaredNorm() + (z - zold).squaredNorm());
      if (primal < opt.tol && dual < opt.tol) break;
    }
    // polish: move the sparse iterate onto slightly shrunk balls
    c = v;
    const auto pinv = B.completeOrthogonalDecomposition();
    for (int round = 0; round < 20; ++round) {
      const Vec r = B * c - d;
      const Vec target = project_all(r, 1.0 - 1e-9);
      if ((target - r).norm() == 0.0) break;
      c += pinv.solve(target - r);
    }
    for (int e = 0; e < P; ++e)
      for (int k = 0; k < K; ++k) {
        ag.a(e, k) = c(e * 2 * K + k);
        ag.b(e, k) = c(e * 2 * K + K + k);
      }
  }
  const double viol = waypoint_violation(out, sched, sc, opt.delta);
  if (viol > opt.feasibility_tol) {
    const int suggest = longest / 2 + 1;  // ceil((stops - 1) / 2) + 1
    throw InfeasibleError("fourier_fit: waypoint constraints cannot be met with " + std::to_string(K) +
                              " harmonics (violation " + std::to_string(viol) + "); try at least " +
                              std::to_string(std::max(suggest, K + 1)) + " harmonics",
                          std::max(suggest, K + 1));
  }
  return out;
}

inline ParamsFourier fourier_fit(const Schedule& sched, const Scenario& sc, int K = 5, const FitOptions& opt = {}) {
  return fourier_fit(sched, sc, default_frequencies(K), opt);
}

}  // namespace pmon
