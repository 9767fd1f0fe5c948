#pragma once

#include "pmon/sensing.hpp"

#include <type_traits>
#include <vector>

namespace pmon {

inline constexpr double kOverflowGuard = 1e12;

/// Covariance samples Omega(q_k), k = 0..S, for one target.
struct CovarianceTrajectory {
  int target = 0;
  double span = 1.0;     // time covered by q in [0,1] (period T or horizon t_f)
  bool steady = false;
  std::vector<Mat> omega;
  int periods = 0;       // steady only: one-period maps applied
  double residual = 0.0; // steady only: |Omega(1) - Omega(0)|_F of the last period

  int steps() const { return static_cast<int>(omega.size()) - 1; }
  double q(int k) const { return static_cast<double>(k) / steps(); }
  double time(int k) const { return span * q(k); }

  /// Trapezoid integral of tr(Omega) over q in [0,1].
  double mean_trace() const {
    double acc = 0.0;
    for (int k = 0; k <= steps(); ++k) acc += trapz_weight(k, steps()) * omega[static_cast<std::size_t>(k)].trace();
    return acc;
  }
};

/// d(Omega)/d(theta) samples for one target and one parameter. The auxiliary
/// fields are filled only by the steady-state construction.
struct SensitivityTrajectory {
  int target = 0;
  int param = 0;
  std::vector<Mat> sigma;
  std::vector<Mat> sigma_h;
  std::vector<Mat> sigma_zi;
  Mat lambda;

  double mean_trace() const {
    const int s = static_cast<int>(sigma.size()) - 1;
    double acc = 0.0;
    for (int k = 0; k <= s; ++k) acc += trapz_weight(k, s) * sigma[static_cast<std::size_t>(k)].trace();
    return acc;
  }
};

namespace detail {

template <int N>
using Sq = Eigen::Matrix<double, N, N>;
template <int N>
using SqVec = std::vector<Sq<N>>;

/// Calls f with std::integral_constant<int, N>: N = L for L <= 4, otherwise
/// Eigen::Dynamic. Small state dimensions get stack-allocated matrices.
template <class F>
decltype(auto) with_state_dim(Eigen::Index n, F&& f) {
  switch (n) {
    case 1: return f(std::integral_constant<int, 1>{});
    case 2: return f(std::integral_constant<int, 2>{});
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
    default: return f(std::integral_constant<int, Eigen::Dynamic>{});
  }
}

template <int N>
struct Lti {
  Sq<N> A, Q, G;
  Eigen::Index n;
  int id;

  explicit Lti(const TargetSpec& t)
      : A(t.A), Q(t.Q), G(t.information()), n(t.A.rows()), id(t.id) {}

  Sq<N> zero() const { return Sq<N>::Zero(n, n); }
  Sq<N> eye() const { return Sq<N>::Identity(n, n); }

  // A W + W A' + Q - eta W G W
  Sq<N> rhs(const Sq<N>& w, double eta) const {
    const Sq<N> aw = A * w;
    Sq<N> out = aw + aw.transpose() + Q;
    if (eta != 0.0) out.noalias() -= eta * (w * G * w);
    return out;
  }

  // Directional derivative of rhs at Y along X (Q drops out).
  Sq<N> rhs_tangent(const Sq<N>& y, const Sq<N>& x, double eta) const {
    const Sq<N> ax = A * x;
    Sq<N> out = ax + ax.transpose();
    if (eta != 0.0) {
      const Sq<N> xgy = x * G * y;
      out.noalias() -= eta * (xgy + xgy.transpose());
    }
    return out;
  }

  // Adjoint of rhs_tangent with respect to the Frobenius inner product.
  Sq<N> rhs_adjoint(const Sq<N>& y, const Sq<N>& p, double eta) const {
    Sq<N> out = A.transpose() * p + p * A;
    if (eta != 0.0) {
      const Sq<N> gy = G * y;
      out.noalias() -= eta * (p * gy.transpose() + gy * p);
    }
    return out;
  }
};

template <int N>
void guard(const Lti<N>& m, const Sq<N>& w) {
  const double nrm = w.norm();
  if (!(nrm <= kOverflowGuard))
    throw DivergenceError(m.id, "covariance of target " + std::to_string(m.id) +
                                    " diverged (|Omega|_F = " + std::to_string(nrm) + ")");
}

template <int N>
Sq<N> rk4_step(const Lti<N>& m, const Sq<N>& w, double scale, double h, double e0, double em,
               double e1) {
  const Sq<N> k1 = scale * m.rhs(w, e0);
  const Sq<N> k2 = scale * m.rhs(w + (0.5 * h) * k1, em);
  const Sq<N> k3 = scale * m.rhs(w + (0.5 * h) * k2, em);
  const Sq<N> k4 = scale * m.rhs(w + h * k3, e1);
  Sq<N> out = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  symmetrize(out);
  return out;
}

/// Integrates one sweep over q in [0,1]; `nodes` (if given) receives S+1 samples.
template <int N>
Sq<N> sweep(const Lti<N>& m, const std::vector<double>& eta, double scale, int steps, Sq<N> w,
            SqVec<N>* nodes) {
  const double h = 1.0 / steps;
  if (nodes) {
    nodes->clear();
    nodes->reserve(static_cast<std::size_t>(steps) + 1);
    nodes->push_back(w);
  }
  for (int k = 0; k < steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    w = rk4_step(m, w, scale, h, eta[s], eta[s + 1], eta[s + 2]);
    guard(m, w);
    if (nodes) nodes->push_back(w);
  }
  return w;
}

inline void check_samples(const std::vector<double>& eta, int steps, const char* who) {
  if (steps < 2) throw std::invalid_argument(std::string(who) + ": steps must be at least 2");
  if (static_cast<int>(eta.size()) != sample_count(steps))
    throw std::invalid_argument(std::string(who) + ": eta must hold 2*steps+1 samples");
}

template <int N>
struct PeriodicResult {
  SqVec<N> nodes;
  int periods = 0;
  double residual = 0.0;
};

/// Fixed-point iteration of the one-period map.
template <int N>
PeriodicResult<N> periodic_fixed_point(const Lti<N>& m, const std::vector<double>& eta, double period,
                                       int steps, Sq<N> start, double tol, int max_periods) {
  bool any = false;
  for (double e : eta) any = any || e > 0.0;
  if (!any) throw NeverVisitedError(m.id);

  PeriodicResult<N> res;
  for (int p = 1; p <= max_periods; ++p) {
    const Sq<N> end = sweep(m, eta, period, steps, start, &res.nodes);
    res.residual = (end - start).norm();
    res.periods = p;
    start = end;
    if (res.residual <= tol) return res;
  }
  throw NonConvergenceError("periodic Riccati solve for target " + std::to_string(m.id) +
                                " did not converge in " + std::to_string(max_periods) +
                                " periods (residual " + std::to_string(res.residual) + ")",
                            res.residual);
}

/// Exact tangent of the discrete RK4 map along one parameter direction.
template <int N>
SqVec<N> tangent_sweep(const Lti<N>& m, const std::vector<double>& eta, const std::vector<double>& deta,
                       const SqVec<N>& nodes, double scale, int steps) {
  const double h = 1.0 / steps;
  SqVec<N> out;
  out.reserve(nodes.size());
  Sq<N> d = m.zero();
  out.push_back(d);
  auto stage = [&](const Sq<N>& y, const Sq<N>& dy, double e, double de, Sq<N>& k, Sq<N>& dk) {
    k = scale * m.rhs(y, e);
    dk = scale * m.rhs_tangent(y, dy, e);
    if (de != 0.0) dk.noalias() -= (scale * de) * (y * m.G * y);
  };
  Sq<N> k1, k2, k3, k4, d1, d2, d3, d4;
  for (int k = 0; k < steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    const Sq<N>& w = nodes[static_cast<std::size_t>(k)];
    stage(w, d, eta[s], deta[s], k1, d1);
    stage(w + (0.5 * h) * k1, d + (0.5 * h) * d1, eta[s + 1], deta[s + 1], k2, d2);
    stage(w + (0.5 * h) * k2, d + (0.5 * h) * d2, eta[s + 1], deta[s + 1], k3, d3);
    stage(w + h * k3, d + h * d3, eta[s + 2], deta[s + 2], k4, d4);
    d = d + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    symmetrize(d);
    out.push_back(d);
  }
  return out;
}

/// Reverse pass through one RK4 sweep started at nodes[0], for
/// C = sum_k node_weight[k] * tr(Omega_k) + <terminal, Omega_S>. Returns
/// dC/d(Omega_0); adds dC/d(eta_m) into `eta_bar` and dC/d(scale) into
/// `scale_bar` when those are given. A null `node_weight` means all zero.
template <int N>
Sq<N> rk4_reverse(const Lti<N>& m, const std::vector<double>& eta, const SqVec<N>& nodes, double scale, int steps,
                  const std::vector<double>* node_weight, const Sq<N>& terminal, std::vector<double>* eta_bar,
                  double* scale_bar) {
  const double h = 1.0 / steps;
  auto weight = [&](int k) { return node_weight ? (*node_weight)[static_cast<std::size_t>(k)] : 0.0; };
  Sq<N> p = terminal + weight(steps) * m.eye();
  for (int k = steps - 1; k >= 0; --k) {
    const auto s = static_cast<std::size_t>(2 * k);
    const Sq<N>& w = nodes[static_cast<std::size_t>(k)];
    const double e0 = eta[s], em = eta[s + 1], e1 = eta[s + 2];
    // recompute stages
    const Sq<N> y1 = w;
    const Sq<N> r1 = m.rhs(y1, e0);
    const Sq<N> y2 = w + (0.5 * h * scale) * r1;
    const Sq<N> r2 = m.rhs(y2, em);
    const Sq<N> y3 = w + (0.5 * h * scale) * r2;
    const Sq<N> r3 = m.rhs(y3, em);
    const Sq<N> y4 = w + (h * scale) * r3;

    Sq<N> ps = p;
    symmetrize(ps);
    Sq<N> kb1 = (h / 6.0) * ps, kb2 = (h / 3.0) * ps, kb3 = (h / 3.0) * ps;
    const Sq<N> kb4 = (h / 6.0) * ps;
    Sq<N> yb = ps;

    Sq<N> t = scale * m.rhs_adjoint(y4, kb4, e1);
    if (eta_bar) (*eta_bar)[s + 2] -= scale * kb4.cwiseProduct(y4 * m.G * y4).sum();
    if (scale_bar) *scale_bar += kb4.cwiseProduct(m.rhs(y4, e1)).sum();
    yb += t;
    kb3 += h * t;

    t = scale * m.rhs_adjoint(y3, kb3, em);
    if (eta_bar) (*eta_bar)[s + 1] -= scale * kb3.cwiseProduct(y3 * m.G * y3).sum();
    if (scale_bar) *scale_bar += kb3.cwiseProduct(r3).sum();
    yb += t;
    kb2 += (0.5 * h) * t;

    t = scale * m.rhs_adjoint(y2, kb2, em);
    if (eta_bar) (*eta_bar)[s + 1] -= scale * kb2.cwiseProduct(y2 * m.G * y2).sum();
    if (scale_bar) *scale_bar += kb2.cwiseProduct(r2).sum();
    yb += t;
    kb1 += (0.5 * h) * t;

    yb += scale * m.rhs_adjoint(y1, kb1, e0);
    if (eta_bar) (*eta_bar)[s] -= scale * kb1.cwiseProduct(y1 * m.G * y1).sum();
    if (scale_bar) *scale_bar += kb1.cwiseProduct(r1).sum();

    p = yb + weight(k) * m.eye();
  }
  symmetrize(p);
  return p;
}

/// dC/d(eta_m) at every sample for a sweep from a fixed initial covariance,
/// where C = sum_k node_weight[k] * tr(Omega_k).
template <int N>
std::vector<double> riccati_adjoint(const Lti<N>& m, const std::vector<double>& eta,
                                    const SqVec<N>& nodes, double scale, int steps,
                                    const std::vector<double>& node_weight) {
  std::vector<double> bar(eta.size(), 0.0);
  rk4_reverse(m, eta, nodes, scale, steps, &node_weight, m.zero(), &bar, nullptr);
  return bar;
}

template <int N>
std::vector<Mat> to_dynamic(const SqVec<N>& v) {
  std::vector<Mat> out;
  out.reserve(v.size());
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

}  // namespace detail

/// RK4 solution of dOmega/dt = A Omega + Omega A' + Q - eta Omega G Omega over
/// `span` time units, sampled at S+1 nodes. `eta` holds 2S+1 half-node samples.
inline CovarianceTrajectory propagate_covariance(const TargetSpec& target, const std::vector<double>& eta,
                                                 const Mat& omega0, double span, int steps) {
  detail::check_samples(eta, steps, "propagate_covariance");
  if (omega0.rows() != target.A.rows() || !is_spd(omega0))
    throw std::invalid_argument("propagate_covariance: initial covariance must be SPD of matching size");
  if (!(span > 0.0)) throw std::invalid_argument("propagate_covariance: span must be positive");
  return detail::with_state_dim(target.A.rows(), [&](auto dim) {
    constexpr int N = decltype(dim)::value;
    const detail::Lti<N> m(target);
    detail::SqVec<N> nodes;
    detail::sweep<N>(m, eta, span, steps, detail::Sq<N>(omega0), &nodes);
    CovarianceTrajectory out;
    out.target = target.id;
    out.span = span;
    out.omega = detail::to_dynamic(nodes);
    return out;
  });
}

/// Transient d(Omega)/d(theta) with zero initial condition, as the exact
/// tangent of the RK4 map used by propagate_covariance.
inline SensitivityTrajectory propagate_transient_sensitivity(const TargetSpec& target,
                                                             const std::vector<double>& eta,
                                                             const std::vector<double>& deta,
                                                             const CovarianceTrajectory& omega,
                                                             int param = 0) {
  const int steps = omega.steps();
  detail::check_samples(eta, steps, "propagate_transient_sensitivity");
  if (deta.size() != eta.size())
    throw std::invalid_argument("propagate_transient_sensitivity: eta derivative grid mismatch");
  return detail::with_state_dim(target.A.rows(), [&](auto dim) {
    constexpr int N = decltype(dim)::value;
    const detail::Lti<N> m(target);
    detail::SqVec<N> nodes;
    nodes.reserve(omega.omega.size());
    for (const auto& w : omega.omega) nodes.emplace_back(w);
    SensitivityTrajectory out;
    out.target = target.id;
    out.param = param;
    out.sigma = detail::to_dynamic(detail::tangent_sweep<N>(m, eta, deta, nodes, omega.span, steps));
    return out;
  });
}

struct PeriodicOptions {
  double tol = 1e-9;
  int max_periods = 500;
  std::optional<Mat> initial;  // defaults to identity
};

/// Periodic steady state of the Riccati flow with period T, by iterating the
/// one-period map until |Omega(1) - Omega(0)|_F <= tol.
inline CovarianceTrajectory solve_periodic_riccati(const TargetSpec& target, const std::vector<double>& eta,
                                                   double period, int steps,
                                                   const PeriodicOptions& opt = {}) {
  detail::check_samples(eta, steps, "solve_periodic_riccati");
  if (!(period > 0.0)) throw std::invalid_argument("solve_periodic_riccati: period must be positive");
  return detail::with_state_dim(target.A.rows(), [&](auto dim) {
    constexpr int N = decltype(dim)::value;
    const detail::Lti<N> m(target);
    const detail::Sq<N> start = opt.initial ? detail::Sq<N>(*opt.initial) : m.eye();
    auto res = detail::periodic_fixed_point<N>(m, eta, period, steps, start, opt.tol, opt.max_periods);
    CovarianceTrajectory out;
    out.target = target.id;
    out.span = period;
    out.steady = true;
    out.omega = detail::to_dynamic(res.nodes);
    out.periods = res.periods;
    out.residual = res.residual;
    return out;
  });
}

struct MonotonicityReport {
  bool holds = false;
  double max_eigenvalue = 0.0;  // max over nodes of lambda_max(Omega_1 - Omega_2)
};

/// Propagates the same initial covariance under two signal-power profiles with
/// eta1 >= eta2 and reports whether Omega_1 <= Omega_2 at every node.
inline MonotonicityReport check_monotonicity(const TargetSpec& target, const std::vector<double>& eta1,
                                             const std::vector<double>& eta2, const Mat& omega0,
                                             double span, int steps) {
  if (eta1.size() != eta2.size()) throw std::invalid_argument("check_monotonicity: grid mismatch");
  for (std::size_t s = 0; s < eta1.size(); ++s)
    if (eta1[s] < eta2[s])
      throw std::invalid_argument("check_monotonicity: eta1 must dominate eta2 at every sample");
  const auto a = propagate_covariance(target, eta1, omega0, span, steps);
  const auto b = propagate_covariance(target, eta2, omega0, span, steps);
  MonotonicityReport rep;
  rep.max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < a.omega.size(); ++k)
    rep.max_eigenvalue = std::max(rep.max_eigenvalue, max_eigenvalue(a.omega[k] - b.omega[k]));
  rep.holds = rep.max_eigenvalue <= 1e-8;
  return rep;
}

/// Symmetry and PSD check used by tests and the CLI writer.
inline bool covariance_well_formed(const CovarianceTrajectory& c, double sym_tol = 1e-10,
                                   double eig_floor = -1e-9) {
  for (const auto& w : c.omega) {
    if (!w.allFinite() || !is_symmetric(w, sym_tol)) return false;
    if (min_eigenvalue(0.5 * (w + w.transpose())) < eig_floor) return false;
  }
  return true;
}

}  // namespace pmon
