#pragma once

#include "pmon/riccati.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <utility>
#include <vector>

namespace pmon {

struct LyapunovOptions {
  int kronecker_max_dim = 8;  // above this the doubling series is used
  double contraction_margin = 1e-9;
};

/// Solves Lambda = Phi Lambda Phi' + Z for symmetric Z, requiring the
/// spectral radius of Phi to be below one.
inline Mat solve_discrete_lyapunov(const Mat& phi, const Mat& z, const LyapunovOptions& opt = {}) {
  const Eigen::Index n = phi.rows();
  if (phi.cols() != n || z.rows() != n || z.cols() != n)
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  const double rho = spectral_radius(phi);
  if (!(rho < 1.0 - opt.contraction_margin))
    throw ContractionError("one-period transition is not contractive (spectral radius " +
                               std::to_string(rho) + ")",
                           rho);
  Mat lambda;
  if (n <= opt.kronecker_max_dim) {
    const Mat k = Eigen::kroneckerProduct(phi, phi).eval();
    const Mat lhs = Mat::Identity(n * n, n * n) - k;
    const Vec rhs = Eigen::Map<const Vec>(z.data(), n * n);
    const Vec x = lhs.partialPivLu().solve(rhs);
    lambda = Eigen::Map<const Mat>(x.data(), n, n);
  } else {
    // Doubling: after k rounds the sum covers 2^k terms of sum_j Phi^j Z Phi'^j.
    lambda = z;
    Mat p = phi;
    for (int it = 0; it < 64; ++it) {
      const Mat add = p * lambda * p.transpose();
      lambda += add;
      p = (p * p).eval();
      if (add.norm() <= 1e-17 * lambda.norm()) break;
    }
  }
  symmetrize(lambda);
  return lambda;
}

namespace detail {

/// Steady-state quantities on the half-node lattice:
///   omega  : periodic Omega (nodes exact, midpoints by cubic Hermite)
///   f      : A - eta Omega G
///   ogo    : Omega G Omega
///   rate   : A Omega + Omega A' + Q - eta Omega G Omega (dOmega/dq divided by T)
template <int N>
struct SteadyLattice {
  SqVec<N> omega, f, ogo, rate;
};

template <int N>
SteadyLattice<N> steady_lattice(const Lti<N>& m, const std::vector<double>& eta, const SqVec<N>& nodes,
                                double period) {
  const int steps = static_cast<int>(nodes.size()) - 1;
  const double h = 1.0 / steps;
  const auto n = static_cast<std::size_t>(sample_count(steps));
  SteadyLattice<N> lat;
  lat.omega.resize(n);
  lat.rate.resize(n);
  for (int k = 0; k <= steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    lat.omega[s] = nodes[static_cast<std::size_t>(k)];
    lat.rate[s] = m.rhs(lat.omega[s], eta[s]);
  }
  for (int k = 0; k < steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    Sq<N> mid = 0.5 * (lat.omega[s] + lat.omega[s + 2]) +
                (h * period / 8.0) * (lat.rate[s] - lat.rate[s + 2]);
    symmetrize(mid);
    lat.omega[s + 1] = mid;
    lat.rate[s + 1] = m.rhs(mid, eta[s + 1]);
  }
  lat.f.resize(n);
  lat.ogo.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Sq<N> og = lat.omega[s] * m.G;
    lat.ogo[s] = og * lat.omega[s];
    lat.f[s] = m.A - eta[s] * og;
  }
  return lat;
}

/// Homogeneous transition dX/dq = T F X, X(0) = I.
template <int N>
SqVec<N> transition_sweep(const Lti<N>& m, const SteadyLattice<N>& lat, double period, int steps) {
  const double h = 1.0 / steps;
  SqVec<N> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  Sq<N> x = m.eye();
  out.push_back(x);
  for (int k = 0; k < steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    const Sq<N> k1 = period * (lat.f[s] * x);
    const Sq<N> k2 = period * (lat.f[s + 1] * (x + (0.5 * h) * k1));
    const Sq<N> k3 = period * (lat.f[s + 1] * (x + (0.5 * h) * k2));
    const Sq<N> k4 = period * (lat.f[s + 2] * (x + h * k3));
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.push_back(x);
  }
  return out;
}

/// Forced symmetric response dY/dq = T(F Y + Y F') + b, Y(0) = 0, with
/// b = -T (d eta) Omega G Omega + (dT) rate.
template <int N>
SqVec<N> forced_sweep(const Lti<N>& m, const SteadyLattice<N>& lat, double period, int steps,
                      const std::vector<double>& deta, double dperiod) {
  const double h = 1.0 / steps;
  auto forcing = [&](std::size_t s) {
    Sq<N> b = (-period * deta[s]) * lat.ogo[s];
    if (dperiod != 0.0) b += dperiod * lat.rate[s];
    return b;
  };
  auto op = [&](std::size_t s, const Sq<N>& y) {
    const Sq<N> fy = lat.f[s] * y;
    return Sq<N>(period * (fy + fy.transpose()));
  };
  SqVec<N> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  Sq<N> y = m.zero();
  out.push_back(y);
  for (int k = 0; k < steps; ++k) {
    const auto s = static_cast<std::size_t>(2 * k);
    const Sq<N> b0 = forcing(s), bm = forcing(s + 1), b1 = forcing(s + 2);
    const Sq<N> k1 = op(s, y) + b0;
    const Sq<N> k2 = op(s + 1, y + (0.5 * h) * k1) + bm;
    const Sq<N> k3 = op(s + 1, y + (0.5 * h) * k2) + bm;
    const Sq<N> k4 = op(s + 2, y + h * k3) + b1;
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    symmetrize(y);
    out.push_back(y);
  }
  return out;
}

/// Sensitivities of the steady cost C = trapz(tr Omega) to the signal-power
/// samples and to the period, obtained by transposing the forced sweep and
/// the Lyapunov fixed point. For any parameter theta,
///   dC/dtheta = sum_m eta_bar[m] * d(eta_m)/dtheta + period_bar * dT/dtheta.
struct SteadyAdjoint {
  std::vector<double> eta_bar;
  double period_bar = 0.0;
  double contraction = 0.0;  // spectral radius of the one-period transition
};

template <int N>
SteadyAdjoint steady_adjoint(const Lti<N>& m, const std::vector<double>& eta, const SqVec<N>& nodes,
                             double period, const LyapunovOptions& lopt = {}) {
  const int steps = static_cast<int>(nodes.size()) - 1;
  const double h = 1.0 / steps;
  const auto lat = steady_lattice(m, eta, nodes, period);
  const auto trans = transition_sweep(m, lat, period, steps);

  Sq<N> w = m.zero();
  for (int k = 0; k <= steps; ++k) {
    const Sq<N>& x = trans[static_cast<std::size_t>(k)];
    w.noalias() += trapz_weight(k, steps) * (x.transpose() * x);
  }
  const Mat phi_t = Mat(trans.back()).transpose();
  SteadyAdjoint out;
  out.contraction = spectral_radius(phi_t);
  const Sq<N> wt(solve_discrete_lyapunov(phi_t, Mat(w), lopt));

  auto op_adj = [&](std::size_t s, const Sq<N>& p) {
    const Sq<N> fp = lat.f[s].transpose() * p;
    return Sq<N>(period * (fp + fp.transpose()));
  };

  out.eta_bar.assign(eta.size(), 0.0);
  Sq<N> p = wt + trapz_weight(steps, steps) * m.eye();
  for (int k = steps - 1; k >= 0; --k) {
    const auto s = static_cast<std::size_t>(2 * k);
    Sq<N> ps = p;
    symmetrize(ps);
    Sq<N> kb1 = (h / 6.0) * ps, kb2 = (h / 3.0) * ps, kb3 = (h / 3.0) * ps;
    const Sq<N> kb4 = (h / 6.0) * ps;
    Sq<N> yb = ps;
    Sq<N> t = op_adj(s + 2, kb4);
    yb += t;
    kb3 += h * t;
    t = op_adj(s + 1, kb3);
    yb += t;
    kb2 += (0.5 * h) * t;
    t = op_adj(s + 1, kb2);
    yb += t;
    kb1 += (0.5 * h) * t;
    yb += op_adj(s, kb1);

    const Sq<N> bm = kb2 + kb3;
    out.eta_bar[s + 2] += -period * kb4.cwiseProduct(lat.ogo[s + 2]).sum();
    out.eta_bar[s + 1] += -period * bm.cwiseProduct(lat.ogo[s + 1]).sum();
    out.eta_bar[s] += -period * kb1.cwiseProduct(lat.ogo[s]).sum();
    out.period_bar += kb4.cwiseProduct(lat.rate[s + 2]).sum() + bm.cwiseProduct(lat.rate[s + 1]).sum() +
                      kb1.cwiseProduct(lat.rate[s]).sum();

    p = yb + trapz_weight(k, steps) * m.eye();
  }
  return out;
}

/// Exact derivative of the computed steady cost C = trapz(tr Omega_k), with
/// Omega_0 the fixed point of the discrete RK4 period map P. The periodic
/// multiplier solves Lambda = p0 + J' Lambda, J = dP/dOmega; J' is built
/// column by column from reverse sweeps over a symmetric basis.
template <int N>
SteadyAdjoint discrete_steady_adjoint(const Lti<N>& m, const std::vector<double>& eta, const SqVec<N>& nodes,
                                      double period) {
  const int steps = static_cast<int>(nodes.size()) - 1;
  std::vector<double> w(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) w[static_cast<std::size_t>(k)] = trapz_weight(k, steps);

  SteadyAdjoint out;
  out.eta_bar.assign(eta.size(), 0.0);
  const Sq<N> p0 = rk4_reverse(m, eta, nodes, period, steps, &w, m.zero(), &out.eta_bar, &out.period_bar);

  const Eigen::Index n = m.n, nb = n * (n + 1) / 2;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b) idx.emplace_back(a, b);
  Mat jt(nb, nb);
  Vec rhs(nb);
  for (Eigen::Index c = 0; c < nb; ++c) {
    Sq<N> basis = m.zero();
    basis(idx[static_cast<std::size_t>(c)].first, idx[static_cast<std::size_t>(c)].second) = 1.0;
    basis(idx[static_cast<std::size_t>(c)].second, idx[static_cast<std::size_t>(c)].first) = 1.0;
    const Sq<N> col = rk4_reverse(m, eta, nodes, period, steps, nullptr, basis, nullptr, nullptr);
    for (Eigen::Index r = 0; r < nb; ++r)
      jt(r, c) = col(idx[static_cast<std::size_t>(r)].first, idx[static_cast<std::size_t>(r)].second);
  }
  for (Eigen::Index r = 0; r < nb; ++r) rhs(r) = p0(idx[static_cast<std::size_t>(r)].first, idx[static_cast<std::size_t>(r)].second);
  out.contraction = spectral_radius(jt);
  if (!(out.contraction < 1.0))
    throw ContractionError("discrete period map is not contractive (spectral radius " +
                               std::to_string(out.contraction) + ")",
                           out.contraction);
  const Vec c = (Mat::Identity(nb, nb) - jt).partialPivLu().solve(rhs);
  Sq<N> lambda = m.zero();
  for (Eigen::Index r = 0; r < nb; ++r) {
    const auto [a, b] = idx[static_cast<std::size_t>(r)];
    lambda(a, b) = lambda(b, a) = c(r);
  }
  rk4_reverse(m, eta, nodes, period, steps, nullptr, lambda, &out.eta_bar, &out.period_bar);
  return out;
}

template <int N>
SqVec<N> nodes_from(const CovarianceTrajectory& c) {
  SqVec<N> v;
  v.reserve(c.omega.size());
  for (const auto& w : c.omega) v.emplace_back(w);
  return v;
}

}  // namespace detail

/// Auxiliary trajectories (Sigma_H, Sigma_ZI) for parameter `param` of the
/// steady solution `omega`:
///   dSigma_H/dq  = T F Sigma_H,                         Sigma_H(0) = I
///   dSigma_ZI/dq = T(F Sigma_ZI + Sigma_ZI F')
///                  - T (d eta) Omega G Omega + (dT/T) dOmega/dq,  Sigma_ZI(0) = 0
/// with F = A - eta Omega G.
inline std::pair<std::vector<Mat>, std::vector<Mat>> integrate_auxiliary(
    const TargetSpec& target, const std::vector<double>& eta, const std::vector<double>& deta,
    const CovarianceTrajectory& omega, double dperiod) {
  const int steps = omega.steps();
  detail::check_samples(eta, steps, "integrate_auxiliary");
  if (deta.size() != eta.size()) throw std::invalid_argument("integrate_auxiliary: eta derivative grid mismatch");
  return detail::with_state_dim(target.A.rows(), [&](auto dim) {
    constexpr int N = decltype(dim)::value;
    const detail::Lti<N> m(target);
    const auto nodes = detail::nodes_from<N>(omega);
    const auto lat = detail::steady_lattice(m, eta, nodes, omega.span);
    return std::make_pair(detail::to_dynamic(detail::transition_sweep(m, lat, omega.span, steps)),
                          detail::to_dynamic(detail::forced_sweep(m, lat, omega.span, steps, deta, dperiod)));
  });
}

/// d(Omega_bar)/d(theta) on the grid: Sigma = Sigma_H Lambda Sigma_H' + Sigma_ZI,
/// with Lambda the fixed point of Lambda = Sigma_H(1) Lambda Sigma_H(1)' + Sigma_ZI(1).
inline SensitivityTrajectory steady_state_sensitivity(const TargetSpec& target, const std::vector<double>& eta,
                                                      const std::vector<double>& deta,
                                                      const CovarianceTrajectory& omega, double dperiod,
                                                      int param = 0, const LyapunovOptions& lopt = {}) {
  auto [sh, szi] = integrate_auxiliary(target, eta, deta, omega, dperiod);
  SensitivityTrajectory out;
  out.target = target.id;
  out.param = param;
  out.lambda = solve_discrete_lyapunov(sh.back(), szi.back(), lopt);
  out.sigma.reserve(sh.size());
  for (std::size_t k = 0; k < sh.size(); ++k) {
    Mat s = sh[k] * out.lambda * sh[k].transpose() + szi[k];
    symmetrize(s);
    out.sigma.push_back(std::move(s));
  }
  out.sigma_h = std::move(sh);
  out.sigma_zi = std::move(szi);
  return out;
}

}  // namespace pmon
