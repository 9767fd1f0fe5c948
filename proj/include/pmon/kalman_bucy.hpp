#pragma once

#include "pmon/riccati.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace pmon {

struct FilterOptions {
  int paths = 10000;
  std::uint64_t seed = 1;
  bool zero_noise = false;  // drop process/measurement noise and start the estimate on the truth
  std::optional<Mat> omega0;
};

struct FilterStats {
  int target = 0;
  double empirical_mse = 0.0;  // time average of mean |e|^2
  double mean_trace = 0.0;     // time average of tr(Omega)
  double relative_deviation = 0.0;
  double max_abs_error = 0.0;
  std::vector<double> mse;     // per node, averaged over paths
  std::vector<double> trace;   // per node
};

/// Monte Carlo check of the covariance ODE: simulates the target state and
/// the Kalman-Bucy estimate with Euler-Maruyama on the covariance grid and
/// compares the empirical squared error with tr(Omega).
///
/// `gammas[j]` holds agent j's sensing gain on the half-node lattice
/// (2S+1 samples over [0, horizon]).
inline FilterStats simulate_kalman_bucy(const TargetSpec& target, const std::vector<std::vector<double>>& gammas,
                                        double horizon, const FilterOptions& opt = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate_kalman_bucy: horizon must be positive");
  if (opt.paths < 1) throw std::invalid_argument("simulate_kalman_bucy: paths must be positive");
  if (gammas.empty()) throw std::invalid_argument("simulate_kalman_bucy: at least one agent required");
  const int ns = static_cast<int>(gammas.front().size());
  if (ns < 5 || ns % 2 == 0) throw std::invalid_argument("simulate_kalman_bucy: gains must hold 2S+1 samples");
  for (const auto& g : gammas)
    if (static_cast<int>(g.size()) != ns) throw std::invalid_argument("simulate_kalman_bucy: gain grids differ");
  const int steps = (ns - 1) / 2;
  const int N = static_cast<int>(gammas.size());

  std::vector<double> eta(static_cast<std::size_t>(ns), 0.0);
  for (const auto& g : gammas)
    for (int m = 0; m < ns; ++m) eta[static_cast<std::size_t>(m)] += g[static_cast<std::size_t>(m)] * g[static_cast<std::size_t>(m)];

  const Mat omega0 = opt.omega0 ? *opt.omega0 : target.initial_covariance();
  const auto cov = propagate_covariance(target, eta, omega0, horizon, steps);

  const Eigen::Index L = target.A.rows(), ny = target.H.rows();
  const Mat Rinv = target.R.inverse();
  const Mat sqQ = Eigen::LLT<Mat>(target.Q).matrixL();
  const Mat sqR = Eigen::LLT<Mat>(target.R).matrixL();
  const Mat sq0 = Eigen::LLT<Mat>(omega0).matrixL();
  const double dt = horizon / steps;
  const double sdt = std::sqrt(dt);

  // Per-node stacked observation matrix and gain.
  std::vector<Mat> Ht(static_cast<std::size_t>(steps)), K(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    Mat h(N * ny, L);
    Mat rinv_big = Mat::Zero(N * ny, N * ny);
    for (int j = 0; j < N; ++j) {
      h.middleRows(j * ny, ny) = gammas[static_cast<std::size_t>(j)][static_cast<std::size_t>(2 * k)] * target.H;
      rinv_big.block(j * ny, j * ny, ny, ny) = Rinv;
    }
    K[static_cast<std::size_t>(k)] = cov.omega[static_cast<std::size_t>(k)] * h.transpose() * rinv_big;
    Ht[static_cast<std::size_t>(k)] = std::move(h);
  }

  FilterStats st;
  st.target = target.id;
  st.mse.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  st.trace.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) st.trace[static_cast<std::size_t>(k)] = cov.omega[static_cast<std::size_t>(k)].trace();

  std::normal_distribution<double> normal(0.0, 1.0);
  Vec xi(L), zeta(N * ny);
  for (int p = 0; p < opt.paths; ++p) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    auto draw = [&](Vec& v) {
      for (Eigen::Index r = 0; r < v.size(); ++r) v(r) = normal(rng);
    };
    Vec x(L), xh(L);
    draw(xi);
    x = sq0 * xi;
    xh = opt.zero_noise ? x : Vec::Zero(L);
    for (int k = 0;; ++k) {
      const Vec e = xh - x;
      st.mse[static_cast<std::size_t>(k)] += e.squaredNorm();
      st.max_abs_error = std::max(st.max_abs_error, e.cwiseAbs().maxCoeff());
      if (k == steps) break;
      const Mat& h = Ht[static_cast<std::size_t>(k)];
      Vec dz = h * x * dt;
      Vec xn = x + (target.A * x) * dt;
      if (!opt.zero_noise) {
        draw(xi);
        draw(zeta);
        xn += sdt * (sqQ * xi);
        for (int j = 0; j < N; ++j) dz.segment(j * ny, ny) += sdt * (sqR * zeta.segment(j * ny, ny));
      }
      const Vec innov = dz - h * xh * dt;
      xh = xh + (target.A * xh) * dt + K[static_cast<std::size_t>(k)] * innov;
      x = std::move(xn);
    }
  }
  for (auto& v : st.mse) v /= opt.paths;
  for (int k = 0; k <= steps; ++k) {
    st.empirical_mse += trapz_weight(k, steps) * st.mse[static_cast<std::size_t>(k)];
    st.mean_trace += trapz_weight(k, steps) * st.trace[static_cast<std::size_t>(k)];
  }
  st.relative_deviation = std::abs(st.empirical_mse - st.mean_trace) / st.mean_trace;
  return st;
}

}  // namespace pmon
