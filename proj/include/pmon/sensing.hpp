#pragma once

#include "pmon/scenario.hpp"

#include <array>
#include <vector>

namespace pmon {

/// Sensing gain for an agent at displacement `alpha` from a target.
/// Piecewise: sqrt(1 - |alpha|/r) inside the disc, 0 outside.
inline double gamma_eval(const Vec& alpha, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("gamma_eval: radius must be positive");
  const double d = alpha.norm();
  if (d >= radius) return 0.0;
  return std::sqrt(1.0 - d / radius);
}

inline double gamma_sq(const Vec& alpha, double radius) {
  const double g = gamma_eval(alpha, radius);
  return g * g;
}

/// d(gamma^2)/ds at agent position s. Zero outside the disc and at s == x
/// (the norm is not differentiable there; zero is a valid subgradient).
inline Vec gamma_sq_gradient(const Vec& s, const Vec& x, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("gamma_sq_gradient: radius must be positive");
  Vec diff = s - x;
  const double d = diff.norm();
  if (d >= radius || d == 0.0) return Vec::Zero(s.size());
  return -diff / (radius * d);
}

/// Aggregate signal power of target i given every agent's position.
inline double eta_eval(const Scenario& sc, int i, const std::vector<Vec>& positions) {
  if (i < 0 || i >= sc.num_targets()) throw std::out_of_range("eta_eval: target index out of range");
  const auto& t = sc.targets[static_cast<std::size_t>(i)];
  double eta = 0.0;
  for (std::size_t j = 0; j < positions.size(); ++j)
    eta += gamma_sq(positions[j] - t.position, t.radius(static_cast<int>(j)));
  return eta;
}

// Integration grid. S RK4 steps over q in [0,1]; quantities that the
// integrator reads are sampled on the half-node lattice q = m / (2S),
// m = 0..2S, so node k is sample 2k and its step midpoint is sample 2k+1.

inline int sample_count(int steps) { return 2 * steps + 1; }
inline double sample_q(int m, int steps) { return static_cast<double>(m) / (2.0 * steps); }

// Signal power generated by a trajectory is first sampled on a finer lattice
// of kSubsteps points per step. Node samples are taken as is; the midpoint
// sample becomes the value whose Simpson weight in the RK4 step reproduces
// the composite Simpson integral over the sub-samples. For smooth eta this
// moves the midpoint by O(h^4), keeping RK4's order, while kinks inside a
// step (sensing-disc crossings, velocity jumps) lose most of their O(h^2)
// quadrature error.
inline constexpr int kSubsteps = 8;
inline constexpr std::array<double, kSubsteps + 1> kMidpointWeights{
    -3.0 / 16, 4.0 / 16, 2.0 / 16, 4.0 / 16, 2.0 / 16, 4.0 / 16, 2.0 / 16, 4.0 / 16, -3.0 / 16};

inline int fine_count(int steps) { return kSubsteps * steps + 1; }
inline double fine_q(int m, int steps) { return static_cast<double>(m) / (static_cast<double>(kSubsteps) * steps); }

/// Calls f(lattice sample, weight) for every integrator sample that fine
/// sample m feeds into.
template <class F>
void for_each_lattice_weight(int m, int steps, F&& f) {
  const int k = m / kSubsteps, j = m % kSubsteps;
  if (j == 0) {
    f(2 * k, 1.0);
    if (k > 0) f(2 * k - 1, kMidpointWeights[kSubsteps]);
  }
  if (k < steps) f(2 * k + 1, kMidpointWeights[static_cast<std::size_t>(j)]);
}

/// Fine samples collapsed onto the integrator lattice.
inline std::vector<double> collapse_samples(const std::vector<double>& fine, int steps) {
  std::vector<double> out(static_cast<std::size_t>(sample_count(steps)), 0.0);
  for (int m = 0; m < fine_count(steps); ++m)
    for_each_lattice_weight(m, steps, [&](int c, double w) { out[static_cast<std::size_t>(c)] += w * fine[static_cast<std::size_t>(m)]; });
  return out;
}

/// Trapezoid weight of node k on a grid of S steps.
inline double trapz_weight(int k, int steps) {
  const double h = 1.0 / steps;
  return (k == 0 || k == steps) ? 0.5 * h : h;
}

/// Signal power, and optionally its parameter derivatives, sampled on the
/// half-node lattice for every target.
struct EtaProfile {
  int steps = 0;
  std::vector<std::vector<double>> eta;  // [target][sample]
  std::vector<Mat> deta;                 // [target] (samples x params); empty if not requested

  int num_samples() const { return sample_count(steps); }
  int num_targets() const { return static_cast<int>(eta.size()); }

  std::vector<double> derivative(int target, int param) const {
    const Mat& d = deta.at(static_cast<std::size_t>(target));
    return std::vector<double>(d.col(param).data(), d.col(param).data() + d.rows());
  }

  /// True when the target has positive signal power somewhere.
  bool visited(int target) const {
    for (double e : eta.at(static_cast<std::size_t>(target)))
      if (e > 0.0) return true;
    return false;
  }
};

/// Agent positions at every fine sample: [agent][sample].
template <class Model>
std::vector<std::vector<Vec>> fine_positions(const Model& model, int steps) {
  const int n = fine_count(steps);
  std::vector<std::vector<Vec>> out(static_cast<std::size_t>(model.num_agents()));
  for (int j = 0; j < model.num_agents(); ++j) {
    auto& row = out[static_cast<std::size_t>(j)];
    row.reserve(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) row.push_back(model.position(j, fine_q(m, steps)));
  }
  return out;
}

/// Samples eta_i on the integrator lattice for every target, plus
/// d(eta_i)/d(theta) when `with_derivatives` is set. The model supplies
/// positions and the vector-Jacobian product of positions with respect to
/// its flat parameters.
template <class Model>
EtaProfile build_eta_profile(const Scenario& sc, const Model& model, int steps,
                             bool with_derivatives = true) {
  if (steps < 2) throw std::invalid_argument("build_eta_profile: grid size must be at least 2");
  const int n = sample_count(steps), nf = fine_count(steps);
  const int np = model.num_params();
  const auto pos = fine_positions(model, steps);

  EtaProfile prof;
  prof.steps = steps;
  prof.eta.assign(sc.targets.size(), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  if (with_derivatives) prof.deta.assign(sc.targets.size(), Mat::Zero(n, np));

  Vec row(np);
  for (int i = 0; i < sc.num_targets(); ++i) {
    const auto& t = sc.targets[static_cast<std::size_t>(i)];
    auto& eta = prof.eta[static_cast<std::size_t>(i)];
    for (int m = 0; m < nf; ++m) {
      const double q = fine_q(m, steps);
      double e = 0.0;
      if (with_derivatives) row.setZero();
      for (int j = 0; j < model.num_agents(); ++j) {
        const Vec& s = pos[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)];
        const double r = t.radius(j);
        e += gamma_sq(s - t.position, r);
        if (with_derivatives) {
          const Vec g = gamma_sq_gradient(s, t.position, r);
          if (!g.isZero(0.0)) model.position_vjp(j, q, g, row);
        }
      }
      for_each_lattice_weight(m, steps, [&](int c, double w) {
        eta[static_cast<std::size_t>(c)] += w * e;
        if (with_derivatives) prof.deta[static_cast<std::size_t>(i)].row(c) += w * row.transpose();
      });
    }
  }
  return prof;
}

}  // namespace pmon
