#pragma once

#include "pmon/core.hpp"

#include <vector>

namespace pmon {

/// Truncated Fourier curves, per axis p:
///   s_p(q) = s0_p + sum_k a(p,k) sin(2 pi f_k q) + b(p,k) (cos(2 pi f_k q) - 1)
struct ParamsFourier {
  struct Agent {
    Vec s0;  // length P
    Mat a;   // P x K
    Mat b;   // P x K
  };
  double T = 1.0;
  std::vector<int> frequencies;
  std::vector<Agent> agents;

  int harmonics() const { return static_cast<int>(frequencies.size()); }
  int dimension() const { return agents.empty() ? 0 : static_cast<int>(agents.front().s0.size()); }

  static ParamsFourier zeros(int agents, int dim, std::vector<int> freqs, double T = 1.0) {
    ParamsFourier p;
    p.T = T;
    p.frequencies = std::move(freqs);
    const auto K = static_cast<Eigen::Index>(p.frequencies.size());
    for (int j = 0; j < agents; ++j) p.agents.push_back({Vec::Zero(dim), Mat::Zero(dim, K), Mat::Zero(dim, K)});
    return p;
  }
};

inline std::vector<int> default_frequencies(int K = 5) {
  std::vector<int> f(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) f[static_cast<std::size_t>(k)] = k + 1;
  return f;
}

inline void check_fourier(const ParamsFourier& p) {
  int prev = 0;
  for (int f : p.frequencies) {
    if (f <= prev) throw std::invalid_argument("ParamsFourier: frequencies must be strictly increasing positive integers");
    prev = f;
  }
  const auto K = static_cast<Eigen::Index>(p.frequencies.size());
  const auto P = static_cast<Eigen::Index>(p.dimension());
  for (const auto& a : p.agents)
    if (a.s0.size() != P || a.a.rows() != P || a.b.rows() != P || a.a.cols() != K || a.b.cols() != K)
      throw std::invalid_argument("ParamsFourier: coefficient shapes must be (dimension x harmonics)");
}

inline double omega_k(int f) { return 2.0 * kPi * f; }

inline Vec fourier_position(const ParamsFourier& p, int j, double q) {
  const auto& ag = p.agents.at(static_cast<std::size_t>(j));
  Vec s = ag.s0;
  for (int k = 0; k < p.harmonics(); ++k) {
    const double w = omega_k(p.frequencies[static_cast<std::size_t>(k)]) * q;
    s += ag.a.col(k) * std::sin(w) + ag.b.col(k) * (std::cos(w) - 1.0);
  }
  return s;
}

/// ds/dt = (1/T) ds/dq.
inline Vec fourier_velocity(const ParamsFourier& p, int j, double q) {
  const auto& ag = p.agents.at(static_cast<std::size_t>(j));
  Vec v = Vec::Zero(ag.s0.size());
  for (int k = 0; k < p.harmonics(); ++k) {
    const double wf = omega_k(p.frequencies[static_cast<std::size_t>(k)]);
    v += wf * (ag.a.col(k) * std::cos(wf * q) - ag.b.col(k) * std::sin(wf * q));
  }
  return v / p.T;
}

/// Partials of the axis-p coordinate of agent j. Coefficients of other axes
/// have zero partials; the period does not enter the position.
struct FourierPartials {
  Mat a, b;   // P x K
  Vec s0;     // P
  double T = 0.0;
};

inline FourierPartials fourier_position_gradients(const ParamsFourier& p, int j, int axis, double q) {
  const auto& ag = p.agents.at(static_cast<std::size_t>(j));
  FourierPartials g{Mat::Zero(ag.a.rows(), ag.a.cols()), Mat::Zero(ag.b.rows(), ag.b.cols()),
                    Vec::Zero(ag.s0.size()), 0.0};
  g.s0(axis) = 1.0;
  for (int k = 0; k < p.harmonics(); ++k) {
    const double w = omega_k(p.frequencies[static_cast<std::size_t>(k)]) * q;
    g.a(axis, k) = std::sin(w);
    g.b(axis, k) = std::cos(w) - 1.0;
  }
  return g;
}

/// Integral over q of |ds/dt|^2 summed over agents and axes, and its partials.
struct EffortResult {
  double effort = 0.0;
  double dT = 0.0;
  std::vector<Mat> da, db;  // per agent, P x K
};

inline EffortResult effort_and_gradients(const ParamsFourier& p) {
  if (!(p.T > 0.0)) throw std::invalid_argument("effort_and_gradients: T must be positive");
  EffortResult r;
  const double t2 = p.T * p.T;
  for (const auto& ag : p.agents) {
    Mat da = Mat::Zero(ag.a.rows(), ag.a.cols()), db = Mat::Zero(ag.b.rows(), ag.b.cols());
    for (int k = 0; k < p.harmonics(); ++k) {
      const double w2 = std::pow(omega_k(p.frequencies[static_cast<std::size_t>(k)]), 2);
      const double energy = ag.a.col(k).squaredNorm() + ag.b.col(k).squaredNorm();
      r.effort += w2 / (2.0 * t2) * energy;
      r.dT -= w2 / (t2 * p.T) * energy;
      da.col(k) = (w2 / t2) * ag.a.col(k);
      db.col(k) = (w2 / t2) * ag.b.col(k);
    }
    r.da.push_back(std::move(da));
    r.db.push_back(std::move(db));
  }
  return r;
}

/// Fourier parameterization behind the flat-vector interface.
/// Layout: [T, then per agent: s0[P], a[P][K] (axis-major), b[P][K]].
class FourierModel {
 public:
  explicit FourierModel(ParamsFourier params) : p_(std::move(params)) {
    check_fourier(p_);
    P_ = p_.dimension();
    K_ = p_.harmonics();
    block_ = P_ * (1 + 2 * K_);
  }

  const ParamsFourier& params() const { return p_; }

  int num_agents() const { return static_cast<int>(p_.agents.size()); }
  int dimension() const { return P_; }
  int num_params() const { return 1 + num_agents() * block_; }
  double period() const { return p_.T; }
  int agent_offset(int j) const { return 1 + j * block_; }

  Vec position(int j, double q) const { return fourier_position(p_, j, q); }
  Vec velocity(int j, double q) const { return fourier_velocity(p_, j, q); }

  void position_vjp(int j, double q, const Vec& v, Vec& grad) const {
    const int o = agent_offset(j);
    for (int e = 0; e < P_; ++e) grad(o + e) += v(e);
    for (int k = 0; k < K_; ++k) {
      const double w = omega_k(p_.frequencies[static_cast<std::size_t>(k)]) * q;
      const double sn = std::sin(w), cs = std::cos(w) - 1.0;
      for (int e = 0; e < P_; ++e) {
        grad(o + P_ + e * K_ + k) += v(e) * sn;
        grad(o + P_ + P_ * K_ + e * K_ + k) += v(e) * cs;
      }
    }
  }

  double effort() const { return effort_and_gradients(p_).effort; }

  void effort_gradient(Vec& grad) const {
    const auto r = effort_and_gradients(p_);
    grad(0) += r.dT;
    for (int j = 0; j < num_agents(); ++j) {
      const int o = agent_offset(j);
      for (int e = 0; e < P_; ++e)
        for (int k = 0; k < K_; ++k) {
          grad(o + P_ + e * K_ + k) += r.da[static_cast<std::size_t>(j)](e, k);
          grad(o + P_ + P_ * K_ + e * K_ + k) += r.db[static_cast<std::size_t>(j)](e, k);
        }
    }
  }

  Vec pack() const {
    Vec th(num_params());
    th(0) = p_.T;
    for (int j = 0; j < num_agents(); ++j) {
      const auto& ag = p_.agents[static_cast<std::size_t>(j)];
      const int o = agent_offset(j);
      for (int e = 0; e < P_; ++e) {
        th(o + e) = ag.s0(e);
        for (int k = 0; k < K_; ++k) {
          th(o + P_ + e * K_ + k) = ag.a(e, k);
          th(o + P_ + P_ * K_ + e * K_ + k) = ag.b(e, k);
        }
      }
    }
    return th;
  }

  FourierModel unpack(const Vec& th) const {
    if (th.size() != num_params()) throw std::invalid_argument("FourierModel::unpack: size mismatch");
    ParamsFourier p = p_;
    p.T = th(0);
    for (int j = 0; j < num_agents(); ++j) {
      auto& ag = p.agents[static_cast<std::size_t>(j)];
      const int o = agent_offset(j);
      for (int e = 0; e < P_; ++e) {
        ag.s0(e) = th(o + e);
        for (int k = 0; k < K_; ++k) {
          ag.a(e, k) = th(o + P_ + e * K_ + k);
          ag.b(e, k) = th(o + P_ + P_ * K_ + e * K_ + k);
        }
      }
    }
    return FourierModel(std::move(p));
  }

  /// Speeds are unbounded, so only the period is constrained.
  Vec project(const Vec& th, bool /*periodic*/) const {
    Vec out = th;
    out(0) = std::max(out(0), kMinPeriodFourier);
    return out;
  }

  std::string param_name(int d) const {
    if (d == 0) return "T";
    const int j = (d - 1) / block_;
    int r = (d - 1) % block_;
    const std::string base = "agents[" + std::to_string(j) + "].";
    if (r < P_) return base + "s0[" + std::to_string(r) + "]";
    r -= P_;
    const char* name = r < P_ * K_ ? "a" : "b";
    r %= P_ * K_;
    return base + name + "[" + std::to_string(r / K_) + "][" + std::to_string(r % K_) + "]";
  }

  static constexpr double kMinPeriodFourier = 1e-3;

 private:
  ParamsFourier p_;
  int P_ = 0, K_ = 0, block_ = 0;
};

}  // namespace pmon
