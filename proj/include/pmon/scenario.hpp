#pragma once

#include "pmon/core.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pmon {

/// A monitored point of interest with linear stochastic internal state
///   dphi = A phi dt + dw,  w ~ N(0, Q)
/// observed through H with measurement-noise intensity R.
struct TargetSpec {
  int id = 0;
  Vec position;                 // workspace coordinates, length = dimension
  Mat A, Q, H, R;
  std::vector<double> radii;    // sensing radius per agent
  std::optional<Mat> omega0;    // initial covariance for transient runs (identity if unset)

  int state_dim() const { return static_cast<int>(A.rows()); }

  /// Information matrix H' R^-1 H.
  Mat information() const { return H.transpose() * R.llt().solve(H); }

  Mat initial_covariance() const {
    return omega0 ? *omega0 : Mat::Identity(A.rows(), A.cols());
  }

  double radius(int agent) const { return radii.at(static_cast<std::size_t>(agent)); }
};

struct AgentSpec {
  int id = 0;
  double u_max = std::numeric_limits<double>::infinity();  // inf = unbounded

  bool bounded() const { return std::isfinite(u_max); }
};

enum class Mode { transient, steady };

struct Scenario {
  int dimension = 1;
  std::vector<TargetSpec> targets;
  std::vector<AgentSpec> agents;
  double beta = 0.0;
  Mode mode = Mode::steady;
  double horizon = 0.0;  // t_f, transient mode only

  int num_targets() const { return static_cast<int>(targets.size()); }
  int num_agents() const { return static_cast<int>(agents.size()); }

  double max_radius() const {
    double r = 0.0;
    for (const auto& t : targets)
      for (double ri : t.radii) r = std::max(r, ri);
    return r;
  }
};

inline void require(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ConfigError(field, what);
}

/// Checks every structural and modelling invariant; throws ConfigError naming
/// the first offending field.
inline void validate(const Scenario& sc) {
  require(sc.dimension >= 1 && sc.dimension <= 3, "dimension", "must be 1, 2 or 3");
  require(!sc.targets.empty(), "targets", "at least one target is required");
  require(!sc.agents.empty(), "agents", "at least one agent is required");
  require(std::isfinite(sc.beta) && sc.beta >= 0.0, "beta", "must be a nonnegative number");
  if (sc.mode == Mode::transient)
    require(std::isfinite(sc.horizon) && sc.horizon > 0.0, "horizon",
            "must be positive in transient mode");

  for (std::size_t j = 0; j < sc.agents.size(); ++j) {
    const std::string f = "agents[" + std::to_string(j) + "].u_max";
    require(sc.agents[j].u_max > 0.0, f, "must be positive or \"unbounded\"");
  }

  for (std::size_t i = 0; i < sc.targets.size(); ++i) {
    const auto& t = sc.targets[i];
    const std::string base = "targets[" + std::to_string(i) + "]";
    require(t.position.size() == sc.dimension, base + ".position",
            "length must equal dimension " + std::to_string(sc.dimension));
    const Eigen::Index n = t.A.rows();
    require(n >= 1 && t.A.cols() == n, base + ".A", "must be a nonempty square matrix");
    require(t.Q.rows() == n && t.Q.cols() == n, base + ".Q", "must match the size of A");
    require(is_spd(t.Q), base + ".Q", "must be symmetric positive definite");
    require(t.H.cols() == n && t.H.rows() >= 1, base + ".H", "must have as many columns as A");
    require(t.R.rows() == t.H.rows() && t.R.cols() == t.H.rows(), base + ".R",
            "must be square with as many rows as H");
    require(is_spd(t.R), base + ".R", "must be symmetric positive definite");
    require(is_detectable(t.A, t.H), base + ".A",
            "pair (A, H) is not detectable (PBH test failed)");
    require(t.radii.size() == sc.agents.size(), base + ".radius",
            "needs one radius per agent or a single scalar");
    for (double r : t.radii) require(std::isfinite(r) && r > 0.0, base + ".radius", "must be positive");
    if (t.omega0) {
      require(t.omega0->rows() == n && t.omega0->cols() == n, base + ".omega0",
              "must match the size of A");
      require(is_spd(*t.omega0), base + ".omega0", "must be symmetric positive definite");
    }
  }
}

}  // namespace pmon
