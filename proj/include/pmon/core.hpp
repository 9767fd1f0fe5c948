#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace pmon {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Error types. Invalid arguments use std::invalid_argument; everything that
// is a property of the numerical problem derives from std::runtime_error.
// ---------------------------------------------------------------------------

/// Covariance blew past the overflow guard while integrating.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int target, const std::string& what)
      : std::runtime_error(what), target_(target) {}
  int target() const { return target_; }

 private:
  int target_;
};

/// A target has zero signal power over the whole period, so no periodic
/// steady state exists.
class NeverVisitedError : public std::runtime_error {
 public:
  explicit NeverVisitedError(int target)
      : std::runtime_error("target " + std::to_string(target) +
                           " is never sensed over the period; "
                           "initialization required"),
        target_(target) {}
  int target() const { return target_; }

 private:
  int target_;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Spectral radius of the one-period transition is not below one.
class ContractionError : public std::runtime_error {
 public:
  ContractionError(const std::string& what, double radius)
      : std::runtime_error(what), radius_(radius) {}
  double radius() const { return radius_; }

 private:
  double radius_;
};

class ProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Waypoint fit has no solution at the requested number of harmonics.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, int suggested_harmonics)
      : std::runtime_error(what), suggested_(suggested_harmonics) {}
  int suggested_harmonics() const { return suggested_; }

 private:
  int suggested_;
};

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scenario / parameter / run-configuration document errors. The message
/// always starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// ---------------------------------------------------------------------------
// Small dense linear-algebra helpers.
// ---------------------------------------------------------------------------

template <class M>
inline void symmetrize(M& m) {
  m = (0.5 * (m + m.transpose())).eval();
}

inline bool is_symmetric(const Mat& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

inline double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline bool is_spd(const Mat& m) {
  if (!is_symmetric(m)) return false;
  return Eigen::LLT<Mat>(0.5 * (m + m.transpose())).info() == Eigen::Success &&
         min_eigenvalue(0.5 * (m + m.transpose())) > 0.0;
}

inline double spectral_radius(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Popov-Belevitch-Hautus detectability test: every eigenvalue of `a` with
/// nonnegative real part must leave [a - lambda I; h] with full column rank.
inline bool is_detectable(const Mat& a, const Mat& h, double tol = 1e-8) {
  using CMat = Eigen::MatrixXcd;
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Mat> es(a, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (lambda.real() < 0.0) continue;
    CMat stacked(n + h.rows(), n);
    stacked.topRows(n) = a.cast<std::complex<double>>() - lambda * CMat::Identity(n, n);
    stacked.bottomRows(h.rows()) = h.cast<std::complex<double>>();
    Eigen::JacobiSVD<CMat> svd(stacked);
    if (svd.singularValues().minCoeff() <= tol) return false;
  }
  return true;
}

}  // namespace pmon
