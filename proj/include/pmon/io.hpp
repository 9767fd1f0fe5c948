#pragma once

#include "pmon/initializer.hpp"
#include "pmon/optimizer.hpp"
#include "pmon/policy_1d.hpp"
#include "pmon/trajectory_1d.hpp"
#include "pmon/trajectory_fourier.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace pmon {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Field-checked JSON access
// ---------------------------------------------------------------------------

namespace io_detail {

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + key, "missing required field");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline Vec vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::vector<double> list(const json& j, const std::string& path) {
  const Vec v = vector(j, path);
  return std::vector<double>(v.data(), v.data() + v.size());
}

/// Row-major nested array; a bare number is read as a 1x1 matrix.
inline Mat matrix(const json& j, const std::string& path) {
  if (j.is_number()) return Mat::Constant(1, 1, number(j, path));
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a nonempty nested array (row-major)");
  const std::size_t rows = j.size();
  if (!j[0].is_array()) throw ConfigError(path, "expected a nested array (row-major)");
  const std::size_t cols = j[0].size();
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(path, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          number(j[r][c], path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
  }
  return m;
}

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline void read_dynamics(const json& j, const std::string& path, TargetSpec& t, int agents) {
  t.A = matrix(field(j, "A", path), path + "A");
  t.Q = matrix(field(j, "Q", path), path + "Q");
  t.H = matrix(field(j, "H", path), path + "H");
  t.R = matrix(field(j, "R", path), path + "R");
  const json& r = field(j, "radius", path);
  if (r.is_number()) {
    t.radii.assign(static_cast<std::size_t>(agents), number(r, path + "radius"));
  } else {
    t.radii = list(r, path + "radius");
  }
  if (j.contains("omega0")) t.omega0 = matrix(j.at("omega0"), path + "omega0");
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Parses and validates a scenario document. `random_targets` (count, low,
/// high, optional seed, template dynamics) appends uniformly drawn targets;
/// the draw uses its own seed if given, otherwise `seed`.
inline Scenario parse_scenario(const json& j, std::uint64_t seed = 1) {
  using namespace io_detail;
  if (!j.is_object()) throw ConfigError("scenario", "expected a JSON object");
  Scenario sc;
  sc.dimension = integer(field(j, "dimension", ""), "dimension");
  if (j.contains("beta")) sc.beta = number(j.at("beta"), "beta");
  if (j.contains("mode")) {
    const auto& m = j.at("mode");
    if (!m.is_string() || (m != "steady" && m != "transient"))
      throw ConfigError("mode", "must be \"steady\" or \"transient\"");
    sc.mode = m == "steady" ? Mode::steady : Mode::transient;
  }
  if (j.contains("horizon")) sc.horizon = number(j.at("horizon"), "horizon");

  const json& agents = field(j, "agents", "");
  if (!agents.is_array()) throw ConfigError("agents", "expected an array");
  for (std::size_t a = 0; a < agents.size(); ++a) {
    const std::string path = "agents[" + std::to_string(a) + "].";
    AgentSpec ag;
    ag.id = static_cast<int>(a);
    const json& u = field(agents[a], "u_max", path);
    if (u.is_string()) {
      if (u != "unbounded") throw ConfigError(path + "u_max", "must be a number or \"unbounded\"");
    } else {
      ag.u_max = number(u, path + "u_max");
    }
    sc.agents.push_back(ag);
  }
  const int N = static_cast<int>(sc.agents.size());

  if (j.contains("targets")) {
    const json& ts = j.at("targets");
    if (!ts.is_array()) throw ConfigError("targets", "expected an array");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::string path = "targets[" + std::to_string(i) + "].";
      TargetSpec t;
      t.id = ts[i].contains("id") ? integer(ts[i].at("id"), path + "id") : static_cast<int>(i);
      t.position = vector(field(ts[i], "position", path), path + "position");
      read_dynamics(ts[i], path, t, N);
      sc.targets.push_back(std::move(t));
    }
  }
  if (j.contains("random_targets")) {
    const json& rt = j.at("random_targets");
    const std::string path = "random_targets.";
    const int count = integer(field(rt, "count", path), path + "count");
    const double lo = number(field(rt, "low", path), path + "low");
    const double hi = number(field(rt, "high", path), path + "high");
    if (count < 1) throw ConfigError(path + "count", "must be positive");
    if (!(hi > lo)) throw ConfigError(path + "high", "must exceed low");
    const std::uint64_t s = rt.contains("seed") ? rt.at("seed").get<std::uint64_t>() : seed;
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> uni(lo, hi);
    TargetSpec tmpl;
    read_dynamics(field(rt, "template", path), path + "template.", tmpl, N);
    for (int c = 0; c < count; ++c) {
      TargetSpec t = tmpl;
      t.id = static_cast<int>(sc.targets.size());
      t.position.resize(sc.dimension);
      for (int e = 0; e < sc.dimension; ++e) t.position(e) = uni(rng);
      sc.targets.push_back(std::move(t));
    }
  }
  for (std::size_t i = 0; i < sc.targets.size(); ++i)
    if (sc.targets[i].radii.size() == 1 && N > 1) sc.targets[i].radii.assign(static_cast<std::size_t>(N), sc.targets[i].radii[0]);
  validate(sc);
  return sc;
}

inline json scenario_to_json(const Scenario& sc) {
  using io_detail::to_json;
  json j;
  j["dimension"] = sc.dimension;
  j["beta"] = sc.beta;
  j["mode"] = sc.mode == Mode::steady ? "steady" : "transient";
  j["horizon"] = sc.horizon;
  j["agents"] = json::array();
  for (const auto& a : sc.agents) {
    json ag;
    if (a.bounded())
      ag["u_max"] = a.u_max;
    else
      ag["u_max"] = "unbounded";
    j["agents"].push_back(ag);
  }
  j["targets"] = json::array();
  for (const auto& t : sc.targets) {
    json tj;
    tj["id"] = t.id;
    tj["position"] = to_json(t.position);
    tj["A"] = to_json(t.A);
    tj["Q"] = to_json(t.Q);
    tj["H"] = to_json(t.H);
    tj["R"] = to_json(t.R);
    tj["radius"] = t.radii;
    if (t.omega0) tj["omega0"] = to_json(*t.omega0);
    j["targets"].push_back(tj);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Parameter documents
// ---------------------------------------------------------------------------

inline bool is_fourier_document(const json& j) { return j.is_object() && j.contains("frequencies"); }

inline Params1D parse_params_1d(const json& j) {
  using namespace io_detail;
  Params1D p;
  p.T = number(field(j, "T", ""), "T");
  const json& ag = field(j, "agents", "");
  if (!ag.is_array()) throw ConfigError("agents", "expected an array");
  for (std::size_t a = 0; a < ag.size(); ++a) {
    const std::string path = "agents[" + std::to_string(a) + "].";
    Params1D::Agent x;
    x.s0 = number(field(ag[a], "s0", path), path + "s0");
    x.tau = list(field(ag[a], "tau", path), path + "tau");
    x.omega = list(field(ag[a], "omega", path), path + "omega");
    if (x.tau.size() != x.omega.size()) throw ConfigError(path + "omega", "must have the same length as tau");
    p.agents.push_back(std::move(x));
  }
  return p;
}

inline json params_to_json(const Params1D& p) {
  json j;
  j["T"] = p.T;
  j["agents"] = json::array();
  for (const auto& a : p.agents) j["agents"].push_back({{"s0", a.s0}, {"tau", a.tau}, {"omega", a.omega}});
  return j;
}

inline ParamsFourier parse_params_fourier(const json& j) {
  using namespace io_detail;
  ParamsFourier p;
  p.T = number(field(j, "T", ""), "T");
  const json& f = field(j, "frequencies", "");
  if (!f.is_array()) throw ConfigError("frequencies", "expected an array of integers");
  for (std::size_t k = 0; k < f.size(); ++k) p.frequencies.push_back(integer(f[k], "frequencies[" + std::to_string(k) + "]"));
  const json& ag = field(j, "agents", "");
  if (!ag.is_array()) throw ConfigError("agents", "expected an array");
  for (std::size_t a = 0; a < ag.size(); ++a) {
    const std::string path = "agents[" + std::to_string(a) + "].";
    ParamsFourier::Agent x;
    x.s0 = vector(field(ag[a], "s0", path), path + "s0");
    x.a = matrix(field(ag[a], "a", path), path + "a");
    x.b = matrix(field(ag[a], "b", path), path + "b");
    p.agents.push_back(std::move(x));
  }
  try {
    check_fourier(p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("agents", e.what());
  }
  return p;
}

inline json params_to_json(const ParamsFourier& p) {
  using io_detail::to_json;
  json j;
  j["T"] = p.T;
  j["frequencies"] = p.frequencies;
  j["agents"] = json::array();
  for (const auto& a : p.agents) j["agents"].push_back({{"s0", to_json(a.s0)}, {"a", to_json(a.a)}, {"b", to_json(a.b)}});
  return j;
}

inline json policy_to_json(const Policy1D& p) {
  json j;
  j["horizon"] = p.horizon;
  j["agents"] = json::array();
  for (const auto& a : p.agents) j["agents"].push_back({{"s0", a.s0}, {"breaks", a.breaks}, {"controls", a.controls}});
  return j;
}

inline Policy1D parse_policy_1d(const json& j) {
  using namespace io_detail;
  Policy1D p;
  p.horizon = number(field(j, "horizon", ""), "horizon");
  const json& ag = field(j, "agents", "");
  if (!ag.is_array()) throw ConfigError("agents", "expected an array");
  for (std::size_t a = 0; a < ag.size(); ++a) {
    const std::string path = "agents[" + std::to_string(a) + "].";
    Policy1D::Agent x;
    x.s0 = number(field(ag[a], "s0", path), path + "s0");
    x.breaks = list(field(ag[a], "breaks", path), path + "breaks");
    x.controls = list(field(ag[a], "controls", path), path + "controls");
    try {
      check_policy_agent(x, p.horizon);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path + "breaks", e.what());
    }
    p.agents.push_back(std::move(x));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Dwell/move parameters unrolled into a velocity policy over [0, horizon],
/// repeating the period as often as needed.
inline Policy1D policy_from_params_1d(const Params1D& p, const std::vector<double>& speeds, double horizon) {
  if (speeds.size() != p.agents.size()) throw std::invalid_argument("policy_from_params_1d: one speed per agent");
  if (!(horizon > 0.0) || !(p.T > 0.0)) throw std::invalid_argument("policy_from_params_1d: horizon and period must be positive");
  Policy1D out;
  out.horizon = horizon;
  for (std::size_t j = 0; j < p.agents.size(); ++j) {
    const auto& a = p.agents[j];
    Policy1D::Agent x;
    x.s0 = a.s0;
    x.breaks.push_back(0.0);
    double t = 0.0;
    auto push = [&](double len, double u) {
      if (t >= horizon || len <= 0.0) return;
      t = std::min(horizon, t + len);
      x.breaks.push_back(t);
      x.controls.push_back(u);
    };
    while (t < horizon) {
      const double start = t;
      double used = 0.0;
      for (std::size_t m = 0; m < a.tau.size(); ++m) {
        push(a.omega[m] * p.T, 0.0);
        push(a.tau[m] * p.T, move_direction(m) * speeds[j]);
        used += a.omega[m] + a.tau[m];
      }
      push((1.0 - used) * p.T, 0.0);
      if (t == start) push(horizon - t, 0.0);  // empty schedule
    }
    x.breaks.back() = horizon;
    out.agents.push_back(std::move(x));
  }
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

/// Writes via a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string log_csv(const std::vector<IterationRecord>& log) {
  std::string s = "iteration,cost,grad_norm,step,wall_ms\n";
  for (const auto& r : log)
    s += std::to_string(r.iteration) + "," + fmt(r.cost) + "," + fmt(r.grad_norm) + "," + fmt(r.step) + "," + fmt(r.wall_ms) + "\n";
  return s;
}

/// One row per grid node, agent and axis.
template <class Model>
std::string trajectory_csv(const Model& model, int steps) {
  std::string s = "q,agent,axis,position,velocity\n";
  for (int k = 0; k <= steps; ++k) {
    const double q = static_cast<double>(k) / steps;
    for (int j = 0; j < model.num_agents(); ++j) {
      const Vec p = model.position(j, q), v = model.velocity(j, q);
      for (int e = 0; e < model.dimension(); ++e)
        s += fmt(q) + "," + std::to_string(j) + "," + std::to_string(e) + "," + fmt(p(e)) + "," + fmt(v(e)) + "\n";
    }
  }
  return s;
}

/// Columns: q, target, trace, then upper-triangle entries w_r_c for the
/// largest state dimension (empty where a target's state is smaller).
inline std::string covariance_csv(const std::vector<CovarianceTrajectory>& covs) {
  Eigen::Index L = 0;
  for (const auto& c : covs)
    if (!c.omega.empty()) L = std::max(L, c.omega.front().rows());
  std::string s = "q,target,trace";
  for (Eigen::Index r = 0; r < L; ++r)
    for (Eigen::Index c = r; c < L; ++c) s += ",w_" + std::to_string(r) + "_" + std::to_string(c);
  s += "\n";
  for (const auto& cv : covs) {
    for (int k = 0; k <= cv.steps(); ++k) {
      const Mat& w = cv.omega[static_cast<std::size_t>(k)];
      s += fmt(cv.q(k)) + "," + std::to_string(cv.target) + "," + fmt(w.trace());
      for (Eigen::Index r = 0; r < L; ++r)
        for (Eigen::Index c = r; c < L; ++c) s += "," + (r < w.rows() && c < w.cols() ? fmt(w(r, c)) : std::string());
      s += "\n";
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class Kind { one_d, fourier };

/// Everything a CLI run needs. `scenario` and `params` may be given inline in
/// the config document or as paths relative to it; a missing parameter
/// document means "initialize from the MTSP schedule".
struct RunConfig {
  json scenario;
  std::optional<json> params;
  std::optional<Kind> kind;
  std::optional<Mode> mode;
  DescentOptions descent;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  int paths = 10000;
  GaOptions ga;
  int harmonics = 5;
  double delta = 0.1;
  int segments = 11;
};

namespace io_detail {

inline json inline_or_file(const json& j, const std::filesystem::path& base, const std::string& name) {
  if (j.is_string()) return read_json_file(base / j.get<std::string>());
  if (!j.is_object()) throw ConfigError(name, "expected an object or a path");
  return j;
}

inline Mode parse_mode(const std::string& m, const std::string& path) {
  if (m == "steady") return Mode::steady;
  if (m == "transient") return Mode::transient;
  throw ConfigError(path, "must be \"steady\" or \"transient\"");
}

inline Kind parse_kind(const std::string& k, const std::string& path) {
  if (k == "1d") return Kind::one_d;
  if (k == "fourier") return Kind::fourier;
  throw ConfigError(path, "must be \"1d\" or \"fourier\"");
}

}  // namespace io_detail

inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base) {
  using namespace io_detail;
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  RunConfig rc;
  rc.scenario = inline_or_file(field(j, "scenario", ""), base, "scenario");
  if (j.contains("params")) rc.params = inline_or_file(j.at("params"), base, "params");
  if (j.contains("kind")) rc.kind = parse_kind(j.at("kind").get<std::string>(), "kind");
  if (j.contains("mode")) rc.mode = parse_mode(j.at("mode").get<std::string>(), "mode");
  if (j.contains("step")) rc.descent.step = number(j.at("step"), "step");
  if (j.contains("eps")) rc.descent.eps = number(j.at("eps"), "eps");
  if (j.contains("max_iters")) rc.descent.max_iters = integer(j.at("max_iters"), "max_iters");
  if (j.contains("armijo")) rc.descent.armijo = j.at("armijo").get<bool>();
  if (j.contains("grid")) rc.descent.eval.steps = integer(j.at("grid"), "grid");
  if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out")) rc.out = base / j.at("out").get<std::string>();
  if (j.contains("paths")) rc.paths = integer(j.at("paths"), "paths");
  if (j.contains("generations")) rc.ga.generations = integer(j.at("generations"), "generations");
  if (j.contains("population")) rc.ga.population = integer(j.at("population"), "population");
  if (j.contains("harmonics")) rc.harmonics = integer(j.at("harmonics"), "harmonics");
  if (j.contains("delta")) rc.delta = number(j.at("delta"), "delta");
  if (j.contains("segments")) rc.segments = integer(j.at("segments"), "segments");
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

/// Checks the shared numeric knobs; throws ConfigError naming the field.
inline void validate_run_config(const RunConfig& rc) {
  require(rc.descent.step > 0.0, "step", "must be positive");
  require(rc.descent.eps >= 0.0, "eps", "must be nonnegative");
  require(rc.descent.max_iters >= 0, "max_iters", "must be nonnegative");
  require(rc.descent.eval.steps >= 2, "grid", "must be at least 2");
  require(rc.paths >= 1, "paths", "must be positive");
  require(rc.harmonics >= 1, "harmonics", "must be positive");
  require(rc.delta > 0.0 && rc.delta < 1.0, "delta", "must lie in (0, 1)");
  require(rc.segments >= 0, "segments", "must be nonnegative");
  require(rc.ga.generations >= 0, "generations", "must be nonnegative");
  require(rc.ga.population >= 2, "population", "must be at least 2");
}

inline Kind resolve_kind(const RunConfig& rc, const Scenario& sc) {
  Kind k = rc.kind ? *rc.kind
                   : (rc.params ? (is_fourier_document(*rc.params) ? Kind::fourier : Kind::one_d)
                                : (sc.dimension == 1 ? Kind::one_d : Kind::fourier));
  if (k == Kind::one_d && sc.dimension != 1) throw ConfigError("kind", "1d parameterization requires a one-dimensional scenario");
  if (rc.params && (k == Kind::fourier) != is_fourier_document(*rc.params))
    throw ConfigError("params", "document does not match the parameterization kind");
  return k;
}

inline std::vector<double> speed_bounds(const Scenario& sc) {
  std::vector<double> u;
  for (std::size_t j = 0; j < sc.agents.size(); ++j) {
    if (!sc.agents[j].bounded())
      throw ConfigError("agents[" + std::to_string(j) + "].u_max", "1d parameterization needs a finite speed bound");
    u.push_back(sc.agents[j].u_max);
  }
  return u;
}

struct InitReport {
  Schedule schedule;
  json params;
  double violation = 0.0;  // Fourier waypoint violation (nonpositive when met)
};

/// MTSP schedule followed by the parameterization-specific fit.
inline InitReport initialize(const RunConfig& rc, const Scenario& sc, Kind kind) {
  GaOptions ga = rc.ga;
  ga.seed = rc.seed;
  InitReport rep;
  rep.schedule = mtsp_solve(target_positions(sc), sc.num_agents(), ga);
  if (kind == Kind::one_d) {
    rep.params = params_to_json(schedule_to_params_1d(rep.schedule, sc, rc.segments));
  } else {
    FitOptions fo;
    fo.delta = rc.delta;
    const auto p = fourier_fit(rep.schedule, sc, rc.harmonics, fo);
    rep.violation = waypoint_violation(p, rep.schedule, sc, rc.delta);
    rep.params = params_to_json(p);
  }
  return rep;
}

/// Calls f with the model built from a parameter document.
template <class F>
decltype(auto) with_model(const Scenario& sc, Kind kind, const json& params, F&& f) {
  if (kind == Kind::one_d) {
    const Params1D p = parse_params_1d(params);
    if (p.agents.size() != sc.agents.size()) throw ConfigError("agents", "parameter document and scenario disagree on the agent count");
    try {
      return f(DwellMoveModel(p, speed_bounds(sc)));
    } catch (const std::invalid_argument& e) {
      if (dynamic_cast<const ConfigError*>(&e)) throw;
      throw ConfigError("params", e.what());
    }
  }
  const ParamsFourier p = parse_params_fourier(params);
  if (p.agents.size() != sc.agents.size()) throw ConfigError("agents", "parameter document and scenario disagree on the agent count");
  if (p.dimension() != sc.dimension) throw ConfigError("agents", "parameter dimension does not match the scenario");
  return f(FourierModel(p));
}

inline json model_to_json(const DwellMoveModel& m) { return params_to_json(m.params()); }
inline json model_to_json(const FourierModel& m) { return params_to_json(m.params()); }

}  // namespace pmon
