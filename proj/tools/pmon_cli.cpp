// Command-line front end: init, optimize, validate, canonicalize.

#include "pmon/pmon.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace {

using namespace pmon;

enum Exit { kConverged = 0, kFailure = 1, kMaxIters = 2, kDiverged = 3, kConfig = 4 };

struct Flags {
  std::string config, scenario, params, out, mode, kind;
  std::optional<std::uint64_t> seed;
  std::optional<int> grid, max_iters, paths, generations, population, harmonics, segments;
  std::optional<double> step, eps, delta;
  bool armijo = false, no_timing = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "Run configuration (JSON)");
  app->add_option("--scenario", f.scenario, "Scenario document (JSON)");
  app->add_option("--params", f.params, "Parameter document (JSON)");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--seed", f.seed, "Seed for every random draw");
  app->add_option("--grid", f.grid, "RK4 steps per integration window");
  app->add_option("--max-iters", f.max_iters, "Descent iteration cap");
  app->add_option("--step", f.step, "Descent step size");
  app->add_option("--eps", f.eps, "Gradient-norm stopping tolerance");
  app->add_option("--mode", f.mode, "steady | transient")->check(CLI::IsMember({"steady", "transient"}));
  app->add_option("--kind", f.kind, "1d | fourier")->check(CLI::IsMember({"1d", "fourier"}));
  app->add_flag("--armijo", f.armijo, "Backtracking line search");
  app->add_flag("--no-timing", f.no_timing, "Record wall_ms as 0 (byte-reproducible logs)");
  app->add_option("--paths", f.paths, "Monte Carlo paths (validate)");
  app->add_option("--generations", f.generations, "GA generations (init)");
  app->add_option("--population", f.population, "GA population (init)");
  app->add_option("--harmonics", f.harmonics, "Fourier harmonics (init)");
  app->add_option("--delta", f.delta, "Waypoint radius shrink (init)");
  app->add_option("--segments", f.segments, "Move segments per 1D agent (init)");
}

RunConfig resolve(const Flags& f) {
  RunConfig rc;
  if (!f.config.empty()) {
    rc = load_run_config(f.config);
  } else if (f.scenario.empty()) {
    throw ConfigError("scenario", "either --config or --scenario is required");
  }
  if (!f.scenario.empty()) rc.scenario = read_json_file(f.scenario);
  if (!f.params.empty()) rc.params = read_json_file(f.params);
  if (!f.out.empty()) rc.out = f.out;
  if (!f.mode.empty()) rc.mode = io_detail::parse_mode(f.mode, "mode");
  if (!f.kind.empty()) rc.kind = io_detail::parse_kind(f.kind, "kind");
  if (f.seed) rc.seed = *f.seed;
  if (f.grid) rc.descent.eval.steps = *f.grid;
  if (f.max_iters) rc.descent.max_iters = *f.max_iters;
  if (f.step) rc.descent.step = *f.step;
  if (f.eps) rc.descent.eps = *f.eps;
  if (f.armijo) rc.descent.armijo = true;
  if (f.no_timing) rc.descent.timing = false;
  if (f.paths) rc.paths = *f.paths;
  if (f.generations) rc.ga.generations = *f.generations;
  if (f.population) rc.ga.population = *f.population;
  if (f.harmonics) rc.harmonics = *f.harmonics;
  if (f.delta) rc.delta = *f.delta;
  if (f.segments) rc.segments = *f.segments;
  validate_run_config(rc);
  return rc;
}

void print_schedule(const Schedule& s) {
  for (int j = 0; j < s.num_agents(); ++j) {
    std::printf("agent %d tour:", j);
    for (int i : s.tours[static_cast<std::size_t>(j)]) std::printf(" %d", i);
    std::printf("  length %.6g\n", s.lengths[static_cast<std::size_t>(j)]);
  }
}

int cmd_init(const RunConfig& rc) {
  const Scenario sc = parse_scenario(rc.scenario, rc.seed);
  const Kind kind = resolve_kind(rc, sc);
  const auto rep = initialize(rc, sc, kind);
  print_schedule(rep.schedule);
  if (kind == Kind::fourier)
    std::printf("waypoint check: max violation %.3e (feasible)\n", rep.violation);
  write_atomic(rc.out / "params_init.json", rep.params.dump(2) + "\n");
  std::printf("wrote %s\n", (rc.out / "params_init.json").string().c_str());
  return kConverged;
}

json starting_params(const RunConfig& rc, const Scenario& sc, Kind kind) {
  if (rc.params) return *rc.params;
  const auto rep = initialize(rc, sc, kind);
  print_schedule(rep.schedule);
  return rep.params;
}

int cmd_optimize(const RunConfig& rc) {
  const Scenario sc = parse_scenario(rc.scenario, rc.seed);
  const Kind kind = resolve_kind(rc, sc);
  const Mode mode = rc.mode.value_or(sc.mode);
  if (mode == Mode::transient && !(sc.horizon > 0.0)) throw ConfigError("horizon", "transient mode needs a positive horizon");
  const json start = starting_params(rc, sc, kind);

  return with_model(sc, kind, start, [&](const auto& model0) {
    DescentOptions opt = rc.descent;
    opt.on_iteration = [](const IterationRecord& r) {
      if (r.iteration % 100 == 0) std::printf("iter %6d  cost %.10g  |grad| %.4g\n", r.iteration, r.cost, r.grad_norm);
    };
    const auto res = descend(sc, model0, mode, opt);
    const auto& last = res.log.empty() ? IterationRecord{} : res.log.back();
    std::printf("status %s after %d iterations, cost %.10g\n", to_string(res.status), last.iteration, last.cost);
    if (!res.message.empty()) std::printf("%s\n", res.message.c_str());

    const int steps = opt.eval.steps;
    write_atomic(rc.out / "log.csv", log_csv(res.log));
    write_atomic(rc.out / "params_final.json", model_to_json(res.model).dump(2) + "\n");
    if (mode == Mode::transient)
      write_atomic(rc.out / "trajectory.csv", trajectory_csv(detail::with_period(res.model, sc.horizon), steps));
    else
      write_atomic(rc.out / "trajectory.csv", trajectory_csv(res.model, steps));
    try {
      const auto ev = evaluate(sc, res.model, mode, opt.eval, false, nullptr, true);
      write_atomic(rc.out / "covariance.csv", covariance_csv(ev.covariance));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "covariance.csv not written: %s\n", e.what());
    }
    switch (res.status) {
      case DescentStatus::converged: return static_cast<int>(kConverged);
      case DescentStatus::max_iterations: return static_cast<int>(kMaxIters);
      default: return static_cast<int>(kDiverged);
    }
  });
}

int cmd_validate(const RunConfig& rc) {
  const Scenario sc = parse_scenario(rc.scenario, rc.seed);
  const Kind kind = resolve_kind(rc, sc);
  const json start = starting_params(rc, sc, kind);
  const int steps = rc.descent.eval.steps;
  return with_model(sc, kind, start, [&](const auto& model) {
    const double horizon = sc.horizon > 0.0 ? sc.horizon : model.period();
    const int ns = sample_count(steps);
    FilterOptions fo;
    fo.paths = rc.paths;
    fo.seed = rc.seed;
    std::string csv = "target,empirical_mse,mean_trace,relative_deviation\n";
    for (int i = 0; i < sc.num_targets(); ++i) {
      const auto& t = sc.targets[static_cast<std::size_t>(i)];
      std::vector<std::vector<double>> gammas(static_cast<std::size_t>(sc.num_agents()), std::vector<double>(static_cast<std::size_t>(ns)));
      for (int m = 0; m < ns; ++m) {
        const double q = std::fmod(sample_q(m, steps) * horizon / model.period(), 1.0);
        for (int j = 0; j < sc.num_agents(); ++j)
          gammas[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)] = gamma_eval(model.position(j, q) - t.position, t.radius(j));
      }
      const auto st = simulate_kalman_bucy(t, gammas, horizon, fo);
      std::printf("target %d: empirical MSE %.6g, mean tr(Omega) %.6g, relative deviation %.4f\n", t.id,
                  st.empirical_mse, st.mean_trace, st.relative_deviation);
      csv += std::to_string(t.id) + "," + fmt(st.empirical_mse) + "," + fmt(st.mean_trace) + "," + fmt(st.relative_deviation) + "\n";
    }
    write_atomic(rc.out / "validate.csv", csv);
    return static_cast<int>(kConverged);
  });
}

int cmd_canonicalize(const RunConfig& rc, bool allow_non_isolated) {
  const Scenario sc = parse_scenario(rc.scenario, rc.seed);
  if (!rc.params) throw ConfigError("params", "canonicalize needs a policy document");
  const json& doc = *rc.params;
  const bool is_policy = doc.contains("agents") && doc["agents"].is_array() && !doc["agents"].empty() &&
                         doc["agents"][0].contains("breaks");
  Policy1D in;
  if (is_policy) {
    in = parse_policy_1d(doc);
  } else {
    if (sc.dimension != 1 || is_fourier_document(doc)) throw ConfigError("params", "canonicalize needs a 1D policy or dwell/move document");
    const Params1D p = parse_params_1d(doc);
    in = policy_from_params_1d(p, speed_bounds(sc), sc.horizon > 0.0 ? sc.horizon : p.T);
  }
  CanonicalizeOptions co;
  co.allow_non_isolated = allow_non_isolated;
  const Policy1D out = canonicalize_policy_1d(in, sc, co);
  const int steps = rc.descent.eval.steps;
  std::printf("cost before %.10g, after %.10g\n", policy_cost(sc, in, steps), policy_cost(sc, out, steps));
  for (std::size_t j = 0; j < out.agents.size(); ++j)
    std::printf("agent %zu: %d switches (bound %.4g)\n", j, switch_count(out.agents[j]),
                switch_bound(sc, out.horizon, sc.agents[j].u_max));
  write_atomic(rc.out / "policy_canonical.json", policy_to_json(out).dump(2) + "\n");
  return kConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persistent monitoring trajectory optimization"};
  app.require_subcommand(1);
  Flags f;
  bool allow_non_isolated = false;
  auto* init = app.add_subcommand("init", "MTSP schedule and initial parameter document");
  auto* optimize = app.add_subcommand("optimize", "Projected gradient descent");
  auto* validate = app.add_subcommand("validate", "Monte Carlo Kalman-Bucy check of the covariance");
  auto* canon = app.add_subcommand("canonicalize", "Bang/dwell form of a 1D policy");
  for (auto* s : {init, optimize, validate, canon}) add_common(s, f);
  canon->add_flag("--allow-non-isolated", allow_non_isolated, "Transform even when sensing regions overlap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    const RunConfig rc = resolve(f);
    if (*init) return cmd_init(rc);
    if (*optimize) return cmd_optimize(rc);
    if (*validate) return cmd_validate(rc);
    return cmd_canonicalize(rc, allow_non_isolated);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
