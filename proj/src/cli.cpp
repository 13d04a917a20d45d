#include "tdlab/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include "tdlab/bound_calculus.hpp"
#include "tdlab/config.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/report.hpp"
#include "tdlab/td_dynamics.hpp"

namespace tdlab {

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  std::optional<std::uint64_t> seed;
  std::optional<long> horizon;
  int jobs = 1;
};

class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

std::string output_dir(const CommonFlags& flags, const ProblemConfigFile& cfg) {
  if (flags.out_dir) return *flags.out_dir;
  if (const char* env = std::getenv("OUTPUT_DIR"); env && *env) return env;
  if (!cfg.output.dir.empty()) return cfg.output.dir;
  return ".";
}

bool wants(const CommonFlags& flags, const ProblemConfigFile& cfg, const std::string& fmt) {
  if (flags.format) return *flags.format == fmt;
  for (const auto& f : cfg.output.formats)
    if (f == fmt) return true;
  return false;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

StepSchedule require_schedule(const ProblemConfigFile& cfg) {
  if (!cfg.has_schedule) throw ParseError("config has no 'schedule' block");
  return build_schedule(cfg.schedule);
}

ExperimentConfig experiment_from(const ProblemConfigFile& cfg, const CommonFlags& flags, bool require_block) {
  if (require_block && !cfg.has_experiment) throw ParseError("config has no 'experiment' block");
  ExperimentConfig exp = cfg.experiment;
  if (flags.seed) exp.master_seed = *flags.seed;
  if (flags.horizon) exp.horizon = *flags.horizon;
  exp.jobs = flags.jobs;
  return exp;
}

void check_horizon_flag(const CommonFlags& flags, long n0) {
  if (flags.horizon && *flags.horizon <= n0) {
    std::ostringstream msg;
    msg << "--horizon " << *flags.horizon << " must exceed n0 = " << n0;
    throw UsageError(msg.str());
  }
}

int cmd_validate(const CommonFlags& flags, std::ostream& out) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  const PolicyEvalProblem problem = build_problem(cfg);
  out << "chain: ok (" << problem.n_states() << " states, irreducible, aperiodic)\n";
  out << "features: ok (" << problem.dim() << " features, full column rank)\n";
  const AssumptionReport& a = problem.assumption();
  out << "lambda_M: " << a.lambda_M << "\n";
  out << "threshold: " << a.threshold << "\n";
  out << "max_row_norm: " << a.max_row_norm << (a.row_condition_satisfied ? " (row condition holds)\n" : "\n");
  if (!a.satisfied) {
    std::ostringstream msg;
    msg << "feature-scale assumption violated: lambda_M = " << a.lambda_M << " >= " << a.threshold
        << "; scale Phi by a factor below " << a.suggested_rescale;
    throw AssumptionViolated(msg.str());
  }
  out << "assumption: satisfied\n";
  out << "alpha: " << contraction_factor(problem) << "\n";
  if (cfg.has_schedule) {
    const StepSchedule schedule = build_schedule(cfg.schedule);
    out << "schedule: ok (" << cfg.schedule.kind << ", d1=" << schedule.d1() << ", d2=" << schedule.d2()
        << ", d3=" << schedule.d3() << ")\n";
    if (cfg.has_experiment) {
      const AnalyticSolution sol = solve_analytic(problem);
      const N0Check check = check_n0(sol.constants, schedule, cfg.experiment.n0);
      out << "n0: " << cfg.experiment.n0 << " margin " << check.margin << ", smallest feasible n0 "
          << check.smallest_feasible_n0 << "\n";
      if (!check.feasible) {
        std::ostringstream msg;
        msg << "n0 = " << cfg.experiment.n0 << " violates alpha + a(n0) c1 < 1";
        if (check.smallest_feasible_n0 >= 0) msg << "; smallest feasible n0 is " << check.smallest_feasible_n0;
        throw InfeasibleQuery(msg.str());
      }
    }
  }
  out << "valid\n";
  return 0;
}

int cmd_solve(const CommonFlags& flags, std::ostream& out) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  const PolicyEvalProblem problem = build_problem(cfg);
  const AnalyticSolution sol = solve_analytic(problem);
  const std::string path = join_path(output_dir(flags, cfg), "solution.json");
  write_text_file(path, canonical_dump(to_json(problem, sol)));
  out << "wrote " << path << "\n";
  return 0;
}

int cmd_simulate(const CommonFlags& flags, bool log_noise, std::ostream& out) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  if (flags.horizon && *flags.horizon < 1) throw UsageError("--horizon must be at least 1");
  const StepSchedule schedule = require_schedule(cfg);
  const PolicyEvalProblem problem = build_problem(cfg);
  const AnalyticSolution sol = solve_analytic(problem);
  const ExperimentConfig exp = experiment_from(cfg, flags, false);

  RngStream rng(exp.master_seed, 0);
  OnlineRunOptions opts;
  opts.n0 = 0;
  opts.horizon = exp.horizon;
  opts.initial_x = exp.initial_x.size() == 0 ? Eigen::VectorXd::Zero(problem.dim()) : exp.initial_x;
  switch (exp.initial_state.kind) {
    case InitialStatePolicy::Kind::kStationary:
      opts.initial_state = sample_from(problem.stationary().pi, rng);
      break;
    case InitialStatePolicy::Kind::kUniform:
      opts.initial_state = std::min(problem.n_states() - 1, static_cast<int>(rng.uniform() * problem.n_states()));
      break;
    case InitialStatePolicy::Kind::kFixed:
      opts.initial_state = exp.initial_state.fixed_state;
      break;
  }
  opts.log_noise = log_noise;
  const TrajectoryRecord rec = run_online(problem, sol, schedule, opts, rng);
  const std::string dir = output_dir(flags, cfg);
  if (wants(flags, cfg, "csv")) {
    std::ostringstream csv;
    write_trajectory_csv(csv, rec, true);
    write_text_file(join_path(dir, "trajectory.csv"), csv.str());
    out << "wrote " << join_path(dir, "trajectory.csv") << "\n";
  }
  if (wants(flags, cfg, "json")) {
    write_text_file(join_path(dir, "trajectory.json"), canonical_dump(to_json(rec)));
    out << "wrote " << join_path(dir, "trajectory.json") << "\n";
  }
  return 0;
}

int cmd_bound(const CommonFlags& flags, bool infinite, std::optional<double> D_flag, std::optional<double> p_init_flag,
              std::ostream& out, std::ostream& err) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  if (!cfg.has_experiment) throw ParseError("config has no 'experiment' block");
  check_horizon_flag(flags, cfg.experiment.n0 - 1);
  const StepSchedule schedule = require_schedule(cfg);
  const PolicyEvalProblem problem = build_problem(cfg);
  const AnalyticSolution sol = solve_analytic(problem);
  const ExperimentConfig exp = experiment_from(cfg, flags, true);

  BoundQuery q;
  q.epsilon = exp.epsilon;
  q.delta = exp.delta;
  q.n0 = exp.n0;
  q.horizon = infinite ? kInfiniteHorizon : exp.horizon;
  if (D_flag)
    q.D_const = *D_flag;
  else if (exp.D_const)
    q.D_const = *exp.D_const;
  else
    throw UsageError("bound needs D: set experiment.D_const or pass --D");
  // Validate before any simulation.
  validate_query(q, sol.constants, schedule);
  if (p_init_flag) {
    q.p_init = *p_init_flag;
    q.p_init_source = "user";
  } else if (exp.p_init_bound) {
    q.p_init = *exp.p_init_bound;
    q.p_init_source = "analytic";
  } else {
    q.p_init = estimate_p_init(problem, sol, schedule, exp).estimate;
    q.p_init_source = "empirical";
  }
  const BoundReport report = evaluate_bound(q, sol.constants, schedule, exp.horizon);
  const std::string dir = output_dir(flags, cfg);
  if (wants(flags, cfg, "json")) {
    write_text_file(join_path(dir, "bound.json"), canonical_dump(to_json(report)));
    out << "wrote " << join_path(dir, "bound.json") << "\n";
  }
  if (wants(flags, cfg, "csv")) {
    std::ostringstream csv;
    write_bound_csv(csv, report);
    write_text_file(join_path(dir, "bound.csv"), csv.str());
    out << "wrote " << join_path(dir, "bound.csv") << "\n";
  }
  out << "prob_lower_bound: " << report.prob_lower_bound << "\n";
  if (report.vacuous)
    err << "warning: vacuous bound (tail sum " << report.tail.sum << ", p_init " << q.p_init
        << ", probability lower bound " << report.prob_lower_bound << ")\n";
  return 0;
}

int cmd_experiment(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  if (!cfg.has_experiment) throw ParseError("config has no 'experiment' block");
  check_horizon_flag(flags, cfg.experiment.n0);
  const StepSchedule schedule = require_schedule(cfg);
  const PolicyEvalProblem problem = build_problem(cfg);
  const AnalyticSolution sol = solve_analytic(problem);
  const ExperimentConfig exp = experiment_from(cfg, flags, true);
  const ExperimentResult result = run_alltime_experiment(problem, sol, schedule, exp);
  const std::string dir = output_dir(flags, cfg);
  if (wants(flags, cfg, "json")) {
    write_text_file(join_path(dir, "experiment.json"), canonical_dump(to_json(result)));
    out << "wrote " << join_path(dir, "experiment.json") << "\n";
  }
  if (wants(flags, cfg, "csv")) {
    std::ostringstream curve;
    write_experiment_curve_csv(curve, result);
    write_text_file(join_path(dir, "experiment_curve.csv"), curve.str());
    std::ostringstream summary;
    write_experiment_summary_csv(summary, result);
    write_text_file(join_path(dir, "experiment_summary.csv"), summary.str());
    out << "wrote " << join_path(dir, "experiment_curve.csv") << "\n";
    out << "wrote " << join_path(dir, "experiment_summary.csv") << "\n";
  }
  const GridPointResult& p = result.primary;
  out << "empirical_alltime_prob: " << p.alltime.estimate << " [" << p.alltime.lower << ", " << p.alltime.upper
      << "]\n";
  out << "theoretical_lower_bound: " << p.theoretical_lower_bound << " (D = " << result.D_used << ")\n";
  err << "wall_time_seconds: " << result.wall_time_seconds << "\n";
  if (p.theoretical_lower_bound <= 0.0) err << "warning: vacuous bound at the primary (epsilon, delta)\n";
  return 0;
}

int cmd_diagnose(const CommonFlags& flags, std::ostream& out) {
  const ProblemConfigFile cfg = load_config(flags.config_path);
  if (flags.horizon && *flags.horizon < 1) throw UsageError("--horizon must be at least 1");
  const StepSchedule schedule = require_schedule(cfg);
  const PolicyEvalProblem problem = build_problem(cfg);
  const AnalyticSolution sol = solve_analytic(problem);
  const ExperimentConfig exp = experiment_from(cfg, flags, false);
  const ConvergenceSummary summary = convergence_diagnostics(problem, sol, schedule, exp);
  const std::string dir = output_dir(flags, cfg);
  if (wants(flags, cfg, "json")) {
    write_text_file(join_path(dir, "convergence.json"), canonical_dump(to_json(summary)));
    out << "wrote " << join_path(dir, "convergence.json") << "\n";
  }
  if (wants(flags, cfg, "csv")) {
    std::ostringstream csv;
    write_convergence_csv(csv, summary);
    write_text_file(join_path(dir, "convergence.csv"), csv.str());
    out << "wrote " << join_path(dir, "convergence.csv") << "\n";
  }
  out << "log_log_slope: " << summary.log_log_slope << "\n";
  return 0;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_sim) {
  cmd->add_option("config", flags.config_path, "Problem config (JSON)")->required();
  cmd->add_option("--out", flags.out_dir, "Output directory (overrides OUTPUT_DIR and the config)");
  if (with_sim) {
    cmd->add_option("--format", flags.format, "Write only this format")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--seed", flags.seed, "Override experiment.master_seed");
    cmd->add_option("--horizon", flags.horizon, "Override experiment.horizon");
    cmd->add_option("--jobs", flags.jobs, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"TD(0) linear function approximation laboratory", "tdlab"};
  app.require_subcommand(1);
  CommonFlags flags;
  bool log_noise = false;
  bool infinite = false;
  std::optional<double> D_flag;
  std::optional<double> p_init_flag;

  auto* validate = app.add_subcommand("validate", "Check a problem config and report the assumption verdicts");
  add_common(validate, flags, false);
  auto* solve = app.add_subcommand("solve", "Write the analytic solution and constants");
  add_common(solve, flags, false);
  auto* simulate = app.add_subcommand("simulate", "Run one TD(0) trajectory");
  add_common(simulate, flags, true);
  simulate->add_flag("--noise", log_noise, "Log and check the per-step noise decomposition");
  auto* bound = app.add_subcommand("bound", "Evaluate the all-time bound");
  add_common(bound, flags, true);
  bound->add_flag("--infinite", infinite, "Sum the tail over all m > n0");
  bound->add_option("--D", D_flag, "Tail constant D (overrides experiment.D_const)");
  bound->add_option("--p-init", p_init_flag, "Bound on P(||x_n0 - x*|| > epsilon)");
  auto* experiment = app.add_subcommand("experiment", "Monte Carlo check of the all-time bound");
  add_common(experiment, flags, true);
  auto* diagnose = app.add_subcommand("diagnose", "Error quantiles across trajectories");
  add_common(diagnose, flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*validate) return cmd_validate(flags, out);
    if (*solve) return cmd_solve(flags, out);
    if (*simulate) return cmd_simulate(flags, log_noise, out);
    if (*bound) return cmd_bound(flags, infinite, D_flag, p_init_flag, out, err);
    if (*experiment) return cmd_experiment(flags, out, err);
    if (*diagnose) return cmd_diagnose(flags, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.family() == Error::Family::kValidation ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace tdlab
