#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tdlab/analytic.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

struct ScheduleSpec {
  std::string kind = "harmonic";  // harmonic | polynomial | table
  std::optional<double> d1;
  std::optional<double> d2;
  std::optional<double> d3;
  std::vector<double> values;
  long valid_from = 0;
  long check_horizon = 100'000;
};

struct OutputSpec {
  std::string dir;
  std::vector<std::string> formats{"json", "csv"};
};

/// Parsed problem document. Matrices are row-major arrays of arrays.
struct ProblemConfigFile {
  Eigen::MatrixXd P;
  Eigen::VectorXd r;
  double gamma = 0.0;
  Eigen::MatrixXd Phi;
  ScheduleSpec schedule;
  bool has_schedule = false;
  ExperimentConfig experiment;
  bool has_experiment = false;
  OutputSpec output;
};

/// Parses a JSON document. Syntax errors report line and column; semantic
/// errors report the field path (for example `chain.P[1][0]`).
ProblemConfigFile parse_config(const std::string& text, const std::string& source = "<config>");
ProblemConfigFile load_config(const std::string& path);

/// Builds and validates the domain objects. Errors carry the config field.
MarkovChain build_chain(const ProblemConfigFile& config);
PolicyEvalProblem build_problem(const ProblemConfigFile& config);
StepSchedule build_schedule(const ScheduleSpec& spec);

}  // namespace tdlab
