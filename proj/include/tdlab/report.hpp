#pragma once

#include <json.hpp>
#include <ostream>
#include <string>

#include "tdlab/analytic.hpp"
#include "tdlab/bound_calculus.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/td_dynamics.hpp"

namespace tdlab {

// JSON objects use sorted keys (nlohmann::json is map-backed), and doubles
// print in shortest round-trip form, so equal inputs give equal bytes.

nlohmann::json to_json(const PolicyEvalProblem& problem, const AnalyticSolution& solution);
nlohmann::json to_json(const BoundReport& report);
/// Excludes the wall time so that reruns are byte-identical.
nlohmann::json to_json(const ExperimentResult& result);
nlohmann::json to_json(const ConvergenceSummary& summary);
nlohmann::json to_json(const TrajectoryRecord& record);

/// Pretty-printed JSON followed by a newline.
std::string canonical_dump(const nlohmann::json& doc);

/// Columns n, Y_n, err, dev, x_prime, then x_0..x_{d-1} when the full
/// iterate history is present and `with_components` is set.
void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& record, bool with_components);
/// Columns m, radius, tail_term, cumulative_tail.
void write_bound_csv(std::ostream& out, const BoundReport& report);
/// Columns m, radius, err_median, err_q90, err_max, violations. Quantile
/// columns are empty at steps without quantiles.
void write_experiment_curve_csv(std::ostream& out, const ExperimentResult& result);
/// One row per (epsilon, delta) grid point.
void write_experiment_summary_csv(std::ostream& out, const ExperimentResult& result);
/// Columns n, q25, median, q75.
void write_convergence_csv(std::ostream& out, const ConvergenceSummary& summary);

/// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace tdlab
