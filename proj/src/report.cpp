#include "tdlab/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json mat(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

// Shortest decimal that round-trips, matching the JSON output.
std::string num(double v) {
  json j = v;
  return j.dump();
}

json proportion(const ProportionEstimate& p) {
  return {{"estimate", p.estimate}, {"lower", p.lower}, {"upper", p.upper},
          {"successes", p.successes}, {"trials", p.trials}};
}

json grid_point(const GridPointResult& g) {
  return {{"epsilon", g.epsilon},
          {"delta", g.delta},
          {"violations", g.violations},
          {"empirical_alltime_prob", proportion(g.alltime)},
          {"empirical_p_init", proportion(g.p_init)},
          {"p_init_used", g.p_init_used},
          {"floor_term", g.floor_term},
          {"tail_sum", g.tail_sum},
          {"theoretical_lower_bound", g.theoretical_lower_bound},
          {"consistent", g.consistent}};
}

}  // namespace

json to_json(const PolicyEvalProblem& problem, const AnalyticSolution& s) {
  const ConstantsBundle& k = s.constants;
  const AssumptionReport& a = problem.assumption();
  json poisson_U = json::array();
  json poisson_W = json::array();
  for (const auto& u : s.poisson.U) poisson_U.push_back(vec(u));
  for (const auto& w : s.poisson.W) poisson_W.push_back(mat(w));
  return {
      {"n_states", problem.n_states()},
      {"dim", problem.dim()},
      {"gamma", problem.gamma()},
      {"pi", vec(s.pi.pi)},
      {"x_star", vec(s.x_star)},
      {"V_exact", vec(s.V_exact)},
      {"V_approx", vec(s.V_approx)},
      {"assumption",
       {{"lambda_M", a.lambda_M},
        {"threshold", a.threshold},
        {"satisfied", a.satisfied},
        {"max_row_norm", a.max_row_norm},
        {"row_condition_satisfied", a.row_condition_satisfied},
        {"suggested_rescale", a.suggested_rescale}}},
      {"poisson",
       {{"anchor_state", s.poisson.anchor_state},
        {"U", poisson_U},
        {"W", poisson_W},
        {"max_residual_U", s.poisson.max_residual_U},
        {"max_residual_W", s.poisson.max_residual_W}}},
      {"constants",
       {{"U_max", k.U_max},
        {"W_max", k.W_max},
        {"M_max", k.M_max},
        {"K1", k.K1},
        {"K2", k.K2},
        {"c1", k.c1},
        {"c2", k.c2},
        {"c3", k.c3},
        {"alpha", k.alpha},
        {"lambda_M", k.lambda_M},
        {"x_star_norm", k.x_star_norm}}},
      {"residuals",
       {{"fixed_point", s.fixed_point_residual}, {"projection", s.projection_residual}}},
  };
}

json to_json(const BoundReport& r) {
  const BoundQuery& q = r.query;
  json horizon = q.horizon == kInfiniteHorizon ? json("infinite") : json(q.horizon);
  return {
      {"epsilon", q.epsilon},
      {"delta", q.delta},
      {"n0", q.n0},
      {"horizon", horizon},
      {"D_const", q.D_const},
      {"p_init", q.p_init},
      {"p_init_source", q.p_init_source},
      {"alpha", r.alpha},
      {"c1", r.c1},
      {"c2", r.c2},
      {"margin", r.margin},
      {"floor_term", r.floor_term},
      {"radius_at_n0", r.radius.empty() ? 0.0 : r.radius.front()},
      {"radius_at_curve_end", r.radius.empty() ? 0.0 : r.radius.back()},
      {"curve_end", r.curve_end},
      {"tail_sum", r.tail.sum},
      {"tail_branch", r.tail.quadratic_branch ? "delta<=C" : "delta>C"},
      {"branch_C", r.tail.branch_C},
      {"series_terms", r.tail.terms_summed},
      {"series_remainder_bound", r.tail.remainder_bound},
      {"prob_lower_bound", r.prob_lower_bound},
      {"vacuous", r.vacuous},
  };
}

json to_json(const ExperimentResult& r) {
  const ExperimentConfig& c = r.config;
  json grid = json::array();
  for (const auto& g : r.grid) grid.push_back(grid_point(g));
  json per_m = json::array();
  for (const auto& [m, count] : r.per_m_violations) per_m.push_back({m, count});
  json doc = {
      {"n0", c.n0},
      {"horizon", c.horizon},
      {"n_trajectories", c.n_trajectories},
      {"master_seed", c.master_seed},
      {"epsilon", c.epsilon},
      {"delta", c.delta},
      {"D_used", r.D_used},
      {"D_source", r.fit ? "fitted" : "config"},
      {"p_init_source", r.p_init_source},
      {"primary", grid_point(r.primary)},
      {"grid", grid},
      {"per_m_violation_counts", per_m},
  };
  if (r.fit) {
    json points = json::array();
    for (const auto& p : r.fit->points) points.push_back({{"m", p.m}, {"delta", p.delta}, {"p_hat", p.p_hat}});
    doc["fit"] = {{"D", r.fit->D},
                  {"D_envelope", r.fit->D_envelope},
                  {"n_points", r.fit->n_points},
                  {"rms_residual", r.fit->rms_residual},
                  {"points", points}};
  }
  return doc;
}

json to_json(const ConvergenceSummary& s) {
  json steps = json::array();
  for (long n : s.steps) steps.push_back(n);
  json q25 = json::array(), med = json::array(), q75 = json::array();
  for (size_t j = 0; j < s.steps.size(); ++j) {
    q25.push_back(s.q25[j]);
    med.push_back(s.median[j]);
    q75.push_back(s.q75[j]);
  }
  return {{"steps", steps}, {"q25", q25}, {"median", med}, {"q75", q75}, {"log_log_slope", s.log_log_slope}};
}

json to_json(const TrajectoryRecord& r) {
  json doc = {{"n0", r.n0},
              {"horizon", r.horizon},
              {"states", r.states},
              {"error", r.error},
              {"deviation", r.deviation},
              {"x_prime", r.x_prime},
              {"final_x", vec(r.final_x)},
              {"final_state", r.final_state}};
  if (!r.noise.empty()) doc["max_reconstruction_residual"] = r.max_reconstruction_residual;
  return doc;
}

std::string canonical_dump(const json& doc) { return doc.dump(2) + "\n"; }

void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& r, bool with_components) {
  const bool comps = with_components && r.full_history && !r.x.empty();
  const Eigen::Index d = comps ? r.x.front().size() : 0;
  out << "n,Y_n,err,dev,x_prime";
  for (Eigen::Index c = 0; c < d; ++c) out << ",x_" << c;
  out << "\n";
  for (size_t j = 0; j < r.error.size(); ++j) {
    out << r.n0 + static_cast<long>(j) << "," << r.states[j] << "," << num(r.error[j]) << "," << num(r.deviation[j])
        << "," << num(r.x_prime[j]);
    for (Eigen::Index c = 0; c < d; ++c) out << "," << num(r.x[j](c));
    out << "\n";
  }
}

void write_bound_csv(std::ostream& out, const BoundReport& r) {
  out << "m,radius,tail_term,cumulative_tail\n";
  double cumulative = 0.0;
  for (size_t j = 0; j < r.radius.size(); ++j) {
    const double term = j == 0 ? 0.0 : r.tail_terms[j - 1];
    cumulative += term;
    out << r.query.n0 + static_cast<long>(j) << "," << num(r.radius[j]) << "," << num(term) << ","
        << num(cumulative) << "\n";
  }
}

void write_experiment_curve_csv(std::ostream& out, const ExperimentResult& r) {
  out << "m,radius,err_median,err_q90,err_max,violations\n";
  const long n0 = r.config.n0;
  size_t q = 0;
  size_t v = 0;
  for (size_t j = 0; j < r.radius.size(); ++j) {
    const long m = n0 + static_cast<long>(j);
    out << m << "," << num(r.radius[j]) << ",";
    if (q < r.quantile_steps.size() && r.quantile_steps[q] == m) {
      out << num(r.error_median[q]) << "," << num(r.error_q90[q]) << "," << num(r.error_max[q]);
      ++q;
    } else {
      out << ",,";
    }
    long count = 0;
    if (v < r.per_m_violations.size() && r.per_m_violations[v].first == m) count = r.per_m_violations[v++].second;
    out << "," << count << "\n";
  }
}

void write_experiment_summary_csv(std::ostream& out, const ExperimentResult& r) {
  out << "epsilon,delta,violations,alltime_prob,alltime_lower,alltime_upper,p_init_empirical,p_init_used,"
         "floor_term,tail_sum,theoretical_lower_bound,consistent\n";
  for (const auto& g : r.grid)
    out << num(g.epsilon) << "," << num(g.delta) << "," << g.violations << "," << num(g.alltime.estimate) << ","
        << num(g.alltime.lower) << "," << num(g.alltime.upper) << "," << num(g.p_init.estimate) << ","
        << num(g.p_init_used) << "," << num(g.floor_term) << "," << num(g.tail_sum) << ","
        << num(g.theoretical_lower_bound) << "," << (g.consistent ? 1 : 0) << "\n";
}

void write_convergence_csv(std::ostream& out, const ConvergenceSummary& s) {
  out << "n,q25,median,q75\n";
  for (size_t j = 0; j < s.steps.size(); ++j)
    out << s.steps[j] << "," << num(s.q25[j]) << "," << num(s.median[j]) << "," << num(s.q75[j]) << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file " + path);
  out << content;
  if (!out) throw ValidationError("failed while writing " + path);
}

}  // namespace tdlab
