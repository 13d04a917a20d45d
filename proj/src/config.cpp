#include "tdlab/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& source, const std::string& path, const std::string& what) {
  throw ParseError(source + ": field '" + path + "': " + what);
}

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  const json& require(const json& obj, const std::string& path, const char* key) const {
    if (!obj.is_object()) field_error(source_, path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) field_error(source_, join(path, key), "missing required field");
    return *it;
  }

  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) field_error(source_, path, "expected a number, got " + std::string(v.type_name()));
    return v.get<double>();
  }

  long integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) field_error(source_, path, "expected an integer, got " + std::string(v.type_name()));
    return v.get<long>();
  }

  std::uint64_t unsigned_integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long>() < 0))
      field_error(source_, path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const json& v, const std::string& path) const {
    if (!v.is_string()) field_error(source_, path, "expected a string, got " + std::string(v.type_name()));
    return v.get<std::string>();
  }

  std::vector<double> vector(const json& v, const std::string& path) const {
    if (!v.is_array()) field_error(source_, path, "expected an array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

  Eigen::VectorXd eigen_vector(const json& v, const std::string& path) const {
    const std::vector<double> values = vector(v, path);
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  Eigen::MatrixXd matrix(const json& v, const std::string& path) const {
    if (!v.is_array() || v.empty()) field_error(source_, path, "expected a non-empty array of rows");
    const size_t rows = v.size();
    size_t cols = 0;
    Eigen::MatrixXd out;
    for (size_t i = 0; i < rows; ++i) {
      const std::string row_path = path + "[" + std::to_string(i) + "]";
      const std::vector<double> row = vector(v[i], row_path);
      if (i == 0) {
        cols = row.size();
        if (cols == 0) field_error(source_, row_path, "rows must not be empty");
        out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      } else if (row.size() != cols) {
        field_error(source_, row_path,
                    "has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
      }
      for (size_t j = 0; j < cols; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return out;
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

// Line and column of a byte offset, both 1-based.
std::pair<size_t, size_t> line_column(const std::string& text, size_t byte) {
  size_t line = 1;
  size_t col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

ScheduleSpec parse_schedule(const Reader& rd, const json& s) {
  if (!s.is_object()) field_error(rd.source(), "schedule", "expected an object");
  ScheduleSpec spec;
  spec.kind = rd.string(rd.require(s, "schedule", "kind"), "schedule.kind");
  if (spec.kind != "harmonic" && spec.kind != "polynomial" && spec.kind != "table")
    field_error(rd.source(), "schedule.kind", "must be one of harmonic, polynomial, table (got '" + spec.kind + "')");
  for (const char* key : {"d1", "d2", "d3"}) {
    auto it = s.find(key);
    if (it == s.end()) continue;
    const double v = rd.number(*it, std::string("schedule.") + key);
    if (key[1] == '1') spec.d1 = v;
    if (key[1] == '2') spec.d2 = v;
    if (key[1] == '3') spec.d3 = v;
  }
  if (auto it = s.find("values"); it != s.end()) spec.values = rd.vector(*it, "schedule.values");
  if (auto it = s.find("valid_from"); it != s.end()) spec.valid_from = rd.integer(*it, "schedule.valid_from");
  if (auto it = s.find("check_horizon"); it != s.end())
    spec.check_horizon = rd.integer(*it, "schedule.check_horizon");

  if (spec.kind == "harmonic" && !spec.d1) field_error(rd.source(), "schedule.d1", "missing required field");
  if (spec.kind == "polynomial") {
    if (!spec.d3) field_error(rd.source(), "schedule.d3", "missing required field");
    if (!spec.d2) field_error(rd.source(), "schedule.d2", "missing required field");
    if (!spec.d1) field_error(rd.source(), "schedule.d1", "missing required field");
  }
  if (spec.kind == "table") {
    if (spec.values.empty()) field_error(rd.source(), "schedule.values", "table schedules need a non-empty list");
    for (const char* key : {"d1", "d2", "d3"})
      if ((key[1] == '1' && !spec.d1) || (key[1] == '2' && !spec.d2) || (key[1] == '3' && !spec.d3))
        field_error(rd.source(), std::string("schedule.") + key, "missing required field");
  }
  return spec;
}

ExperimentConfig parse_experiment(const Reader& rd, const json& e) {
  if (!e.is_object()) field_error(rd.source(), "experiment", "expected an object");
  ExperimentConfig c;
  auto opt = [&](const char* key) -> const json* {
    auto it = e.find(key);
    return it == e.end() ? nullptr : &*it;
  };
  const std::string p = "experiment.";
  if (auto* v = opt("n0")) c.n0 = rd.integer(*v, p + "n0");
  if (auto* v = opt("horizon")) c.horizon = rd.integer(*v, p + "horizon");
  if (auto* v = opt("n_trajectories")) c.n_trajectories = rd.integer(*v, p + "n_trajectories");
  if (auto* v = opt("master_seed")) c.master_seed = rd.unsigned_integer(*v, p + "master_seed");
  if (auto* v = opt("epsilon")) c.epsilon = rd.number(*v, p + "epsilon");
  if (auto* v = opt("delta")) c.delta = rd.number(*v, p + "delta");
  if (auto* v = opt("epsilon_grid")) c.epsilon_grid = rd.vector(*v, p + "epsilon_grid");
  if (auto* v = opt("delta_grid")) c.delta_grid = rd.vector(*v, p + "delta_grid");
  if (auto* v = opt("D_const"); v && !v->is_null()) c.D_const = rd.number(*v, p + "D_const");
  if (auto* v = opt("p_init_bound"); v && !v->is_null()) c.p_init_bound = rd.number(*v, p + "p_init_bound");
  if (auto* v = opt("initial_x")) c.initial_x = rd.eigen_vector(*v, p + "initial_x");
  if (auto* v = opt("fit_delta_grid")) c.fit_delta_grid = rd.vector(*v, p + "fit_delta_grid");
  if (auto* v = opt("fit_m_points")) c.fit_m_points = static_cast<int>(rd.integer(*v, p + "fit_m_points"));
  if (auto* v = opt("quantile_points")) c.quantile_points = static_cast<int>(rd.integer(*v, p + "quantile_points"));
  if (auto* v = opt("initial_state_policy")) {
    const std::string policy = rd.string(*v, p + "initial_state_policy");
    if (policy == "stationary") {
      c.initial_state.kind = InitialStatePolicy::Kind::kStationary;
    } else if (policy == "uniform") {
      c.initial_state.kind = InitialStatePolicy::Kind::kUniform;
    } else if (policy == "fixed") {
      c.initial_state.kind = InitialStatePolicy::Kind::kFixed;
      c.initial_state.fixed_state =
          static_cast<StateIndex>(rd.integer(rd.require(e, "experiment", "initial_state"), p + "initial_state"));
    } else {
      field_error(rd.source(), p + "initial_state_policy",
                  "must be one of stationary, uniform, fixed (got '" + policy + "')");
    }
  }
  if (c.n_trajectories < 1) field_error(rd.source(), p + "n_trajectories", "must be at least 1");
  if (c.n0 < 1) field_error(rd.source(), p + "n0", "must be at least 1");
  if (c.horizon <= c.n0) field_error(rd.source(), p + "horizon", "must exceed n0");
  return c;
}

}  // namespace

ProblemConfigFile parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream msg;
    msg << source << ":" << line << ":" << col << ": malformed JSON: " << e.what();
    throw ParseError(msg.str());
  }
  const Reader rd(source);
  if (!doc.is_object()) field_error(source, "<root>", "expected an object");

  ProblemConfigFile cfg;
  cfg.P = rd.matrix(rd.require(rd.require(doc, "", "chain"), "chain", "P"), "chain.P");
  cfg.r = rd.eigen_vector(rd.require(rd.require(doc, "", "rewards"), "rewards", "r"), "rewards.r");
  cfg.gamma = rd.number(rd.require(doc, "", "gamma"), "gamma");
  cfg.Phi = rd.matrix(rd.require(rd.require(doc, "", "features"), "features", "Phi"), "features.Phi");

  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) {
    std::ostringstream msg;
    msg << "must lie strictly between 0 and 1 (got " << cfg.gamma << ")";
    field_error(source, "gamma", msg.str());
  }
  if (cfg.P.rows() != cfg.P.cols())
    field_error(source, "chain.P", "must be square (got " + std::to_string(cfg.P.rows()) + "x" +
                                       std::to_string(cfg.P.cols()) + ")");
  if (cfg.r.size() != cfg.P.rows())
    field_error(source, "rewards.r",
                "has " + std::to_string(cfg.r.size()) + " entries, expected " + std::to_string(cfg.P.rows()));
  if (cfg.Phi.rows() != cfg.P.rows())
    field_error(source, "features.Phi",
                "has " + std::to_string(cfg.Phi.rows()) + " rows, expected " + std::to_string(cfg.P.rows()));

  if (auto it = doc.find("schedule"); it != doc.end()) {
    cfg.schedule = parse_schedule(rd, *it);
    cfg.has_schedule = true;
  }
  if (auto it = doc.find("experiment"); it != doc.end()) {
    cfg.experiment = parse_experiment(rd, *it);
    cfg.has_experiment = true;
  }
  if (auto it = doc.find("output"); it != doc.end()) {
    if (!it->is_object()) field_error(source, "output", "expected an object");
    if (auto d = it->find("dir"); d != it->end()) cfg.output.dir = rd.string(*d, "output.dir");
    if (auto f = it->find("formats"); f != it->end()) {
      if (!f->is_array()) field_error(source, "output.formats", "expected an array of strings");
      cfg.output.formats.clear();
      for (size_t i = 0; i < f->size(); ++i) {
        const std::string path = "output.formats[" + std::to_string(i) + "]";
        const std::string fmt = rd.string((*f)[i], path);
        if (fmt != "json" && fmt != "csv") field_error(source, path, "must be json or csv");
        cfg.output.formats.push_back(fmt);
      }
    }
  }
  return cfg;
}

ProblemConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

MarkovChain build_chain(const ProblemConfigFile& config) {
  return MarkovChain::build(config.P);
}

PolicyEvalProblem build_problem(const ProblemConfigFile& config) {
  MarkovChain chain = build_chain(config);
  FeatureMap features = FeatureMap::build(config.Phi);
  return PolicyEvalProblem::create(std::move(chain), config.r, config.gamma, std::move(features));
}

StepSchedule build_schedule(const ScheduleSpec& spec) {
  StepSchedule::Options opts;
  opts.valid_from = spec.valid_from;
  opts.check_horizon = spec.check_horizon;
  auto need = [&](const std::optional<double>& v, const char* name) {
    if (!v) throw InvalidSchedule(spec.kind + " schedule needs " + name);
    return *v;
  };
  if (spec.kind == "harmonic") {
    const double d1 = need(spec.d1, "d1");
    return StepSchedule::harmonic(d1, spec.d2.value_or(1.0), spec.d3.value_or(d1), opts);
  }
  if (spec.kind == "polynomial")
    return StepSchedule::polynomial(need(spec.d3, "d3"), need(spec.d2, "d2"), need(spec.d1, "d1"), opts);
  if (spec.kind == "table")
    return StepSchedule::table(spec.values, need(spec.d1, "d1"), need(spec.d2, "d2"), need(spec.d3, "d3"),
                               spec.valid_from);
  throw InvalidSchedule("unknown schedule kind '" + spec.kind + "'");
}

}  // namespace tdlab
