#include "psel/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "psel/errors.hpp"

namespace psel {

namespace {

using json = nlohmann::json;

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::InvalidArgument, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail(ErrorCode::InvalidArgument, "unknown key '" + key + "' in " + where);
  }
}

Vector to_vector(const json& arr, const std::string& where) {
  if (!arr.is_array()) fail(ErrorCode::InvalidArgument, where + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) fail(ErrorCode::InvalidArgument, where + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

std::vector<double> to_doubles(const json& arr, const std::string& where) {
  const Vector v = to_vector(arr, where);
  return {v.data(), v.data() + v.size()};
}

json from_vector(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

template <class T>
T get_number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(ErrorCode::InvalidArgument, where + "." + key + " must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return v.get<T>();
      if (v.get<long long>() < 0) fail(ErrorCode::InvalidArgument, where + "." + key + " must be nonnegative");
    }
  } else {
    if (!v.is_number()) fail(ErrorCode::InvalidArgument, where + "." + key + " must be a number");
  }
  return v.get<T>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail(ErrorCode::InvalidArgument, where + "." + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

Family parse_family(const std::string& name) {
  if (name == "gaussian_linear" || name == "gaussian") return Family::GaussianLinear;
  if (name == "exponential") return Family::Exponential;
  if (name == "uniform") return Family::Uniform;
  fail(ErrorCode::InvalidArgument, "unknown family '" + name + "'");
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json model;
  model["family"] = family_name(cfg.model.family);
  model["M"] = cfg.model.M;
  model["N"] = cfg.model.N;
  if (cfg.model.family == Family::GaussianLinear) model["noise_variances"] = cfg.model.noise_variances;
  doc["model"] = model;
  doc["theta_true"] = from_vector(cfg.theta_true);
  nlohmann::ordered_json rule;
  rule["kind"] = cfg.rule.kind == RuleKind::SMS ? "sms" : "randomized";
  if (cfg.rule.kind == RuleKind::Randomized) rule["weights"] = cfg.rule.weights;
  doc["rule"] = rule;
  doc["estimators"] = cfg.estimators;
  doc["replications"] = cfg.replications;
  doc["seed"] = cfg.seed;
  nlohmann::ordered_json sweep;
  switch (cfg.sweep.axis) {
    case SweepAxis::None: sweep["axis"] = "none"; break;
    case SweepAxis::N: sweep["axis"] = "N"; break;
    case SweepAxis::Theta: sweep["axis"] = "theta"; break;
  }
  if (cfg.sweep.axis == SweepAxis::Theta) sweep["component"] = cfg.sweep.component + 1;
  if (cfg.sweep.axis != SweepAxis::None) sweep["grid"] = cfg.sweep.grid;
  doc["sweep"] = sweep;
  nlohmann::ordered_json solver;
  solver["max_iterations"] = cfg.solver.max_iterations;
  solver["score_tolerance"] = cfg.solver.score_tolerance;
  solver["step_damping"] = cfg.solver.step_damping;
  if (cfg.solver.initial_theta) {
    solver["initializer"] = from_vector(*cfg.solver.initial_theta);
  } else {
    solver["initializer"] = "ml";
  }
  doc["solver"] = solver;
  doc["grid_resolution"] = cfg.grid_resolution;
  nlohmann::ordered_json ipsml;
  ipsml["K"] = cfg.ipsml.K;
  if (cfg.ipsml.fd_step) {
    ipsml["fd_step"] = *cfg.ipsml.fd_step;
  } else {
    ipsml["fd_step"] = nullptr;
  }
  ipsml["seed"] = cfg.ipsml.seed;
  ipsml["relaxation"] = cfg.ipsml.fisher ? "fisher" : "newton";
  ipsml["theta_tolerance"] = cfg.ipsml.theta_tolerance;
  doc["ipsml"] = ipsml;
  doc["workers"] = cfg.workers;
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  try {
    only_keys(doc, {"model", "theta_true", "rule", "estimators", "replications", "seed", "sweep", "solver",
                    "grid_resolution", "ipsml", "workers"},
              "config");
    ExperimentConfig cfg;
    if (!doc.contains("model")) fail(ErrorCode::InvalidArgument, "config.model is required");
    const json& model = doc.at("model");
    only_keys(model, {"family", "M", "N", "noise_variances"}, "model");
    cfg.model.family = parse_family(get_string(model, "family", "model"));
    cfg.model.N = model.contains("N") ? get_number<int>(model, "N", "model") : 1;
    if (model.contains("noise_variances")) cfg.model.noise_variances = to_doubles(model.at("noise_variances"), "model.noise_variances");
    if (model.contains("M")) {
      cfg.model.M = get_number<int>(model, "M", "model");
    } else {
      cfg.model.M = cfg.model.family == Family::GaussianLinear ? static_cast<int>(cfg.model.noise_variances.size()) : 2;
    }
    cfg.model.validate();

    if (!doc.contains("theta_true")) fail(ErrorCode::InvalidArgument, "config.theta_true is required");
    cfg.theta_true = to_vector(doc.at("theta_true"), "theta_true");
    validate_theta(cfg.model, cfg.theta_true);

    if (doc.contains("rule")) {
      const json& rule = doc.at("rule");
      only_keys(rule, {"kind", "weights"}, "rule");
      const std::string kind = get_string(rule, "kind", "rule");
      if (kind == "sms") {
        cfg.rule = SelectionRule::sms();
        if (rule.contains("weights")) fail(ErrorCode::InvalidArgument, "rule.weights only apply to randomized rules");
      } else if (kind == "randomized") {
        if (!rule.contains("weights")) fail(ErrorCode::InvalidArgument, "randomized rule needs weights");
        cfg.rule = SelectionRule::randomized(to_doubles(rule.at("weights"), "rule.weights"));
      } else {
        fail(ErrorCode::InvalidArgument, "unknown rule kind '" + kind + "'");
      }
    }

    if (doc.contains("estimators")) {
      const json& ids = doc.at("estimators");
      if (!ids.is_array()) fail(ErrorCode::InvalidArgument, "estimators must be an array of strings");
      cfg.estimators.clear();
      for (const auto& id : ids) {
        if (!id.is_string()) fail(ErrorCode::InvalidArgument, "estimators must be an array of strings");
        cfg.estimators.push_back(id.get<std::string>());
      }
    } else {
      cfg.estimators = {"ml"};
    }
    if (doc.contains("replications")) cfg.replications = get_number<long long>(doc, "replications", "config");
    if (doc.contains("seed")) cfg.seed = get_number<std::uint64_t>(doc, "seed", "config");
    if (doc.contains("workers")) cfg.workers = get_number<int>(doc, "workers", "config");
    if (doc.contains("grid_resolution")) cfg.grid_resolution = get_number<int>(doc, "grid_resolution", "config");

    if (doc.contains("sweep")) {
      const json& sweep = doc.at("sweep");
      only_keys(sweep, {"axis", "component", "grid"}, "sweep");
      const std::string axis = get_string(sweep, "axis", "sweep");
      if (axis == "none") {
        cfg.sweep.axis = SweepAxis::None;
      } else if (axis == "N") {
        cfg.sweep.axis = SweepAxis::N;
      } else if (axis == "theta") {
        cfg.sweep.axis = SweepAxis::Theta;
        if (!sweep.contains("component")) fail(ErrorCode::InvalidArgument, "theta sweep needs a component");
        cfg.sweep.component = get_number<int>(sweep, "component", "sweep") - 1;
      } else {
        fail(ErrorCode::InvalidArgument, "unknown sweep axis '" + axis + "'");
      }
      if (cfg.sweep.axis != SweepAxis::None) {
        if (!sweep.contains("grid")) fail(ErrorCode::InvalidArgument, "sweep.grid is required");
        cfg.sweep.grid = to_doubles(sweep.at("grid"), "sweep.grid");
      }
    }

    if (doc.contains("solver")) {
      const json& solver = doc.at("solver");
      only_keys(solver, {"max_iterations", "score_tolerance", "step_damping", "initializer"}, "solver");
      if (solver.contains("max_iterations")) cfg.solver.max_iterations = get_number<int>(solver, "max_iterations", "solver");
      if (solver.contains("score_tolerance")) cfg.solver.score_tolerance = get_number<double>(solver, "score_tolerance", "solver");
      if (solver.contains("step_damping")) cfg.solver.step_damping = get_number<double>(solver, "step_damping", "solver");
      if (solver.contains("initializer")) {
        const json& init = solver.at("initializer");
        if (init.is_string()) {
          if (init.get<std::string>() != "ml") fail(ErrorCode::InvalidArgument, "solver.initializer must be \"ml\" or an array");
        } else {
          cfg.solver.initial_theta = to_vector(init, "solver.initializer");
        }
      }
    }

    if (doc.contains("ipsml")) {
      const json& ip = doc.at("ipsml");
      only_keys(ip, {"K", "fd_step", "seed", "relaxation", "theta_tolerance"}, "ipsml");
      if (ip.contains("K")) cfg.ipsml.K = get_number<long long>(ip, "K", "ipsml");
      if (ip.contains("fd_step") && !ip.at("fd_step").is_null()) cfg.ipsml.fd_step = get_number<double>(ip, "fd_step", "ipsml");
      if (ip.contains("seed")) cfg.ipsml.seed = get_number<std::uint64_t>(ip, "seed", "ipsml");
      if (ip.contains("relaxation")) {
        const std::string r = get_string(ip, "relaxation", "ipsml");
        if (r != "fisher" && r != "newton") fail(ErrorCode::InvalidArgument, "ipsml.relaxation must be fisher or newton");
        cfg.ipsml.fisher = r == "fisher";
      }
      if (ip.contains("theta_tolerance")) cfg.ipsml.theta_tolerance = get_number<double>(ip, "theta_tolerance", "ipsml");
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::InvalidArgument, std::string("config schema: ") + ex.what());
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + ex.what());
  }
  return config_from_json(doc);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

}  // namespace psel
