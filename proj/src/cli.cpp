#include "psel/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "psel/batching.hpp"
#include "psel/bounds.hpp"
#include "psel/config.hpp"
#include "psel/csv.hpp"
#include "psel/errors.hpp"
#include "psel/montecarlo.hpp"

namespace psel {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<long long> reps;
  bool fast = false;
  std::optional<int> workers;
  std::string out = ".";
  bool dump_config = false;
};

std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  const char* env = std::getenv("PSEL_SEED");
  if (!env || !*env) return std::nullopt;
  std::uint64_t value = 0;
  const std::string text(env);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::InvalidArgument, "PSEL_SEED must be a nonnegative integer, got '" + text + "'");
  }
  return value;
}

std::string optional_bound(double value) { return std::isnan(value) ? std::string() : format_double(value); }

PsfimMethod parse_method(const std::string& name) {
  if (name == "definition") return PsfimMethod::Definition;
  if (name == "score") return PsfimMethod::ScoreForm;
  if (name == "hessian") return PsfimMethod::HessianForm;
  if (name == "closed") return PsfimMethod::ClosedForm;
  fail(ErrorCode::InvalidArgument, "unknown PSFIM method '" + name + "'");
}

PsfimMethod default_method(const ExperimentConfig& cfg) {
  if (cfg.rule.kind == RuleKind::Randomized) return PsfimMethod::ClosedForm;
  if (cfg.model.family == Family::GaussianLinear && cfg.model.M == 2) return PsfimMethod::ClosedForm;
  return PsfimMethod::ScoreForm;
}

fs::path prepare_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::InvalidArgument, "cannot create output directory " + out + ": " + ec.message());
  return dir;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string summary_csv(const McSummary& summary) {
  const int M = summary.config.model.M;
  CsvRow header = {"sweep_value", "estimator", "psmse", "psmse_se", "bias_sel", "bias_unsel"};
  for (int m = 1; m <= M; ++m) header.push_back("freq_" + std::to_string(m));
  header.insert(header.end(), {"psi_crb", "biased_psi_crb", "bias_sel_se", "bias_unsel_se"});
  for (int m = 1; m <= M; ++m) header.push_back("cond_mse_" + std::to_string(m));
  header.insert(header.end(), {"failures", "nonconverged"});
  std::vector<CsvRow> rows;
  for (const auto& r : summary.rows) {
    CsvRow row = {std::isnan(r.sweep_value) ? std::string() : format_double(r.sweep_value), r.estimator,
                  format_double(r.psmse), format_double(r.psmse_se), format_double(r.bias_sel),
                  format_double(r.bias_unsel)};
    for (int m = 0; m < M; ++m) row.push_back(format_double(r.bias.frequency[m]));
    row.push_back(optional_bound(r.psi_crb));
    row.push_back(optional_bound(r.biased_psi_crb));
    row.push_back(format_double(r.bias_sel_se));
    row.push_back(format_double(r.bias_unsel_se));
    for (int m = 0; m < M; ++m) row.push_back(format_double(r.conditional_mse[m]));
    row.push_back(std::to_string(r.failures));
    row.push_back(std::to_string(r.nonconverged));
    rows.push_back(std::move(row));
  }
  return render_csv(header, rows);
}

std::string zeta_csv(const ZetaSurface& surface) {
  std::vector<CsvRow> rows;
  rows.reserve(surface.rows.size());
  for (const auto& r : surface.rows) {
    rows.push_back({format_double(r.delta), format_double(r.sigma1_sq), format_double(r.kappa), format_double(r.zeta)});
  }
  return render_csv({"delta", "sigma1_sq", "kappa", "zeta"}, rows);
}

int cmd_bound(const std::string& config_path, const std::string& method_name_flag, const CommonFlags& flags,
              std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(config_path);
  if (const auto seed = resolve_seed(flags.seed)) cfg.seed = *seed;
  if (flags.reps) cfg.replications = *flags.reps;
  cfg.workers = flags.workers.value_or(default_workers());
  if (!cfg.model.regular()) {
    fail(ErrorCode::NonRegularFamily, "non-regular family: the Ψ-CRB does not exist for " + family_name(cfg.model.family));
  }
  const PsfimMethod method = method_name_flag.empty() ? default_method(cfg) : parse_method(method_name_flag);
  McOptions opts;
  opts.replications = cfg.replications;
  opts.seed = cfg.seed;
  opts.workers = cfg.workers;
  const PsiCrbReport report = psi_crb(cfg.model, cfg.rule, cfg.theta_true, method, opts);

  std::vector<CsvRow> rows;
  double pr_total = 0.0;
  for (const auto& c : report.per_component) {
    rows.push_back({std::to_string(c.m + 1), format_double(c.pr_select), format_double(c.bound),
                    format_double(c.bound_se)});
    pr_total += c.pr_select;
  }
  rows.push_back({"aggregate", format_double(pr_total), format_double(report.aggregate),
                  format_double(report.aggregate_se)});
  const fs::path dir = prepare_dir(flags.out);
  const fs::path csv = dir / "psi_crb.csv";
  write_text_file(csv.string(), render_csv({"m", "pr_select", "component_bound", "se"}, rows));

  RunManifest manifest;
  manifest.command = "bound --method " + method_name(method);
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;
  manifest.workers = cfg.workers;
  manifest.outputs = {csv.string()};
  manifest.wall_time_seconds = seconds_since(start);
  write_manifest(dir.string(), manifest);
  out << "aggregate Ψ-CRB " << format_double(report.aggregate) << " (" << method_name(method) << ")\n";
  return 0;
}

int cmd_estimate(const std::string& data_path, const std::string& config_path,
                 const std::vector<std::string>& estimator_flags, std::optional<int> selected_flag,
                 const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(config_path);
  if (const auto seed = resolve_seed(flags.seed)) cfg.seed = *seed;
  cfg.workers = flags.workers.value_or(default_workers());
  cfg.ipsml.workers = cfg.workers;
  const ObservationSet x = read_observations_csv(data_path);
  if (static_cast<int>(x.populations.size()) != cfg.model.M) {
    fail(ErrorCode::DimensionMismatch, "data has " + std::to_string(x.populations.size()) + " populations, config has " +
                                           std::to_string(cfg.model.M));
  }
  ModelSpec model = cfg.model;
  model.N = static_cast<int>(x.populations.front().size());
  validate_observations(model, x);
  const std::vector<std::string> ids = estimator_flags.empty() ? cfg.estimators : estimator_flags;
  for (const auto& id : ids) {
    if (std::find(estimator_ids().begin(), estimator_ids().end(), id) == estimator_ids().end()) {
      fail(ErrorCode::InvalidArgument, "unknown estimator '" + id + "'");
    }
  }
  const Vector ml_hat = ml_estimate(model, x);
  int m = 0;
  if (selected_flag) {
    m = *selected_flag - 1;
    if (m < 0 || m >= model.M) fail(ErrorCode::InvalidArgument, "--selected must lie in 1..M");
  } else {
    Rng rng = Rng::stream(cfg.seed, {stream_tag::select});
    m = select_from_ml(cfg.rule, ml_hat, &rng);
  }

  CsvRow header = {"estimator", "m_selected"};
  for (int j = 1; j <= model.M; ++j) header.push_back("theta_hat_" + std::to_string(j));
  header.insert(header.end(), {"iterations", "score_norm", "converged"});
  std::vector<CsvRow> rows;
  for (const auto& id : ids) {
    CsvRow row = {id, std::to_string(m + 1)};
    try {
      check_estimator_supported(id, model, cfg.rule);
      const EstimateResult r = run_estimator(id, model, cfg.rule, ml_hat, m, cfg);
      for (int j = 0; j < model.M; ++j) row.push_back(format_double(r.theta_hat[j]));
      row.push_back(std::to_string(r.iterations));
      row.push_back(format_double(r.final_score_norm));
      row.push_back(r.converged ? "true" : "false");
    } catch (const Error& e) {
      err << "psel: estimator " << id << ": " << e.what() << "\n";
      for (int j = 0; j < model.M; ++j) row.push_back("nan");
      row.insert(row.end(), {"0", "nan", "false"});
    }
    rows.push_back(std::move(row));
  }
  const fs::path dir = prepare_dir(flags.out);
  const fs::path csv = dir / "estimate.csv";
  write_text_file(csv.string(), render_csv(header, rows));

  cfg.model = model;
  RunManifest manifest;
  manifest.command = "estimate";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;
  manifest.workers = cfg.workers;
  manifest.outputs = {csv.string()};
  manifest.wall_time_seconds = seconds_since(start);
  write_manifest(dir.string(), manifest);
  out << "wrote " << csv.string() << "\n";
  return 0;
}

int emit_summary(const McSummary& summary, const std::string& command, const CommonFlags& flags,
                 std::chrono::steady_clock::time_point start, std::ostream& out) {
  const fs::path dir = prepare_dir(flags.out);
  const fs::path csv = dir / "summary.csv";
  write_text_file(csv.string(), summary_csv(summary));
  RunManifest manifest;
  manifest.command = command;
  manifest.config = config_to_json(summary.config);
  manifest.seed = summary.config.seed;
  manifest.workers = summary.workers;
  manifest.outputs = {csv.string()};
  manifest.wall_time_seconds = seconds_since(start);
  write_manifest(dir.string(), manifest);
  out << "wrote " << csv.string() << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(config_path);
  if (const auto seed = resolve_seed(flags.seed)) cfg.seed = *seed;
  if (flags.reps) cfg.replications = *flags.reps;
  if (flags.fast) cfg.replications = std::max<long long>(1, cfg.replications / 10);
  cfg.workers = flags.workers.value_or(default_workers());
  cfg.ipsml.workers = 1;
  cfg.validate();
  if (flags.dump_config) {
    out << dump_config(cfg);
    return 0;
  }
  return emit_summary(run_experiment(cfg), "simulate", flags, start, out);
}

int cmd_preset(const std::string& name, const CommonFlags& flags, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::string preset = canonical_preset(name);
  PresetOverrides overrides;
  overrides.seed = resolve_seed(flags.seed);
  overrides.replications = flags.reps;
  overrides.fast = flags.fast;
  overrides.workers = flags.workers.value_or(default_workers());
  if (preset == "fig4_zeta_surface") {
    if (flags.dump_config) fail(ErrorCode::InvalidArgument, "the zeta surface preset has no experiment config");
    const ZetaSurface surface = zeta_surface();
    const fs::path dir = prepare_dir(flags.out);
    const fs::path csv = dir / "zeta_surface.csv";
    write_text_file(csv.string(), zeta_csv(surface));
    RunManifest manifest;
    manifest.command = "preset " + preset;
    manifest.config = {{"preset", preset}, {"N", surface.N}, {"sigma2_sq", surface.sigma2_sq}};
    manifest.seed = 0;
    manifest.workers = 1;
    manifest.outputs = {csv.string()};
    manifest.wall_time_seconds = seconds_since(start);
    write_manifest(dir.string(), manifest);
    out << "wrote " << csv.string() << "\n";
    return 0;
  }
  const ExperimentConfig cfg = preset_config(preset, overrides);
  if (flags.dump_config) {
    out << dump_config(cfg);
    return 0;
  }
  return emit_summary(run_experiment(cfg), "preset " + preset, flags, start, out);
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool simulation) {
  cmd->add_option("--seed", flags.seed, "Master seed (falls back to PSEL_SEED)");
  cmd->add_option("--workers", flags.workers, "Worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", flags.out, "Output directory")->capture_default_str();
  if (simulation) {
    cmd->add_option("--reps", flags.reps, "Monte-Carlo replications")->check(CLI::PositiveNumber);
    cmd->add_flag("--fast", flags.fast, "Divide replications by 10");
    cmd->add_flag("--dump-config", flags.dump_config, "Print the resolved config as JSON and exit");
  }
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorCode::InvalidArgument, "SHA-256 unavailable");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_manifest(const std::string& dir, const RunManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["tool"] = "psel";
  doc["version"] = kToolVersion;
  doc["command"] = manifest.command;
  doc["seed"] = manifest.seed;
  doc["workers"] = manifest.workers;
  doc["wall_time_seconds"] = manifest.wall_time_seconds;
  doc["config"] = manifest.config;
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
  for (const auto& path : manifest.outputs) {
    outputs.push_back({{"file", fs::path(path).filename().string()}, {"sha256", sha256_file(path)}});
  }
  doc["outputs"] = outputs;
  write_text_file((fs::path(dir) / "manifest.json").string(), doc.dump(2) + "\n");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimation after parameter selection: bounds, PSML estimators and Monte-Carlo experiments", "psel"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  CommonFlags bound_flags, estimate_flags, simulate_flags, preset_flags;
  std::string bound_config, bound_method;
  auto* bound = app.add_subcommand("bound", "Compute the Ψ-CRB for a config");
  bound->add_option("--config", bound_config, "Experiment config (JSON)")->required();
  bound->add_option("--method", bound_method, "PSFIM method")
      ->check(CLI::IsMember({"definition", "score", "hessian", "closed"}));
  bound->add_option("--reps", bound_flags.reps, "Monte-Carlo replications")->check(CLI::PositiveNumber);
  add_common(bound, bound_flags, false);

  std::string estimate_data, estimate_config;
  std::vector<std::string> estimate_ids;
  std::optional<int> estimate_selected;
  auto* estimate = app.add_subcommand("estimate", "Run estimators on an observation file");
  estimate->add_option("--data", estimate_data, "Observations CSV (header pop_1..pop_M)")->required();
  estimate->add_option("--config", estimate_config, "Experiment config (JSON)")->required();
  estimate->add_option("--estimator", estimate_ids, "Estimator id (repeatable)");
  estimate->add_option("--selected", estimate_selected, "Selected population (1-based) for randomized rules");
  add_common(estimate, estimate_flags, false);

  std::string simulate_config;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte-Carlo experiment from a config");
  simulate->add_option("--config", simulate_config, "Experiment config (JSON)")->required();
  add_common(simulate, simulate_flags, true);

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Run a named preset");
  preset->add_option("name", preset_name, "fig3, fig4, fig56 or fig78")->required();
  add_common(preset, preset_flags, true);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (bound->parsed()) return cmd_bound(bound_config, bound_method, bound_flags, out);
    if (estimate->parsed()) {
      return cmd_estimate(estimate_data, estimate_config, estimate_ids, estimate_selected, estimate_flags, out, err);
    }
    if (simulate->parsed()) return cmd_simulate(simulate_config, simulate_flags, out);
    if (preset->parsed()) return cmd_preset(preset_name, preset_flags, out);
  } catch (const Error& e) {
    err << "psel: " << e.what() << "\n";
    return is_input_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    err << "psel: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace psel
