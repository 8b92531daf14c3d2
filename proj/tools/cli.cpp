#include "cli.hpp"

#include <msmsharp/balance.hpp>
#include <msmsharp/bootstrap.hpp>
#include <msmsharp/bounds.hpp>
#include <msmsharp/dataset.hpp>
#include <msmsharp/error.hpp>
#include <msmsharp/normal.hpp>
#include <msmsharp/oracle.hpp>
#include <msmsharp/simulation.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace msmsharp::cli {
namespace {

using json = nlohmann::ordered_json;

constexpr int kDefaultB = 1000;

std::string format_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) parts.push_back(item.substr(b, e - b + 1));
  }
  return parts;
}

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text)) {
    double v = 0.0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (res.ec != std::errc{} || res.ptr != part.data() + part.size()) {
      throw Error(ErrorCode::invalid_argument, "cannot parse Lambda value '" + part + "'");
    }
    tau_from_lambda(v);
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::invalid_argument, "no Lambda values given");
  return out;
}

Estimand estimand_arg(const std::string& text) {
  const auto e = parse_estimand(text);
  if (!e) throw Error(ErrorCode::invalid_argument, "unknown estimand '" + text + "' (ate, att, t, c)");
  return *e;
}

std::vector<BoundsMethod> methods_arg(const std::string& text) {
  std::vector<BoundsMethod> out;
  for (const auto& part : split(text)) {
    const auto m = parse_bounds_method(part);
    if (!m) throw Error(ErrorCode::invalid_argument, "unknown method '" + part + "' (qb, zsb, cov)");
    out.push_back(*m);
  }
  if (out.empty()) throw Error(ErrorCode::invalid_argument, "no method given");
  return out;
}

std::string method_token(BoundsMethod m) {
  switch (m) {
    case BoundsMethod::zsb: return "zsb";
    case BoundsMethod::quantile_balance: return "qb";
    case BoundsMethod::covariate_balance: return "cov";
  }
  return "?";
}

/// Flags shared by analyze and curve.
struct DataFlags {
  std::string data;
  std::string outcome;
  std::string treatment;
  std::string propensity;
  std::string estimand = "ate";
  std::string method = "qb";
  std::string quantiles = "linear";
  std::optional<int> bootstrap;
  double alpha = 0.10;
  std::uint64_t seed = 1;
  bool trim = false;
  std::string out;

  void attach(CLI::App& cmd, CLI::Option*& boot_opt) {
    cmd.add_option("--data", data, "CSV file with a header row")->required();
    cmd.add_option("--outcome", outcome, "Outcome column")->required();
    cmd.add_option("--treatment", treatment, "Binary treatment column")->required();
    cmd.add_option("--propensity", propensity, "Column of known propensity scores");
    cmd.add_option("--estimand", estimand, "ate | att | t | c")->capture_default_str();
    cmd.add_option("--method", method, "qb | zsb | cov (comma list allowed)")->capture_default_str();
    cmd.add_option("--quantiles", quantiles, "linear | knn")->capture_default_str();
    boot_opt = cmd.add_option("--bootstrap", bootstrap, "Bootstrap replicates (1000 when given without a value)")
                   ->expected(0, 1);
    cmd.add_option("--alpha", alpha, "CI level alpha")->capture_default_str();
    cmd.add_option("--seed", seed, "Master seed")->capture_default_str();
    cmd.add_flag("--trim", trim, "Clamp propensities to [0.01, 0.99]");
    cmd.add_option("--out", out, "Write output here instead of stdout");
  }

  Dataset load() const {
    CsvColumns cols{outcome, treatment, std::nullopt};
    if (!propensity.empty()) cols.propensity = propensity;
    return load_csv(data, cols);
  }

  IntervalOptions interval_options() const {
    IntervalOptions opts;
    const auto q = parse_quantile_method(quantiles);
    if (!q) throw Error(ErrorCode::invalid_argument, "unknown quantile model '" + quantiles + "' (linear, knn)");
    opts.quantile_method = *q;
    opts.trim = trim;
    return opts;
  }

  std::optional<BootstrapConfig> bootstrap_config(const CLI::Option* boot_opt, std::optional<int> threads) const {
    if (boot_opt->count() == 0) return std::nullopt;
    BootstrapConfig cfg;
    cfg.B = bootstrap.value_or(kDefaultB);
    cfg.alpha = alpha;
    cfg.master_seed = seed;
    cfg.threads = threads;
    cfg.validate();
    return cfg;
  }
};

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::invalid_argument, "cannot open output file '" + path + "'");
  file << text;
}

json bounds_json(const BoundsEstimate& est, const std::optional<BootstrapInterval>& ci,
                 const std::optional<BootstrapConfig>& boot) {
  json j;
  j["estimand"] = to_string(est.estimand);
  j["method"] = method_token(est.method);
  j["lambda"] = est.lambda;
  j["lower"] = est.lower;
  j["upper"] = est.upper;
  j["point_estimate"] = est.point_estimate;
  json diag = json::object();
  for (const auto& [k, v] : est.diagnostics) diag[k] = number_or_null(v);
  j["diagnostics"] = diag;
  j["warnings"] = est.warnings;
  if (ci) {
    j["bootstrap"] = {{"B", boot->B},
                      {"alpha", boot->alpha},
                      {"ci_lower", ci->ci_lower},
                      {"ci_upper", ci->ci_upper},
                      {"skipped_replicates", ci->skipped_replicates}};
  }
  return j;
}

int cmd_analyze(const DataFlags& f, const CLI::Option* boot_opt, const std::string& lambda_text,
                std::optional<int> threads, std::ostream& out) {
  const Dataset ds = f.load();
  const auto lambdas = parse_lambdas(lambda_text);
  const Estimand estimand = estimand_arg(f.estimand);
  const auto methods = methods_arg(f.method);
  const IntervalOptions opts = f.interval_options();
  const auto boot = f.bootstrap_config(boot_opt, threads);

  json report;
  report["version"] = MSMSHARP_VERSION;
  report["config"] = {{"data", f.data},
                      {"outcome", f.outcome},
                      {"treatment", f.treatment},
                      {"propensity", f.propensity.empty() ? json(nullptr) : json(f.propensity)},
                      {"estimand", to_string(estimand)},
                      {"methods", split(f.method)},
                      {"quantiles", to_string(opts.quantile_method)},
                      {"lambdas", lambdas},
                      {"trim", f.trim},
                      {"bootstrap", boot ? json(boot->B) : json(nullptr)},
                      {"alpha", f.alpha}};
  report["seed"] = f.seed;
  report["n"] = ds.n();
  report["n_treated"] = ds.n_treated();

  const ResolvedPropensity e = resolve_propensities(ds, f.trim);
  if (e.fit) {
    json coefs = json::object();
    coefs["(intercept)"] = e.fit->coefficients[0];
    for (Eigen::Index j = 0; j < ds.d(); ++j) {
      coefs[ds.covariate_names()[static_cast<std::size_t>(j)]] = e.fit->coefficients[j + 1];
    }
    report["propensity_coefficients"] = coefs;
  } else {
    report["propensity_coefficients"] = nullptr;
  }

  json results = json::array();
  for (double lambda : lambdas) {
    for (BoundsMethod m : methods) {
      const BoundsEstimate est = sensitivity_interval(ds, lambda, estimand, m, opts);
      std::optional<BootstrapInterval> ci;
      if (boot) ci = percentile_bootstrap_ci(ds, lambda, estimand, m, *boot, opts);
      results.push_back(bounds_json(est, ci, boot));
    }
  }
  report["results"] = results;

  if (ds.d() >= 2) {
    json table = json::array();
    for (const auto& row : balance_table(ds, e.values)) {
      table.push_back({{"covariate", row.covariate},
                       {"treated_mean", row.treated_mean},
                       {"control_mean", row.control_mean},
                       {"weighted_treated_mean", row.weighted_treated_mean},
                       {"weighted_control_mean", row.weighted_control_mean}});
    }
    report["balance_table"] = table;
    json calib = json::array();
    for (const auto& row : odds_calibration(ds.without_known_propensity())) {
      calib.push_back({{"covariate", row.covariate}, {"max_odds_ratio", row.max_odds_ratio}});
    }
    report["odds_calibration"] = calib;
  }
  emit(f.out, report.dump(2) + "\n", out);
  return 0;
}

int cmd_curve(const DataFlags& f, const CLI::Option* boot_opt, const std::string& grid_text,
              std::optional<int> threads, std::ostream& out) {
  const Dataset ds = f.load();
  const auto lambdas = parse_lambdas(grid_text);
  const Estimand estimand = estimand_arg(f.estimand);
  const auto methods = methods_arg(f.method);
  const IntervalOptions opts = f.interval_options();
  const auto boot = f.bootstrap_config(boot_opt, threads);

  std::ostringstream csv;
  csv << "method,lambda,lower,upper,ci_lower,ci_upper\n";
  for (BoundsMethod m : methods) {
    for (double lambda : lambdas) {
      const BoundsEstimate est = sensitivity_interval(ds, lambda, estimand, m, opts);
      csv << method_token(m) << ',' << format_number(lambda) << ',' << format_number(est.lower) << ','
          << format_number(est.upper) << ',';
      if (boot) {
        const auto ci = percentile_bootstrap_ci(ds, lambda, estimand, m, *boot, opts);
        csv << format_number(ci.ci_lower) << ',' << format_number(ci.ci_upper);
      } else {
        csv << ',';
      }
      csv << '\n';
    }
  }
  emit(f.out, csv.str(), out);
  return 0;
}

DgpChoice dgp_arg(const std::string& text, double sigma_x) {
  DgpChoice d;
  if (text == "dgp1") d.kind = DgpChoice::Kind::dgp1;
  else if (text == "dgp2") d.kind = DgpChoice::Kind::dgp2;
  else if (text == "example7" || text == "prop1") d.kind = DgpChoice::Kind::example7;
  else throw Error(ErrorCode::invalid_argument, "unknown dgp '" + text + "' (dgp1, dgp2, example7)");
  d.sigma_x = sigma_x;
  return d;
}

json interval_json(const Interval& iv) { return {{"lower", iv.lower}, {"upper", iv.upper}}; }

struct SimulateFlags {
  std::string dgp;
  double sigma_x = 1.0;
  long long n = 500;
  int reps = 100;
  double lambda = 2.0;
  std::string estimand = "ate";
  std::string methods = "zsb,linear";
  std::optional<int> bootstrap;
  double alpha = 0.10;
  std::uint64_t seed = 1;
  std::string dump;
  std::string out;
  bool timing = false;
};

int cmd_simulate(const SimulateFlags& f, const CLI::Option* boot_opt, std::optional<int> threads,
                 std::ostream& out) {
  StudyConfig cfg;
  cfg.dgp = dgp_arg(f.dgp, f.sigma_x);
  cfg.n = f.n;
  cfg.replications = f.reps;
  cfg.lambda = f.lambda;
  cfg.estimand = estimand_arg(f.estimand);
  cfg.methods.clear();
  for (const auto& part : split(f.methods)) {
    const auto m = parse_study_method(part);
    if (!m) throw Error(ErrorCode::invalid_argument, "unknown method '" + part + "' (zsb, linear, knn, cov)");
    cfg.methods.push_back(*m);
  }
  if (boot_opt->count() > 0) {
    BootstrapConfig b;
    b.B = f.bootstrap.value_or(kDefaultB);
    b.alpha = f.alpha;
    b.master_seed = f.seed;
    cfg.bootstrap = b;
  }
  cfg.master_seed = f.seed;
  cfg.threads = threads;
  const StudySummary s = run_study(cfg);

  json j;
  j["version"] = MSMSHARP_VERSION;
  j["config"] = {{"dgp", cfg.dgp.name()},
                 {"n", cfg.n},
                 {"replications", cfg.replications},
                 {"lambda", cfg.lambda},
                 {"estimand", to_string(cfg.estimand)},
                 {"methods", split(f.methods)},
                 {"bootstrap", cfg.bootstrap ? json(cfg.bootstrap->B) : json(nullptr)},
                 {"alpha", cfg.bootstrap ? json(cfg.bootstrap->alpha) : json(nullptr)},
                 {"seed", cfg.master_seed}};
  if (cfg.dgp.kind == DgpChoice::Kind::example7) j["config"]["sigma_x"] = cfg.dgp.sigma_x;
  j["reference"] = s.reference ? interval_json(*s.reference) : json(nullptr);
  j["completed_replications"] = s.completed_replications;
  j["failed_replications"] = s.failed_replications;
  json methods = json::array();
  for (const auto& m : s.methods) {
    json mj{{"method", to_string(m.method)},
            {"mean_lower", m.mean_lower},
            {"sd_lower", m.sd_lower},
            {"mean_upper", m.mean_upper},
            {"sd_upper", m.sd_upper},
            {"coverage", m.coverage ? json(*m.coverage) : json(nullptr)}};
    if (f.timing) mj["runtime_seconds"] = m.runtime_seconds;
    methods.push_back(mj);
  }
  j["methods"] = methods;

  if (!f.dump.empty()) {
    std::ostringstream csv;
    write_replication_csv(csv, s);
    emit(f.dump, csv.str(), out);
  }
  emit(f.out, j.dump(2) + "\n", out);
  return 0;
}

int cmd_oracle(const std::string& spec_text, double lambda, std::int64_t mc_draws, std::uint64_t seed,
               std::ostream& out) {
  GaussianDGPSpec spec;
  if (spec_text == "dgp1") spec = GaussianDGPSpec::dgp1();
  else if (spec_text == "dgp2") spec = GaussianDGPSpec::dgp2();
  else if (spec_text == "prop1") spec = GaussianDGPSpec::example7(1.0);
  else throw Error(ErrorCode::invalid_argument, "unknown spec '" + spec_text + "' (dgp1, dgp2, prop1)");
  const double tau = tau_from_lambda(lambda);
  const ApoBounds apo = gaussian_apo_bounds(spec, lambda, mc_draws, seed);

  json j;
  j["spec"] = spec_text;
  j["lambda"] = lambda;
  j["tau"] = tau;
  j["ate"] = interval_json(gaussian_ate_identified_set(spec, lambda));
  j["psi_t"] = {{"lower", apo.psi_t_minus}, {"upper", apo.psi_t_plus}};
  j["psi_c"] = {{"lower", apo.psi_c_minus}, {"upper", apo.psi_c_plus}};
  j["mean_propensity"] = apo.mean_propensity;
  j["mc_draws"] = spec.propensity == GaussianDGPSpec::Propensity::constant ? json(nullptr) : json(mc_draws);
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sharp sensitivity bounds for IPW estimators under the marginal sensitivity model", "msm-sharp"};
  app.set_version_flag("--version", MSMSHARP_VERSION);
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker cap (default: MSM_SHARP_THREADS or all cores)");

  DataFlags analyze_flags;
  CLI::Option* analyze_boot = nullptr;
  std::string analyze_lambda;
  auto* analyze = app.add_subcommand("analyze", "Bounds (and bootstrap CIs) for a CSV dataset");
  analyze_flags.attach(*analyze, analyze_boot);
  analyze->add_option("--lambda", analyze_lambda, "Lambda value(s), comma separated")->required();
  analyze->add_option("--threads", threads, "Worker cap");

  DataFlags curve_flags;
  curve_flags.method = "qb,zsb";
  CLI::Option* curve_boot = nullptr;
  std::string grid = "1,1.5,2,3,5";
  auto* curve = app.add_subcommand("curve", "CSV of bounds along a Lambda grid");
  curve_flags.attach(*curve, curve_boot);
  curve->add_option("--lambda-grid", grid, "Comma separated Lambda values")->capture_default_str();
  curve->add_option("--threads", threads, "Worker cap");

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Replication study on a synthetic design");
  simulate->add_option("--dgp", sim.dgp, "dgp1 | dgp2 | example7")->required();
  simulate->add_option("--sigma-x", sim.sigma_x, "Covariate sd for example7")->capture_default_str();
  simulate->add_option("--n", sim.n, "Sample size per replication")->capture_default_str();
  simulate->add_option("--reps", sim.reps, "Replications")->capture_default_str();
  simulate->add_option("--lambda", sim.lambda, "Lambda")->capture_default_str();
  simulate->add_option("--estimand", sim.estimand, "ate | att | t | c")->capture_default_str();
  simulate->add_option("--methods", sim.methods, "Comma list of zsb, linear, knn, cov")->capture_default_str();
  auto* sim_boot = simulate->add_option("--bootstrap", sim.bootstrap, "Bootstrap replicates per replication")
                       ->expected(0, 1);
  simulate->add_option("--alpha", sim.alpha, "CI level alpha")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  simulate->add_option("--dump", sim.dump, "Per-replication CSV output path");
  simulate->add_option("--out", sim.out, "Write the JSON summary here instead of stdout");
  simulate->add_flag("--timing", sim.timing, "Include wall-clock runtimes (breaks byte-identical output)");
  simulate->add_option("--threads", threads, "Worker cap");

  std::string spec_text;
  double oracle_lambda = 1.0;
  std::int64_t mc_draws = 1'000'000;
  std::uint64_t oracle_seed = 20240101;
  auto* oracle = app.add_subcommand("oracle", "Closed-form identified sets for the Gaussian designs");
  oracle->add_option("--spec", spec_text, "dgp1 | dgp2 | prop1")->required();
  oracle->add_option("--lambda", oracle_lambda, "Lambda")->required();
  oracle->add_option("--mc-draws", mc_draws, "Monte Carlo draws for E[e(X)]")->capture_default_str();
  oracle->add_option("--seed", oracle_seed, "Monte Carlo seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg) if (c == '\n') c = ' ';
    err << "error[usage]: " << msg << "; run 'msm-sharp --help' for usage\n";
    return 2;
  }

  try {
    if (threads && *threads < 1) throw Error(ErrorCode::invalid_argument, "--threads must be at least 1");
    if (analyze->parsed()) return cmd_analyze(analyze_flags, analyze_boot, analyze_lambda, threads, out);
    if (curve->parsed()) return cmd_curve(curve_flags, curve_boot, grid, threads, out);
    if (simulate->parsed()) return cmd_simulate(sim, sim_boot, threads, out);
    if (oracle->parsed()) return cmd_oracle(spec_text, oracle_lambda, mc_draws, oracle_seed, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& c : msg) if (c == '\n') c = ' ';
    err << "error[" << to_string(e.code()) << "]: " << msg << "\n";
    return e.kind() == ErrorKind::input ? 2 : 3;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace msmsharp::cli
