#include "orthoscore/cli.hpp"

#include "orthoscore/checks.hpp"
#include "orthoscore/csv.hpp"
#include "orthoscore/late.hpp"
#include "orthoscore/plr.hpp"
#include "orthoscore/qte.hpp"
#include "orthoscore/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace orthoscore::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StatisticalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t env_seed() {
  const char* raw = std::getenv("ORTHOSCORE_SEED");
  if (raw == nullptr || *raw == '\0') return 0;
  std::uint64_t v = 0;
  const std::string_view s(raw);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw UsageError("ORTHOSCORE_SEED is not an unsigned integer");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path);
  f << text;
  if (text.empty() || text.back() != '\n') f << '\n';
}

// ---------------------------------------------------------------------------

struct SimulateFlags {
  std::string scenario = "s1";
  std::size_t n = 2000;
  std::size_t p = 4;
  std::size_t reps = 200;
  std::string methods = "r-lr,m";
  std::optional<std::uint64_t> seed;
  std::string out = "simulation.csv";
  std::string json_out;
  std::size_t jobs = 0;
  std::size_t epochs = 200;
  double clip = 0.01;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out, std::ostream& err) {
  sim::DgpConfig dgp;
  sim::SimulationOptions opts;
  try {
    dgp.scenario = sim::parse_scenario(f.scenario);
    dgp.n = f.n;
    dgp.p = f.p;
    dgp.validate();
    opts.methods.clear();
    for (const auto& m : split_list(f.methods)) opts.methods.push_back(late::parse_method(m));
    if (opts.methods.empty()) throw std::invalid_argument("no methods given");
    if (f.reps < 1) throw std::invalid_argument("reps must be at least 1");
    opts.reps = f.reps;
    opts.master_seed = f.seed ? *f.seed : env_seed();
    opts.jobs = f.jobs == 0 ? default_jobs() : f.jobs;
    opts.base.clip_epsilon = f.clip;
    opts.base.train.epochs = f.epochs;
    opts.base.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const sim::SimulationReport report = sim::run_replications(dgp, opts);

  csv::Table table;
  table.header = {"method", "scenario", "n", "p", "reps", "bias", "smse", "coverage", "failures"};
  json j_methods = json::array();
  bool too_many_failures = false;
  for (const auto& s : report.methods) {
    const std::string label(late::method_label(s.method));
    table.rows.push_back({label, std::string(sim::scenario_label(dgp.scenario)), std::to_string(dgp.n),
                          std::to_string(dgp.p), std::to_string(s.reps), csv::format_number(s.bias),
                          csv::format_number(s.smse), csv::format_number(s.coverage), std::to_string(s.failures)});
    j_methods.push_back({{"method", label},
                         {"bias", s.bias},
                         {"smse", s.smse},
                         {"coverage", s.coverage},
                         {"reps", s.reps},
                         {"failures", s.failures}});
    if (s.failure_rate() > 0.2) too_many_failures = true;
  }
  csv::write_file(f.out, table);
  if (!f.json_out.empty()) {
    const json doc = {{"scenario", sim::scenario_label(dgp.scenario)},
                      {"n", dgp.n},
                      {"p", dgp.p},
                      {"reps", report.reps_requested},
                      {"seed", report.master_seed},
                      {"methods", j_methods}};
    write_text(f.json_out, doc.dump(2));
  }

  out << std::left << std::setw(8) << "method" << std::setw(12) << "bias" << std::setw(12) << "smse" << std::setw(12)
      << "coverage" << std::setw(8) << "reps" << "failures\n";
  for (const auto& s : report.methods) {
    out << std::setw(8) << late::method_label(s.method) << std::setw(12) << csv::format_short(s.bias) << std::setw(12)
        << csv::format_short(s.smse) << std::setw(12) << csv::format_short(s.coverage) << std::setw(8) << s.reps
        << s.failures << '\n';
  }
  if (too_many_failures) {
    err << "replicate failure rate above 20%\n";
    for (const auto& r : report.results) {
      if (!r.ok) {
        err << "first failure: replicate " << r.replicate << " (" << late::method_label(r.method) << "): " << r.error
            << '\n';
        break;
      }
    }
    return kStatisticalFailure;
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct AnalyzeFlags {
  std::string input;
  std::string estimator = "late";
  std::string outcome;
  std::string treatment;
  std::string instrument;
  std::string covariates;
  std::string method = "r-lr";
  std::string learner = "linear";
  double tau = 0.5;
  std::string filter;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  std::size_t epochs = 200;
};

struct RowFilter {
  std::string column;
  std::string op;
  std::string value;

  bool keep(const std::string& field) const {
    const auto lhs = csv::parse_number(field);
    const auto rhs = csv::parse_number(value);
    if (lhs && rhs) {
      const double a = *lhs, b = *rhs;
      if (op == "<") return a < b;
      if (op == "<=") return a <= b;
      if (op == ">") return a > b;
      if (op == ">=") return a >= b;
      if (op == "==") return a == b;
      return a != b;
    }
    if (op == "==") return field == value;
    if (op == "!=") return field != value;
    throw UsageError("filter '" + op + "' needs numeric operands");
  }
};

RowFilter parse_filter(const std::string& text) {
  const auto pos = text.find_first_of("<>=!");
  if (pos == std::string::npos || pos == 0) throw UsageError("filter must look like column<op>value");
  RowFilter f;
  f.column = text.substr(0, pos);
  std::size_t len = (pos + 1 < text.size() && text[pos + 1] == '=') ? 2 : 1;
  f.op = text.substr(pos, len);
  if (f.op == "=" || f.op == "!") throw UsageError("unknown comparator in filter '" + text + "'");
  f.value = text.substr(pos + len);
  if (f.value.empty()) throw UsageError("filter has no value");
  return f;
}

plr::Learner parse_plr_learner(const std::string& s) {
  if (s == "linear") return plr::Learner::linear;
  if (s == "mlp") return plr::Learner::mlp;
  throw UsageError("unknown learner '" + s + "'");
}

int cmd_analyze(const AnalyzeFlags& f, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = f.seed ? *f.seed : env_seed();
  if (f.estimator != "late" && f.estimator != "plr" && f.estimator != "qte")
    throw UsageError("unknown estimator '" + f.estimator + "'");
  if (f.format != "json" && f.format != "csv") throw UsageError("unknown format '" + f.format + "'");
  const bool needs_instrument = f.estimator == "late";
  if (needs_instrument && f.instrument.empty()) throw UsageError("--instrument is required for late");
  const std::vector<std::string> covariates = split_list(f.covariates);
  if (covariates.empty()) throw UsageError("--covariates must list at least one column");

  csv::Table table;
  try {
    table = csv::read_file(f.input);
  } catch (const csv::ParseError& e) {
    throw UsageError(e.what());
  }

  std::vector<std::string> used{f.outcome, f.treatment};
  if (needs_instrument) used.push_back(f.instrument);
  used.insert(used.end(), covariates.begin(), covariates.end());
  std::optional<RowFilter> filter;
  if (!f.filter.empty()) filter = parse_filter(f.filter);

  std::vector<std::size_t> cols;
  try {
    for (const auto& c : used) cols.push_back(table.column(c));
    if (filter) table.column(filter->column);
  } catch (const csv::ParseError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::size_t> bad;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool ok = std::all_of(cols.begin(), cols.end(), [&](std::size_t c) { return csv::parse_number(row[c]).has_value(); });
    if (filter && csv::is_missing(row[table.column(filter->column)])) ok = false;
    if (!ok) bad.push_back(r + 1);
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << bad.size() << " row(s) with missing or non-numeric values in used columns; first:";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) msg << ' ' << bad[i];
    throw UsageError(msg.str());
  }

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (!filter || filter->keep(table.rows[r][table.column(filter->column)])) keep.push_back(r);
  if (keep.size() < 20)
    throw UsageError("only " + std::to_string(keep.size()) + " rows remain after filtering; need at least 20");

  const auto n = static_cast<Index>(keep.size());
  const auto p = static_cast<Index>(covariates.size());
  CovariateMatrix x(n, p);
  Vector y(n), d(n), z(n);
  auto num = [&](std::size_t r, std::size_t c) { return *csv::parse_number(table.rows[r][c]); };
  for (Index i = 0; i < n; ++i) {
    const std::size_t r = keep[static_cast<std::size_t>(i)];
    y(i) = num(r, cols[0]);
    d(i) = num(r, cols[1]);
    std::size_t next = 2;
    if (needs_instrument) z(i) = num(r, cols[next++]);
    for (Index j = 0; j < p; ++j) x(i, j) = num(r, cols[next + static_cast<std::size_t>(j)]);
  }
  auto binary = [](const Vector& v) { return (v.array() == 0.0 || v.array() == 1.0).all(); };
  if (!binary(d)) throw UsageError("treatment column must be 0/1");
  if (needs_instrument && !binary(z)) throw UsageError("instrument column must be 0/1");
  if (needs_instrument && (z.minCoeff() == z.maxCoeff()))
    throw StatisticalFailure("instrument is constant after filtering");

  std::optional<Dataset> data;
  try {
    data.emplace(std::move(x), std::move(y), std::move(d),
                 needs_instrument ? std::optional<Vector>(std::move(z)) : std::nullopt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  EstimationResult est;
  std::string method_name;
  try {
    if (f.estimator == "late") {
      late::LateConfig cfg;
      try {
        cfg.method = late::parse_method(f.method);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      cfg.seed = seed;
      cfg.train.epochs = f.epochs;
      est = late::late_crossfit(*data, cfg);
      method_name = std::string(late::method_label(cfg.method));
    } else if (f.estimator == "plr") {
      plr::PlrConfig cfg;
      cfg.learner = parse_plr_learner(f.learner);
      cfg.seed = seed;
      cfg.train.epochs = f.epochs;
      est = plr::plr_crossfit(*data, cfg);
      method_name = "plr";
    } else {
      qte::QteConfig cfg;
      const plr::Learner l = parse_plr_learner(f.learner);
      cfg.propensity = cfg.correction = l == plr::Learner::mlp ? qte::Learner::mlp : qte::Learner::linear;
      cfg.tau = f.tau;
      cfg.seed = seed;
      cfg.train.epochs = f.epochs;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      est = qte::qte_crossfit(*data, cfg);
      method_name = "qte";
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StatisticalFailure(e.what());
  }

  std::string text;
  if (f.format == "json") {
    const json doc = {{"method", method_name},   {"n", data->n()},          {"beta_hat", est.beta_hat},
                      {"std_err", est.std_err},  {"ci_low", est.ci_low},    {"ci_high", est.ci_high},
                      {"seed", seed}};
    text = doc.dump(2) + "\n";
  } else {
    csv::Table t;
    t.header = {"method", "n", "beta_hat", "std_err", "ci_low", "ci_high", "seed"};
    t.rows.push_back({method_name, std::to_string(data->n()), csv::format_number(est.beta_hat),
                      csv::format_number(est.std_err), csv::format_number(est.ci_low),
                      csv::format_number(est.ci_high), std::to_string(seed)});
    std::ostringstream os;
    csv::write(os, t);
    text = os.str();
  }
  if (f.out.empty()) {
    out << text;
  } else {
    write_text(f.out, text);
    out << method_name << ": beta_hat " << csv::format_short(est.beta_hat) << " (se "
        << csv::format_short(est.std_err) << "), 95% CI [" << csv::format_short(est.ci_low) << ", "
        << csv::format_short(est.ci_high) << "], n " << data->n() << '\n';
  }
  (void)err;
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct CheckFlags {
  std::string target;
  std::size_t n_mc = 1'000'000;
  std::optional<std::uint64_t> seed;
  double epsilon = 1e-3;
  std::size_t jobs = 0;
};

int cmd_check(const CheckFlags& f, std::ostream& out, std::ostream&) {
  checks::Target target;
  try {
    target = checks::parse_target(f.target);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (f.n_mc < 2) throw UsageError("--n-mc must be at least 2");
  if (!(f.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  OrthogonalityOptions opts;
  opts.n_mc = f.n_mc;
  opts.seed = f.seed ? *f.seed : env_seed();
  opts.epsilon = f.epsilon;
  opts.jobs = f.jobs == 0 ? default_jobs() : f.jobs;

  const checks::CheckReport report = checks::run_suite(target, opts);
  for (const auto& c : report.cases) {
    const bool ok = c.orthogonal ? c.result.within(3.0) : !c.result.within(3.0);
    out << (c.orthogonal ? "" : "[control] ") << c.score << " / " << c.nuisance << " / " << c.direction << ": "
        << csv::format_short(c.result.derivative) << " +- " << csv::format_short(c.result.std_error) << " ("
        << csv::format_short(c.ratio()) << " se) " << (ok ? "ok" : "FAIL") << '\n';
  }
  const bool passed = report.passed(3.0);
  out << checks::target_label(target) << ": " << (passed ? "passed" : "failed") << '\n';
  return passed ? kSuccess : kStatisticalFailure;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orthogonal-score estimation: simulations, data analysis and orthogonality checks", "orthoscore"};
  app.require_subcommand(1);

  SimulateFlags sf;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study under the two LARF scenarios");
  simulate->add_option("--scenario", sf.scenario, "s1 or s2")->capture_default_str();
  simulate->add_option("--n", sf.n, "sample size")->capture_default_str();
  simulate->add_option("--p", sf.p, "covariate dimension (>= 4)")->capture_default_str();
  simulate->add_option("--reps", sf.reps, "replications")->capture_default_str();
  simulate->add_option("--methods", sf.methods, "comma list of r-np,r-lr,m,reg-np,reg-lr")->capture_default_str();
  simulate->add_option("--seed", sf.seed, "master seed (default ORTHOSCORE_SEED or 0)");
  simulate->add_option("--out", sf.out, "CSV report path")->capture_default_str();
  simulate->add_option("--json", sf.json_out, "optional JSON report path");
  simulate->add_option("--jobs", sf.jobs, "worker threads (0 = all cores)")->capture_default_str();
  simulate->add_option("--epochs", sf.epochs, "MLP training epochs")->capture_default_str();
  simulate->add_option("--clip", sf.clip, "propensity clipping epsilon")->capture_default_str();

  AnalyzeFlags af;
  auto* analyze = app.add_subcommand("analyze", "estimate a treatment effect from a CSV file");
  analyze->add_option("--input", af.input, "CSV path")->required();
  analyze->add_option("--estimator", af.estimator, "late, plr or qte")->capture_default_str();
  analyze->add_option("--outcome", af.outcome, "outcome column")->required();
  analyze->add_option("--treatment", af.treatment, "0/1 treatment column")->required();
  analyze->add_option("--instrument", af.instrument, "0/1 instrument column (late)");
  analyze->add_option("--covariates", af.covariates, "comma list of covariate columns")->required();
  analyze->add_option("--method", af.method, "late method: r-np,r-lr,m,reg-np,reg-lr")->capture_default_str();
  analyze->add_option("--learner", af.learner, "plr/qte nuisance learner: linear or mlp")->capture_default_str();
  analyze->add_option("--tau", af.tau, "quantile level (qte)")->capture_default_str();
  analyze->add_option("--filter", af.filter, "row filter such as age>=50");
  analyze->add_option("--seed", af.seed, "seed (default ORTHOSCORE_SEED or 0)");
  analyze->add_option("--out", af.out, "output path (default standard output)");
  analyze->add_option("--format", af.format, "json or csv")->capture_default_str();
  analyze->add_option("--epochs", af.epochs, "MLP training epochs")->capture_default_str();

  CheckFlags cf;
  auto* check = app.add_subcommand("check", "finite-difference orthogonality checks at a synthetic truth");
  check->add_option("--target", cf.target, "late, plr or qte")->required();
  check->add_option("--n-mc", cf.n_mc, "Monte Carlo draws")->capture_default_str();
  check->add_option("--seed", cf.seed, "seed (default ORTHOSCORE_SEED or 0)");
  check->add_option("--epsilon", cf.epsilon, "finite-difference step")->capture_default_str();
  check->add_option("--jobs", cf.jobs, "worker threads (0 = all cores)")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sf, out, err);
    if (analyze->parsed()) return cmd_analyze(af, out, err);
    if (check->parsed()) return cmd_check(cf, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const StatisticalFailure& e) {
    err << "error: " << e.what() << '\n';
    return kStatisticalFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kStatisticalFailure;
  }
  return kUsageError;
}

}  // namespace orthoscore::cli
