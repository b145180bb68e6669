#include "catch_amalgamated.hpp"

#include "orthoscore/cli.hpp"
#include "orthoscore/csv.hpp"
#include "orthoscore/sim.hpp"

#include <json.hpp>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace orthoscore;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / ("orthoscore_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes a simulated dataset as CSV with columns y,d,z,x1..xp.
fs::path export_dataset(const Dataset& data, const std::string& name) {
  csv::Table t;
  t.header = {"y", "d", "z"};
  for (Index j = 0; j < data.p(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  for (Index i = 0; i < data.n(); ++i) {
    std::vector<std::string> row{csv::format_number(data.y()(i)), csv::format_number(data.d()(i)),
                                 csv::format_number(data.z()(i))};
    for (Index j = 0; j < data.p(); ++j) row.push_back(csv::format_number(data.x()(i, j)));
    t.rows.push_back(std::move(row));
  }
  const fs::path p = scratch() / name;
  csv::write_file(p, t);
  return p;
}

std::vector<std::string> analyze_args(const fs::path& input, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"analyze",     "--input", input.string(), "--outcome",    "y",
                                "--treatment", "d",       "--instrument", "z",          "--covariates",
                                "x1,x2,x3,x4"};
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"simulate", "--p", "3", "--out", (scratch() / "x.csv").string()}).code == 2);
  CHECK(run({"simulate", "--methods", "r-lr,bogus", "--out", (scratch() / "x.csv").string()}).code == 2);
  CHECK(run({"simulate", "--n", "abc"}).code == 2);
  CHECK(run({"check", "--target", "late", "--n-mc", "0"}).code == 2);
  CHECK(run({"check", "--target", "nope"}).code == 2);
}

TEST_CASE("simulate writes deterministic reports") {
  const fs::path a = scratch() / "sim_a.csv";
  const fs::path b = scratch() / "sim_b.csv";
  const fs::path j = scratch() / "sim.json";
  std::vector<std::string> args{"simulate", "--scenario", "s1", "--n",   "300",        "--p",   "4",
                                "--reps",   "3",          "--methods", "r-lr,m", "--seed", "42", "--jobs", "2"};
  auto with = [&](const fs::path& out, bool json) {
    auto v = args;
    v.insert(v.end(), {"--out", out.string()});
    if (json) v.insert(v.end(), {"--json", j.string()});
    return v;
  };
  const Run r = run(with(a, true));
  REQUIRE(r.code == 0);
  CHECK(run(with(b, false)).code == 0);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.back() == '\n');

  std::istringstream in(text);
  const csv::Table t = csv::read(in);
  CHECK(t.header == std::vector<std::string>{"method", "scenario", "n", "p", "reps", "bias", "smse", "coverage",
                                             "failures"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "r-lr");
  CHECK(t.rows[1][0] == "m");
  CHECK(t.rows[0][1] == "s1");
  CHECK(t.rows[0][4] == "3");

  const std::string jtext = slurp(j);
  CHECK(jtext.back() == '\n');
  const auto doc = nlohmann::json::parse(jtext);
  CHECK(doc["methods"].size() == 2);
  CHECK(doc["seed"] == 42);
  CHECK(csv::format_number(doc["methods"][0]["bias"].get<double>()) == t.rows[0][5]);
  CHECK(r.out.find("coverage") != std::string::npos);
}

TEST_CASE("analyze on exported simulation data") {
  const Dataset data = sim::gen_dataset({sim::Scenario::s1, 1000, 4, 5}).data;
  const fs::path input = export_dataset(data, "analyze.csv");
  const fs::path out = scratch() / "analyze.json";

  const Run r = run(analyze_args(input, {"--method", "r-lr", "--seed", "3", "--out", out.string()}));
  REQUIRE(r.code == 0);
  const std::string text = slurp(out);
  CHECK(text.back() == '\n');
  const auto doc = nlohmann::json::parse(text);
  for (const char* key : {"method", "n", "beta_hat", "std_err", "ci_low", "ci_high", "seed"})
    CHECK(doc.contains(key));
  CHECK(doc.size() == 7);
  CHECK(doc["method"] == "r-lr");
  CHECK(doc["n"] == 1000);
  CHECK(doc["seed"] == 3);
  CHECK(doc["ci_low"].get<double>() <= doc["beta_hat"].get<double>());

  const Run again = run(analyze_args(input, {"--method", "r-lr", "--seed", "3"}));
  CHECK(nlohmann::json::parse(again.out) == doc);

  SECTION("subgroup filter") {
    const Run sub = run(analyze_args(input, {"--filter", "x1>=0", "--seed", "3"}));
    REQUIRE(sub.code == 0);
    const auto d = nlohmann::json::parse(sub.out);
    CHECK(d["n"].get<int>() < 1000);
    CHECK(d["n"].get<int>() > 300);
    CHECK(run(analyze_args(input, {"--filter", "x1>5"})).code == 2);
    CHECK(run(analyze_args(input, {"--filter", "nosuch>0"})).code == 2);
    CHECK(run(analyze_args(input, {"--filter", "x1~0"})).code == 2);
  }
  SECTION("degenerate instrument") {
    CHECK(run(analyze_args(input, {"--filter", "z==1"})).code == 1);
  }
  SECTION("bad columns") {
    CHECK(run({"analyze", "--input", input.string(), "--outcome", "y", "--treatment", "d", "--instrument", "z",
               "--covariates", "x1,q"})
              .code == 2);
    CHECK(run({"analyze", "--input", input.string(), "--outcome", "y", "--treatment", "x1", "--instrument", "z",
               "--covariates", "x2"})
              .code == 2);
    CHECK(run(analyze_args((scratch() / "missing_file.csv"), {})).code == 2);
    CHECK(run(analyze_args(input, {"--method", "lasso"})).code == 2);
  }
  SECTION("csv output") {
    const fs::path csv_out = scratch() / "analyze_out.csv";
    CHECK(run(analyze_args(input, {"--format", "csv", "--out", csv_out.string()})).code == 0);
    std::ifstream in(csv_out);
    const csv::Table t = csv::read(in);
    CHECK(t.rows.size() == 1);
    CHECK(t.header[2] == "beta_hat");
  }
}

TEST_CASE("analyze reports missing rows") {
  std::ofstream f(scratch() / "gaps.csv");
  f << "y,d,z,x1,x2,x3,x4\n";
  for (int i = 0; i < 30; ++i) {
    f << (i == 4 ? "" : "1.0") << ',' << (i % 2) << ',' << ((i / 2) % 2) << ',' << (i == 7 ? "NA" : "0.1") << ",0.2,0.3,"
      << 0.01 * i << '\n';
  }
  f.close();
  const Run r = run(analyze_args(scratch() / "gaps.csv"));
  CHECK(r.code == 2);
  CHECK(r.err.find(" 5") != std::string::npos);
  CHECK(r.err.find(" 8") != std::string::npos);

  std::ofstream q(scratch() / "quoted.csv");
  q << "y,d,z,x1,x2,x3,x4\n\"1,0\",0,0,0,0,0,0\n";
  q.close();
  CHECK(run(analyze_args(scratch() / "quoted.csv")).code == 2);
}

TEST_CASE("zero outcome gives identical moment and robust estimates") {
  Dataset data = sim::gen_dataset({sim::Scenario::s1, 600, 4, 8}).data;
  data = data.with_outcome(Vector::Zero(600));
  const fs::path input = export_dataset(data, "zero.csv");
  const Run m = run(analyze_args(input, {"--method", "m", "--seed", "1"}));
  const Run r = run(analyze_args(input, {"--method", "r-lr", "--seed", "1"}));
  REQUIRE(m.code == 0);
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(m.out)["beta_hat"] == nlohmann::json::parse(r.out)["beta_hat"]);
}

TEST_CASE("seed falls back to the environment") {
  const Dataset data = sim::gen_dataset({sim::Scenario::s1, 300, 4, 9}).data;
  const fs::path input = export_dataset(data, "env.csv");
  ::setenv("ORTHOSCORE_SEED", "1234", 1);
  const Run r = run(analyze_args(input));
  ::setenv("ORTHOSCORE_SEED", "not-a-number", 1);
  const Run bad = run(analyze_args(input));
  ::unsetenv("ORTHOSCORE_SEED");
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["seed"] == 1234);
  CHECK(bad.code == 2);
}

TEST_CASE("other estimators") {
  const Dataset data = sim::gen_dataset({sim::Scenario::s1, 800, 4, 10}).data;
  const fs::path input = export_dataset(data, "other.csv");
  const Run p = run({"analyze", "--input", input.string(), "--estimator", "plr", "--outcome", "y", "--treatment", "d",
                     "--covariates", "x1,x2,x3,x4"});
  REQUIRE(p.code == 0);
  CHECK(nlohmann::json::parse(p.out)["method"] == "plr");
  const Run q = run({"analyze", "--input", input.string(), "--estimator", "qte", "--tau", "0.25", "--outcome", "y",
                     "--treatment", "d", "--covariates", "x1,x2,x3,x4"});
  REQUIRE(q.code == 0);
  CHECK(nlohmann::json::parse(q.out)["method"] == "qte");
  CHECK(run({"analyze", "--input", input.string(), "--estimator", "qte", "--tau", "1.5", "--outcome", "y",
             "--treatment", "d", "--covariates", "x1"})
            .code == 2);
  CHECK(run({"analyze", "--input", input.string(), "--estimator", "late", "--outcome", "y", "--treatment", "d",
             "--covariates", "x1"})
            .code == 2);
}

TEST_CASE("robust intervals cover on exported datasets") {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Dataset data = sim::gen_dataset({sim::Scenario::s1, 2000, 4, 1000 + seed}).data;
    const fs::path input = export_dataset(data, "cover.csv");
    const Run r = run(analyze_args(input, {"--seed", std::to_string(seed)}));
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    if (doc["ci_low"].get<double>() <= sim::kTrueBeta && sim::kTrueBeta <= doc["ci_high"].get<double>()) ++covered;
  }
  CHECK(covered >= 45);
}

TEST_CASE("check command at a small Monte Carlo size") {
  for (const char* target : {"late", "plr", "qte"}) {
    const Run r = run({"check", "--target", target, "--n-mc", "100000", "--seed", "1"});
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(r.out.find("[control]") != std::string::npos);
  }
}

TEST_CASE("check late at full Monte Carlo size") {
  const Run r = run({"check", "--target", "late", "--n-mc", "1000000", "--seed", "7"});
  INFO(r.out);
  CHECK(r.code == 0);
}
