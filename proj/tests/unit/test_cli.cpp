#include <doctest.h>

#include "cli.hpp"

#include <msmsharp/dataset.hpp>
#include <msmsharp/simulation.hpp>

#include "test_support.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace msmsharp;
using json = nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "msm-sharp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string write_temp_csv(const std::string& name, const Dataset& ds, const CsvColumns& cols) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  write_csv(out, ds, cols);
  return path;
}

struct CurveRow {
  std::string method;
  double lambda, lower, upper;
};

std::vector<CurveRow> parse_curve(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string f[4];
    for (auto& s : f) std::getline(ls, s, ',');
    rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
  }
  return rows;
}

bool single_line(const std::string& s) { return !s.empty() && s.find('\n') == s.size() - 1; }

}  // namespace

TEST_CASE("analyze at Lambda = 1 reports the IPW point estimate") {
  const auto path = write_temp_csv("msmsharp_toy.csv", testing::random_dataset(1, 80, 2), {"y", "z", std::nullopt});
  const Run r = run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda", "1", "--estimand",
                     "ate", "--method", "qb"});
  REQUIRE(r.code == 0);
  const json report = json::parse(r.out);
  const auto& res = report["results"][0];
  CHECK(std::abs(res["lower"].get<double>() - res["upper"].get<double>()) <= 1e-10);
  CHECK(std::abs(res["lower"].get<double>() - res["point_estimate"].get<double>()) <= 1e-10);
  CHECK(report.contains("balance_table"));
  CHECK(report.contains("odds_calibration"));
  CHECK(report["propensity_coefficients"].size() == 3);
}

TEST_CASE("analyze without --outcome is a usage error") {
  const Run r = run({"analyze", "--data", "x.csv", "--treatment", "z", "--lambda", "2"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[usage]:", 0) == 0);
  CHECK(single_line(r.err));
}

TEST_CASE("analyze error paths exit 2 with a coded single line") {
  const Run missing = run({"analyze", "--data", "/no/such.csv", "--outcome", "y", "--treatment", "z", "--lambda", "2"});
  CHECK(missing.code == 2);
  CHECK(missing.err.rfind("error[file_not_found]:", 0) == 0);
  CHECK(single_line(missing.err));
  const auto path = write_temp_csv("msmsharp_err.csv", testing::random_dataset(2, 40, 1), {"y", "z", std::nullopt});
  const Run bad_lambda = run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda", "2,0.3"});
  CHECK(bad_lambda.code == 2);
  const Run bad_method =
      run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda", "2", "--method", "rf"});
  CHECK(bad_method.code == 2);
}

TEST_CASE("separated data is a numerical failure (exit 3)") {
  Eigen::MatrixXd x(20, 1);
  Eigen::VectorXd z(20), y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = i;
    z[i] = i >= 10 ? 1.0 : 0.0;
    y[i] = i;
  }
  const auto path = write_temp_csv("msmsharp_sep.csv", testing::make_dataset(x, z, y), {"y", "z", std::nullopt});
  const Run r = run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda", "2"});
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error[separation]:", 0) == 0);
}

TEST_CASE("example-(7) data with known propensity: QB psi_t upper near 0.2727") {
  DgpChoice d;
  d.kind = DgpChoice::Kind::example7;
  const Dataset ds = generate_dgp(d, 50000, 77);
  const auto path = write_temp_csv("msmsharp_ex7.csv", ds, {"y", "z", std::string("known")});
  const Run r = run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--propensity", "known",
                     "--lambda", "2", "--estimand", "t", "--method", "qb"});
  REQUIRE(r.code == 0);
  const double upper = json::parse(r.out)["results"][0]["upper"].get<double>();
  CHECK(std::abs(upper - 0.2727) <= 0.03);
}

TEST_CASE("analyze output is byte-identical across runs and thread caps") {
  const auto path = write_temp_csv("msmsharp_det.csv", testing::random_dataset(3, 120, 2), {"y", "z", std::nullopt});
  const std::vector<std::string> base{"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda",
                                      "1.5,2", "--method", "qb,zsb", "--bootstrap", "30", "--seed", "9"};
  auto with_threads = [&](const std::string& t) {
    auto args = base;
    args.insert(args.end(), {"--threads", t});
    return run(args);
  };
  const Run a = with_threads("1");
  const Run b = with_threads("3");
  const Run c = with_threads("1");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
  const json report = json::parse(a.out);
  CHECK(report["results"].size() == 4);
  CHECK(report["results"][0]["bootstrap"]["B"] == 30);
}

TEST_CASE("bootstrap flag without a value uses B = 1000") {
  const auto path = write_temp_csv("msmsharp_b.csv", testing::random_dataset(4, 60, 1), {"y", "z", std::nullopt});
  const Run r = run({"analyze", "--data", path, "--outcome", "y", "--treatment", "z", "--lambda", "2", "--method",
                     "zsb", "--bootstrap"});
  REQUIRE(r.code == 0);
  const json report = json::parse(r.out);
  CHECK(report["results"][0]["bootstrap"]["B"] == 1000);
  CHECK(report["results"][0]["bootstrap"]["alpha"].get<double>() == 0.10);
}

TEST_CASE("simulate: Lambda = 1 gives zero widths; zero reps is an error") {
  const Run r = run({"simulate", "--dgp", "dgp1", "--n", "100", "--reps", "5", "--lambda", "1", "--methods",
                     "zsb,linear,cov"});
  REQUIRE(r.code == 0);
  for (const auto& m : json::parse(r.out)["methods"]) {
    CHECK(std::abs(m["mean_upper"].get<double>() - m["mean_lower"].get<double>()) <= 1e-10);
  }
  const Run bad = run({"simulate", "--dgp", "dgp2", "--reps", "0"});
  CHECK(bad.code == 2);
  CHECK(single_line(bad.err));
}

TEST_CASE("simulate dump file and deterministic JSON") {
  const auto dump = (std::filesystem::temp_directory_path() / "msmsharp_dump.csv").string();
  const std::vector<std::string> args{"simulate", "--dgp", "dgp1", "--n", "100", "--reps", "4", "--lambda", "2",
                                      "--methods", "zsb,linear", "--seed", "3", "--dump", dump};
  const Run a = run(args);
  const Run b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  std::ifstream in(dump);
  std::string header;
  std::getline(in, header);
  CHECK(header == "rep,method,lower,upper,ci_lower,ci_upper");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 8);
}

TEST_CASE("oracle subcommand") {
  const Run d1 = run({"oracle", "--spec", "dgp1", "--lambda", "2"});
  REQUIRE(d1.code == 0);
  const json j = json::parse(d1.out);
  CHECK(std::abs(j["ate"]["upper"].get<double>() - 0.5454) <= 1e-4);
  CHECK(std::abs(j["ate"]["lower"].get<double>() + j["ate"]["upper"].get<double>()) <= 1e-12);
  const Run p1 = run({"oracle", "--spec", "prop1", "--lambda", "2"});
  REQUIRE(p1.code == 0);
  const json pj = json::parse(p1.out);
  CHECK(std::abs(pj["psi_t"]["upper"].get<double>() - 0.2727) <= 1e-3);
  CHECK(std::abs(pj["psi_t"]["lower"].get<double>() + 0.2727) <= 1e-3);
  CHECK(run({"oracle", "--spec", "dgp1", "--lambda", "0.5"}).code == 2);
  CHECK(run({"oracle", "--spec", "dgp9", "--lambda", "2"}).code == 2);
}

TEST_CASE("curve rows: collapse at 1, ZSB contains QB, ZSB widths grow") {
  const auto path = write_temp_csv("msmsharp_curve.csv", testing::random_dataset(5, 200, 2), {"y", "z", std::nullopt});
  const Run r = run({"curve", "--data", path, "--outcome", "y", "--treatment", "z"});
  REQUIRE(r.code == 0);
  const auto rows = parse_curve(r.out);
  REQUIRE(rows.size() == 10);
  std::map<double, CurveRow> qb, zsb;
  for (const auto& row : rows) (row.method == "qb" ? qb : zsb)[row.lambda] = row;
  CHECK(std::abs(qb[1.0].upper - qb[1.0].lower) <= 1e-10);
  CHECK(std::abs(zsb[1.0].upper - zsb[1.0].lower) <= 1e-10);
  double prev_width = -1.0;
  for (const auto& [lambda, z] : zsb) {
    CHECK(z.lower <= qb[lambda].lower + 1e-9);
    CHECK(z.upper >= qb[lambda].upper - 1e-9);
    CHECK(z.upper - z.lower >= prev_width);
    prev_width = z.upper - z.lower;
  }
}

TEST_CASE("help exits 0") {
  const Run r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("analyze") != std::string::npos);
}
