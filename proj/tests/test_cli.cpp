#include <doctest.h>

#include "cli_support.hpp"
#include "kalibr/app.hpp"
#include "kalibr/io.hpp"
#include "schema_check.hpp"

#include <cmath>

using namespace kalibr;
namespace fs = std::filesystem;

namespace {

nlohmann::json summary_schema() { return io::read_json(fs::path(KALIBR_SCHEMA_DIR) / "summary.schema.json"); }

bool same_files(const fs::path& a, const fs::path& b) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "timing.json") continue;
    if (!fs::exists(b / name) || cli::slurp(entry.path()) != cli::slurp(b / name)) return false;
    ++n;
  }
  return n > 0;
}

}  // namespace

TEST_CASE("configuration parsing names the offending key") {
  using app::RunConfig;
  try {
    RunConfig::from_key_values({{{"method", "uki"}}});
    FAIL("expected ConfigError");
  } catch (const app::ConfigError& e) {
    CHECK(std::string(e.what()).find("'problem'") != std::string::npos);
  }
  try {
    RunConfig::from_key_values({{{"problem", "toy"}, {"method", "newton"}}});
    FAIL("expected ConfigError");
  } catch (const app::ConfigError& e) {
    CHECK(std::string(e.what()).find("'method'") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::from_key_values({{{"problem", "toy"}, {"colour", "red"}}}), app::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_key_values({{{"problem", "toy"}, {"tol", "abc"}}}), app::ConfigError);

  const auto cfg = RunConfig::from_key_values({{{"problem", "toy"}, {"seed", "4"}}, {{"seed", "9"}}}, 77);
  CHECK(cfg.seed == 9);
  CHECK(cfg.method == app::Method::uki);
  CHECK(RunConfig::from_key_values({{{"problem", "toy"}}}, 77).seed == 77);
}

TEST_CASE("problem defaults") {
  const auto toy = app::make_problem(app::RunConfig::from_key_values({{{"problem", "toy"}}}));
  CHECK(toy.init.mean[0] == 10.0);
  CHECK(toy.init.cov(0, 0) == 1.0);
  const auto p2 = app::make_problem(app::RunConfig::from_key_values({{{"problem", "piston2"}}}));
  CHECK(p2.init.mean == Vector::Ones(2));
  CHECK(p2.init.cov(1, 1) == doctest::Approx(0.01));
  CHECK(p2.problem->n_y() == 100);
  CHECK(p2.problem->sigma_eta()(0, 0) == doctest::Approx(4e-6));
  CHECK_THROWS_AS(app::make_problem(app::RunConfig::from_key_values({{{"problem", "piston2"}, {"theta_ref", "1,2,3"}}})),
                  app::ConfigError);
}

TEST_CASE("exit codes") {
  const auto work = cli::scratch_dir("cli_exit");
  std::ofstream(work / "bad.cfg") << "method = uki\n";
  auto o = cli::run("calibrate --config '" + (work / "bad.cfg").string() + "'", work);
  CHECK(o.status == 1);
  CHECK(o.err.find("problem") != std::string::npos);

  o = cli::run("calibrate --problem toy --method simplex --output-dir '" + (work / "x").string() + "'", work);
  CHECK(o.status == 1);
  CHECK(o.err.find("method") != std::string::npos);

  o = cli::run("calibrate --problem toy --no-such-flag 1", work);
  CHECK(o.status == 1);

  o = cli::run("simulate --problem piston2 --dt 0.01 --output-dir '" + (work / "cfl").string() + "'", work);
  CHECK(o.status == 2);
  CHECK(o.err.find("CFL") != std::string::npos);

  o = cli::run("compare --problem toy --config-b '" + (work / "b.cfg").string() + "' --output-dir '" +
                   (work / "cmp").string() + "'",
               work);
  CHECK(o.status == 1);
  fs::remove_all(work);
}

TEST_CASE("toy calibration writes a schema-valid summary") {
  const auto work = cli::scratch_dir("cli_toy");
  const auto out = work / "run";
  auto o = cli::run("calibrate --problem toy --method uki --init-mean 10 --output-dir '" + out.string() + "'", work);
  REQUIRE(o.status == 0);
  const auto summary = io::read_json(out / "summary.json");
  CHECK(schema_check::validate(summary, summary_schema()).empty());
  const double m = summary["final_mean"][0].get<double>();
  bool near = false;
  for (double r : {-0.981, -0.821, 0.0, 0.821, 0.981}) near = near || std::abs(m - r) <= 0.05;
  CHECK(near);
  const auto iters = io::read_csv(out / "iterations.csv");
  CHECK(iters.header == std::vector<std::string>{"iter", "m_1", "C_diag_1", "phi"});
  CHECK(io::read_json(out / "timing.json").contains("wall_time_s"));
  fs::remove_all(work);
}

TEST_CASE("flags override the config file and the seed falls back to the environment") {
  const auto work = cli::scratch_dir("cli_layers");
  std::ofstream(work / "run.cfg") << "problem = toy\nmethod = etki\nn_iterations = 4\n";
  const std::string cfg = "--config '" + (work / "run.cfg").string() + "'";
  REQUIRE(cli::run("calibrate " + cfg + " --n-iterations 6 --output-dir '" + (work / "a").string() + "'", work,
                   "KALIBR_SEED=5")
              .status == 0);
  REQUIRE(cli::run("calibrate " + cfg + " --n-iterations 6 --seed 5 --output-dir '" + (work / "b").string() + "'",
                   work)
              .status == 0);
  REQUIRE(cli::run("calibrate " + cfg + " --n-iterations 6 --seed 6 --output-dir '" + (work / "c").string() + "'",
                   work)
              .status == 0);
  const auto a = io::read_json(work / "a" / "summary.json");
  CHECK(a["seed"] == 5);
  CHECK(a["n_iterations"] == 6);
  CHECK(same_files(work / "a", work / "b"));
  CHECK_FALSE(same_files(work / "a", work / "c"));
  fs::remove_all(work);
}

TEST_CASE("seeded artifacts are bitwise reproducible for every method") {
  const auto work = cli::scratch_dir("cli_repro");
  const std::vector<std::string> runs = {
      "calibrate --problem toy --method uki",
      "calibrate --problem toy --method etki --seed 3",
      "calibrate --problem toy --method fd_newton --init-mean 11",
      "sample --problem toy --n-samples 3000 --burn-in 500 --step-size 0.2 --seed 3",
      "calibrate --problem linear --method uki",
      "calibrate --problem damage_synthetic --seed 4",
      "calibrate --problem piston2 --t-final 0.2 --n-iterations 3 --seed 2",
  };
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto a = work / ("a" + std::to_string(k));
    const auto b = work / ("b" + std::to_string(k));
    CAPTURE(runs[k]);
    REQUIRE(cli::run(runs[k] + " --output-dir '" + a.string() + "'", work).status == 0);
    REQUIRE(cli::run(runs[k] + " --output-dir '" + b.string() + "' --jobs 2", work).status == 0);
    CHECK(same_files(a, b));
    CHECK(schema_check::validate(io::read_json(a / "summary.json"), summary_schema()).empty());
  }
  CHECK(fs::exists(work / "a3" / "samples.csv"));
  CHECK(fs::exists(work / "a5" / "field.csv"));
  CHECK(fs::exists(work / "a6" / "forward_trace.csv"));
  CHECK(fs::exists(work / "a6" / "fluid_final.csv"));
  CHECK(fs::exists(work / "a6" / "observations.csv"));
  fs::remove_all(work);
}

TEST_CASE("simulate reproduces the golden trace") {
  const auto work = cli::scratch_dir("cli_sim");
  REQUIRE(cli::run("simulate --problem piston2 --theta 0.5,2 --output-dir '" + work.string() + "/s'", work).status ==
          0);
  CHECK(cli::slurp(work / "s" / "forward_trace.csv") == cli::slurp(fs::path(KALIBR_TEST_DATA) / "piston_golden.csv"));
  fs::remove_all(work);
}

TEST_CASE("compare") {
  const auto work = cli::scratch_dir("cli_cmp");
  REQUIRE(cli::run("compare --problem toy --output-dir '" + (work / "same").string() + "'", work).status == 0);
  const auto same = io::read_json(work / "same" / "comparison.json");
  for (const auto& d : same["discrepancy"]["mean_abs"]) CHECK(d.get<double>() == 0.0);
  for (const auto& d : same["discrepancy"]["std_rel"]) CHECK(d.get<double>() == 0.0);

  REQUIRE(cli::run("compare --problem toy --method-a uki --method-b etki --output-dir '" + (work / "ue").string() +
                       "'",
                   work)
              .status == 0);
  const auto ue = io::read_json(work / "ue" / "comparison.json");
  CHECK(ue["a"]["method"] == "uki");
  CHECK(ue["b"]["method"] == "etki");
  CHECK(ue["a"]["misfits"].size() == ue["a"]["means"].size());
  CHECK(ue["b"]["misfits"].size() == 31);
  fs::remove_all(work);
}
