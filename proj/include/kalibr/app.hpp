#pragma once

#include "kalibr/damage_field.hpp"
#include "kalibr/inversion.hpp"
#include "kalibr/piston.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kalibr::app {

enum class Problem { toy, piston2, piston3, damage_synthetic, linear };
enum class Method { uki, etki, mcmc, fd_newton };

std::string to_string(Problem p);
std::string to_string(Method m);

/// Invalid or missing configuration; maps to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string name;
  std::string help;
};

/// Every accepted configuration key. CLI flags use the same names with
/// dashes instead of underscores.
const std::vector<KeySpec>& config_keys();

struct RunConfig {
  Problem problem = Problem::toy;
  Method method = Method::uki;
  std::optional<std::vector<double>> init_mean;
  /// Initial covariance is init_cov_scale^2 * I.
  std::optional<double> init_cov_scale;
  std::optional<int> n_iterations;
  double tol = 1e-6;
  double kappa = 0.0;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "kalibr_out";
  int jobs = 0;

  int ensemble_size = 10;

  double step_size = 1e-2;
  int n_samples = 50000;
  int burn_in = 10000;
  /// "uki" starts the chain from a UKI run's final mean, "init" from init_mean.
  std::string mcmc_start = "uki";

  std::optional<std::vector<double>> theta_ref;
  std::optional<std::vector<double>> theta;
  std::optional<double> noise_sigma;
  double dx = 5e-3;
  double dt = 1e-3;
  double t_final = 1.0;
  euler::Limiter limiter = euler::Limiter::minmod;

  int n_modes_truth = 10;
  int n_modes_inferred = 5;
  double noise_level = 0.05;
  damage::FieldObservation field_observation = damage::FieldObservation::smoothed_omega;

  std::optional<std::string> linear_a;
  std::optional<std::string> linear_b;
  std::optional<std::string> linear_y;

  /// Later maps win. `fallback_seed` applies when no map sets `seed`.
  static RunConfig from_key_values(const std::vector<std::map<std::string, std::string>>& layers,
                                   std::optional<std::uint64_t> fallback_seed = std::nullopt);
};

/// Problem instance shared by all methods.
struct ProblemSetup {
  std::shared_ptr<const InverseProblem> problem;
  GaussianState init;
  int default_iterations = 15;
  nlohmann::json info = nlohmann::json::object();

  std::optional<piston::PistonScenario> scenario;
  std::vector<double> obs_times;
  Vector clean_observations;

  std::optional<damage::FieldInversionConfig> field_config;
  std::optional<damage::KLField> field_truth;
};

ProblemSetup make_problem(const RunConfig& cfg);

struct RunResult {
  nlohmann::json summary;
  /// Per-iteration misfits and means, empty for MCMC.
  std::vector<double> misfits;
  std::vector<Vector> means;
  double wall_time_s = 0.0;
};

/// Runs the configured method and writes artifacts into cfg.output_dir:
/// summary.json, timing.json and, per method and problem, iterations.csv,
/// covariances.json, samples.csv, observations.csv, forward_trace.csv,
/// fluid_final.csv, field.csv.
RunResult run(const RunConfig& cfg);

/// Runs both configurations into output_dir/a and output_dir/b and writes
/// output_dir/comparison.json.
nlohmann::json compare(const RunConfig& a, const RunConfig& b, const std::filesystem::path& output_dir);

/// Forward run at cfg.theta (or the reference parameters).
void simulate(const RunConfig& cfg);

/// Full command-line entry point; returns the process exit status.
int cli_main(int argc, const char* const* argv);

}  // namespace kalibr::app
