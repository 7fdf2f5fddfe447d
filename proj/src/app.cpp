#include "kalibr/app.hpp"

#include "kalibr/io.hpp"
#include "kalibr/mcmc.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace kalibr::app {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Problem p) {
  switch (p) {
    case Problem::toy: return "toy";
    case Problem::piston2: return "piston2";
    case Problem::piston3: return "piston3";
    case Problem::damage_synthetic: return "damage_synthetic";
    case Problem::linear: return "linear";
  }
  return "unknown";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::uki: return "uki";
    case Method::etki: return "etki";
    case Method::mcmc: return "mcmc";
    case Method::fd_newton: return "fd_newton";
  }
  return "unknown";
}

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"problem", "toy | piston2 | piston3 | damage_synthetic | linear (required)"},
      {"method", "uki | etki | mcmc | fd_newton (default uki)"},
      {"init_mean", "initial mean, comma separated; one value is broadcast"},
      {"init_cov_scale", "initial standard deviation s, covariance s^2 I"},
      {"n_iterations", "iteration count (defaults: toy/linear 30, piston/damage 15)"},
      {"tol", "relative mean-change tolerance for UKI, 0 disables early stop"},
      {"kappa", "unscented transform kappa (default 0)"},
      {"seed", "seed for data synthesis, ensembles and chains"},
      {"output_dir", "directory for artifacts"},
      {"jobs", "parallel forward evaluations (default: hardware threads)"},
      {"ensemble_size", "ETKI ensemble size J"},
      {"step_size", "MCMC proposal standard deviation"},
      {"n_samples", "MCMC proposals including burn-in"},
      {"burn_in", "MCMC burn-in proposals discarded"},
      {"mcmc_start", "uki | init: chain starting point"},
      {"theta_ref", "reference parameters used to synthesize data"},
      {"theta", "parameters for the simulate subcommand"},
      {"noise_sigma", "observation noise standard deviation (piston 2e-3, linear 0.1)"},
      {"dx", "piston grid spacing"},
      {"dt", "piston time step"},
      {"t_final", "piston final time"},
      {"limiter", "first_order | minmod | van_leer"},
      {"n_modes_truth", "KL modes in the synthetic truth field"},
      {"n_modes_inferred", "KL modes calibrated"},
      {"noise_level", "relative noise of the damage observations"},
      {"field_observation", "smoothed | identity"},
      {"linear_a", "linear model matrix, rows separated by ';'"},
      {"linear_b", "linear model offset"},
      {"linear_y", "linear model observations"},
  };
  return keys;
}

namespace {

// ----------------------------------------------------------------------------
// Value parsing

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("key '" + key + "': empty list entry in '" + text + "'");
    out.push_back(parse_double(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix parse_matrix(const std::string& key, const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::istringstream is(text);
  while (std::getline(is, row, ';')) rows.push_back(parse_list(key, row));
  if (rows.empty()) throw ConfigError("key '" + key + "': empty matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw ConfigError("key '" + key + "': ragged matrix rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& text,
                std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError("key '" + key + "': unknown value '" + text + "' (expected one of: " + allowed + ")");
}

}  // namespace

RunConfig RunConfig::from_key_values(const std::vector<std::map<std::string, std::string>>& layers,
                                     std::optional<std::uint64_t> fallback_seed) {
  std::set<std::string> known;
  for (const auto& k : config_keys()) known.insert(k.name);

  std::map<std::string, std::string> kv;
  for (const auto& layer : layers) {
    for (const auto& [k, v] : layer) {
      if (!known.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
      kv[k] = v;
    }
  }

  RunConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  const std::string* problem = get("problem");
  if (!problem) throw ConfigError("missing required key 'problem'");
  cfg.problem = parse_enum<Problem>("problem", *problem,
                                    {{"toy", Problem::toy},
                                     {"piston2", Problem::piston2},
                                     {"piston3", Problem::piston3},
                                     {"damage_synthetic", Problem::damage_synthetic},
                                     {"linear", Problem::linear}});
  if (auto v = get("method")) {
    cfg.method = parse_enum<Method>("method", *v,
                                    {{"uki", Method::uki},
                                     {"etki", Method::etki},
                                     {"mcmc", Method::mcmc},
                                     {"fd_newton", Method::fd_newton}});
  }
  if (auto v = get("init_mean")) cfg.init_mean = parse_list("init_mean", *v);
  if (auto v = get("init_cov_scale")) cfg.init_cov_scale = parse_double("init_cov_scale", *v);
  if (auto v = get("n_iterations")) cfg.n_iterations = static_cast<int>(parse_integer("n_iterations", *v));
  if (auto v = get("tol")) cfg.tol = parse_double("tol", *v);
  if (auto v = get("kappa")) cfg.kappa = parse_double("kappa", *v);
  if (auto v = get("seed")) {
    cfg.seed = static_cast<std::uint64_t>(parse_integer("seed", *v));
  } else if (fallback_seed) {
    cfg.seed = *fallback_seed;
  }
  if (auto v = get("output_dir")) cfg.output_dir = *v;
  if (auto v = get("jobs")) cfg.jobs = static_cast<int>(parse_integer("jobs", *v));
  if (auto v = get("ensemble_size")) cfg.ensemble_size = static_cast<int>(parse_integer("ensemble_size", *v));
  if (auto v = get("step_size")) cfg.step_size = parse_double("step_size", *v);
  if (auto v = get("n_samples")) cfg.n_samples = static_cast<int>(parse_integer("n_samples", *v));
  if (auto v = get("burn_in")) cfg.burn_in = static_cast<int>(parse_integer("burn_in", *v));
  if (auto v = get("mcmc_start")) {
    if (*v != "uki" && *v != "init") throw ConfigError("key 'mcmc_start': expected 'uki' or 'init'");
    cfg.mcmc_start = *v;
  }
  if (auto v = get("theta_ref")) cfg.theta_ref = parse_list("theta_ref", *v);
  if (auto v = get("theta")) cfg.theta = parse_list("theta", *v);
  if (auto v = get("noise_sigma")) cfg.noise_sigma = parse_double("noise_sigma", *v);
  if (auto v = get("dx")) cfg.dx = parse_double("dx", *v);
  if (auto v = get("dt")) cfg.dt = parse_double("dt", *v);
  if (auto v = get("t_final")) cfg.t_final = parse_double("t_final", *v);
  if (auto v = get("limiter")) {
    cfg.limiter = parse_enum<euler::Limiter>("limiter", *v,
                                             {{"first_order", euler::Limiter::first_order},
                                              {"minmod", euler::Limiter::minmod},
                                              {"van_leer", euler::Limiter::van_leer}});
  }
  if (auto v = get("n_modes_truth")) cfg.n_modes_truth = static_cast<int>(parse_integer("n_modes_truth", *v));
  if (auto v = get("n_modes_inferred")) {
    cfg.n_modes_inferred = static_cast<int>(parse_integer("n_modes_inferred", *v));
  }
  if (auto v = get("noise_level")) cfg.noise_level = parse_double("noise_level", *v);
  if (auto v = get("field_observation")) {
    cfg.field_observation = parse_enum<damage::FieldObservation>(
        "field_observation", *v,
        {{"smoothed", damage::FieldObservation::smoothed_omega},
         {"identity", damage::FieldObservation::identity_coefficients}});
  }
  if (auto v = get("linear_a")) cfg.linear_a = *v;
  if (auto v = get("linear_b")) cfg.linear_b = *v;
  if (auto v = get("linear_y")) cfg.linear_y = *v;

  if (cfg.n_iterations && *cfg.n_iterations < 1) throw ConfigError("key 'n_iterations': must be >= 1");
  if (cfg.init_cov_scale && !(*cfg.init_cov_scale > 0.0)) throw ConfigError("key 'init_cov_scale': must be > 0");
  if (cfg.tol < 0.0) throw ConfigError("key 'tol': must be >= 0");
  if (cfg.ensemble_size < 2) throw ConfigError("key 'ensemble_size': must be >= 2");
  if (!(cfg.step_size > 0.0)) throw ConfigError("key 'step_size': must be > 0");
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.n_samples) {
    throw ConfigError("keys 'burn_in'/'n_samples': need 0 <= burn_in < n_samples");
  }
  if (cfg.noise_sigma && !(*cfg.noise_sigma > 0.0)) throw ConfigError("key 'noise_sigma': must be > 0");
  return cfg;
}

// ----------------------------------------------------------------------------
// Problem setup

namespace {

GaussianState initial_gaussian(const RunConfig& cfg, int n_theta, double default_mean, double default_scale) {
  Vector mean = Vector::Constant(n_theta, default_mean);
  if (cfg.init_mean) {
    if (cfg.init_mean->size() == 1) {
      mean.setConstant(cfg.init_mean->front());
    } else if (static_cast<int>(cfg.init_mean->size()) == n_theta) {
      mean = to_vector(*cfg.init_mean);
    } else {
      throw ConfigError("key 'init_mean': expected 1 or " + std::to_string(n_theta) + " values");
    }
  }
  const double s = cfg.init_cov_scale.value_or(default_scale);
  return {mean, s * s * Matrix::Identity(n_theta, n_theta)};
}

piston::PistonScenario scenario_from(const RunConfig& cfg) {
  piston::PistonScenario sc;
  sc.dx = cfg.dx;
  sc.dt = cfg.dt;
  sc.t_final = cfg.t_final;
  sc.fluid.limiter = cfg.limiter;
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return sc;
}

Vector piston_theta(const std::optional<std::vector<double>>& given, int n_theta, const char* key) {
  Vector theta = n_theta == 2 ? Vector{{0.5, 2.0}} : Vector{{0.5, 2.0, 2.0}};
  if (given) {
    if (static_cast<int>(given->size()) != n_theta) {
      throw ConfigError(std::string("key '") + key + "': expected " + std::to_string(n_theta) + " values");
    }
    theta = to_vector(*given);
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(theta[i] > 0.0)) throw ConfigError(std::string("key '") + key + "': entries must be positive");
  }
  return theta;
}

damage::FieldInversionConfig field_config_from(const RunConfig& cfg, int iterations) {
  damage::FieldInversionConfig fc;
  fc.n_modes_truth = cfg.n_modes_truth;
  fc.n_modes_inferred = cfg.n_modes_inferred;
  fc.noise = cfg.noise_level;
  fc.seed = cfg.seed;
  fc.n_iterations = iterations;
  fc.observation = cfg.field_observation;
  if (cfg.noise_sigma) fc.sigma_eta = *cfg.noise_sigma;
  return fc;
}

}  // namespace

ProblemSetup make_problem(const RunConfig& cfg) {
  ProblemSetup s;
  switch (cfg.problem) {
    case Problem::toy: {
      s.problem = std::make_shared<InverseProblem>(std::make_shared<ToyModel>(), Vector::Zero(1),
                                                   Matrix::Identity(1, 1));
      s.init = initial_gaussian(cfg, 1, 10.0, 1.0);
      s.default_iterations = 30;
      break;
    }
    case Problem::linear: {
      const Matrix a = parse_matrix("linear_a", cfg.linear_a.value_or("1,0;0,1;1,1"));
      const Vector b = cfg.linear_b ? to_vector(parse_list("linear_b", *cfg.linear_b))
                                    : Vector::Zero(a.rows());
      const Vector y = cfg.linear_y ? to_vector(parse_list("linear_y", *cfg.linear_y))
                                    : Vector(a * Vector::LinSpaced(a.cols(), 1.0, a.cols()) + b);
      if (b.size() != a.rows() || y.size() != a.rows()) {
        throw ConfigError("keys 'linear_b'/'linear_y': length must equal the rows of 'linear_a'");
      }
      const double sigma = cfg.noise_sigma.value_or(0.1);
      s.problem = std::make_shared<InverseProblem>(std::make_shared<LinearModel>(a, b), y,
                                                   sigma * sigma * Matrix::Identity(a.rows(), a.rows()));
      s.init = initial_gaussian(cfg, static_cast<int>(a.cols()), 0.0, 1.0);
      s.default_iterations = 30;
      s.info["noise_sigma"] = sigma;
      break;
    }
    case Problem::piston2:
    case Problem::piston3: {
      const int n_theta = cfg.problem == Problem::piston2 ? 2 : 3;
      const piston::PistonScenario sc = scenario_from(cfg);
      const Vector theta_ref = piston_theta(cfg.theta_ref, n_theta, "theta_ref");
      const double sigma = cfg.noise_sigma.value_or(2e-3);
      const piston::Simulation sim = piston::simulate_piston(sc, theta_ref);
      s.clean_observations = sim.observations;
      s.obs_times = sim.obs_times;
      const Vector y = piston::synthesize_observations(sim.observations, sigma, cfg.seed);
      auto model = std::make_shared<piston::PistonModel>(sc, n_theta);
      s.problem = std::make_shared<InverseProblem>(model, y,
                                                   sigma * sigma * Matrix::Identity(y.size(), y.size()));
      s.init = initial_gaussian(cfg, n_theta, 1.0, 0.1);
      s.default_iterations = 15;
      s.scenario = sc;
      s.info["theta_ref"] = io::to_json(theta_ref);
      s.info["noise_sigma"] = sigma;
      s.info["limiter"] = euler::to_string(sc.fluid.limiter);
      break;
    }
    case Problem::damage_synthetic: {
      const int iterations = cfg.n_iterations.value_or(15);
      damage::FieldInversionConfig fc = field_config_from(cfg, iterations);
      damage::FieldProblem fp;
      try {
        fp = damage::make_field_problem(fc);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      s.problem = fp.problem;
      s.init = initial_gaussian(cfg, fc.n_modes_inferred, 0.0, 1.0);
      s.default_iterations = 15;
      s.field_config = fc;
      s.field_truth = fp.truth;
      s.info["truth_coefficients"] = io::to_json(fp.truth.coefficients);
      s.info["sigma_eta"] = fc.sigma_eta;
      s.info["noise_level"] = fc.noise;
      break;
    }
  }
  return s;
}

// ----------------------------------------------------------------------------
// Running

namespace {

struct MethodOutput {
  Vector mean;
  std::optional<Matrix> cov;
  double phi = 0.0;
  std::vector<io::IterationRow> rows;
  std::vector<std::pair<int, GaussianState>> gaussians;  // for covariances.json
  json extra = json::object();
};

double safe_misfit(const InverseProblem& p, const Vector& theta) {
  try {
    return misfit_at(p, theta);
  } catch (const ForwardError&) {
    return std::numeric_limits<double>::infinity();
  }
}

MethodOutput run_uki(const RunConfig& cfg, const ProblemSetup& s, const EvaluationPool& pool) {
  UkiOptions opts;
  opts.n_max = cfg.n_iterations.value_or(s.default_iterations);
  opts.tol = cfg.tol;
  opts.sigma.kappa = cfg.kappa;
  const UkiTrace trace = uki_run(*s.problem, s.init, opts, pool);

  MethodOutput out;
  for (const auto& it : trace.iterations) {
    out.rows.push_back({it.index, it.state.mean, Vector(it.state.cov.diagonal()), it.phi});
    out.gaussians.emplace_back(it.index, it.state);
    const Eigen::LLT<Matrix> llt(it.state.cov);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("non-SPD covariance in trace");
  }
  out.mean = trace.final_state().mean;
  out.cov = trace.final_state().cov;
  out.phi = trace.iterations.back().phi;
  out.extra["converged"] = trace.converged;
  out.extra["sigma_nu"] = trace.sigma_nu_policy;
  out.extra["sigma_omega"] = trace.sigma_omega_policy;
  return out;
}

MethodOutput run_etki(const RunConfig& cfg, const ProblemSetup& s, const EvaluationPool& pool) {
  const int n_max = cfg.n_iterations.value_or(s.default_iterations);
  const EtkiTrace trace = etki_run(*s.problem, s.init, cfg.ensemble_size, cfg.seed, n_max, pool);
  MethodOutput out;
  for (const auto& it : trace.iterations) {
    out.rows.push_back({it.index, it.mean, Vector(it.cov.diagonal()), it.phi});
    out.gaussians.emplace_back(it.index, GaussianState(it.mean, it.cov));
  }
  out.mean = trace.iterations.back().mean;
  out.cov = trace.iterations.back().cov;
  out.phi = trace.iterations.back().phi;
  out.extra["ensemble_size"] = cfg.ensemble_size;
  return out;
}

MethodOutput run_fd_newton(const RunConfig& cfg, const ProblemSetup& s) {
  QuasiNewtonOptions opts;
  opts.n_max = cfg.n_iterations.value_or(100);
  const InverseProblem& p = *s.problem;
  const QuasiNewtonTrace trace =
      fd_quasi_newton([&p](const Vector& x) { return safe_misfit(p, x); }, s.init.mean, opts);
  MethodOutput out;
  for (std::size_t k = 0; k < trace.iterates.size(); ++k) {
    out.rows.push_back({static_cast<int>(k), trace.iterates[k], std::nullopt, trace.values[k]});
  }
  out.mean = trace.iterates.back();
  out.phi = trace.values.back();
  out.extra["converged"] = trace.converged;
  out.extra["line_search_failed"] = trace.line_search_failed;
  return out;
}

MethodOutput run_mcmc(const RunConfig& cfg, const ProblemSetup& s, const EvaluationPool& pool,
                      const fs::path& dir) {
  Vector theta0 = s.init.mean;
  if (cfg.mcmc_start == "uki") {
    UkiOptions opts;
    opts.n_max = cfg.n_iterations.value_or(s.default_iterations);
    opts.tol = cfg.tol;
    theta0 = uki_run(*s.problem, s.init, opts, pool).final_state().mean;
  }
  ChainConfig chain;
  chain.step_size = cfg.step_size;
  chain.n_samples = cfg.n_samples;
  chain.burn_in = cfg.burn_in;
  chain.seed = cfg.seed;
  const ChainResult result = rwm_sample(*s.problem, theta0, chain);
  const PosteriorStats stats = posterior_stats(result);

  std::vector<std::string> header;
  for (Eigen::Index i = 1; i <= theta0.size(); ++i) header.push_back("theta_" + std::to_string(i));
  io::CsvWriter csv(dir / "samples.csv", header);
  for (const auto& x : result.samples) {
    for (Eigen::Index i = 0; i < x.size(); ++i) csv.cell(x[i]);
    csv.end_row();
  }

  MethodOutput out;
  out.mean = stats.mean;
  out.cov = stats.cov;
  out.phi = safe_misfit(*s.problem, stats.mean);
  out.extra["acceptance_rate"] = result.acceptance_rate;
  out.extra["accepted"] = result.accepted;
  out.extra["proposals"] = result.proposals;
  out.extra["n_retained"] = result.samples.size();
  out.extra["theta0"] = io::to_json(theta0);
  out.extra["step_size"] = chain.step_size;
  out.extra["burn_in"] = chain.burn_in;
  return out;
}

void write_piston_artifacts(const ProblemSetup& s, const Vector& theta, const fs::path& dir) {
  {
    io::CsvWriter csv(dir / "observations.csv", {"t", "y_obs", "y_clean"});
    for (std::size_t k = 0; k < s.obs_times.size(); ++k) {
      csv.cell(s.obs_times[k]).cell(s.problem->y()[k]).cell(s.clean_observations[k]);
      csv.end_row();
    }
  }
  piston::Simulation sim;
  try {
    sim = piston::simulate_piston(*s.scenario, theta);
  } catch (const std::exception& e) {
    std::cerr << "kalibr: warning: forward trace at the final estimate failed: " << e.what() << '\n';
    return;
  }
  io::CsvWriter trace(dir / "forward_trace.csv", {"t", "u"});
  for (std::size_t k = 0; k < sim.times.size(); ++k) {
    trace.cell(sim.times[k]).cell(sim.displacement[k]);
    trace.end_row();
  }
  io::CsvWriter fluid(dir / "fluid_final.csv", {"x", "rho", "v", "p"});
  for (int i = 0, n = sim.final_fluid.n_active(); i < n; ++i) {
    const euler::Primitive w = sim.final_fluid.primitive(i);
    fluid.cell(sim.final_fluid.grid.x_center(i)).cell(w.rho).cell(w.v).cell(w.p);
    fluid.end_row();
  }
}

void write_field_artifacts(const ProblemSetup& s, const GaussianState& posterior, const fs::path& dir) {
  const damage::FieldEnvelope env = damage::field_envelope(posterior, *s.field_truth, *s.field_config);
  io::CsvWriter csv(dir / "field.csv", {"y", "omega_est", "omega_lo", "omega_hi", "omega_truth"});
  for (std::size_t i = 0; i < env.y.size(); ++i) {
    csv.cell(env.y[i]).cell(env.omega_est[i]).cell(env.omega_lo[i]).cell(env.omega_hi[i]).cell(env.omega_truth[i]);
    csv.end_row();
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("key 'output_dir': cannot create directory '" + dir.string() + "'");
  }
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  ensure_dir(cfg.output_dir);
  const ProblemSetup setup = make_problem(cfg);
  const EvaluationPool pool(cfg.jobs);

  MethodOutput out;
  switch (cfg.method) {
    case Method::uki: out = run_uki(cfg, setup, pool); break;
    case Method::etki: out = run_etki(cfg, setup, pool); break;
    case Method::fd_newton: out = run_fd_newton(cfg, setup); break;
    case Method::mcmc: out = run_mcmc(cfg, setup, pool, cfg.output_dir); break;
  }

  if (!out.rows.empty()) io::write_iterations_csv(cfg.output_dir / "iterations.csv", out.rows);
  if (!out.gaussians.empty()) {
    json sidecar = json::array();
    for (const auto& [index, g] : out.gaussians) {
      sidecar.push_back({{"iter", index}, {"mean", io::to_json(g.mean)}, {"cov", io::to_json(g.cov)}});
    }
    io::write_json(cfg.output_dir / "covariances.json", {{"iterations", sidecar}});
  }
  if (setup.scenario) write_piston_artifacts(setup, out.mean, cfg.output_dir);
  if (setup.field_truth && out.cov) write_field_artifacts(setup, GaussianState(out.mean, *out.cov), cfg.output_dir);

  RunResult result;
  json& summary = result.summary;
  summary["problem"] = to_string(cfg.problem);
  summary["method"] = to_string(cfg.method);
  summary["n_theta"] = setup.problem->n_theta();
  summary["n_y"] = setup.problem->n_y();
  summary["seed"] = cfg.seed;
  summary["init_mean"] = io::to_json(setup.init.mean);
  summary["init_cov"] = io::to_json(setup.init.cov);
  summary["final_mean"] = io::to_json(out.mean);
  summary["final_cov"] = out.cov ? io::to_json(*out.cov) : json(nullptr);
  summary["phi"] = out.phi;
  summary["n_iterations"] = out.rows.empty() ? 0 : out.rows.back().iter;
  summary["problem_info"] = setup.info;
  summary["method_info"] = out.extra;
  io::write_json(cfg.output_dir / "summary.json", summary);

  for (const auto& r : out.rows) {
    result.misfits.push_back(r.phi);
    result.means.push_back(r.mean);
  }
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  io::write_json(cfg.output_dir / "timing.json", {{"wall_time_s", result.wall_time_s}});
  return result;
}

json compare(const RunConfig& a, const RunConfig& b, const fs::path& output_dir) {
  if (a.problem != b.problem) {
    throw ConfigError("compare: configurations target different problems ('" + to_string(a.problem) +
                      "' vs '" + to_string(b.problem) + "')");
  }
  ensure_dir(output_dir);
  RunConfig ca = a, cb = b;
  ca.output_dir = output_dir / "a";
  cb.output_dir = output_dir / "b";
  const RunResult ra = run(ca);
  const RunResult rb = run(cb);

  auto side = [](const RunResult& r) {
    json means = json::array();
    for (const auto& m : r.means) means.push_back(io::to_json(m));
    return json{{"method", r.summary["method"]},
                {"final_mean", r.summary["final_mean"]},
                {"final_cov", r.summary["final_cov"]},
                {"phi", r.summary["phi"]},
                {"misfits", r.misfits},
                {"means", means}};
  };

  const Vector ma = io::vector_from_json(ra.summary["final_mean"]);
  const Vector mb = io::vector_from_json(rb.summary["final_mean"]);
  json mean_abs = json::array(), mean_rel = json::array(), std_rel = json::array();
  for (Eigen::Index i = 0; i < ma.size(); ++i) {
    const double d = std::abs(ma[i] - mb[i]);
    mean_abs.push_back(d);
    mean_rel.push_back(mb[i] != 0.0 ? d / std::abs(mb[i]) : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
  }
  if (!ra.summary["final_cov"].is_null() && !rb.summary["final_cov"].is_null()) {
    const Matrix covs_a = io::matrix_from_json(ra.summary["final_cov"]);
    const Matrix covs_b = io::matrix_from_json(rb.summary["final_cov"]);
    for (Eigen::Index i = 0; i < ma.size(); ++i) {
      const double sa = std::sqrt(covs_a(i, i)), sb = std::sqrt(covs_b(i, i));
      std_rel.push_back(sb != 0.0 ? std::abs(sa - sb) / sb : (sa == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
  }

  json report{{"problem", to_string(a.problem)},
              {"a", side(ra)},
              {"b", side(rb)},
              {"discrepancy", {{"mean_abs", mean_abs}, {"mean_rel", mean_rel}, {"std_rel", std_rel}}}};
  io::write_json(output_dir / "comparison.json", report);
  return report;
}

void simulate(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  if (cfg.problem == Problem::piston2 || cfg.problem == Problem::piston3) {
    const int n_theta = cfg.problem == Problem::piston2 ? 2 : 3;
    const piston::PistonScenario sc = scenario_from(cfg);
    const Vector theta = piston_theta(cfg.theta ? cfg.theta : cfg.theta_ref, n_theta, "theta");
    const piston::Simulation sim = piston::simulate_piston(sc, theta);
    {
      io::CsvWriter trace(cfg.output_dir / "forward_trace.csv", {"t", "u"});
      for (std::size_t k = 0; k < sim.times.size(); ++k) {
        trace.cell(sim.times[k]).cell(sim.displacement[k]);
        trace.end_row();
      }
      io::CsvWriter obs(cfg.output_dir / "observations.csv", {"t", "u"});
      for (std::size_t k = 0; k < sim.obs_times.size(); ++k) {
        obs.cell(sim.obs_times[k]).cell(sim.observations[k]);
        obs.end_row();
      }
      io::CsvWriter fluid(cfg.output_dir / "fluid_final.csv", {"x", "rho", "v", "p"});
      for (int i = 0, n = sim.final_fluid.n_active(); i < n; ++i) {
        const euler::Primitive w = sim.final_fluid.primitive(i);
        fluid.cell(sim.final_fluid.grid.x_center(i)).cell(w.rho).cell(w.v).cell(w.p);
        fluid.end_row();
      }
    }
    io::write_json(cfg.output_dir / "simulate.json",
                   {{"problem", to_string(cfg.problem)}, {"theta", io::to_json(theta)}, {"n_steps", sc.n_steps()}});
    return;
  }

  const ProblemSetup setup = make_problem(cfg);
  Vector theta = setup.init.mean;
  if (cfg.theta) {
    if (static_cast<int>(cfg.theta->size()) != setup.problem->n_theta()) {
      throw ConfigError("key 'theta': expected " + std::to_string(setup.problem->n_theta()) + " values");
    }
    theta = to_vector(*cfg.theta);
  }
  const Vector g = setup.problem->forward().evaluate(theta);
  io::CsvWriter csv(cfg.output_dir / "forward_output.csv", {"index", "value"});
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    csv.cell(static_cast<long>(i)).cell(g[i]);
    csv.end_row();
  }
  io::write_json(cfg.output_dir / "simulate.json",
                 {{"problem", to_string(cfg.problem)}, {"theta", io::to_json(theta)}, {"phi", misfit(*setup.problem, g)}});
}

// ----------------------------------------------------------------------------
// Command line

namespace {

std::string kebab(std::string s) {
  for (auto& c : s)
    if (c == '_') c = '-';
  return s;
}

using FlagStore = std::map<std::string, std::optional<std::string>>;

void add_key_flags(CLI::App* sub, FlagStore& store, const std::string& prefix = "") {
  for (const auto& key : config_keys()) {
    sub->add_option("--" + prefix + kebab(key.name), store[key.name], key.help);
  }
}

std::map<std::string, std::string> flags_to_map(const FlagStore& store) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : store)
    if (v) out[k] = *v;
  return out;
}

std::optional<std::uint64_t> env_seed() {
  const char* text = std::getenv("KALIBR_SEED");
  if (!text || !*text) return std::nullopt;
  try {
    return static_cast<std::uint64_t>(parse_integer("KALIBR_SEED", text));
  } catch (const ConfigError&) {
    throw ConfigError(std::string("environment variable KALIBR_SEED: expected an integer, got '") + text + "'");
  }
}

std::map<std::string, std::string> file_layer(const std::optional<std::string>& path) {
  if (!path) return {};
  try {
    return io::read_key_values(*path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App cli{"kalibr: derivative-free Bayesian calibration (UKI, ETKI, MCMC) with built-in forward models"};
  cli.require_subcommand(1);

  FlagStore sim_flags, cal_flags, sample_flags, cmp_flags;
  std::optional<std::string> sim_cfg, cal_cfg, sample_cfg, cmp_cfg, cmp_cfg_a, cmp_cfg_b, method_a, method_b;

  auto* sim = cli.add_subcommand("simulate", "run a forward model once and write its traces");
  sim->add_option("--config", sim_cfg, "key = value configuration file");
  add_key_flags(sim, sim_flags);

  auto* cal = cli.add_subcommand("calibrate", "calibrate with uki, etki or fd_newton (or mcmc)");
  cal->add_option("--config", cal_cfg, "key = value configuration file");
  add_key_flags(cal, cal_flags);

  auto* sample = cli.add_subcommand("sample", "random-walk Metropolis reference posterior");
  sample->add_option("--config", sample_cfg, "key = value configuration file");
  add_key_flags(sample, sample_flags);

  auto* cmp = cli.add_subcommand("compare", "run two configurations on one problem and compare them");
  cmp->add_option("--config", cmp_cfg, "shared configuration file");
  cmp->add_option("--config-a", cmp_cfg_a, "configuration file for side a");
  cmp->add_option("--config-b", cmp_cfg_b, "configuration file for side b");
  cmp->add_option("--method-a", method_a, "method for side a");
  cmp->add_option("--method-b", method_b, "method for side b");
  add_key_flags(cmp, cmp_flags);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 1;
  }

  try {
    const auto seed = env_seed();
    if (*sim) {
      simulate(RunConfig::from_key_values({file_layer(sim_cfg), flags_to_map(sim_flags)}, seed));
    } else if (*cal) {
      const RunResult r = run(RunConfig::from_key_values({file_layer(cal_cfg), flags_to_map(cal_flags)}, seed));
      std::cout << io::dump_json(r.summary) << '\n';
    } else if (*sample) {
      auto flags = flags_to_map(sample_flags);
      flags["method"] = "mcmc";
      const RunResult r = run(RunConfig::from_key_values({file_layer(sample_cfg), flags}, seed));
      std::cout << io::dump_json(r.summary) << '\n';
    } else if (*cmp) {
      const auto base = file_layer(cmp_cfg);
      const auto overrides = flags_to_map(cmp_flags);
      std::map<std::string, std::string> side_a, side_b;
      if (method_a) side_a["method"] = *method_a;
      if (method_b) side_b["method"] = *method_b;
      const RunConfig a = RunConfig::from_key_values({base, file_layer(cmp_cfg_a), overrides, side_a}, seed);
      const RunConfig b = RunConfig::from_key_values({base, file_layer(cmp_cfg_b), overrides, side_b}, seed);
      const json report = compare(a, b, a.output_dir);
      std::cout << io::dump_json(report["discrepancy"]) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "kalibr: configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "kalibr: solver failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace kalibr::app
