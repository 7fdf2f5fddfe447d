#include "kalibr/piston.hpp"

#include "kalibr/random.hpp"

#include <cmath>
#include <sstream>

namespace kalibr::piston {

PistonState structure_step_midpoint(const PistonState& piston, double f_ext, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("structure_step_midpoint: dt must be > 0");
  const auto& [m, c, k] = piston.params;
  if (!(m > 0.0)) throw std::invalid_argument("structure_step_midpoint: mass must be > 0");
  const double u0 = piston.u;
  const double w0 = piston.u_dot;

  // Eliminating u1 = u0 + dt/2 (w0 + w1) from the momentum balance.
  const double lhs = m + 0.5 * c * dt + 0.25 * k * dt * dt;
  const double rhs = (m - 0.5 * c * dt - 0.25 * k * dt * dt) * w0 + dt * (f_ext - k * u0);

  PistonState out = piston;
  out.u_dot = rhs / lhs;
  out.u = u0 + 0.5 * dt * (w0 + out.u_dot);
  return out;
}

int PistonScenario::n_steps() const { return static_cast<int>(std::lround(t_final / dt)); }

int PistonScenario::obs_stride() const { return static_cast<int>(std::lround(obs_interval / dt)); }

void PistonScenario::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("PistonScenario: ") + msg);
  };
  require(rho0 > 0.0 && p0 > 0.0, "rho0 and p0 must be > 0");
  require(structure.mass > 0.0, "mass must be > 0");
  require(structure.damping >= 0.0 && structure.stiffness > 0.0,
          "damping must be >= 0 and stiffness > 0");
  require(dx > 0.0 && dt > 0.0 && t_final > 0.0 && obs_interval > 0.0, "step sizes must be > 0");
  require(n_steps() >= 1 && obs_stride() >= 1, "t_final and obs_interval must cover at least one step");
  require(std::abs(n_steps() * dt - t_final) < 1e-9 * t_final, "t_final must be a multiple of dt");
  require(std::abs(obs_stride() * dt - obs_interval) < 1e-9 * obs_interval,
          "obs_interval must be a multiple of dt");
  require(rest_position > 0.0 && rest_position <= domain_length, "rest_position must lie in the domain");
}

CoupledState initial_state(const PistonScenario& scenario) {
  scenario.validate();
  const euler::Grid grid{static_cast<int>(std::lround(scenario.domain_length / scenario.dx)), scenario.dx};
  CoupledState s;
  s.piston.params = scenario.structure;
  s.piston.rest_position = scenario.rest_position;
  s.fluid = euler::FluidState1D::uniform(grid, {scenario.rho0, scenario.v0, scenario.p0}, scenario.gamma,
                                         s.piston.x_p());
  s.interface_pressure = euler::interface_state(s.fluid, s.piston.interface_velocity()).p;
  return s;
}

CoupledState coupled_advance(const CoupledState& state, double dt, const euler::FluidStepOptions& opts,
                             CoupledStepInfo* info) {
  const double p_old = state.interface_pressure;

  // Structure predictor over half a step with the last transmitted load.
  const PistonState half = structure_step_midpoint(state.piston, pressure_load(p_old), 0.5 * dt);

  // Fluid step with the predicted interface motion.
  euler::FluidStepResult fluid_step =
      euler::fluid_step_rk2(state.fluid, {state.piston.x_p(), half.interface_velocity()}, dt, opts);

  // Load at t^{n+1}, seen by a wall moving with the extrapolated velocity.
  const double u_dot_end = 2.0 * half.u_dot - state.piston.u_dot;
  const double p_new = euler::interface_state(fluid_step.fluid, -u_dot_end).p;

  CoupledState out;
  out.piston = structure_step_midpoint(state.piston, pressure_load(0.5 * (p_old + p_new)), dt);
  out.interface_pressure = p_new;
  out.time = state.time + dt;
  if (info) {
    info->predicted_velocity = half.u_dot;
    info->fluid_step = fluid_step;
  }
  out.fluid = std::move(fluid_step.fluid);
  return out;
}

PistonScenario apply_theta(PistonScenario scenario, const kalibr::Vector& theta) {
  if (theta.size() != 2 && theta.size() != 3) {
    throw std::invalid_argument("piston parameters must be (c_s, k_s) or (c_s, k_s, p0); got length " +
                                std::to_string(theta.size()));
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(std::isfinite(theta[i]) && theta[i] > 0.0)) {
      std::ostringstream os;
      os.precision(17);
      os << "piston parameter " << i << " must be positive, got " << theta[i];
      throw std::invalid_argument(os.str());
    }
  }
  scenario.structure.damping = theta[0];
  scenario.structure.stiffness = theta[1];
  if (theta.size() == 3) scenario.p0 = theta[2];
  return scenario;
}

Simulation simulate(const PistonScenario& scenario) {
  CoupledState state = initial_state(scenario);
  const int n_steps = scenario.n_steps();
  const int stride = scenario.obs_stride();

  Simulation sim;
  sim.times.reserve(n_steps + 1);
  sim.displacement.reserve(n_steps + 1);
  sim.times.push_back(0.0);
  sim.displacement.push_back(state.piston.u);
  sim.interface_pressure.push_back(state.interface_pressure);
  std::vector<double> obs;

  for (int n = 1; n <= n_steps; ++n) {
    state = coupled_advance(state, scenario.dt, scenario.fluid);
    if (n == 1 && scenario.p0 > 0.0 && state.piston.u_dot > 0.0) {
      throw std::logic_error("piston load sign: positive fluid pressure must drive u negative");
    }
    const double t = n * scenario.dt;
    sim.times.push_back(t);
    sim.displacement.push_back(state.piston.u);
    sim.interface_pressure.push_back(state.interface_pressure);
    if (n % stride == 0) {
      sim.obs_times.push_back(t);
      obs.push_back(state.piston.u);
    }
  }
  sim.observations = Eigen::Map<const kalibr::Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  sim.final_fluid = std::move(state.fluid);
  return sim;
}

Simulation simulate_piston(const PistonScenario& scenario, const kalibr::Vector& theta) {
  return simulate(apply_theta(scenario, theta));
}

kalibr::Vector synthesize_observations(const kalibr::Vector& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("synthesize_observations: sigma must be >= 0");
  kalibr::Vector out = clean;
  if (sigma == 0.0) return out;
  Philox4x32 rng(seed);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
  return out;
}

PistonModel::PistonModel(PistonScenario scenario, int n_theta)
    : scenario_(std::move(scenario)), n_theta_(n_theta) {
  if (n_theta_ != 2 && n_theta_ != 3) throw std::invalid_argument("PistonModel: n_theta must be 2 or 3");
  scenario_.validate();
}

Vector PistonModel::evaluate(const Vector& theta) const {
  if (theta.size() != n_theta_) {
    throw ForwardError("PistonModel: expected " + std::to_string(n_theta_) + " parameters", theta);
  }
  try {
    return simulate_piston(scenario_, theta).observations;
  } catch (const std::exception& e) {
    throw ForwardError(std::string("piston simulation failed: ") + e.what(), theta);
  }
}

}  // namespace kalibr::piston
