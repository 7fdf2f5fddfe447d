#pragma once

#include "kalibr/euler1d.hpp"
#include "kalibr/forward_model.hpp"

#include <cstdint>
#include <vector>

namespace kalibr::piston {

struct StructuralParams {
  double mass = 1.0;
  double damping = 0.5;
  double stiffness = 2.0;
};

/// Spring-mass-damper piston. The interface sits at x_p = rest_position - u.
struct PistonState {
  double u = 0.0;
  double u_dot = 0.0;
  StructuralParams params;
  double rest_position = 1.0;

  double x_p() const { return rest_position - u; }
  /// d x_p / dt, the interface velocity along +x (into the solid).
  double interface_velocity() const { return -u_dot; }
};

/// Implicit midpoint step of m u'' + c u' + k u = f_ext; the 2x2 system is
/// solved in closed form.
PistonState structure_step_midpoint(const PistonState& piston, double f_ext, double dt);

struct PistonScenario {
  double rho0 = 1.225;
  double v0 = 0.0;
  double p0 = 2.0;
  double gamma = euler::kGammaAir;
  StructuralParams structure;
  double rest_position = 1.0;
  double domain_length = 2.0;
  double dx = 5e-3;
  double dt = 1e-3;
  double t_final = 1.0;
  double obs_interval = 1e-2;
  euler::FluidStepOptions fluid;

  int n_steps() const;
  int obs_stride() const;
  int n_obs() const { return n_steps() / obs_stride(); }
  void validate() const;
};

struct CoupledState {
  euler::FluidState1D fluid;
  PistonState piston;
  /// Interface pressure transmitted at the last exchange.
  double interface_pressure = 0.0;
  double time = 0.0;
};

CoupledState initial_state(const PistonScenario& scenario);

/// Pressure at the interface pushes the piston away from the fluid, i.e.
/// towards negative u.
inline double pressure_load(double interface_pressure) { return -interface_pressure; }

struct CoupledStepInfo {
  euler::FluidStepResult fluid_step;
  double predicted_velocity = 0.0;  // u_dot at the half step
};

/// Staggered step: structure half-step predictor with the previous load,
/// fluid step with the predicted interface velocity, structure midpoint step
/// with the mean of old and new loads. One exchange in each direction.
CoupledState coupled_advance(const CoupledState& state, double dt,
                             const euler::FluidStepOptions& opts = {}, CoupledStepInfo* info = nullptr);

struct Simulation {
  std::vector<double> times;         // every step, including t = 0
  std::vector<double> displacement;  // u at `times`
  std::vector<double> interface_pressure;
  std::vector<double> obs_times;
  kalibr::Vector observations;  // u at obs_times
  euler::FluidState1D final_fluid;
};

/// Parameter overrides: theta = (c_s, k_s) or (c_s, k_s, p0).
PistonScenario apply_theta(PistonScenario scenario, const kalibr::Vector& theta);

Simulation simulate(const PistonScenario& scenario);
Simulation simulate_piston(const PistonScenario& scenario, const kalibr::Vector& theta);

/// Adds i.i.d. N(0, sigma^2) noise with a seeded Philox stream.
kalibr::Vector synthesize_observations(const kalibr::Vector& clean, double sigma, std::uint64_t seed);

/// Piston displacement observations as a forward model.
class PistonModel final : public ForwardModel {
 public:
  PistonModel(PistonScenario scenario, int n_theta);

  Vector evaluate(const Vector& theta) const override;
  int n_theta() const override { return n_theta_; }
  int n_y() const override { return scenario_.n_obs(); }
  bool parallel_safe() const override { return true; }

  const PistonScenario& scenario() const { return scenario_; }

 private:
  PistonScenario scenario_;
  int n_theta_;
};

}  // namespace kalibr::piston
