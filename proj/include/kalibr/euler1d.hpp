#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kalibr::euler {

/// Conservative state (rho, rho v, rho e_t).
using Conserved = Eigen::Vector3d;

struct Primitive {
  double rho = 0.0;
  double v = 0.0;
  double p = 0.0;
};

/// Density or pressure non-positive, or non-finite.
class NonPhysicalState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Receding wall outruns the rarefaction: a vacuum would form.
class VacuumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CflViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kGammaAir = 1.4;

Conserved to_conserved(const Primitive& w, double gamma);
/// p = (gamma - 1) rho e, e = e_t - v^2 / 2.
Primitive to_primitive(const Conserved& u, double gamma);
Conserved physical_flux(const Primitive& w, double gamma);
double sound_speed(const Primitive& w, double gamma);
bool is_physical(const Primitive& w);

/// Roe flux with a Harten entropy fix; wave speeds below
/// entropy_fix * (|u~| + c~) are smoothed.
Conserved roe_flux(const Conserved& left, const Conserved& right, double gamma,
                   double entropy_fix = 0.05);

// ----------------------------------------------------------------------------
// Fluid-solid half Riemann problem

/// Fluid state projected on the interface normal (pointing into the solid):
/// `fluid.v` is the normal fluid velocity.
struct InterfaceRiemannInput {
  Primitive fluid;
  double wall_velocity = 0.0;
};

/// Star state at the wall. `v` equals the wall velocity exactly.
struct InterfaceState {
  double rho = 0.0;
  double v = 0.0;
  double p = 0.0;
};

/// Exact solution of the one-sided Riemann problem against a moving
/// impermeable wall: isentropic rarefaction when the wall recedes, shock when
/// it compresses.
InterfaceState exact_fs_riemann(const InterfaceRiemannInput& input, double gamma);

// ----------------------------------------------------------------------------
// Fixed uniform grid with an embedded right interface

struct Grid {
  int n_cells = 0;
  double dx = 0.0;

  double x_center(int i) const { return (i + 0.5) * dx; }
  double x_max() const { return n_cells * dx; }
};

struct FluidState1D {
  Grid grid;
  double gamma = kGammaAir;
  std::vector<Conserved> cells;
  /// 1 where the cell center lies in the fluid; a contiguous block from the left wall.
  std::vector<std::uint8_t> active;

  static FluidState1D uniform(const Grid& grid, const Primitive& w, double gamma,
                              double interface_position);

  int n_active() const;
  Primitive primitive(int i) const { return to_primitive(cells[i], gamma); }
  double total_mass() const;
};

enum class Limiter { first_order, minmod, van_leer };

Limiter parse_limiter(const std::string& name);
std::string to_string(Limiter limiter);

/// Face states for faces 0..n_active (face f separates cells f-1 and f).
/// Boundary faces carry the interior cell state on both sides.
struct FaceStates {
  std::vector<Primitive> left;
  std::vector<Primitive> right;
};

/// Piecewise-linear reconstruction in primitive variables. The wall cell and
/// the interface cell are kept first order.
FaceStates muscl_reconstruct(const FluidState1D& fluid, Limiter limiter);

/// Interface position and normal velocity (d x_p / dt) during a step.
struct InterfaceMotion {
  double position = 0.0;
  double velocity = 0.0;
};

struct FluidStepOptions {
  Limiter limiter = Limiter::minmod;
  double entropy_fix = 0.05;
};

struct FluidStepResult {
  FluidState1D fluid;
  /// Mass leaving through the boundary faces during the step.
  double boundary_mass_outflow = 0.0;
  /// Mass added (positive) or removed by cells switching status.
  double activation_mass_change = 0.0;
  int cells_activated = 0;
  int cells_deactivated = 0;
};

/// Marks cells with centers left of the interface as fluid; newly uncovered
/// cells take the interface Riemann state. Throws if fewer than 3 cells
/// remain or the interface leaves the grid.
FluidStepResult update_activity(const FluidState1D& fluid, const InterfaceMotion& motion);

/// Star state at the embedded interface for the current last fluid cell.
InterfaceState interface_state(const FluidState1D& fluid, double wall_velocity);

/// Two-stage (Heun) explicit update. Reflecting wall on the left, exact
/// fluid-solid Riemann flux at the embedded interface on the right.
FluidStepResult fluid_step_rk2(const FluidState1D& fluid, const InterfaceMotion& motion, double dt,
                               const FluidStepOptions& opts = {});

}  // namespace kalibr::euler
