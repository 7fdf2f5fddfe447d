#include "kalibr/euler1d.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kalibr::euler {

Conserved to_conserved(const Primitive& w, double gamma) {
  return {w.rho, w.rho * w.v, w.p / (gamma - 1.0) + 0.5 * w.rho * w.v * w.v};
}

Primitive to_primitive(const Conserved& u, double gamma) {
  Primitive w;
  w.rho = u[0];
  w.v = u[1] / u[0];
  w.p = (gamma - 1.0) * (u[2] - 0.5 * u[1] * w.v);
  return w;
}

Conserved physical_flux(const Primitive& w, double gamma) {
  const double energy = w.p / (gamma - 1.0) + 0.5 * w.rho * w.v * w.v;
  return {w.rho * w.v, w.rho * w.v * w.v + w.p, (energy + w.p) * w.v};
}

double sound_speed(const Primitive& w, double gamma) { return std::sqrt(gamma * w.p / w.rho); }

bool is_physical(const Primitive& w) {
  return std::isfinite(w.rho) && std::isfinite(w.v) && std::isfinite(w.p) && w.rho > 0.0 &&
         w.p > 0.0;
}

namespace {

std::string describe(const Primitive& w) {
  std::ostringstream os;
  os.precision(17);
  os << "(rho=" << w.rho << ", v=" << w.v << ", p=" << w.p << ")";
  return os.str();
}

void require_physical(const Primitive& w, const char* where) {
  if (!is_physical(w)) throw NonPhysicalState(std::string(where) + ": nonphysical state " + describe(w));
}

}  // namespace

Conserved roe_flux(const Conserved& left, const Conserved& right, double gamma, double entropy_fix) {
  const Primitive wl = to_primitive(left, gamma);
  const Primitive wr = to_primitive(right, gamma);
  require_physical(wl, "roe_flux");
  require_physical(wr, "roe_flux");

  const double sl = std::sqrt(wl.rho);
  const double sr = std::sqrt(wr.rho);
  const double hl = (left[2] + wl.p) / wl.rho;
  const double hr = (right[2] + wr.p) / wr.rho;

  const double rho_t = sl * sr;
  const double u_t = (sl * wl.v + sr * wr.v) / (sl + sr);
  const double h_t = (sl * hl + sr * hr) / (sl + sr);
  const double c_t = std::sqrt((gamma - 1.0) * (h_t - 0.5 * u_t * u_t));

  const double d_rho = wr.rho - wl.rho;
  const double d_u = wr.v - wl.v;
  const double d_p = wr.p - wl.p;

  const double alpha[3] = {(d_p - rho_t * c_t * d_u) / (2.0 * c_t * c_t), d_rho - d_p / (c_t * c_t),
                           (d_p + rho_t * c_t * d_u) / (2.0 * c_t * c_t)};
  const double lambda[3] = {u_t - c_t, u_t, u_t + c_t};
  const Conserved r[3] = {{1.0, u_t - c_t, h_t - u_t * c_t},
                          {1.0, u_t, 0.5 * u_t * u_t},
                          {1.0, u_t + c_t, h_t + u_t * c_t}};

  const double delta = entropy_fix * (std::abs(u_t) + c_t);
  Conserved flux = 0.5 * (physical_flux(wl, gamma) + physical_flux(wr, gamma));
  for (int k = 0; k < 3; ++k) {
    double speed = std::abs(lambda[k]);
    if (speed < delta) speed = (lambda[k] * lambda[k] + delta * delta) / (2.0 * delta);
    flux -= 0.5 * speed * alpha[k] * r[k];
  }
  return flux;
}

InterfaceState exact_fs_riemann(const InterfaceRiemannInput& input, double gamma) {
  const Primitive& w = input.fluid;
  require_physical(w, "exact_fs_riemann");
  const double v_wall = input.wall_velocity;
  const double c = sound_speed(w, gamma);
  const double gm1 = gamma - 1.0;
  const double gp1 = gamma + 1.0;

  InterfaceState star;
  star.v = v_wall;
  const double opening = v_wall - w.v;
  if (opening == 0.0) {
    star.rho = w.rho;
    star.p = w.p;
  } else if (opening > 0.0) {
    // Rarefaction: v* = v - 2c/(gamma-1) [(p*/p)^((gamma-1)/(2 gamma)) - 1].
    const double base = 1.0 - 0.5 * gm1 * opening / c;
    if (!(base > 0.0)) {
      std::ostringstream os;
      os.precision(17);
      os << "exact_fs_riemann: vacuum forms; wall velocity " << v_wall << ", fluid velocity " << w.v
         << ", escape speed " << 2.0 * c / gm1;
      throw VacuumError(os.str());
    }
    star.p = w.p * std::pow(base, 2.0 * gamma / gm1);
    star.rho = w.rho * std::pow(star.p / w.p, 1.0 / gamma);
  } else {
    // Shock: (v - v*)^2 (p* + B) = A (p* - p)^2, solved for p* - p > 0.
    const double closing = -opening;
    const double a = 2.0 / (gp1 * w.rho);
    const double b = gm1 / gp1 * w.p;
    const double jump =
        (closing * closing + closing * std::sqrt(closing * closing + 4.0 * a * (w.p + b))) / (2.0 * a);
    star.p = w.p + jump;
    const double ratio = star.p / w.p;
    const double g = gm1 / gp1;
    star.rho = w.rho * (ratio + g) / (g * ratio + 1.0);
  }
  return star;
}

// ----------------------------------------------------------------------------

FluidState1D FluidState1D::uniform(const Grid& grid, const Primitive& w, double gamma,
                                   double interface_position) {
  if (grid.n_cells < 3 || !(grid.dx > 0.0)) throw std::invalid_argument("FluidState1D: invalid grid");
  require_physical(w, "FluidState1D::uniform");
  FluidState1D f;
  f.grid = grid;
  f.gamma = gamma;
  f.cells.assign(grid.n_cells, Conserved::Zero());
  f.active.assign(grid.n_cells, 0);
  const Conserved u = to_conserved(w, gamma);
  for (int i = 0; i < grid.n_cells && grid.x_center(i) < interface_position; ++i) {
    f.cells[i] = u;
    f.active[i] = 1;
  }
  return f;
}

int FluidState1D::n_active() const {
  int n = 0;
  while (n < static_cast<int>(active.size()) && active[n]) ++n;
  return n;
}

double FluidState1D::total_mass() const {
  double m = 0.0;
  for (int i = 0, n = n_active(); i < n; ++i) m += cells[i][0];
  return m * grid.dx;
}

Limiter parse_limiter(const std::string& name) {
  if (name == "first_order" || name == "none") return Limiter::first_order;
  if (name == "minmod") return Limiter::minmod;
  if (name == "van_leer") return Limiter::van_leer;
  throw std::invalid_argument("unknown limiter '" + name + "'");
}

std::string to_string(Limiter limiter) {
  switch (limiter) {
    case Limiter::first_order: return "first_order";
    case Limiter::minmod: return "minmod";
    case Limiter::van_leer: return "van_leer";
  }
  return "unknown";
}

namespace {

double limited_slope(double dl, double dr, Limiter limiter) {
  if (dl * dr <= 0.0) return 0.0;
  switch (limiter) {
    case Limiter::first_order: return 0.0;
    case Limiter::minmod: return std::abs(dl) < std::abs(dr) ? dl : dr;
    case Limiter::van_leer: return 2.0 * dl * dr / (dl + dr);
  }
  return 0.0;
}

}  // namespace

FaceStates muscl_reconstruct(const FluidState1D& fluid, Limiter limiter) {
  const int n = fluid.n_active();
  std::vector<Primitive> w(n);
  for (int i = 0; i < n; ++i) w[i] = fluid.primitive(i);

  std::vector<Primitive> slope(n);
  for (int i = 1; i + 1 < n; ++i) {
    slope[i].rho = limited_slope(w[i].rho - w[i - 1].rho, w[i + 1].rho - w[i].rho, limiter);
    slope[i].v = limited_slope(w[i].v - w[i - 1].v, w[i + 1].v - w[i].v, limiter);
    slope[i].p = limited_slope(w[i].p - w[i - 1].p, w[i + 1].p - w[i].p, limiter);
  }

  FaceStates faces;
  faces.left.resize(n + 1);
  faces.right.resize(n + 1);
  if (n == 0) return faces;
  faces.left[0] = faces.right[0] = w[0];
  faces.left[n] = faces.right[n] = w[n - 1];
  for (int f = 1; f < n; ++f) {
    const Primitive& a = w[f - 1];
    const Primitive& sa = slope[f - 1];
    const Primitive& b = w[f];
    const Primitive& sb = slope[f];
    faces.left[f] = {a.rho + 0.5 * sa.rho, a.v + 0.5 * sa.v, a.p + 0.5 * sa.p};
    faces.right[f] = {b.rho - 0.5 * sb.rho, b.v - 0.5 * sb.v, b.p - 0.5 * sb.p};
  }
  return faces;
}

InterfaceState interface_state(const FluidState1D& fluid, double wall_velocity) {
  const int n = fluid.n_active();
  if (n == 0) throw std::logic_error("interface_state: no fluid cells");
  return exact_fs_riemann({fluid.primitive(n - 1), wall_velocity}, fluid.gamma);
}

FluidStepResult update_activity(const FluidState1D& fluid, const InterfaceMotion& motion) {
  const Grid& g = fluid.grid;
  if (!(motion.position > 0.0) || motion.position > g.x_max()) {
    std::ostringstream os;
    os << "interface position " << motion.position << " outside grid [0, " << g.x_max() << "]";
    throw std::runtime_error(os.str());
  }
  int n_new = 0;
  while (n_new < g.n_cells && g.x_center(n_new) < motion.position) ++n_new;
  if (n_new < 3) throw std::runtime_error("fewer than 3 fluid cells remain");

  FluidStepResult r;
  r.fluid = fluid;
  const int n_old = fluid.n_active();
  if (n_new > n_old) {
    const InterfaceState s = interface_state(fluid, motion.velocity);
    const Conserved filled = to_conserved({s.rho, s.v, s.p}, fluid.gamma);
    for (int i = n_old; i < n_new; ++i) {
      r.fluid.cells[i] = filled;
      r.fluid.active[i] = 1;
      r.activation_mass_change += filled[0] * g.dx;
    }
    r.cells_activated = n_new - n_old;
  } else if (n_new < n_old) {
    for (int i = n_new; i < n_old; ++i) {
      r.activation_mass_change -= r.fluid.cells[i][0] * g.dx;
      r.fluid.cells[i].setZero();
      r.fluid.active[i] = 0;
    }
    r.cells_deactivated = n_old - n_new;
  }
  return r;
}

namespace {

/// Face fluxes 0..n for the active block.
std::vector<Conserved> face_fluxes(const FluidState1D& fluid, double wall_velocity,
                                   const FluidStepOptions& opts) {
  const int n = fluid.n_active();
  const double gamma = fluid.gamma;
  const FaceStates faces = muscl_reconstruct(fluid, opts.limiter);
  std::vector<Conserved> flux(n + 1);

  // Left wall at rest; its normal points in -x.
  const Primitive w0 = fluid.primitive(0);
  const InterfaceState left = exact_fs_riemann({{w0.rho, -w0.v, w0.p}, 0.0}, gamma);
  flux[0] = {0.0, left.p, 0.0};

  for (int f = 1; f < n; ++f) {
    flux[f] = roe_flux(to_conserved(faces.left[f], gamma), to_conserved(faces.right[f], gamma), gamma,
                       opts.entropy_fix);
  }

  const InterfaceState right = interface_state(fluid, wall_velocity);
  flux[n] = physical_flux({right.rho, right.v, right.p}, gamma);
  return flux;
}

void check_cells(const FluidState1D& fluid, const char* stage) {
  for (int i = 0, n = fluid.n_active(); i < n; ++i) {
    if (!is_physical(fluid.primitive(i))) {
      throw NonPhysicalState(std::string("fluid_step_rk2 (") + stage + "): nonphysical state in cell " +
                             std::to_string(i) + " " + describe(fluid.primitive(i)));
    }
  }
}

}  // namespace

FluidStepResult fluid_step_rk2(const FluidState1D& fluid, const InterfaceMotion& motion, double dt,
                               const FluidStepOptions& opts) {
  FluidStepResult r = update_activity(fluid, motion);
  const FluidState1D& w0 = r.fluid;
  const int n = w0.n_active();
  const double dx = w0.grid.dx;

  double max_speed = 0.0;
  for (int i = 0; i < n; ++i) {
    const Primitive w = w0.primitive(i);
    max_speed = std::max(max_speed, std::abs(w.v) + sound_speed(w, w0.gamma));
  }
  const double cfl = max_speed * dt / dx;
  if (!(cfl < 1.0)) {
    throw CflViolation("fluid_step_rk2: CFL number " + std::to_string(cfl) + " >= 1");
  }

  const double ratio = dt / dx;
  const std::vector<Conserved> f0 = face_fluxes(w0, motion.velocity, opts);
  FluidState1D w1 = w0;
  for (int i = 0; i < n; ++i) w1.cells[i] = w0.cells[i] - ratio * (f0[i + 1] - f0[i]);
  check_cells(w1, "stage 1");

  const std::vector<Conserved> f1 = face_fluxes(w1, motion.velocity, opts);
  FluidState1D out = w0;
  for (int i = 0; i < n; ++i) {
    out.cells[i] = 0.5 * w0.cells[i] + 0.5 * (w1.cells[i] - ratio * (f1[i + 1] - f1[i]));
  }
  check_cells(out, "stage 2");

  r.boundary_mass_outflow = 0.5 * dt * ((f0[n][0] - f0[0][0]) + (f1[n][0] - f1[0][0]));
  r.fluid = std::move(out);
  return r;
}

}  // namespace kalibr::euler
