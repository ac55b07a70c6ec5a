#ifndef WAVETOMO_GRID_HPP
#define WAVETOMO_GRID_HPP

#include "wavetomo/array.hpp"

namespace wavetomo {

// Units throughout: lengths in mm, times in us, speeds in mm/us.
constexpr double kWaterSos = 1.5;  // background speed of sound, mm/us

// Cartesian simulation grid with a centered square reconstruction field of view.
struct Grid {
  int n_full = 0;    // pixels per side of the simulation grid
  int n_fov = 0;     // pixels per side of the reconstruction field of view
  double dx = 0.0;   // grid spacing, mm
  double dt = 0.0;   // time step, us
  int n_steps = 0;   // number of time samples K

  // Top-left index of the field of view inside the full grid (floor division).
  int fov_offset() const { return (n_full - n_fov) / 2; }

  void validate() const;
};

// Speed-of-sound image on the field of view, plus the background speed.
struct SosMap {
  Image values;       // n_fov x n_fov, mm/us
  double c0 = kWaterSos;
};

// Squared slowness b = (c0/c)^2, dimensionless; b = 1 in background medium.
struct SlownessMap {
  Image values;
};

// Places a field-of-view map into the full simulation grid; outside the
// centered window the medium is the background c0.
Image embed_in_full_grid(const SosMap& map, const Grid& grid);

// Extracts the centered field of view from a full-grid image.
Image extract_fov(const Image& full, const Grid& grid);

// Courant number c_max*dt/dx. Solver construction rejects values at or above
// the stability bound (default 0.7).
double cfl_number(double c_max, double dt, double dx);

// Spatial sampling rate c_min/(f0*dx); below ~4 the stencil is under-resolved.
double points_per_wavelength(double c_min, double f0, double dx);

SlownessMap sos_to_slowness(const SosMap& c);
SosMap slowness_to_sos(const SlownessMap& b, double c0);

}  // namespace wavetomo

#endif
