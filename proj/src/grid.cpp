#include "wavetomo/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wavetomo {

void Grid::validate() const {
  if (n_full <= 0 || n_fov <= 0) throw std::invalid_argument("Grid: pixel counts must be positive");
  if (n_fov > n_full) throw std::invalid_argument("Grid: field of view larger than simulation grid");
  if (dx <= 0.0) throw std::invalid_argument("Grid: dx must be positive");
  if (dt <= 0.0) throw std::invalid_argument("Grid: dt must be positive");
  if (n_steps < 2) throw std::invalid_argument("Grid: need at least two time samples");
}

Image embed_in_full_grid(const SosMap& map, const Grid& grid) {
  grid.validate();
  if (map.values.rows != grid.n_fov || map.values.cols != grid.n_fov)
    throw std::invalid_argument("embed_in_full_grid: map is " + std::to_string(map.values.rows) +
                                "x" + std::to_string(map.values.cols) + ", grid expects " +
                                std::to_string(grid.n_fov));
  Image full(grid.n_full, grid.n_full, map.c0);
  const int off = grid.fov_offset();
  for (int r = 0; r < grid.n_fov; ++r)
    for (int c = 0; c < grid.n_fov; ++c) full(off + r, off + c) = map.values(r, c);
  return full;
}

Image extract_fov(const Image& full, const Grid& grid) {
  grid.validate();
  if (full.rows != grid.n_full || full.cols != grid.n_full)
    throw std::invalid_argument("extract_fov: image does not match the simulation grid");
  Image out(grid.n_fov, grid.n_fov);
  const int off = grid.fov_offset();
  for (int r = 0; r < grid.n_fov; ++r)
    for (int c = 0; c < grid.n_fov; ++c) out(r, c) = full(off + r, off + c);
  return out;
}

double cfl_number(double c_max, double dt, double dx) {
  if (c_max <= 0.0 || dt <= 0.0 || dx <= 0.0)
    throw std::invalid_argument("cfl_number: inputs must be positive");
  return c_max * dt / dx;
}

double points_per_wavelength(double c_min, double f0, double dx) {
  if (c_min <= 0.0 || f0 <= 0.0 || dx <= 0.0)
    throw std::invalid_argument("points_per_wavelength: inputs must be positive");
  return c_min / (f0 * dx);
}

SlownessMap sos_to_slowness(const SosMap& c) {
  SlownessMap b;
  b.values = Image(c.values.rows, c.values.cols);
  for (size_t i = 0; i < c.values.size(); ++i) {
    double ci = c.values.data[i];
    if (!(ci > 0.0)) throw std::invalid_argument("sos_to_slowness: nonpositive speed");
    double r = c.c0 / ci;
    b.values.data[i] = r * r;
  }
  return b;
}

SosMap slowness_to_sos(const SlownessMap& b, double c0) {
  if (!(c0 > 0.0)) throw std::invalid_argument("slowness_to_sos: nonpositive background speed");
  SosMap c;
  c.c0 = c0;
  c.values = Image(b.values.rows, b.values.cols);
  for (size_t i = 0; i < b.values.size(); ++i) {
    double bi = b.values.data[i];
    if (!(bi > 0.0)) throw std::invalid_argument("slowness_to_sos: nonpositive slowness");
    c.values.data[i] = c0 / std::sqrt(bi);
  }
  return c;
}

}  // namespace wavetomo
