#ifndef WAVETOMO_WAVE_HPP
#define WAVETOMO_WAVE_HPP

#include <optional>
#include <vector>

#include "wavetomo/array.hpp"
#include "wavetomo/grid.hpp"

namespace wavetomo {

// Pressure traces, n_steps x n_receivers: traces(k, j) = p(r_j, k*dt).
using TraceSet = Array2D<double>;

struct PointSource {
  int row = 0;
  int col = 0;
  double weight = 1.0;
};

// Point emitters sharing one waveform. An encoded excitation is the same list
// with the encoding weights attached to the points.
struct SourceTerm {
  std::vector<PointSource> points;
  std::vector<double> waveform;  // one amplitude per time step
};

// Axis-aligned window inside the full grid (used for recorded movies and for
// volumetric source support).
struct Rect {
  int r0 = 0, c0 = 0, h = 0, w = 0;
};

// Dense volumetric source supported on `rect`: s_k(cell) = scale(cell) * movie(k, cell).
// A null scale means 1 everywhere.
struct MovieSource {
  const Array3D<float>* movie = nullptr;
  Rect rect;
  const double* scale = nullptr;  // rect.h * rect.w entries, row-major, optional
};

struct SimOptions {
  bool record_field = false;  // store p_k over `window`
  bool record_drive = false;  // store (lap p + s)_k over `window`; equals d2p/(c dt)^2 pre-damping
  Rect window;                // defaults to the grid field of view when h == 0
};

struct SimResult {
  TraceSet traces;
  Array3D<float> field;  // n_steps slices when requested
  Array3D<float> drive;  // n_steps slices when requested (last slice zero)
};

struct SpongeParams {
  int width = 20;      // cells; clamped to n_full/4 on small grids
  double alpha = 1.5;  // per-step factor exp(-alpha*(depth/width)^2)
};

// 2D acoustic wave propagation: 4th-order-in-space, 2nd-order-in-time leapfrog
// with zero initial conditions and a multiplicative sponge boundary.
//
// One step (W = sponge diag, D = (c*dt)^2 diag, L = 4th-order Laplacian):
//   u_k   = L p_k + s_k
//   p_+   = 2 p_k - p_{k-1} + D u_k
//   p_k   <- W p_k,  p_+ <- W p_+
// Traces sample the field at receiver cells before each update. The adjoint
// sweep implements the exact transpose of this recursion, sponge included.
class WaveSolver {
 public:
  WaveSolver(const Image& c_full, const Grid& grid, std::vector<int> receiver_cells,
             SpongeParams sponge = {}, double stability_bound = 0.7);

  static int cell_index(const Grid& grid, int row, int col) { return row * grid.n_full + col; }

  const Grid& grid() const { return grid_; }
  int n_receivers() const { return static_cast<int>(receivers_.size()); }
  Rect fov_rect() const;

  SimResult simulate(const SourceTerm& src, const SimOptions& opt = {}) const;
  SimResult simulate(const MovieSource& src, const SimOptions& opt = {}) const;

  // Exact transpose of the map (source movie on rect) -> traces.
  Array3D<double> adjoint_movie(const TraceSet& y, const Rect& rect) const;

  // Backward sweep driven by y, fused with a weight movie G over rect:
  // returns S with S(cell) = sum_k phi_k(cell) * G(k, cell), where phi is the
  // damped adjoint state. Used by the waveform misfit gradient and by the
  // linearized-model adjoint; callers apply their own diagonal scaling.
  std::vector<double> adjoint_weighted_sum(const TraceSet& y, const Array3D<float>& gmovie,
                                           const Rect& rect) const;

  // 0.5 * || traces(c) - observed ||^2 and its exact gradient with respect to
  // the field-of-view speed map (same discretization as the solver).
  double misfit_and_gradient(const SourceTerm& src, const TraceSet& observed,
                             Image* grad_fov) const;

  double sos_at(int row, int col) const;

 private:
  struct Buffers;
  template <typename SourceFn>
  SimResult run_forward(SourceFn&& add_source, const SimOptions& opt) const;
  template <typename OutputFn>
  void run_backward(const TraceSet& y, OutputFn&& emit) const;

  Grid grid_;
  int n_ = 0;       // interior size (n_full)
  int stride_ = 0;  // padded row stride (n_full + 4)
  std::vector<double> dcoef_;   // (c*dt)^2, padded layout
  std::vector<double> sponge_;  // per-step damping, padded layout
  std::vector<double> sos_;     // padded copy of the speed map
  std::vector<int> receivers_;  // padded flat indices
  std::vector<int> receiver_cells_;
};

// Gaussian-windowed sinusoid w(t) = exp(-(t-t0)^2/(2 sigma^2)) * sin(2 pi f0 t).
std::vector<double> pulse_waveform(double f0, double t0, double sigma, int n_steps, double dt);

}  // namespace wavetomo

#endif
