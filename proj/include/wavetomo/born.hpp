#ifndef WAVETOMO_BORN_HPP
#define WAVETOMO_BORN_HPP

#include <memory>
#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/array.hpp"
#include "wavetomo/wave.hpp"

namespace wavetomo {

// Single-scattering (linearized) forward model around the uniform water
// background. The operator is the exact tangent of the discrete solver with
// respect to m = (c/c0)^2 at m = 1, acting on the contrast
//   x = 1 - (c0/c)^2,
// which matches the tangent direction because dm = -d[(c0/c)^2] at m = 1.
//
// Scattered traces for source i are the background solve driven by the
// volumetric source x * u_i, where u_i = lap p_i + s_i is the incident drive
// recorded on the field of view. adjoint() is the exact matrix transpose of
// apply(); tests rely on that identity, not on any continuous argument.
class BornOperator {
 public:
  explicit BornOperator(const ImagingSystem& sys);

  int n_sources() const { return static_cast<int>(incident_.size()); }
  const Grid& grid() const { return sys_.params.grid; }
  Rect fov() const { return fov_; }
  const ImagingSystem& system() const { return sys_; }
  const TraceSet& background_traces(int i) const { return background_[i]; }
  const Array3D<float>& incident_drive(int i) const { return incident_[i]; }

  TraceSet apply(int i, const Image& x) const;
  Image adjoint(int i, const TraceSet& y) const;

  // Encoded operator sum_i w_i J_i via the superposed incident drive; one
  // solve instead of n_sources.
  TraceSet apply_encoded(const std::vector<double>& w, const Image& x) const;
  Image adjoint_encoded(const std::vector<double>& w, const TraceSet& y) const;
  TraceSet encoded_background(const std::vector<double>& w) const;

  // x -> sum_i J_i^T J_i x, the normal operator used by the deterministic solver
  Image normal_apply(const Image& x) const;

 private:
  Array3D<float> combine_incident(const std::vector<double>& w) const;
  TraceSet apply_movie(const Array3D<float>& movie, const Image& x) const;
  Image adjoint_movie_sum(const Array3D<float>& movie, const TraceSet& y) const;

  ImagingSystem sys_;
  Rect fov_;
  double dscale_ = 0.0;  // (c0 * dt)^2, uniform over the background
  std::unique_ptr<WaveSolver> water_;
  std::vector<Array3D<float>> incident_;
  std::vector<TraceSet> background_;
};

}  // namespace wavetomo

#endif
