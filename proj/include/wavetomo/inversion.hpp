#ifndef WAVETOMO_INVERSION_HPP
#define WAVETOMO_INVERSION_HPP

#include <vector>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/array.hpp"
#include "wavetomo/born.hpp"

namespace wavetomo {

// 0.5 * lambda * sum of squared forward differences, one-sided at the far
// edges. add_smoothness_gradient adds lambda * G^T G x, the exact gradient.
double smoothness_value(const Image& x, double lambda);
void add_smoothness_gradient(const Image& x, double lambda, Image* grad);

// Adaptive-moment update; step() applies one descent move in place.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
};

// contrast x = 1 - (c0/c)^2 and back; conversion clamps speeds into [lo, hi]
Image sos_to_contrast(const Image& c, double c0 = kWaterSos);
Image contrast_to_sos(const Image& x, double c0 = kWaterSos, double lo = 1.3, double hi = 1.7);

struct FwiOptions {
  int iterations = 300;
  double lr = 0.005;       // adaptive-moment step, speed units
  double lambda = 0.0;     // smoothness weight
  double clamp_lo = 1.3;   // mm/us
  double clamp_hi = 1.7;
  bool encode = true;      // one random superposition per iteration
  bool gaussian_weights = false;
  uint64_t seed = 1;
};

struct FwiResult {
  Image sos_fov;
  std::vector<double> objective;  // misfit + regularizer, per iteration
};

// Waveform inversion over the field-of-view speed map, water start model.
FwiResult fwi_reconstruct(const ImagingSystem& sys, const std::vector<TraceSet>& observed,
                          const FwiOptions& opt);

struct BornInvOptions {
  int iterations = 150;
  double lr = 0.004;     // step in contrast units
  double lambda = 0.0;
  bool encode = true;
  bool gaussian_weights = false;
  uint64_t seed = 2;

  bool use_cg = false;  // deterministic mode: conjugate gradients on the normal equations
  double cg_tolerance = 1e-10;  // on the relative residual norm
};

struct BornInvResult {
  Image contrast;  // x on the field of view
  Image sos_fov;
  std::vector<double> objective;
};

// Linearized inversion of the scattered data. The stochastic mode minimizes
// the encoded misfit with adaptive moments; the deterministic mode runs
// conjugate gradients on (sum_i J_i^T J_i + lambda G^T G) x = sum_i J_i^T y_i.
BornInvResult born_reconstruct(const BornOperator& op, const std::vector<TraceSet>& observed,
                               const BornInvOptions& opt);

}  // namespace wavetomo

#endif
