#include "wavetomo/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wavetomo/grid.hpp"

namespace wavetomo {

double smoothness_value(const Image& x, double lambda) {
  double acc = 0.0;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      if (i + 1 < x.rows) {
        const double d = x(i + 1, j) - x(i, j);
        acc += d * d;
      }
      if (j + 1 < x.cols) {
        const double d = x(i, j + 1) - x(i, j);
        acc += d * d;
      }
    }
  }
  return 0.5 * lambda * acc;
}

void add_smoothness_gradient(const Image& x, double lambda, Image* grad) {
  if (!grad->same_shape(x)) throw std::invalid_argument("smoothness: gradient shape mismatch");
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      if (i + 1 < x.rows) {
        const double d = lambda * (x(i + 1, j) - x(i, j));
        (*grad)(i + 1, j) += d;
        (*grad)(i, j) -= d;
      }
      if (j + 1 < x.cols) {
        const double d = lambda * (x(i, j + 1) - x(i, j));
        (*grad)(i, j + 1) += d;
        (*grad)(i, j) -= d;
      }
    }
  }
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (params.size() != grad.size() || params.size() != m.size()) {
    throw std::invalid_argument("adam: parameter and gradient sizes disagree");
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

Image sos_to_contrast(const Image& c, double c0) {
  Image x(c.rows, c.cols);
  for (size_t i = 0; i < c.data.size(); ++i) {
    const double r = c0 / c.data[i];
    x.data[i] = 1.0 - r * r;
  }
  return x;
}

Image contrast_to_sos(const Image& x, double c0, double lo, double hi) {
  Image c(x.rows, x.cols);
  const double x_lo = 1.0 - (c0 / lo) * (c0 / lo);
  const double x_hi = 1.0 - (c0 / hi) * (c0 / hi);
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double xv = std::clamp(x.data[i], x_lo, x_hi);
    c.data[i] = c0 / std::sqrt(1.0 - xv);
  }
  return c;
}

FwiResult fwi_reconstruct(const ImagingSystem& sys, const std::vector<TraceSet>& observed,
                          const FwiOptions& opt) {
  const Grid& grid = sys.params.grid;
  const int I = static_cast<int>(sys.source_cells.size());
  if (static_cast<int>(observed.size()) != I) {
    throw std::invalid_argument("fwi: observed trace sets do not match sources");
  }

  SosMap est;
  est.values = Image(grid.n_fov, grid.n_fov);
  est.values.fill(kWaterSos);

  Rng rng(opt.seed);
  AdamState adam;
  FwiResult out;
  out.objective.reserve(opt.iterations);

  for (int it = 0; it < opt.iterations; ++it) {
    Image c_full = embed_in_full_grid(est, grid);
    WaveSolver solver(c_full, grid, sys.receiver_cells);

    Image grad(grid.n_fov, grid.n_fov);
    double misfit = 0.0;
    if (opt.encode) {
      const std::vector<double> w = sample_encoding(I, rng, opt.gaussian_weights);
      misfit = solver.misfit_and_gradient(encoded_source(sys, w), encode_traces(observed, w),
                                          &grad);
    } else {
      Image gi;
      for (int i = 0; i < I; ++i) {
        misfit += solver.misfit_and_gradient(sys.source_term(i), observed[i], &gi);
        for (size_t s = 0; s < grad.data.size(); ++s) grad.data[s] += gi.data[s];
      }
    }
    out.objective.push_back(misfit + smoothness_value(est.values, opt.lambda));
    add_smoothness_gradient(est.values, opt.lambda, &grad);
    adam.step(est.values.data, grad.data, opt.lr);
    for (double& v : est.values.data) v = std::clamp(v, opt.clamp_lo, opt.clamp_hi);
  }
  out.sos_fov = std::move(est.values);
  return out;
}

BornInvResult born_reconstruct(const BornOperator& op, const std::vector<TraceSet>& observed,
                               const BornInvOptions& opt) {
  const int I = op.n_sources();
  if (static_cast<int>(observed.size()) != I) {
    throw std::invalid_argument("born: observed trace sets do not match sources");
  }
  const Rect fov = op.fov();
  BornInvResult out;
  out.contrast = Image(fov.h, fov.w);

  if (opt.use_cg) {
    // scattered data, then conjugate gradients on the normal equations
    Image rhs(fov.h, fov.w);
    for (int i = 0; i < I; ++i) {
      TraceSet y = observed[i];
      const TraceSet& d0 = op.background_traces(i);
      for (size_t s = 0; s < y.data.size(); ++s) y.data[s] -= d0.data[s];
      Image gi = op.adjoint(i, y);
      for (size_t s = 0; s < rhs.data.size(); ++s) rhs.data[s] += gi.data[s];
    }
    auto normal = [&](const Image& x) {
      Image nx = op.normal_apply(x);
      if (opt.lambda > 0.0) add_smoothness_gradient(x, opt.lambda, &nx);
      return nx;
    };
    Image r = rhs, p = rhs;
    double rr = dot(r.data, r.data);
    const double rr0 = rr > 0.0 ? rr : 1.0;
    for (int it = 0; it < opt.iterations; ++it) {
      Image q = normal(p);
      const double pq = dot(p.data, q.data);
      if (pq <= 0.0) break;
      const double alpha = rr / pq;
      for (size_t s = 0; s < out.contrast.data.size(); ++s) {
        out.contrast.data[s] += alpha * p.data[s];
        r.data[s] -= alpha * q.data[s];
      }
      const double rr_new = dot(r.data, r.data);
      out.objective.push_back(std::sqrt(rr_new / rr0));
      if (out.objective.back() < opt.cg_tolerance) break;
      const double beta = rr_new / rr;
      for (size_t s = 0; s < p.data.size(); ++s) p.data[s] = r.data[s] + beta * p.data[s];
      rr = rr_new;
    }
  } else {
    Rng rng(opt.seed);
    AdamState adam;
    const double x_lo = 1.0 - (kWaterSos / 1.3) * (kWaterSos / 1.3);
    const double x_hi = 1.0 - (kWaterSos / 1.7) * (kWaterSos / 1.7);
    for (int it = 0; it < opt.iterations; ++it) {
      const std::vector<double> w = sample_encoding(I, rng, opt.gaussian_weights);
      TraceSet pred = op.apply_encoded(w, out.contrast);
      const TraceSet d0 = op.encoded_background(w);
      const TraceSet dw = encode_traces(observed, w);
      double misfit = 0.0;
      for (size_t s = 0; s < pred.data.size(); ++s) {
        pred.data[s] += d0.data[s] - dw.data[s];  // residual in place
        misfit += pred.data[s] * pred.data[s];
      }
      Image grad = op.adjoint_encoded(w, pred);
      out.objective.push_back(0.5 * misfit + smoothness_value(out.contrast, opt.lambda));
      add_smoothness_gradient(out.contrast, opt.lambda, &grad);
      adam.step(out.contrast.data, grad.data, opt.lr);
      for (double& v : out.contrast.data) v = std::clamp(v, x_lo, x_hi);
    }
  }
  out.sos_fov = contrast_to_sos(out.contrast);
  return out;
}

}  // namespace wavetomo
