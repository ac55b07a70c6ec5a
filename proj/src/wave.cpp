#include "wavetomo/wave.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>

namespace wavetomo {
namespace {

constexpr int kPad = 2;  // stencil halo, stays identically zero

// 4th-order second-derivative coefficients, per axis, before 1/dx^2.
constexpr double kC2 = -1.0 / 12.0;
constexpr double kC1 = 4.0 / 3.0;
constexpr double kC0 = -5.0 / 2.0;

}  // namespace

WaveSolver::WaveSolver(const Image& c_full, const Grid& grid, std::vector<int> receiver_cells,
                       SpongeParams sponge, double stability_bound)
    : grid_(grid), n_(grid.n_full), stride_(grid.n_full + 2 * kPad),
      receiver_cells_(std::move(receiver_cells)) {
  grid_.validate();
  if (c_full.rows != n_ || c_full.cols != n_) {
    throw std::invalid_argument("wave: speed map is " + std::to_string(c_full.rows) + "x" +
                                std::to_string(c_full.cols) + ", grid wants " +
                                std::to_string(n_) + "x" + std::to_string(n_));
  }
  double c_max = 0.0;
  for (double c : c_full.data) {
    if (!(c > 0.0)) throw std::invalid_argument("wave: speed map has a non-positive entry");
    c_max = std::max(c_max, c);
  }
  const double cfl = c_max * grid_.dt / grid_.dx;
  if (cfl > stability_bound) {
    throw std::invalid_argument("wave: CFL number " + std::to_string(cfl) + " exceeds bound " +
                                std::to_string(stability_bound));
  }

  const size_t padded = static_cast<size_t>(stride_) * (n_ + 2 * kPad);
  dcoef_.assign(padded, 0.0);
  sponge_.assign(padded, 0.0);
  sos_.assign(padded, 0.0);

  int wid = std::min(sponge.width, n_ / 4);
  wid = std::max(wid, 1);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      const size_t p = static_cast<size_t>(i + kPad) * stride_ + (j + kPad);
      const double c = c_full(i, j);
      sos_[p] = c;
      dcoef_[p] = (c * grid_.dt) * (c * grid_.dt);
      const int dr = std::max(0, wid - std::min(i, n_ - 1 - i));
      const int dc = std::max(0, wid - std::min(j, n_ - 1 - j));
      const double depth2 = (static_cast<double>(dr) * dr + static_cast<double>(dc) * dc) /
                            (static_cast<double>(wid) * wid);
      sponge_[p] = std::exp(-sponge.alpha * depth2);
    }
  }

  receivers_.reserve(receiver_cells_.size());
  for (int cell : receiver_cells_) {
    const int r = cell / n_, c = cell % n_;
    if (cell < 0 || r >= n_) {
      throw std::invalid_argument("wave: receiver cell " + std::to_string(cell) +
                                  " outside the grid");
    }
    receivers_.push_back((r + kPad) * stride_ + (c + kPad));
  }
}

Rect WaveSolver::fov_rect() const {
  const int off = grid_.fov_offset();
  return Rect{off, off, grid_.n_fov, grid_.n_fov};
}

double WaveSolver::sos_at(int row, int col) const {
  return sos_[static_cast<size_t>(row + kPad) * stride_ + (col + kPad)];
}

// Shared forward integrator. `add_source(k, fn)` must call fn(padded_index,
// value) once per active source cell of step k.
template <typename SourceFn>
SimResult WaveSolver::run_forward(SourceFn&& add_source, const SimOptions& opt) const {
  const int K = grid_.n_steps;
  const int J = n_receivers();
  const size_t padded = static_cast<size_t>(stride_) * (n_ + 2 * kPad);
  const double inv_dx2 = 1.0 / (grid_.dx * grid_.dx);

  Rect win = opt.window;
  if (win.h == 0) win = fov_rect();

  SimResult out;
  out.traces = TraceSet(K, J);
  if (opt.record_field) out.field = Array3D<float>(K, win.h, win.w);
  if (opt.record_drive) out.drive = Array3D<float>(K, win.h, win.w);

  std::vector<double> prev(padded, 0.0), cur(padded, 0.0), laprow(n_, 0.0);
  double* a = prev.data();
  double* b = cur.data();
  const double* D = dcoef_.data();
  const double* W = sponge_.data();

  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < J; ++j) out.traces(k, j) = b[receivers_[j]];
    if (opt.record_field) {
      float* slab = out.field.slice(k);
      for (int i = 0; i < win.h; ++i) {
        const double* row = b + static_cast<size_t>(i + win.r0 + kPad) * stride_ + win.c0 + kPad;
        for (int j = 0; j < win.w; ++j) slab[i * win.w + j] = static_cast<float>(row[j]);
      }
    }
    if (k == K - 1) break;

    float* drive = opt.record_drive ? out.drive.slice(k) : nullptr;
    for (int i = 0; i < n_; ++i) {
      const size_t base = static_cast<size_t>(i + kPad) * stride_ + kPad;
      const double* b0 = b + base;
      const double* bm1 = b0 - stride_;
      const double* bp1 = b0 + stride_;
      const double* bm2 = b0 - 2 * stride_;
      const double* bp2 = b0 + 2 * stride_;
      const double* drow = D + base;
      double* arow = a + base;
      double* lr = laprow.data();
      for (int j = 0; j < n_; ++j) {
        lr[j] = (kC2 * (bm2[j] + bp2[j] + b0[j - 2] + b0[j + 2]) +
                 kC1 * (bm1[j] + bp1[j] + b0[j - 1] + b0[j + 1]) + 2.0 * kC0 * b0[j]) *
                inv_dx2;
      }
      for (int j = 0; j < n_; ++j) {
        arow[j] = 2.0 * b0[j] - arow[j] + drow[j] * lr[j];  // tmp overwrites p_{k-1}
      }
      if (drive && i >= win.r0 && i < win.r0 + win.h) {
        float* dst = drive + static_cast<size_t>(i - win.r0) * win.w;
        for (int j = 0; j < win.w; ++j) dst[j] = static_cast<float>(lr[win.c0 + j]);
      }
    }
    add_source(k, [&](int pidx, double v) {
      a[pidx] += D[pidx] * v;
      if (drive) {
        const int r = pidx / stride_ - kPad, c = pidx % stride_ - kPad;
        if (r >= win.r0 && r < win.r0 + win.h && c >= win.c0 && c < win.c0 + win.w) {
          drive[(r - win.r0) * win.w + (c - win.c0)] += static_cast<float>(v);
        }
      }
    });
    for (int i = 0; i < n_; ++i) {
      const size_t base = static_cast<size_t>(i + kPad) * stride_ + kPad;
      double* arow = a + base;
      double* brow = b + base;
      const double* wrow = W + base;
      for (int j = 0; j < n_; ++j) {
        const double t = arow[j];
        arow[j] = wrow[j] * brow[j];
        brow[j] = wrow[j] * t;
      }
    }
    if ((k & 63) == 63 && !std::isfinite(b[(n_ / 2 + kPad) * stride_ + n_ / 2 + kPad])) {
      throw std::runtime_error("wave: field blew up by step " + std::to_string(k));
    }
  }
  return out;
}

SimResult WaveSolver::simulate(const SourceTerm& src, const SimOptions& opt) const {
  if (static_cast<int>(src.waveform.size()) < grid_.n_steps) {
    throw std::invalid_argument("wave: waveform shorter than n_steps");
  }
  std::vector<int> pidx;
  pidx.reserve(src.points.size());
  for (const PointSource& p : src.points) {
    if (p.row < 0 || p.row >= n_ || p.col < 0 || p.col >= n_) {
      throw std::invalid_argument("wave: source point outside the grid");
    }
    pidx.push_back((p.row + kPad) * stride_ + (p.col + kPad));
  }
  const double inv_dx2 = 1.0 / (grid_.dx * grid_.dx);
  return run_forward(
      [&](int k, auto&& fn) {
        const double wk = src.waveform[k];
        if (wk == 0.0) return;
        for (size_t i = 0; i < pidx.size(); ++i) fn(pidx[i], src.points[i].weight * wk * inv_dx2);
      },
      opt);
}

SimResult WaveSolver::simulate(const MovieSource& src, const SimOptions& opt) const {
  if (src.movie == nullptr) throw std::invalid_argument("wave: movie source has no movie");
  const Rect r = src.rect;
  if (src.movie->n0 < grid_.n_steps - 1 || src.movie->n1 != r.h || src.movie->n2 != r.w) {
    throw std::invalid_argument("wave: movie source shape does not match its rect");
  }
  if (r.r0 < 0 || r.c0 < 0 || r.r0 + r.h > n_ || r.c0 + r.w > n_) {
    throw std::invalid_argument("wave: movie source rect outside the grid");
  }
  return run_forward(
      [&](int k, auto&& fn) {
        const float* slab = src.movie->slice(k);
        for (int i = 0; i < r.h; ++i) {
          const int prow = (i + r.r0 + kPad) * stride_ + r.c0 + kPad;
          for (int j = 0; j < r.w; ++j) {
            const double s = src.scale ? src.scale[i * r.w + j] * slab[i * r.w + j]
                                       : static_cast<double>(slab[i * r.w + j]);
            if (s != 0.0) fn(prow + j, s);
          }
        }
      },
      opt);
}

// Exact transpose of run_forward's recursion. emit(k, phi) receives the damped
// adjoint state phi_k; the source adjoint at step k is D * phi_k.
template <typename OutputFn>
void WaveSolver::run_backward(const TraceSet& y, OutputFn&& emit) const {
  const int K = grid_.n_steps;
  const int J = n_receivers();
  if (y.rows != K || y.cols != J) {
    throw std::invalid_argument("wave: adjoint input is " + std::to_string(y.rows) + "x" +
                                std::to_string(y.cols) + ", expected " + std::to_string(K) + "x" +
                                std::to_string(J));
  }
  const size_t padded = static_cast<size_t>(stride_) * (n_ + 2 * kPad);
  const double inv_dx2 = 1.0 / (grid_.dx * grid_.dx);

  std::vector<double> beta(padded, 0.0), phi(padded, 0.0), phi_next(padded, 0.0), u(padded, 0.0);
  const double* D = dcoef_.data();
  const double* W = sponge_.data();

  for (int k = K - 1; k >= 0; --k) {
    for (int i = 0; i < n_; ++i) {
      const size_t base = static_cast<size_t>(i + kPad) * stride_ + kPad;
      for (int j = 0; j < n_; ++j) {
        const double f = W[base + j] * beta[base + j];
        phi[base + j] = f;
        u[base + j] = D[base + j] * f;
      }
    }
    emit(k, phi.data());
    for (int i = 0; i < n_; ++i) {
      const size_t base = static_cast<size_t>(i + kPad) * stride_ + kPad;
      const double* u0 = u.data() + base;
      const double* um1 = u0 - stride_;
      const double* up1 = u0 + stride_;
      const double* um2 = u0 - 2 * stride_;
      const double* up2 = u0 + 2 * stride_;
      for (int j = 0; j < n_; ++j) {
        const double lap = (kC2 * (um2[j] + up2[j] + u0[j - 2] + u0[j + 2]) +
                            kC1 * (um1[j] + up1[j] + u0[j - 1] + u0[j + 1]) +
                            2.0 * kC0 * u0[j]) *
                           inv_dx2;
        beta[base + j] = 2.0 * phi[base + j] - W[base + j] * phi_next[base + j] + lap;
      }
    }
    for (int j = 0; j < J; ++j) beta[receivers_[j]] += y(k, j);
    std::swap(phi, phi_next);
  }
}

Array3D<double> WaveSolver::adjoint_movie(const TraceSet& y, const Rect& rect) const {
  Array3D<double> out(grid_.n_steps, rect.h, rect.w);
  const double* D = dcoef_.data();
  run_backward(y, [&](int k, const double* phi) {
    double* slab = out.slice(k);
    for (int i = 0; i < rect.h; ++i) {
      const size_t base = static_cast<size_t>(i + rect.r0 + kPad) * stride_ + rect.c0 + kPad;
      for (int j = 0; j < rect.w; ++j) slab[i * rect.w + j] = D[base + j] * phi[base + j];
    }
  });
  return out;
}

std::vector<double> WaveSolver::adjoint_weighted_sum(const TraceSet& y,
                                                     const Array3D<float>& gmovie,
                                                     const Rect& rect) const {
  if (gmovie.n1 != rect.h || gmovie.n2 != rect.w || gmovie.n0 < grid_.n_steps - 1) {
    throw std::invalid_argument("wave: weight movie shape does not match its rect");
  }
  std::vector<double> acc(static_cast<size_t>(rect.h) * rect.w, 0.0);
  run_backward(y, [&](int k, const double* phi) {
    if (k >= gmovie.n0) return;  // phi_k is zero past the recorded range anyway
    const float* slab = gmovie.slice(k);
    for (int i = 0; i < rect.h; ++i) {
      const size_t base = static_cast<size_t>(i + rect.r0 + kPad) * stride_ + rect.c0 + kPad;
      for (int j = 0; j < rect.w; ++j) {
        acc[static_cast<size_t>(i) * rect.w + j] += phi[base + j] * slab[i * rect.w + j];
      }
    }
  });
  return acc;
}

double WaveSolver::misfit_and_gradient(const SourceTerm& src, const TraceSet& observed,
                                       Image* grad_fov) const {
  SimOptions opt;
  opt.record_drive = true;
  SimResult fwd = simulate(src, opt);
  if (observed.rows != fwd.traces.rows || observed.cols != fwd.traces.cols) {
    throw std::invalid_argument("wave: observed traces shape mismatch");
  }
  TraceSet resid(fwd.traces.rows, fwd.traces.cols);
  double misfit = 0.0;
  for (size_t i = 0; i < resid.data.size(); ++i) {
    resid.data[i] = fwd.traces.data[i] - observed.data[i];
    misfit += resid.data[i] * resid.data[i];
  }
  const Rect fov = fov_rect();
  std::vector<double> s = adjoint_weighted_sum(resid, fwd.drive, fov);
  if (grad_fov != nullptr) {
    *grad_fov = Image(fov.h, fov.w);
    const double dt2 = grid_.dt * grid_.dt;
    for (int i = 0; i < fov.h; ++i) {
      for (int j = 0; j < fov.w; ++j) {
        const double c = sos_at(i + fov.r0, j + fov.c0);
        (*grad_fov)(i, j) = 2.0 * c * dt2 * s[static_cast<size_t>(i) * fov.w + j];
      }
    }
  }
  return 0.5 * misfit;
}

std::vector<double> pulse_waveform(double f0, double t0, double sigma, int n_steps, double dt) {
  std::vector<double> w(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    const double t = k * dt;
    const double arg = (t - t0) / sigma;
    w[k] = std::exp(-0.5 * arg * arg) * std::sin(2.0 * M_PI * f0 * t);
  }
  return w;
}

}  // namespace wavetomo
