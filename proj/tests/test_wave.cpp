#include <cmath>

#include "doctest.h"
#include "wavetomo/acquisition.hpp"
#include "wavetomo/grid.hpp"
#include "wavetomo/rng.hpp"
#include "wavetomo/wave.hpp"

using namespace wavetomo;

namespace {

// gently heterogeneous map that stays well under the stability bound
Image bumpy_speed(int n, double base, double amp, uint64_t seed) {
  Rng rng(seed);
  Image c(n, n);
  const double kx = rng.uniform(0.5, 1.5), ky = rng.uniform(0.5, 1.5);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      c(i, j) = base + amp * std::sin(kx * i * 0.3) * std::cos(ky * j * 0.4);
    }
  }
  return c;
}

double movie_dot(const Array3D<float>& a, const Array3D<double>& b, int n_slices) {
  double acc = 0.0;
  for (int k = 0; k < n_slices; ++k) {
    const float* pa = a.slice(k);
    const double* pb = b.slice(k);
    for (int s = 0; s < a.slice_size(); ++s) acc += static_cast<double>(pa[s]) * pb[s];
  }
  return acc;
}

}  // namespace

TEST_CASE("volumetric forward and its adjoint agree as transposes") {
  const Grid g{32, 16, 1.0, 0.2, 48};
  Image c = bumpy_speed(32, 1.5, 0.15, 11);
  std::vector<int> recv = {WaveSolver::cell_index(g, 3, 5), WaveSolver::cell_index(g, 28, 20),
                           WaveSolver::cell_index(g, 16, 2), WaveSolver::cell_index(g, 9, 29)};
  WaveSolver solver(c, g, recv, SpongeParams{6, 1.5});

  const Rect rect{7, 9, 12, 10};
  Rng rng(22);
  Array3D<float> u(g.n_steps, rect.h, rect.w);
  for (float& v : u.data) v = static_cast<float>(rng.normal());
  TraceSet y(g.n_steps, static_cast<int>(recv.size()));
  for (double& v : y.data) v = rng.normal();

  MovieSource src{&u, rect, nullptr};
  TraceSet au = solver.simulate(src).traces;
  Array3D<double> aty = solver.adjoint_movie(y, rect);

  const double lhs = dot(au.data, y.data);
  const double rhs = movie_dot(u, aty, g.n_steps);
  REQUIRE(std::abs(lhs) > 1e-12);  // the test must exercise a nonzero pairing
  CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-10);
}

TEST_CASE("fused weighted sum matches the explicit adjoint movie") {
  const Grid g{24, 12, 1.0, 0.2, 30};
  Image c = bumpy_speed(24, 1.5, 0.1, 5);
  std::vector<int> recv = {WaveSolver::cell_index(g, 4, 4), WaveSolver::cell_index(g, 20, 18)};
  WaveSolver solver(c, g, recv, SpongeParams{4, 1.5});

  const Rect rect = solver.fov_rect();
  Rng rng(9);
  Array3D<float> gmov(g.n_steps, rect.h, rect.w);
  for (float& v : gmov.data) v = static_cast<float>(rng.normal());
  TraceSet y(g.n_steps, 2);
  for (double& v : y.data) v = rng.normal();

  std::vector<double> fused = solver.adjoint_weighted_sum(y, gmov, rect);
  Array3D<double> aty = solver.adjoint_movie(y, rect);

  // adjoint_movie carries the (c dt)^2 factor; divide it back out per cell
  for (int i = 0; i < rect.h; ++i) {
    for (int j = 0; j < rect.w; ++j) {
      double ref = 0.0;
      const double cc = solver.sos_at(i + rect.r0, j + rect.c0);
      const double d = (cc * g.dt) * (cc * g.dt);
      for (int k = 0; k < g.n_steps; ++k) {
        ref += aty(k, i, j) / d * gmov(k, i, j);
      }
      CHECK(fused[i * rect.w + j] == doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("misfit gradient matches central differences") {
  const Grid g{32, 16, 1.0, 0.2, 130};
  Image c_true = bumpy_speed(32, 1.5, 0.08, 3);
  std::vector<int> recv;
  for (int j = 0; j < 6; ++j) recv.push_back(WaveSolver::cell_index(g, 4 + 4 * j, 27));

  SourceTerm src;
  src.points.push_back({16, 4, 1.0});
  src.waveform = pulse_waveform(0.5, 2.0, 1.0, g.n_steps, g.dt);

  TraceSet observed;
  {
    WaveSolver truth(c_true, g, recv, SpongeParams{6, 1.5});
    observed = truth.simulate(src).traces;
  }

  Image c0 = bumpy_speed(32, 1.5, 0.05, 77);
  Image grad;
  double j0 = 0.0;
  {
    WaveSolver solver(c0, g, recv, SpongeParams{6, 1.5});
    j0 = solver.misfit_and_gradient(src, observed, &grad);
    CHECK(j0 > 0.0);
  }

  // random smooth direction on the field of view
  Image dir(g.n_fov, g.n_fov);
  Rng rng(41);
  for (double& v : dir.data) v = rng.uniform(-1.0, 1.0);
  const int off = g.fov_offset();

  double directional = 0.0;
  for (int i = 0; i < g.n_fov; ++i) {
    for (int j = 0; j < g.n_fov; ++j) directional += grad(i, j) * dir(i, j);
  }

  const double h = 2e-7;
  auto perturbed = [&](double sign) {
    Image cp = c0;
    for (int i = 0; i < g.n_fov; ++i) {
      for (int j = 0; j < g.n_fov; ++j) cp(i + off, j + off) += sign * h * dir(i, j);
    }
    WaveSolver solver(cp, g, recv, SpongeParams{6, 1.5});
    return solver.misfit_and_gradient(src, observed, nullptr);
  };
  const double fd = (perturbed(1.0) - perturbed(-1.0)) / (2.0 * h);

  REQUIRE(std::abs(fd) > 1e-12);
  CHECK(std::abs(directional - fd) / std::abs(fd) < 1e-4);
}

TEST_CASE("pulse arrival delay between two receivers matches the travel time") {
  // differential timing cancels the source wavelet shape and the slow tail of
  // the 2D point response
  const Grid g{96, 64, 1.2, 0.3, 280};
  Image c(96, 96);
  c.fill(kWaterSos);
  const int src_col = 15, near_col = 45, far_col = 75;
  std::vector<int> recv = {WaveSolver::cell_index(g, 47, near_col),
                           WaveSolver::cell_index(g, 47, far_col)};
  WaveSolver solver(c, g, recv);

  SourceTerm src;
  src.points.push_back({47, src_col, 1.0});
  src.waveform = pulse_waveform(0.25, 6.0, 2.5, g.n_steps, g.dt);

  TraceSet tr = solver.simulate(src).traces;
  int peak0 = 0, peak1 = 0;
  for (int k = 0; k < g.n_steps; ++k) {
    if (std::abs(tr(k, 0)) > std::abs(tr(peak0, 0))) peak0 = k;
    if (std::abs(tr(k, 1)) > std::abs(tr(peak1, 1))) peak1 = k;
  }
  const double expected = (far_col - near_col) * g.dx / kWaterSos;
  CHECK(std::abs((peak1 - peak0) * g.dt - expected) < 2.0);
}

TEST_CASE("mirror receivers see identical traces in a mirror medium") {
  const Grid g{65, 33, 1.0, 0.2, 100};
  Image c(65, 65);
  c.fill(1.5);
  for (int i = 0; i < 65; ++i) {
    for (int j = 0; j < 65; ++j) {
      // blob symmetric about the middle row
      const double d2 = (i - 32.0) * (i - 32.0) + (j - 40.0) * (j - 40.0);
      if (d2 < 36.0) c(i, j) = 1.6;
    }
  }
  std::vector<int> recv = {WaveSolver::cell_index(g, 32 - 11, 50),
                           WaveSolver::cell_index(g, 32 + 11, 50)};
  WaveSolver solver(c, g, recv, SpongeParams{10, 1.5});

  SourceTerm src;
  src.points.push_back({32, 10, 1.0});
  src.waveform = pulse_waveform(0.4, 3.0, 1.5, g.n_steps, g.dt);
  TraceSet tr = solver.simulate(src).traces;

  double max_diff = 0.0, max_val = 0.0;
  for (int k = 0; k < g.n_steps; ++k) {
    max_diff = std::max(max_diff, std::abs(tr(k, 0) - tr(k, 1)));
    max_val = std::max(max_val, std::abs(tr(k, 0)));
  }
  REQUIRE(max_val > 0.0);
  CHECK(max_diff / max_val < 1e-11);
}

TEST_CASE("sponge drains the field after the pulse leaves") {
  const Grid g{96, 48, 1.2, 0.3, 400};
  Image c(96, 96);
  c.fill(kWaterSos);
  std::vector<int> recv = {WaveSolver::cell_index(g, 47, 60)};
  WaveSolver solver(c, g, recv);

  SourceTerm src;
  src.points.push_back({47, 40, 1.0});
  src.waveform = pulse_waveform(0.3, 5.0, 2.0, g.n_steps, g.dt);
  TraceSet tr = solver.simulate(src).traces;

  double peak = 0.0, tail = 0.0;
  for (int k = 0; k < g.n_steps; ++k) {
    peak = std::max(peak, std::abs(tr(k, 0)));
    if (k >= g.n_steps - g.n_steps / 10) tail = std::max(tail, std::abs(tr(k, 0)));
  }
  REQUIRE(peak > 0.0);
  // bounds boundary reflections plus dispersive ringing to a few percent
  CHECK(tail / peak < 0.03);
}

TEST_CASE("identical runs produce identical samples") {
  const Grid g{48, 24, 1.0, 0.2, 64};
  Image c = bumpy_speed(48, 1.5, 0.12, 8);
  std::vector<int> recv = {WaveSolver::cell_index(g, 10, 10), WaveSolver::cell_index(g, 40, 40)};
  SourceTerm src;
  src.points.push_back({24, 24, 1.0});
  src.waveform = pulse_waveform(0.5, 2.0, 1.0, g.n_steps, g.dt);

  WaveSolver s1(c, g, recv, SpongeParams{8, 1.5});
  WaveSolver s2(c, g, recv, SpongeParams{8, 1.5});
  TraceSet a = s1.simulate(src).traces;
  TraceSet b = s2.simulate(src).traces;
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("solver rejects unstable and malformed setups") {
  const Grid g{32, 16, 1.0, 0.9, 16};  // cfl 1.35 at water speed
  Image c(32, 32);
  c.fill(kWaterSos);
  CHECK_THROWS(WaveSolver(c, g, {5}));

  const Grid ok{32, 16, 1.0, 0.2, 16};
  Image wrong(16, 16);
  wrong.fill(1.5);
  CHECK_THROWS(WaveSolver(wrong, ok, {5}));
  CHECK_THROWS(WaveSolver(c, ok, {32 * 32 + 1}));
}

TEST_CASE("pulse waveform matches its closed form") {
  const std::vector<double> w = pulse_waveform(0.5, 3.2, 2.0, 40, 0.2);
  // at t = t0 the envelope is 1, so the sample is sin(2 pi f0 t0)
  CHECK(w[16] == doctest::Approx(std::sin(2.0 * M_PI * 0.5 * 3.2)).epsilon(1e-12));
  for (double v : w) CHECK(std::abs(v) <= 1.0);
}
