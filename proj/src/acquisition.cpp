#include "wavetomo/acquisition.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wavetomo {

SourceTerm ImagingSystem::source_term(int i) const {
  const int n = params.grid.n_full;
  SourceTerm s;
  s.points.push_back({source_cells[i] / n, source_cells[i] % n, 1.0});
  s.waveform = waveform;
  return s;
}

ImagingSystem build_system(const SystemParams& params) {
  params.grid.validate();
  const int n = params.grid.n_full;
  const int I = params.n_sources;
  const int J = params.n_receivers;
  if (I <= 0 || J <= 0 || J % I != 0) {
    throw std::invalid_argument("system: receiver count must be a positive multiple of the "
                                "source count, got I=" +
                                std::to_string(I) + " J=" + std::to_string(J));
  }
  const double r_cells = params.ring_radius / params.grid.dx;
  const double center = (n - 1) / 2.0;
  if (center - r_cells < 1.0 || center + r_cells > n - 2.0) {
    throw std::invalid_argument("system: ring radius " + std::to_string(params.ring_radius) +
                                " mm does not fit the grid");
  }

  ImagingSystem sys;
  sys.params = params;
  sys.receiver_cells.reserve(J);
  for (int j = 0; j < J; ++j) {
    const double th = 2.0 * M_PI * j / J;
    const int row = static_cast<int>(std::lround(center + r_cells * std::sin(th)));
    const int col = static_cast<int>(std::lround(center + r_cells * std::cos(th)));
    sys.receiver_cells.push_back(row * n + col);
  }
  const int step = J / I;
  for (int i = 0; i < I; ++i) sys.source_cells.push_back(sys.receiver_cells[i * step]);

  sys.waveform =
      pulse_waveform(params.f0, params.t0, params.sigma, params.grid.n_steps, params.grid.dt);
  return sys;
}

std::vector<TraceSet> acquire(const ImagingSystem& sys, const Image& sos_full) {
  WaveSolver solver(sos_full, sys.params.grid, sys.receiver_cells);
  std::vector<TraceSet> out;
  out.reserve(sys.source_cells.size());
  for (size_t i = 0; i < sys.source_cells.size(); ++i) {
    out.push_back(solver.simulate(sys.source_term(static_cast<int>(i))).traces);
  }
  return out;
}

void add_noise(std::vector<TraceSet>& traces, double noise_std, Rng& rng) {
  for (TraceSet& t : traces) {
    for (double& v : t.data) v += noise_std * rng.normal();
  }
}

double traces_rms(const std::vector<TraceSet>& traces) {
  double acc = 0.0;
  size_t n = 0;
  for (const TraceSet& t : traces) {
    for (double v : t.data) acc += v * v;
    n += t.data.size();
  }
  return n == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(n));
}

double snr_db(double signal_rms, double noise_std) {
  return 20.0 * std::log10(signal_rms / noise_std);
}

double noise_std_for_snr(double signal_rms, double target_snr_db) {
  return signal_rms / std::pow(10.0, target_snr_db / 20.0);
}

std::vector<double> sample_encoding(int n_sources, Rng& rng, bool gaussian) {
  std::vector<double> w(n_sources);
  for (double& v : w) v = gaussian ? rng.normal() : static_cast<double>(rng.rademacher());
  return w;
}

TraceSet encode_traces(const std::vector<TraceSet>& traces, const std::vector<double>& weights) {
  if (traces.empty() || traces.size() != weights.size()) {
    throw std::invalid_argument("encode: weight count does not match trace sets");
  }
  TraceSet out(traces[0].rows, traces[0].cols);
  for (size_t i = 0; i < traces.size(); ++i) {
    if (!out.same_shape(traces[i])) throw std::invalid_argument("encode: mixed trace shapes");
    for (size_t s = 0; s < out.data.size(); ++s) out.data[s] += weights[i] * traces[i].data[s];
  }
  return out;
}

SourceTerm encoded_source(const ImagingSystem& sys, const std::vector<double>& weights) {
  if (weights.size() != sys.source_cells.size()) {
    throw std::invalid_argument("encode: weight count does not match sources");
  }
  const int n = sys.params.grid.n_full;
  SourceTerm s;
  s.waveform = sys.waveform;
  for (size_t i = 0; i < weights.size(); ++i) {
    s.points.push_back({sys.source_cells[i] / n, sys.source_cells[i] % n, weights[i]});
  }
  return s;
}

}  // namespace wavetomo
