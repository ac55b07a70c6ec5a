#ifndef WAVETOMO_ACQUISITION_HPP
#define WAVETOMO_ACQUISITION_HPP

#include <vector>

#include "wavetomo/grid.hpp"
#include "wavetomo/rng.hpp"
#include "wavetomo/wave.hpp"

namespace wavetomo {

struct SystemParams {
  Grid grid;
  int n_sources = 16;
  int n_receivers = 64;
  double ring_radius = 48.0;  // mm, measured from the grid center
  double f0 = 0.25;           // MHz
  double t0 = 6.4;            // us
  double sigma = 4.0;         // us
};

// Transducer ring on the full grid. Sources sit at every (J/I)-th receiver
// position, so emitters are a subset of the receiver ring.
struct ImagingSystem {
  SystemParams params;
  std::vector<int> source_cells;    // flat full-grid indices, length I
  std::vector<int> receiver_cells;  // flat full-grid indices, length J
  std::vector<double> waveform;     // emitted pulse, length n_steps

  SourceTerm source_term(int i) const;
};

ImagingSystem build_system(const SystemParams& params);

// One clean trace set per source, in source order.
std::vector<TraceSet> acquire(const ImagingSystem& sys, const Image& sos_full);

void add_noise(std::vector<TraceSet>& traces, double noise_std, Rng& rng);

// Root mean square over every sample of every source's trace set.
double traces_rms(const std::vector<TraceSet>& traces);

// Amplitude signal-to-noise convention: snr_db = 20 log10(signal_rms / noise_std).
double snr_db(double signal_rms, double noise_std);
double noise_std_for_snr(double signal_rms, double target_snr_db);

// Zero-mean unit-covariance source weights. Rademacher by default; set
// gaussian for N(0,1) weights.
std::vector<double> sample_encoding(int n_sources, Rng& rng, bool gaussian = false);

// d_a = sum_i a_i d_i
TraceSet encode_traces(const std::vector<TraceSet>& traces, const std::vector<double>& weights);

// s_a = sum_i a_i s_i (all emitters fire the shared pulse with weight a_i)
SourceTerm encoded_source(const ImagingSystem& sys, const std::vector<double>& weights);

}  // namespace wavetomo

#endif
