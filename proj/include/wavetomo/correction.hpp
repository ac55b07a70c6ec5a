#ifndef WAVETOMO_CORRECTION_HPP
#define WAVETOMO_CORRECTION_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wavetomo/inversion.hpp"
#include "wavetomo/net.hpp"

namespace wavetomo {

// Affine image normalization: speeds in [1.3, 1.7] mm/us map to [-1, 1].
constexpr double kSosNormCenter = 1.5;
constexpr double kSosNormHalf = 0.2;

// A network plus the input scale it was trained at. Trace-domain models keep
// the pooled training rms; image models use the fixed affine map above.
// The correction nets are residual: model(x) = x + scale * net(x / scale),
// so all-zero parameters give the identity map.
struct TrainedNet {
  NetSpec spec;
  std::vector<double> params;
  double trace_rms = 1.0;
};

void save_model(const std::string& path, const TrainedNet& model);
TrainedNet load_model(const std::string& path);

struct TrainLog {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;
  uint64_t seed = 0;
  int best_epoch = -1;  // -1 when the initial parameters won checkpoint selection
  double best_val = 0.0;
};

// Raw (unnormalized) sample pair; the trainers own the normalization.
struct SamplePair {
  Tensor input, target;
};
using SampleProvider = std::function<SamplePair(size_t)>;

struct TrainOptions {
  int epochs = 40;
  int batch_size = 4;
  double lr = 1e-3;
  double val_fraction = 0.1;  // held out for checkpoint selection
  uint64_t seed = 0;
  bool verbose = false;     // per-epoch losses on stderr
  bool bce = false;         // pixel-wise cross entropy on logits instead of MSE
  double pos_weight = 1.0;  // positive-class weight for the cross entropy

  // Zero the head convolution at initialization. The residual trainers force
  // this on: their model then starts as the exact identity map, so training
  // only ever has to fit the (possibly tiny) input-to-target mismatch instead
  // of first cancelling random-initialization noise, and the best-validation
  // checkpoint can never be materially worse than the identity.
  bool identity_start = false;
};

struct TrainResult {
  std::vector<double> params;
  TrainLog log;
};

// Mini-batch MSE trainer with adaptive-moment updates. Samples are pulled
// from the provider on demand; the last val_fraction of a seeded shuffle is
// held out and the best-validation parameters are returned. Throws if the
// loss goes non-finite.
TrainResult train_net(const NetSpec& spec, const SampleProvider& provider, size_t n_samples,
                      const TrainOptions& opt);

// Default architectures for the three learned maps.
NetSpec data_correction_spec(int base = 8);
NetSpec artifact_correction_spec(int base = 8);
NetSpec direct_inverter_spec(int in_channels, int out_h, int out_w, int base = 8);

// Pairs: (measured traces d_i, linearized-model traces for the same source).
// Learns the trace-domain residual map at the pooled input rms.
TrainedNet train_data_correction(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                 const TrainOptions& opt, TrainLog* log = nullptr);

// Pairs: (reconstructed speed image, true speed image).
TrainedNet train_artifact_correction(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                     const TrainOptions& opt, TrainLog* log = nullptr);

// Pairs: (all-source traces stacked as channels, true speed image).
TrainedNet train_direct_inverter(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                 const TrainOptions& opt, TrainLog* log = nullptr);

TraceSet apply_trace_correction(const TrainedNet& psi, const TraceSet& d);
Image apply_image_correction(const TrainedNet& phi, const Image& sos);
Image apply_direct_inverter(const TrainedNet& theta, const std::vector<TraceSet>& all_traces);

Tensor stack_traces(const std::vector<TraceSet>& all_traces);

struct VariantModels {
  std::optional<TrainedNet> psi;       // trace correction
  std::optional<TrainedNet> phi;       // image correction for plain linearized recons
  std::optional<TrainedNet> phi_dual;  // image correction trained on trace-corrected recons
  std::optional<TrainedNet> theta;     // direct trace-to-image inverter
};

const std::vector<std::string>& variant_names();

struct VariantContext {
  const ImagingSystem* sys = nullptr;
  const BornOperator* born = nullptr;  // required by the linearized variants
  BornInvOptions born_opt;
  FwiOptions fwi_opt;
};

// variant in {uncorrected, artifact, data, dual, direct, fwi}; throws when a
// required model or operator is missing.
SosMap reconstruct_variant(const std::string& variant, const std::vector<TraceSet>& data,
                           const VariantModels& models, const VariantContext& ctx);

}  // namespace wavetomo

#endif
