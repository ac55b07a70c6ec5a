#include "wavetomo/correction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "wavetomo/parallel.hpp"
#include "wavetomo/tensor_io.hpp"

namespace wavetomo {

namespace {

constexpr const char* kRmsKey = ";trace_rms=";

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

Tensor traces_to_tensor(const TraceSet& t) {
  Tensor x(static_cast<int>(t.rows), static_cast<int>(t.cols), 1);
  std::copy(t.data.begin(), t.data.end(), x.data.begin());
  return x;
}

Tensor image_norm(const Image& sos) {
  Tensor x(static_cast<int>(sos.rows), static_cast<int>(sos.cols), 1);
  for (size_t i = 0; i < sos.data.size(); ++i) {
    x.data[i] = (sos.data[i] - kSosNormCenter) / kSosNormHalf;
  }
  return x;
}

double sample_loss(const TrainOptions& opt, const Tensor& logits, const Tensor& target,
                   Tensor* dlogits) {
  return opt.bce ? bce_with_logits(logits, target, opt.pos_weight, dlogits)
                 : mse_loss(logits, target, dlogits);
}

double mean_validation_loss(Net& proto, const std::vector<double>& params,
                            const SampleProvider& provider, const std::vector<size_t>& val_idx,
                            const TrainOptions& opt) {
  std::vector<double> losses(val_idx.size());
  parallel_for(static_cast<int>(val_idx.size()), [&](int i) {
    Net net(proto);
    SamplePair s = provider(val_idx[static_cast<size_t>(i)]);
    losses[static_cast<size_t>(i)] = sample_loss(opt, net.forward(s.input, params), s.target, nullptr);
  });
  double sum = 0.0;
  for (double v : losses) sum += v;
  return sum / static_cast<double>(val_idx.size());
}

}  // namespace

TrainResult train_net(const NetSpec& spec, const SampleProvider& provider, size_t n_samples,
                      const TrainOptions& opt) {
  if (n_samples == 0) throw std::invalid_argument("train: empty sample set");
  if (opt.epochs <= 0 || opt.batch_size <= 0) throw std::invalid_argument("train: bad schedule");

  Net proto(spec);
  Rng rng(seed_chain(opt.seed, 0x7261696e));
  std::vector<double> params = proto.init_params(rng);
  if (opt.identity_start) {
    // consumes no rng draws, so shuffles are unaffected by the flag
    std::fill(params.begin() + static_cast<long>(proto.head_offset()), params.end(), 0.0);
  }

  std::vector<size_t> idx(n_samples);
  for (size_t i = 0; i < n_samples; ++i) idx[i] = i;
  shuffle_indices(idx, rng);
  size_t n_val = static_cast<size_t>(std::lround(opt.val_fraction * static_cast<double>(n_samples)));
  n_val = std::max<size_t>(n_val, 1);
  std::vector<size_t> train_idx, val_idx;
  if (n_val >= n_samples) {
    // degenerate sets validate on the training data itself
    train_idx = idx;
    val_idx = idx;
  } else {
    train_idx.assign(idx.begin(), idx.end() - static_cast<long>(n_val));
    val_idx.assign(idx.end() - static_cast<long>(n_val), idx.end());
  }

  TrainResult out;
  out.log.seed = opt.seed;
  // The start point competes for the checkpoint: when the initial map is
  // already near-optimal (identity_start with a small true residual) the
  // first adaptive-moment steps can overshoot it, and no later epoch is
  // guaranteed to come back.
  out.log.best_epoch = -1;
  out.log.best_val = mean_validation_loss(proto, params, provider, val_idx, opt);
  out.params = params;
  AdamState adam;
  std::vector<double> grad(proto.param_count());

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle_indices(train_idx, rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < train_idx.size(); start += opt.batch_size) {
      const size_t count = std::min<size_t>(opt.batch_size, train_idx.size() - start);
      std::vector<std::vector<double>> slot_grad(count);
      std::vector<double> slot_loss(count);
      parallel_for(static_cast<int>(count), [&](int i) {
        Net net(proto);
        SamplePair s = provider(train_idx[start + static_cast<size_t>(i)]);
        Tensor dpred;
        slot_loss[static_cast<size_t>(i)] =
            sample_loss(opt, net.forward(s.input, params), s.target, &dpred);
        slot_grad[static_cast<size_t>(i)].assign(net.param_count(), 0.0);
        net.backward(dpred, params, slot_grad[static_cast<size_t>(i)]);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(count);
      for (size_t s = 0; s < count; ++s) {
        epoch_loss += slot_loss[s];
        for (size_t p = 0; p < grad.size(); ++p) grad[p] += slot_grad[s][p] * inv;
      }
      adam.step(params, grad, opt.lr);
    }
    epoch_loss /= static_cast<double>(train_idx.size());
    const double val_loss = mean_validation_loss(proto, params, provider, val_idx, opt);
    if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss)) {
      throw std::runtime_error("train: loss went non-finite at epoch " + std::to_string(epoch));
    }
    out.log.train_loss.push_back(epoch_loss);
    out.log.val_loss.push_back(val_loss);
    if (val_loss < out.log.best_val) {
      out.log.best_epoch = epoch;
      out.log.best_val = val_loss;
      out.params = params;
    }
    if (opt.verbose) {
      std::fprintf(stderr, "epoch %3d  train %.6g  val %.6g\n", epoch, epoch_loss, val_loss);
    }
  }
  return out;
}

NetSpec data_correction_spec(int base) {
  NetSpec s;
  s.kind = "unet";
  s.base = base;
  return s;
}

NetSpec artifact_correction_spec(int base) {
  NetSpec s;
  s.kind = "unet";
  s.base = base;
  return s;
}

NetSpec direct_inverter_spec(int in_channels, int out_h, int out_w, int base) {
  NetSpec s;
  s.kind = "encoder";
  s.in_c = in_channels;
  s.base = base;
  s.out_h = out_h;
  s.out_w = out_w;
  return s;
}

namespace {

double pooled_input_rms(const SampleProvider& pairs, size_t n) {
  double ss = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < n; ++i) {
    const Tensor& x = pairs(i).input;
    for (double v : x.data) ss += v * v;
    count += x.data.size();
  }
  const double rms = std::sqrt(ss / static_cast<double>(count));
  if (!(rms > 0.0) || !std::isfinite(rms)) {
    throw std::runtime_error("train: degenerate input scale");
  }
  return rms;
}

}  // namespace

TrainedNet train_data_correction(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                 const TrainOptions& opt, TrainLog* log) {
  const double rms = pooled_input_rms(pairs, n);
  SampleProvider scaled = [&pairs, rms](size_t i) {
    SamplePair raw = pairs(i);
    SamplePair s;
    s.input = raw.input;
    for (double& v : s.input.data) v /= rms;
    s.target = raw.target;  // residual target in rms units
    for (size_t k = 0; k < s.target.data.size(); ++k) {
      s.target.data[k] = (raw.target.data[k] - raw.input.data[k]) / rms;
    }
    return s;
  };
  TrainOptions topt = opt;
  topt.identity_start = true;
  TrainResult r = train_net(spec, scaled, n, topt);
  if (log) *log = r.log;
  return TrainedNet{spec, std::move(r.params), rms};
}

TrainedNet train_artifact_correction(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                     const TrainOptions& opt, TrainLog* log) {
  SampleProvider scaled = [&pairs](size_t i) {
    SamplePair raw = pairs(i);
    SamplePair s;
    s.input = raw.input;
    for (double& v : s.input.data) v = (v - kSosNormCenter) / kSosNormHalf;
    s.target = raw.target;
    for (size_t k = 0; k < s.target.data.size(); ++k) {
      s.target.data[k] = (raw.target.data[k] - raw.input.data[k]) / kSosNormHalf;
    }
    return s;
  };
  TrainOptions topt = opt;
  topt.identity_start = true;
  TrainResult r = train_net(spec, scaled, n, topt);
  if (log) *log = r.log;
  return TrainedNet{spec, std::move(r.params), 1.0};
}

TrainedNet train_direct_inverter(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                                 const TrainOptions& opt, TrainLog* log) {
  const double rms = pooled_input_rms(pairs, n);
  SampleProvider scaled = [&pairs, rms](size_t i) {
    SamplePair raw = pairs(i);
    SamplePair s;
    s.input = raw.input;
    for (double& v : s.input.data) v /= rms;
    s.target = raw.target;
    for (double& v : s.target.data) v = (v - kSosNormCenter) / kSosNormHalf;
    return s;
  };
  TrainResult r = train_net(spec, scaled, n, opt);
  if (log) *log = r.log;
  return TrainedNet{spec, std::move(r.params), rms};
}

TraceSet apply_trace_correction(const TrainedNet& psi, const TraceSet& d) {
  Net net(psi.spec);
  Tensor x = traces_to_tensor(d);
  for (double& v : x.data) v /= psi.trace_rms;
  Tensor y = net.predict(x, psi.params);
  TraceSet out = d;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += psi.trace_rms * y.data[i];
  return out;
}

Image apply_image_correction(const TrainedNet& phi, const Image& sos) {
  Net net(phi.spec);
  Tensor y = net.predict(image_norm(sos), phi.params);
  Image out = sos;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += kSosNormHalf * y.data[i];
  return out;
}

Tensor stack_traces(const std::vector<TraceSet>& all_traces) {
  if (all_traces.empty()) throw std::invalid_argument("stack_traces: no sources");
  const int k = static_cast<int>(all_traces[0].rows);
  const int j = static_cast<int>(all_traces[0].cols);
  const int n = static_cast<int>(all_traces.size());
  Tensor x(k, j, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(all_traces[i].rows) != k || static_cast<int>(all_traces[i].cols) != j) {
      throw std::invalid_argument("stack_traces: ragged trace sets");
    }
    for (int y = 0; y < k; ++y) {
      for (int xx = 0; xx < j; ++xx) x.at(y, xx, i) = all_traces[static_cast<size_t>(i)](y, xx);
    }
  }
  return x;
}

Image apply_direct_inverter(const TrainedNet& theta, const std::vector<TraceSet>& all_traces) {
  Net net(theta.spec);
  Tensor x = stack_traces(all_traces);
  for (double& v : x.data) v /= theta.trace_rms;
  Tensor y = net.predict(x, theta.params);
  Image out(static_cast<size_t>(y.h), static_cast<size_t>(y.w));
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = kSosNormCenter + kSosNormHalf * y.data[i];
  }
  return out;
}

void save_model(const std::string& path, const TrainedNet& model) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", model.trace_rms);
  save_vector(path, model.params, model.spec.to_metadata() + kRmsKey + buf);
}

TrainedNet load_model(const std::string& path) {
  TensorFile f = load_tensor(path);
  std::string meta = f.metadata;
  TrainedNet model;
  const size_t pos = meta.find(kRmsKey);
  if (pos != std::string::npos) {
    model.trace_rms = std::stod(meta.substr(pos + std::string(kRmsKey).size()));
    meta.erase(pos);
  }
  model.spec = NetSpec::from_metadata(meta);
  model.params = std::move(f.f64);
  Net check(model.spec);
  if (check.param_count() != model.params.size()) {
    throw std::runtime_error(path + ": parameter count does not match the stored spec");
  }
  return model;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"uncorrected", "artifact", "data",
                                                 "dual",        "direct",   "fwi"};
  return names;
}

SosMap reconstruct_variant(const std::string& variant, const std::vector<TraceSet>& data,
                           const VariantModels& models, const VariantContext& ctx) {
  if (!ctx.sys) throw std::invalid_argument("reconstruct: missing imaging system");
  const double c0 = kWaterSos;

  auto born_recon = [&](const std::vector<TraceSet>& traces) {
    if (!ctx.born) throw std::invalid_argument("reconstruct: variant needs the linearized operator");
    return born_reconstruct(*ctx.born, traces, ctx.born_opt).sos_fov;
  };
  auto corrected_traces = [&]() {
    if (!models.psi) throw std::invalid_argument("reconstruct: variant needs the trace model");
    std::vector<TraceSet> out;
    out.reserve(data.size());
    for (const TraceSet& d : data) out.push_back(apply_trace_correction(*models.psi, d));
    return out;
  };

  Image sos;
  if (variant == "uncorrected") {
    sos = born_recon(data);
  } else if (variant == "artifact") {
    if (!models.phi) throw std::invalid_argument("reconstruct: variant needs the image model");
    sos = apply_image_correction(*models.phi, born_recon(data));
  } else if (variant == "data") {
    sos = born_recon(corrected_traces());
  } else if (variant == "dual") {
    if (!models.phi_dual) throw std::invalid_argument("reconstruct: variant needs the dual image model");
    sos = apply_image_correction(*models.phi_dual, born_recon(corrected_traces()));
  } else if (variant == "direct") {
    if (!models.theta) throw std::invalid_argument("reconstruct: variant needs the direct model");
    sos = apply_direct_inverter(*models.theta, data);
  } else if (variant == "fwi") {
    sos = fwi_reconstruct(*ctx.sys, data, ctx.fwi_opt).sos_fov;
  } else {
    throw std::invalid_argument("reconstruct: unknown variant '" + variant + "'");
  }
  return SosMap{std::move(sos), c0};
}

}  // namespace wavetomo
