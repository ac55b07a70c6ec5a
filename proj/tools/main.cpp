#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wavetomo/acquisition.hpp"
#include "wavetomo/assessment.hpp"
#include "wavetomo/born.hpp"
#include "wavetomo/config.hpp"
#include "wavetomo/correction.hpp"
#include "wavetomo/phantom.hpp"
#include "wavetomo/rng.hpp"
#include "wavetomo/study.hpp"
#include "wavetomo/tensor_io.hpp"

namespace {

using namespace wavetomo;

Config load_config(const std::string& path) {
  if (path.empty()) return Config{};
  return Config::parse_file(path);
}

std::vector<TraceSet> load_traces(const std::string& path) {
  TensorFile t = load_tensor(path);
  if (t.dims.size() != 3) throw std::runtime_error(path + ": expected a sources x steps x receivers tensor");
  const int I = static_cast<int>(t.dims[0]), K = static_cast<int>(t.dims[1]), J = static_cast<int>(t.dims[2]);
  std::vector<TraceSet> ts(I, TraceSet(K, J));
  for (int i = 0; i < I; ++i)
    for (size_t k = 0; k < ts[i].data.size(); ++k) {
      size_t idx = static_cast<size_t>(i) * ts[i].data.size() + k;
      ts[i].data[k] = t.dtype == Dtype::f32 ? static_cast<double>(t.f32[idx]) : t.f64[idx];
    }
  return ts;
}

void save_traces(const std::string& path, const std::vector<TraceSet>& ts, const std::string& meta) {
  TensorFile t;
  t.dtype = Dtype::f32;
  t.dims = {ts.size(), static_cast<size_t>(ts[0].rows), static_cast<size_t>(ts[0].cols)};
  t.metadata = meta;
  t.f32.reserve(ts.size() * ts[0].data.size());
  for (const auto& d : ts)
    for (double v : d.data) t.f32.push_back(static_cast<float>(v));
  save_tensor(path, t);
}

Tensor tensor_from_file(const std::string& path) {
  TensorFile t = load_tensor(path);
  auto val = [&](size_t i) {
    return t.dtype == Dtype::f32 ? static_cast<double>(t.f32[i])
           : t.dtype == Dtype::u8 ? static_cast<double>(t.u8[i])
                                  : t.f64[i];
  };
  if (t.dims.size() == 2) {
    Tensor out(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), 1);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = val(i);
    return out;
  }
  if (t.dims.size() == 3) {
    // stored channel-major {c, h, w}; nets want channels last
    const int c = static_cast<int>(t.dims[0]), h = static_cast<int>(t.dims[1]), w = static_cast<int>(t.dims[2]);
    Tensor out(h, w, c);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out.at(y, x, ch) = val((static_cast<size_t>(ch) * h + y) * w + x);
    return out;
  }
  throw std::runtime_error(path + ": expected a 2- or 3-dimensional tensor");
}

int run_phantom_gen(const std::string& cls_name, uint64_t seed, int size, const std::string& out_path,
                    bool pgm, bool masks) {
  Phantom ph = generate_phantom(size, breast_class_from_name(cls_name), seed);
  char meta[128];
  std::snprintf(meta, sizeof meta, "class=%s;seed=%llu;gland_fraction=%.17g", breast_class_name(ph.cls),
                static_cast<unsigned long long>(seed), ph.gland_fraction);
  save_matrix(out_path, ph.sos, meta);
  std::filesystem::path base(out_path);
  if (pgm) {
    std::filesystem::path p = base;
    p.replace_extension(".pgm");
    save_pgm(p.string(), ph.sos);
  }
  if (masks) {
    for (const auto& [name, mask] : {std::pair<const char*, const Array2D<uint8_t>*>{"breast", &ph.breast},
                                     {"tumor", &ph.tumor}}) {
      TensorFile t;
      t.dtype = Dtype::u8;
      t.dims = {static_cast<size_t>(mask->rows), static_cast<size_t>(mask->cols)};
      t.u8 = mask->data;
      std::filesystem::path p = base.parent_path() / (base.stem().string() + "_" + name + ".bin");
      save_tensor(p.string(), t);
    }
  }
  std::printf("phantom %s class %s gland_fraction %.4f tumor %s\n", out_path.c_str(), breast_class_name(ph.cls),
              ph.gland_fraction, ph.has_tumor() ? "yes" : "no");
  return 0;
}

int run_acquire(const std::string& cfg_path, const std::string& sos_path, const std::string& out_path,
                double snr_db_target, double noise_std, uint64_t noise_seed) {
  StudyConfig sc = resolve_study_config(load_config(cfg_path));
  ImagingSystem sys = build_system(sc.system);
  Image sos = load_matrix(sos_path);
  if (sos.rows != sc.system.grid.n_fov || sos.cols != sc.system.grid.n_fov)
    throw std::runtime_error(sos_path + ": map does not match the configured field of view");
  Image full = embed_in_full_grid({sos, kWaterSos}, sc.system.grid);
  auto ts = acquire(sys, full);
  double rms = traces_rms(ts);
  double std_used = noise_std;
  if (snr_db_target > 0.0) std_used = noise_std_for_snr(rms, snr_db_target);
  if (std_used > 0.0) {
    Rng rng(noise_seed);
    add_noise(ts, std_used, rng);
  }
  char meta[160];
  std::snprintf(meta, sizeof meta, "sos=%s;rms=%.17g;noise_std=%.17g;noise_seed=%llu", sos_path.c_str(), rms,
                std_used, static_cast<unsigned long long>(noise_seed));
  save_traces(out_path, ts, meta);
  std::printf("traces %s rms %.6g noise_std %.6g\n", out_path.c_str(), rms, std_used);
  return 0;
}

int run_train(const std::string& kind, const std::string& pairs_path, const std::string& out_path,
              const std::string& cfg_path, int base, uint64_t seed) {
  std::ifstream pf(pairs_path);
  if (!pf) throw std::runtime_error("cannot read pair manifest " + pairs_path);
  std::vector<Tensor> ins, tars;
  std::string in_file, tar_file;
  while (pf >> in_file >> tar_file) {
    ins.push_back(tensor_from_file(in_file));
    tars.push_back(tensor_from_file(tar_file));
  }
  if (ins.empty()) throw std::runtime_error(pairs_path + ": no input/target pairs listed");
  SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };

  StudyConfig sc = resolve_study_config(load_config(cfg_path));
  TrainLog log;
  TrainedNet model;
  if (kind == "data") {
    TrainOptions opt = sc.psi_train;
    opt.seed = seed;
    opt.verbose = true;
    model = train_data_correction(prov, ins.size(), data_correction_spec(base), opt, &log);
  } else if (kind == "artifact") {
    TrainOptions opt = sc.phi_train;
    opt.seed = seed;
    opt.verbose = true;
    model = train_artifact_correction(prov, ins.size(), artifact_correction_spec(base), opt, &log);
  } else if (kind == "direct") {
    TrainOptions opt = sc.theta_train;
    opt.seed = seed;
    opt.verbose = true;
    NetSpec spec = direct_inverter_spec(ins[0].c, tars[0].h, tars[0].w, base);
    model = train_direct_inverter(prov, ins.size(), spec, opt, &log);
  } else if (kind == "observer") {
    TrainOptions opt = sc.observer_train;
    opt.seed = seed;
    opt.verbose = true;
    model = train_observer(prov, ins.size(), observer_spec(base), opt, &log);
  } else {
    throw std::runtime_error("unknown training kind '" + kind + "' (data|artifact|direct|observer)");
  }
  save_model(out_path, model);
  std::printf("model %s best_epoch %d best_val %.6g\n", out_path.c_str(), log.best_epoch, log.best_val);
  return 0;
}

int run_reconstruct(const std::string& cfg_path, const std::string& traces_path, const std::string& variant,
                    const std::string& psi_path, const std::string& phi_path, const std::string& phi_dual_path,
                    const std::string& theta_path, const std::string& out_path, bool pgm) {
  if (!std::filesystem::exists(traces_path))
    throw std::runtime_error("missing measurement file '" + traces_path + "'");
  StudyConfig sc = resolve_study_config(load_config(cfg_path));
  ImagingSystem sys = build_system(sc.system);
  auto ts = load_traces(traces_path);

  VariantModels models;
  if (!psi_path.empty()) models.psi = load_model(psi_path);
  if (!phi_path.empty()) models.phi = load_model(phi_path);
  if (!phi_dual_path.empty()) models.phi_dual = load_model(phi_dual_path);
  if (!theta_path.empty()) models.theta = load_model(theta_path);

  VariantContext ctx;
  ctx.sys = &sys;
  ctx.born_opt = sc.born;
  ctx.fwi_opt = sc.fwi;
  std::unique_ptr<BornOperator> op;
  if (variant != "fwi" && variant != "direct") {
    op = std::make_unique<BornOperator>(sys);
    ctx.born = op.get();
  }
  SosMap result = reconstruct_variant(variant, ts, models, ctx);
  save_matrix(out_path, result.values, "variant=" + variant + ";traces=" + traces_path);
  if (pgm) {
    std::filesystem::path p(out_path);
    p.replace_extension(".pgm");
    save_pgm(p.string(), result.values);
  }
  std::printf("reconstruction %s variant %s\n", out_path.c_str(), variant.c_str());
  return 0;
}

int run_assess(const std::string& estimate_path, const std::string& truth_path, const std::string& observer_path,
               const std::string& mask_path, const std::string& roc_path) {
  Image est = load_matrix(estimate_path);
  Image tru = load_matrix(truth_path);
  std::printf("rrmse=%.17g\n", rrmse(est, tru));
  std::printf("ssim=%.17g\n", ssim(est, tru));
  if (!observer_path.empty()) {
    if (mask_path.empty()) throw std::runtime_error("--observer requires --mask with the tumor labels");
    TrainedNet obs = load_model(observer_path);
    TensorFile mt = load_tensor(mask_path);
    if (mt.dtype != Dtype::u8 || mt.dims.size() != 2) throw std::runtime_error(mask_path + ": expected a u8 mask");
    Image probs = observer_probabilities(obs, est);
    if (probs.data.size() != mt.u8.size()) throw std::runtime_error("mask and estimate sizes differ");
    std::vector<uint8_t> labels(mt.u8.begin(), mt.u8.end());
    for (auto& v : labels) v = v ? 1 : 0;
    RocCurve roc = roc_and_auc(probs.data, labels);
    std::printf("auc=%.17g\n", roc.auc);
    std::printf("youden_threshold=%.17g\n", choose_threshold(roc));
    if (!roc_path.empty()) {
      std::ofstream f(roc_path, std::ios::binary);
      f << "threshold,fpr,tpr\n";
      for (const auto& pt : roc.points) {
        char b[128];
        std::snprintf(b, sizeof b, "%.17g,%.17g,%.17g\n", pt.threshold, pt.fpr, pt.tpr);
        f << b;
      }
    }
  }
  return 0;
}

int run_study_cmd(const std::string& cfg_path, int study_id, double scale, long long seed, const std::string& out_dir,
                  const std::string& cache_dir, const std::vector<std::string>& sets) {
  Config cfg = load_config(cfg_path);
  for (const std::string& kv : sets) {
    auto pos = kv.find('=');
    if (pos == std::string::npos) throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, pos), kv.substr(pos + 1));
  }
  if (scale > 0.0) cfg.set("study.scale", std::to_string(scale));
  if (seed >= 0) cfg.set("study.seed", std::to_string(seed));
  if (!out_dir.empty()) cfg.set("paths.out_dir", out_dir);
  if (!cache_dir.empty()) cfg.set("paths.cache_dir", cache_dir);
  StudyConfig sc = resolve_study_config(cfg, study_id);
  std::string dir = run_study(sc);
  std::printf("study %d complete: %s\n", sc.id, dir.c_str());
  return 0;
}

int run_report(const std::string& study_dir) {
  std::string summary = write_report(study_dir);
  std::ifstream f(summary);
  std::cout << f.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D ultrasound speed-of-sound tomography pipeline"};
  app.require_subcommand(1);
  std::function<int()> action;

  // phantom-gen
  auto* pg = app.add_subcommand("phantom-gen", "Generate a procedural breast phantom");
  {
    static std::string cls = "B", out;
    static uint64_t seed = 7;
    static int size = 96;
    static bool pgm = false, masks = false;
    pg->add_option("--class", cls, "Density class A|B|C|D");
    pg->add_option("--seed", seed, "Generator seed");
    pg->add_option("--size", size, "Field-of-view pixels per side");
    pg->add_option("--out", out, "Output speed-map tensor")->required();
    pg->add_flag("--pgm", pgm, "Also write an 8-bit preview");
    pg->add_flag("--masks", masks, "Also write breast/tumor masks");
    pg->callback([&] { action = [&] { return run_phantom_gen(cls, seed, size, out, pgm, masks); }; });
  }

  // acquire
  auto* aq = app.add_subcommand("acquire", "Simulate ring-array measurements for a phantom");
  {
    static std::string cfg, sos, out;
    static double snr = 0.0, nstd = 0.0;
    static uint64_t nseed = 1;
    aq->add_option("--config", cfg, "Configuration file");
    aq->add_option("--sos", sos, "Speed-map tensor (field of view)")->required();
    aq->add_option("--out", out, "Output trace tensor")->required();
    aq->add_option("--snr", snr, "Add noise at this amplitude SNR (dB)");
    aq->add_option("--noise-std", nstd, "Add noise with this absolute std");
    aq->add_option("--noise-seed", nseed, "Noise seed");
    aq->callback([&] { action = [&] { return run_acquire(cfg, sos, out, snr, nstd, nseed); }; });
  }

  // train
  auto* tr = app.add_subcommand("train", "Train a correction, inverter, or observer network");
  {
    static std::string kind, pairs, out, cfg;
    static int base = 8;
    static uint64_t seed = 1;
    tr->add_option("--kind", kind, "data|artifact|direct|observer")->required();
    tr->add_option("--pairs", pairs, "Manifest: one 'input target' file pair per line")->required();
    tr->add_option("--out", out, "Output model file")->required();
    tr->add_option("--config", cfg, "Configuration file (train.* budgets)");
    tr->add_option("--base", base, "Network width");
    tr->add_option("--seed", seed, "Training seed");
    tr->callback([&] { action = [&] { return run_train(kind, pairs, out, cfg, base, seed); }; });
  }

  // reconstruct
  auto* rc = app.add_subcommand("reconstruct", "Reconstruct a speed map from measured traces");
  {
    static std::string cfg, traces, variant = "uncorrected", psi, phi, phid, theta, out;
    static bool pgm = false;
    rc->add_option("--config", cfg, "Configuration file");
    rc->add_option("--traces", traces, "Measured trace tensor")->required();
    rc->add_option("--variant", variant, "uncorrected|artifact|data|dual|direct|fwi");
    rc->add_option("--psi", psi, "Trace-correction model");
    rc->add_option("--phi", phi, "Image-correction model");
    rc->add_option("--phi-dual", phid, "Image-correction model for corrected traces");
    rc->add_option("--theta", theta, "Direct-inverter model");
    rc->add_option("--out", out, "Output speed-map tensor")->required();
    rc->add_flag("--pgm", pgm, "Also write an 8-bit preview");
    rc->callback([&] { action = [&] { return run_reconstruct(cfg, traces, variant, psi, phi, phid, theta, out, pgm); }; });
  }

  // assess
  auto* as = app.add_subcommand("assess", "Score a reconstruction against the truth");
  {
    static std::string est, tru, obs, mask, roc;
    as->add_option("--estimate", est, "Reconstructed speed map")->required();
    as->add_option("--truth", tru, "True speed map")->required();
    as->add_option("--observer", obs, "Observer model for task assessment");
    as->add_option("--mask", mask, "Tumor mask (u8 tensor)");
    as->add_option("--roc", roc, "Write the ROC curve to this CSV");
    as->callback([&] { action = [&] { return run_assess(est, tru, obs, mask, roc); }; });
  }

  // study
  auto* st = app.add_subcommand("study", "Run a full study pipeline");
  {
    static std::string cfg, out, cache;
    static int id = 0;
    static double scale = 0.0;
    static long long seed = -1;
    static std::vector<std::string> sets;
    st->add_option("--config", cfg, "Configuration file");
    st->add_option("--study", id, "Study id 1..4 (overrides the config)");
    st->add_option("--scale", scale, "Dataset scale factor");
    st->add_option("--seed", seed, "Phantom-pool seed");
    st->add_option("--out", out, "Output directory");
    st->add_option("--cache", cache, "Cache directory");
    st->add_option("--set", sets, "Extra key=value overrides");
    st->callback([&] { action = [&] { return run_study_cmd(cfg, id, scale, seed, out, cache, sets); }; });
  }

  // report
  auto* rp = app.add_subcommand("report", "Aggregate a study's metrics into a summary table");
  {
    static std::string dir;
    rp->add_option("--study-dir", dir, "Study output directory")->required();
    rp->callback([&] { action = [&] { return run_report(dir); }; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
