#include "wavetomo/study.hpp"

#include <unistd.h>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wavetomo/acquisition.hpp"
#include "wavetomo/born.hpp"
#include "wavetomo/inversion.hpp"
#include "wavetomo/parallel.hpp"
#include "wavetomo/rng.hpp"
#include "wavetomo/tensor_io.hpp"

namespace fs = std::filesystem;

namespace wavetomo {

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, value);
  return buf;
}

namespace {

std::string g17(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string gs(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%g", v);
  return b;
}

std::string dec64(uint64_t v) {
  char b[24];
  std::snprintf(b, sizeof b, "%" PRIu64, v);
  return b;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw std::invalid_argument(what + ": bad number '" + text + "'");
  return v;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split_fields(text, ',')) {
    std::string t = trimmed(item);
    if (t.empty()) continue;
    out.push_back(parse_double(t, what));
  }
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  for (const auto& s : v)
    if (s == x) return true;
  return false;
}

// published per-class phantom counts (A, B, C, D)
constexpr int kS1Train[4] = {88, 274, 272, 186};
constexpr int kS1Test[4] = {67, 206, 204, 138};
constexpr int kS2Train[4] = {162, 488, 484, 0};
constexpr int kS2Test[4] = {0, 0, 0, 324};

int scaled_count(int full, double scale) {
  if (full <= 0) return 0;
  return std::max(1, static_cast<int>(std::lround(full * scale)));
}

uint64_t phantom_seed(uint64_t pool_seed, BreastClass cls, int idx) {
  uint64_t slot = (static_cast<uint64_t>(static_cast<int>(cls) + 1) << 32) | static_cast<uint64_t>(idx);
  return seed_chain(pool_seed, 0x706f6f6cull, slot);
}

void append_refs(std::vector<PhantomRef>* out, uint64_t pool, BreastClass cls, int first, int count) {
  for (int i = 0; i < count; ++i)
    out->push_back({cls, first + i, phantom_seed(pool, cls, first + i)});
}

}  // namespace

std::string PhantomRef::id() const {
  char b[8];
  std::snprintf(b, sizeof b, "%c%04d", "ABCD"[static_cast<int>(cls)], index);
  return b;
}

Splits resolve_splits(int study_id, double scale, uint64_t pool_seed) {
  if (!(scale > 0.0)) throw std::invalid_argument("resolve_splits: scale must be positive");
  Splits out;
  switch (study_id) {
    case 1:
    case 4:
      for (int c = 0; c < 4; ++c) {
        int nt = scaled_count(kS1Train[c], scale), ns = scaled_count(kS1Test[c], scale);
        append_refs(&out.train, pool_seed, static_cast<BreastClass>(c), 0, nt);
        append_refs(&out.test, pool_seed, static_cast<BreastClass>(c), nt, ns);
      }
      break;
    case 2:
      for (int c = 0; c < 4; ++c) {
        append_refs(&out.train, pool_seed, static_cast<BreastClass>(c), 0, scaled_count(kS2Train[c], scale));
        append_refs(&out.test, pool_seed, static_cast<BreastClass>(c), 0, scaled_count(kS2Test[c], scale));
      }
      break;
    case 3: {
      // half of the study-1 training set; the dropped half joins the test set
      Splits s1 = resolve_splits(1, scale, pool_seed);
      out.test = s1.test;
      for (int c = 0; c < 4; ++c) {
        std::vector<PhantomRef> mine;
        for (const auto& r : s1.train)
          if (static_cast<int>(r.cls) == c) mine.push_back(r);
        int keep = (static_cast<int>(mine.size()) + 1) / 2;
        out.train.insert(out.train.end(), mine.begin(), mine.begin() + keep);
        out.test.insert(out.test.end(), mine.begin() + keep, mine.end());
      }
      break;
    }
    default:
      throw std::invalid_argument("resolve_splits: study id must be 1..4");
  }
  return out;
}

std::string StudyConfig::resolved_text() const {
  Config c;
  c.set("study.id", std::to_string(id));
  c.set("study.scale", g17(scale));
  c.set("study.seed", dec64(seed));
  c.set("study.variants", join(variants, ','));
  c.set("study.example_images", std::to_string(example_images));
  c.set("paths.out_dir", out_dir);
  c.set("paths.cache_dir", cache_dir);
  c.set("system.n_full", std::to_string(system.grid.n_full));
  c.set("system.n_fov", std::to_string(system.grid.n_fov));
  c.set("system.dx", g17(system.grid.dx));
  c.set("system.dt", g17(system.grid.dt));
  c.set("system.n_steps", std::to_string(system.grid.n_steps));
  c.set("system.n_sources", std::to_string(system.n_sources));
  c.set("system.n_receivers", std::to_string(system.n_receivers));
  c.set("system.ring_radius", g17(system.ring_radius));
  c.set("system.f0", g17(system.f0));
  c.set("system.t0", g17(system.t0));
  c.set("system.sigma", g17(system.sigma));
  std::vector<std::string> tr, te;
  for (double v : train_snrs_db) tr.push_back(gs(v));
  for (double v : test_snrs_db) te.push_back(gs(v));
  c.set("noise.train_snrs_db", join(tr, ','));
  c.set("noise.test_snrs_db", join(te, ','));
  c.set("born.iterations", std::to_string(born.iterations));
  c.set("born.lr", g17(born.lr));
  c.set("born.lambda", g17(born.lambda));
  c.set("born.encode", born.encode ? "true" : "false");
  c.set("born.gaussian_weights", born.gaussian_weights ? "true" : "false");
  c.set("born.use_cg", born.use_cg ? "true" : "false");
  c.set("born.cg_tolerance", g17(born.cg_tolerance));
  c.set("fwi.iterations", std::to_string(fwi.iterations));
  c.set("fwi.lr", g17(fwi.lr));
  c.set("fwi.lambda", g17(fwi.lambda));
  c.set("fwi.encode", fwi.encode ? "true" : "false");
  c.set("fwi.gaussian_weights", fwi.gaussian_weights ? "true" : "false");
  const struct {
    const char* name;
    const TrainOptions* opt;
  } blocks[] = {{"psi", &psi_train}, {"phi", &phi_train}, {"theta", &theta_train}, {"observer", &observer_train}};
  for (const auto& b : blocks) {
    std::string pre = std::string("train.") + b.name + ".";
    c.set(pre + "epochs", std::to_string(b.opt->epochs));
    c.set(pre + "batch_size", std::to_string(b.opt->batch_size));
    c.set(pre + "lr", g17(b.opt->lr));
    c.set(pre + "val_fraction", g17(b.opt->val_fraction));
  }
  c.set("train.observer.pos_weight", g17(observer_train.pos_weight));
  c.set("net.base", std::to_string(net_base));
  return c.dump();
}

StudyConfig resolve_study_config(const Config& cfg, int study_id) {
  static const std::set<std::string> known = {
      "study.id",           "study.scale",          "study.seed",
      "study.variants",     "study.example_images", "paths.out_dir",
      "paths.cache_dir",    "system.n_full",        "system.n_fov",
      "system.dx",          "system.dt",            "system.n_steps",
      "system.n_sources",   "system.n_receivers",   "system.ring_radius",
      "system.f0",          "system.t0",            "system.sigma",
      "noise.train_snrs_db", "noise.test_snrs_db",  "born.iterations",
      "born.lr",            "born.lambda",          "born.encode",
      "born.gaussian_weights", "born.use_cg",       "born.cg_tolerance",
      "fwi.iterations",     "fwi.lr",               "fwi.lambda",
      "fwi.encode",         "fwi.gaussian_weights", "train.psi.epochs",
      "train.psi.batch_size", "train.psi.lr",       "train.psi.val_fraction",
      "train.phi.epochs",   "train.phi.batch_size", "train.phi.lr",
      "train.phi.val_fraction", "train.theta.epochs", "train.theta.batch_size",
      "train.theta.lr",     "train.theta.val_fraction", "train.observer.epochs",
      "train.observer.batch_size", "train.observer.lr", "train.observer.val_fraction",
      "train.observer.pos_weight", "net.base"};
  for (const auto& kv : cfg.entries())
    if (!known.count(kv.first)) throw std::invalid_argument("config: unknown key '" + kv.first + "'");

  StudyConfig s;
  s.id = study_id > 0 ? study_id : cfg.get_int("study.id", 1);
  if (s.id < 1 || s.id > 4) throw std::invalid_argument("config: study.id must be in 1..4");
  s.scale = cfg.get_double("study.scale", 0.05);
  if (!(s.scale > 0.0)) throw std::invalid_argument("config: study.scale must be positive");
  {
    std::string text = cfg.get_string("study.seed", "7");
    char* end = nullptr;
    s.seed = std::strtoull(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0') throw std::invalid_argument("config: bad study.seed '" + text + "'");
  }
  {
    std::string text = cfg.get_string("study.variants", join(variant_names(), ','));
    s.variants.clear();
    for (const std::string& item : split_fields(text, ',')) {
      std::string v = trimmed(item);
      if (v.empty()) continue;
      if (!contains(variant_names(), v)) throw std::invalid_argument("config: unknown variant '" + v + "'");
      if (!contains(s.variants, v)) s.variants.push_back(v);
    }
    if (s.variants.empty()) throw std::invalid_argument("config: study.variants is empty");
  }
  s.example_images = cfg.get_int("study.example_images", 2);
  s.out_dir = cfg.get_string("paths.out_dir", "study" + std::to_string(s.id) + "_out");
  s.cache_dir = cfg.get_string("paths.cache_dir", "wavetomo_cache");

  Grid& g = s.system.grid;
  g.n_full = cfg.get_int("system.n_full", 128);
  g.n_fov = cfg.get_int("system.n_fov", 96);
  g.dx = cfg.get_double("system.dx", 1.2);
  g.dt = cfg.get_double("system.dt", 0.3);
  g.n_steps = cfg.get_int("system.n_steps", 512);
  s.system.n_sources = cfg.get_int("system.n_sources", 16);
  s.system.n_receivers = cfg.get_int("system.n_receivers", 64);
  s.system.ring_radius = cfg.get_double("system.ring_radius", 48.0);
  s.system.f0 = cfg.get_double("system.f0", 0.25);
  s.system.t0 = cfg.get_double("system.t0", 6.4);
  s.system.sigma = cfg.get_double("system.sigma", 4.0);

  std::string def_levels = s.id == 4 ? "20,14,6" : "20";
  s.train_snrs_db = parse_double_list(cfg.get_string("noise.train_snrs_db", def_levels), "noise.train_snrs_db");
  s.test_snrs_db = parse_double_list(cfg.get_string("noise.test_snrs_db", def_levels), "noise.test_snrs_db");

  s.born.iterations = cfg.get_int("born.iterations", 150);
  s.born.lr = cfg.get_double("born.lr", 0.004);
  s.born.lambda = cfg.get_double("born.lambda", 0.0);
  s.born.encode = cfg.get_bool("born.encode", true);
  s.born.gaussian_weights = cfg.get_bool("born.gaussian_weights", false);
  s.born.use_cg = cfg.get_bool("born.use_cg", false);
  s.born.cg_tolerance = cfg.get_double("born.cg_tolerance", 1e-10);
  s.fwi.iterations = cfg.get_int("fwi.iterations", 300);
  s.fwi.lr = cfg.get_double("fwi.lr", 0.005);
  s.fwi.lambda = cfg.get_double("fwi.lambda", 0.0);
  s.fwi.encode = cfg.get_bool("fwi.encode", true);
  s.fwi.gaussian_weights = cfg.get_bool("fwi.gaussian_weights", false);

  auto train_block = [&](const char* name, TrainOptions base) {
    std::string pre = std::string("train.") + name + ".";
    TrainOptions o = base;
    o.epochs = cfg.get_int(pre + "epochs", base.epochs);
    o.batch_size = cfg.get_int(pre + "batch_size", base.batch_size);
    o.lr = cfg.get_double(pre + "lr", base.lr);
    o.val_fraction = cfg.get_double(pre + "val_fraction", base.val_fraction);
    return o;
  };
  TrainOptions base;
  base.epochs = 15;
  s.psi_train = train_block("psi", base);
  base.epochs = 40;
  s.phi_train = train_block("phi", base);
  base.epochs = 60;
  s.theta_train = train_block("theta", base);
  base.epochs = 40;
  s.observer_train = train_block("observer", base);
  s.observer_train.bce = true;
  s.observer_train.pos_weight = cfg.get_double("train.observer.pos_weight", 0.0);
  s.net_base = cfg.get_int("net.base", 8);
  return s;
}

namespace {

Tensor image_tensor(const Image& img) {
  Tensor t(img.rows, img.cols, 1);
  t.data = img.data;
  return t;
}

Tensor mask_tensor(const Array2D<uint8_t>& m) {
  Tensor t(m.rows, m.cols, 1);
  for (size_t i = 0; i < m.data.size(); ++i) t.data[i] = m.data[i] ? 1.0 : 0.0;
  return t;
}

Tensor trace_tensor(const TraceSet& d) {
  Tensor t(d.rows, d.cols, 1);
  t.data = d.data;
  return t;
}

void round_to_f32(std::vector<TraceSet>* ts) {
  for (auto& t : *ts)
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

Array3D<float> traces_to_movie(const std::vector<TraceSet>& ts) {
  Array3D<float> mv(static_cast<int>(ts.size()), ts[0].rows, ts[0].cols);
  for (size_t i = 0; i < ts.size(); ++i) {
    float* dst = mv.slice(static_cast<int>(i));
    for (size_t k = 0; k < ts[i].data.size(); ++k) dst[k] = static_cast<float>(ts[i].data[k]);
  }
  return mv;
}

std::vector<TraceSet> movie_to_traces(const Array3D<float>& mv) {
  std::vector<TraceSet> ts(mv.n0);
  for (int i = 0; i < mv.n0; ++i) {
    ts[i] = TraceSet(mv.n1, mv.n2);
    const float* src = mv.slice(i);
    for (size_t k = 0; k < ts[i].data.size(); ++k) ts[i].data[k] = src[k];
  }
  return ts;
}

void write_text_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void write_roc_csv(const fs::path& p, const RocCurve& curve) {
  std::string text = "threshold,fpr,tpr\n";
  const auto& pts = curve.points;
  const size_t n = pts.size();
  auto emit = [&](size_t i) {
    text += g17(pts[i].threshold) + "," + g17(pts[i].fpr) + "," + g17(pts[i].tpr) + "\n";
  };
  if (n <= 513) {
    for (size_t i = 0; i < n; ++i) emit(i);
  } else {
    for (size_t i = 0; i <= 512; ++i) emit(i * (n - 1) / 512);  // decimated, endpoints kept
  }
  write_text_file(p, text);
}

// Trained models per train-noise level, plus the id fragments that name the
// reconstruction chains in cache descriptors.
struct LevelModels {
  VariantModels vm;
  std::string psi_id, phi_id, phi_dual_id, theta_id;
  std::map<std::string, TrainedNet> observers;
};

struct Runner {
  StudyConfig cfg;
  fs::path out, cachedir;
  ImagingSystem sys;
  std::unique_ptr<BornOperator> bornop;
  std::string sysdesc;
  double rms_ref = 0.0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::mutex index_mu;

  explicit Runner(const StudyConfig& c) : cfg(c) {}

  void note(const std::string& msg) {
    double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[study%d %7.0fs] %s\n", cfg.id, el, msg.c_str());
    std::fflush(stderr);
  }

  template <typename Fn>
  void stage(const std::string& name, Fn&& fn) {
    note("stage " + name);
    try {
      fn();
    } catch (const std::exception& e) {
      throw std::runtime_error("study " + std::to_string(cfg.id) + "/" + name + ": " + e.what());
    }
  }

  fs::path cache_path(const char* prefix, const std::string& desc) const {
    return cachedir / (std::string(prefix) + hex64(fnv1a64(desc)) + ".bin");
  }

  void register_entry(const fs::path& p, const std::string& desc) {
    std::lock_guard<std::mutex> lock(index_mu);
    std::ofstream idx(cachedir / "index.txt", std::ios::app);
    idx << p.filename().string() << '\t' << desc << '\n';
  }

  template <typename Fn>
  static void atomic_write(const fs::path& p, Fn&& save_to) {
    fs::path tmp = p;
    tmp += ".tmp" + std::to_string(static_cast<long>(::getpid()));
    save_to(tmp.string());
    fs::rename(tmp, p);
  }

  const BornOperator& born() {
    // not thread safe; the stage drivers build it before any parallel section
    if (!bornop) {
      note("building linearized operator (incident fields for " + std::to_string(cfg.system.n_sources) +
           " sources)");
      bornop = std::make_unique<BornOperator>(sys);
    }
    return *bornop;
  }

  Phantom phantom(const PhantomRef& r) const { return generate_phantom(cfg.system.grid.n_fov, r.cls, r.seed); }

  std::string ph_desc(const PhantomRef& r) const {
    return sysdesc + "|ph:c=" + std::string(1, "ABCD"[static_cast<int>(r.cls)]) + ",s=" + dec64(r.seed);
  }

  // Trace caches hold f32; the compute path rounds through f32 before use so
  // cold- and warm-cache runs see bitwise the same data.
  std::vector<TraceSet> clean_traces(const PhantomRef& r) {
    const std::string desc = ph_desc(r) + "|wave";
    fs::path p = cache_path("tr_", desc);
    if (fs::exists(p)) return movie_to_traces(load_movie(p.string()));
    Phantom ph = phantom(r);
    Image full = embed_in_full_grid({ph.sos, kWaterSos}, cfg.system.grid);
    auto ts = acquire(sys, full);
    round_to_f32(&ts);
    atomic_write(p, [&](const std::string& tp) { save_movie(tp, traces_to_movie(ts), desc); });
    register_entry(p, desc);
    return ts;
  }

  // Linearized-model data for the same phantom: background plus Born-scattered
  // traces. These are the data-correction targets.
  std::vector<TraceSet> born_traces(const PhantomRef& r) {
    const std::string desc = ph_desc(r) + "|born";
    fs::path p = cache_path("bd_", desc);
    if (fs::exists(p)) return movie_to_traces(load_movie(p.string()));
    Phantom ph = phantom(r);
    Image x = sos_to_contrast(ph.sos);
    const BornOperator& op = born();
    std::vector<TraceSet> ts(op.n_sources());
    for (int i = 0; i < op.n_sources(); ++i) {
      ts[i] = op.apply(i, x);
      const TraceSet& bg = op.background_traces(i);
      for (size_t k = 0; k < ts[i].data.size(); ++k) ts[i].data[k] += bg.data[k];
    }
    round_to_f32(&ts);
    atomic_write(p, [&](const std::string& tp) { save_movie(tp, traces_to_movie(ts), desc); });
    register_entry(p, desc);
    return ts;
  }

  double noise_std(double snr) const { return noise_std_for_snr(rms_ref, snr); }

  uint64_t noise_seed(const PhantomRef& r, double snr) const {
    return seed_chain(r.seed, 0xA05Eull, static_cast<uint64_t>(llround(snr * 1000.0)));
  }

  std::vector<TraceSet> noisy_traces(const PhantomRef& r, double snr) {
    auto ts = clean_traces(r);
    Rng rng(noise_seed(r, snr));
    add_noise(ts, noise_std(snr), rng);
    return ts;
  }

  std::string nz_frag(const PhantomRef& r, double snr) const {
    return "|nz:std=" + g17(noise_std(snr)) + ",seed=" + dec64(noise_seed(r, snr));
  }

  std::string brec_frag() const {
    const auto& o = cfg.born;
    std::string f = "|brec:it=" + std::to_string(o.iterations) + ",lr=" + g17(o.lr) + ",la=" + g17(o.lambda) +
                    ",enc=" + (o.encode ? "1" : "0") + ",gw=" + (o.gaussian_weights ? "1" : "0");
    if (o.use_cg) f += ",cg=1,tol=" + g17(o.cg_tolerance);
    return f;
  }

  std::string fwi_frag() const {
    const auto& o = cfg.fwi;
    return "|fwi:it=" + std::to_string(o.iterations) + ",lr=" + g17(o.lr) + ",la=" + g17(o.lambda) +
           ",enc=" + (o.encode ? "1" : "0") + ",gw=" + (o.gaussian_weights ? "1" : "0");
  }

  static std::string topt_frag(const TrainOptions& o) {
    return ",ep=" + std::to_string(o.epochs) + ",bs=" + std::to_string(o.batch_size) + ",lr=" + g17(o.lr) +
           ",vf=" + g17(o.val_fraction) + ",pw=" + g17(o.pos_weight);
  }

  std::string split_id(const std::vector<PhantomRef>& refs) const {
    std::string all;
    for (const auto& r : refs) all += ph_desc(r) + ";";
    return hex64(fnv1a64(all));
  }

  // The reference rms is pooled over the canonical training split (study 1 at
  // this scale and pool seed), so noise levels are the same absolute std in
  // every study, mirroring the fixed stds of the published designs.
  void compute_rms_ref() {
    Splits canon = resolve_splits(1, cfg.scale, cfg.seed);
    const std::string desc = sysdesc + "|rmsref:pool=" + dec64(cfg.seed) + ",scale=" + g17(cfg.scale) +
                             ",n=" + std::to_string(canon.train.size());
    fs::path p = cache_path("rm_", desc);
    if (fs::exists(p)) {
      rms_ref = load_vector(p.string()).at(0);
      return;
    }
    parallel_for(static_cast<int>(canon.train.size()), [&](int i) { clean_traces(canon.train[i]); });
    double ss = 0.0;
    size_t n = 0;
    for (const auto& r : canon.train) {
      auto ts = clean_traces(r);
      for (const auto& t : ts) {
        for (double v : t.data) ss += v * v;
        n += t.data.size();
      }
    }
    rms_ref = std::sqrt(ss / static_cast<double>(n));
    if (!(rms_ref > 0.0)) throw std::runtime_error("canonical trace rms is degenerate");
    atomic_write(p, [&](const std::string& tp) { save_vector(tp, {rms_ref}, desc); });
    register_entry(p, desc);
  }

  Image cached_recon(const std::string& desc, const std::function<Image()>& make) {
    fs::path p = cache_path("rc_", desc);
    if (fs::exists(p)) return load_matrix(p.string());
    Image img = make();
    atomic_write(p, [&](const std::string& tp) { save_matrix(tp, img, desc); });
    register_entry(p, desc);
    return img;
  }

  Image born_solve(const std::vector<TraceSet>& observed, const std::string& desc) {
    BornInvOptions opt = cfg.born;
    opt.seed = fnv1a64("seed|" + desc);
    return born_reconstruct(born(), observed, opt).sos_fov;
  }

  Image recon_uncorrected(const PhantomRef& r, double snr) {
    const std::string desc = ph_desc(r) + nz_frag(r, snr) + brec_frag();
    return cached_recon(desc, [&] { return born_solve(noisy_traces(r, snr), desc); });
  }

  Image recon_data(const PhantomRef& r, double snr, const TrainedNet& psi, const std::string& psi_id) {
    const std::string desc = ph_desc(r) + nz_frag(r, snr) + "|psi=" + psi_id + brec_frag();
    return cached_recon(desc, [&] {
      auto ts = noisy_traces(r, snr);
      for (auto& t : ts) t = apply_trace_correction(psi, t);
      return born_solve(ts, desc);
    });
  }

  Image recon_fwi(const PhantomRef& r, double snr) {
    const std::string desc = ph_desc(r) + nz_frag(r, snr) + fwi_frag();
    return cached_recon(desc, [&] {
      FwiOptions opt = cfg.fwi;
      opt.seed = fnv1a64("seed|" + desc);
      return fwi_reconstruct(sys, noisy_traces(r, snr), opt).sos_fov;
    });
  }

  Image variant_image(const std::string& v, const PhantomRef& r, const LevelModels& lm, double snr) {
    if (v == "uncorrected") return recon_uncorrected(r, snr);
    if (v == "artifact") return apply_image_correction(*lm.vm.phi, recon_uncorrected(r, snr));
    if (v == "data") return recon_data(r, snr, *lm.vm.psi, lm.psi_id);
    if (v == "dual") return apply_image_correction(*lm.vm.phi_dual, recon_data(r, snr, *lm.vm.psi, lm.psi_id));
    if (v == "direct") return apply_direct_inverter(*lm.vm.theta, noisy_traces(r, snr));
    if (v == "fwi") return recon_fwi(r, snr);
    throw std::invalid_argument("unknown variant: " + v);
  }

  TrainedNet get_or_train(const std::string& name, const std::string& desc, TrainOptions opt,
                          const std::function<TrainedNet(const TrainOptions&, TrainLog*)>& make) {
    opt.seed = fnv1a64("seed|" + desc);
    fs::path mp = cache_path("md_", desc), lp = cache_path("lg_", desc);
    TrainedNet model;
    Array2D<double> losses;
    if (fs::exists(mp) && fs::exists(lp)) {
      model = load_model(mp.string());
      losses = load_matrix(lp.string());
      note(name + ": cached");
    } else {
      note(name + ": training (" + std::to_string(opt.epochs) + " epochs)");
      TrainLog lg;
      model = make(opt, &lg);
      losses = Array2D<double>(2, static_cast<int>(lg.train_loss.size()));
      for (size_t j = 0; j < lg.train_loss.size(); ++j) {
        losses(0, static_cast<int>(j)) = lg.train_loss[j];
        losses(1, static_cast<int>(j)) = lg.val_loss[j];
      }
      atomic_write(mp, [&](const std::string& tp) { save_model(tp, model); });
      atomic_write(lp, [&](const std::string& tp) {
        save_matrix(tp, losses,
                    desc + ";best_epoch=" + std::to_string(lg.best_epoch) + ";best_val=" + g17(lg.best_val));
      });
      register_entry(mp, desc);
      register_entry(lp, desc + "|log");
      note(name + ": done, best val " + gs(lg.best_val) + " at epoch " + std::to_string(lg.best_epoch));
    }
    std::string csv = "epoch,train_loss,val_loss\n";
    for (int j = 0; j < losses.cols; ++j)
      csv += std::to_string(j) + "," + g17(losses(0, j)) + "," + g17(losses(1, j)) + "\n";
    write_text_file(out / "logs" / (name + ".csv"), csv);
    return model;
  }

  LevelModels ensure_models(const Splits& sp, double snr) {
    LevelModels lm;
    const std::string tag = "tr" + gs(snr);
    const std::string sid = split_id(sp.train);
    const std::string nzd = ",std=" + g17(noise_std(snr));
    const std::string nb = ",base=" + std::to_string(cfg.net_base);
    const int n_train = static_cast<int>(sp.train.size());
    auto needs = [&](const char* v) { return contains(cfg.variants, v); };

    if (needs("data") || needs("dual")) {
      const std::string desc = sysdesc + "|psi:split=" + sid + nzd + topt_frag(cfg.psi_train) + nb;
      lm.psi_id = hex64(fnv1a64(desc));
      lm.vm.psi = get_or_train("psi_" + tag, desc, cfg.psi_train, [&](const TrainOptions& opt, TrainLog* lg) {
        parallel_for(n_train, [&](int i) {
          clean_traces(sp.train[i]);
          born_traces(sp.train[i]);
        });
        std::vector<Tensor> ins, tars;
        for (const auto& r : sp.train) {
          auto noisy = noisy_traces(r, snr);
          auto model = born_traces(r);
          for (size_t i = 0; i < noisy.size(); ++i) {
            ins.push_back(trace_tensor(noisy[i]));
            tars.push_back(trace_tensor(model[i]));
          }
        }
        SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };
        return train_data_correction(prov, ins.size(), data_correction_spec(cfg.net_base), opt, lg);
      });
    }

    if (needs("artifact")) {
      const std::string desc = sysdesc + "|phi:split=" + sid + nzd + brec_frag() + topt_frag(cfg.phi_train) + nb;
      lm.phi_id = hex64(fnv1a64(desc));
      lm.vm.phi = get_or_train("phi_" + tag, desc, cfg.phi_train, [&](const TrainOptions& opt, TrainLog* lg) {
        parallel_for(n_train, [&](int i) { recon_uncorrected(sp.train[i], snr); });
        std::vector<Tensor> ins, tars;
        for (const auto& r : sp.train) {
          ins.push_back(image_tensor(recon_uncorrected(r, snr)));
          tars.push_back(image_tensor(phantom(r).sos));
        }
        SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };
        return train_artifact_correction(prov, ins.size(), artifact_correction_spec(cfg.net_base), opt, lg);
      });
    }

    if (needs("dual")) {
      const std::string desc = sysdesc + "|phid:split=" + sid + nzd + ",psi=" + lm.psi_id + brec_frag() +
                               topt_frag(cfg.phi_train) + nb;
      lm.phi_dual_id = hex64(fnv1a64(desc));
      lm.vm.phi_dual =
          get_or_train("phi_dual_" + tag, desc, cfg.phi_train, [&](const TrainOptions& opt, TrainLog* lg) {
            parallel_for(n_train, [&](int i) { recon_data(sp.train[i], snr, *lm.vm.psi, lm.psi_id); });
            std::vector<Tensor> ins, tars;
            for (const auto& r : sp.train) {
              ins.push_back(image_tensor(recon_data(r, snr, *lm.vm.psi, lm.psi_id)));
              tars.push_back(image_tensor(phantom(r).sos));
            }
            SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };
            return train_artifact_correction(prov, ins.size(), artifact_correction_spec(cfg.net_base), opt, lg);
          });
    }

    if (needs("direct")) {
      const std::string desc = sysdesc + "|theta:split=" + sid + nzd + topt_frag(cfg.theta_train) + nb;
      lm.theta_id = hex64(fnv1a64(desc));
      lm.vm.theta = get_or_train("theta_" + tag, desc, cfg.theta_train, [&](const TrainOptions& opt, TrainLog* lg) {
        parallel_for(n_train, [&](int i) { clean_traces(sp.train[i]); });
        std::vector<Tensor> ins, tars;
        for (const auto& r : sp.train) {
          ins.push_back(stack_traces(noisy_traces(r, snr)));
          tars.push_back(image_tensor(phantom(r).sos));
        }
        SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };
        NetSpec spec =
            direct_inverter_spec(cfg.system.n_sources, cfg.system.grid.n_fov, cfg.system.grid.n_fov, cfg.net_base);
        return train_direct_inverter(prov, ins.size(), spec, opt, lg);
      });
    }

    for (const std::string& v : cfg.variants) {
      std::string chain;
      if (v == "uncorrected") chain = brec_frag();
      if (v == "artifact") chain = brec_frag() + ",phi=" + lm.phi_id;
      if (v == "data") chain = brec_frag() + ",psi=" + lm.psi_id;
      if (v == "dual") chain = brec_frag() + ",psi=" + lm.psi_id + ",phid=" + lm.phi_dual_id;
      if (v == "direct") chain = "theta=" + lm.theta_id;
      if (v == "fwi") chain = fwi_frag();
      const std::string desc =
          sysdesc + "|obs:v=" + v + ",split=" + sid + nzd + ",chain=" + chain + topt_frag(cfg.observer_train) + nb;
      lm.observers[v] =
          get_or_train("observer_" + v + "_" + tag, desc, cfg.observer_train, [&](const TrainOptions& opt, TrainLog* lg) {
            parallel_for(n_train, [&](int i) { variant_image(v, sp.train[i], lm, snr); });
            std::vector<Tensor> ins, tars;
            for (const auto& r : sp.train) {
              ins.push_back(image_tensor(variant_image(v, r, lm, snr)));
              tars.push_back(mask_tensor(phantom(r).tumor));
            }
            SampleProvider prov = [&](size_t k) { return SamplePair{ins[k], tars[k]}; };
            return train_observer(prov, ins.size(), observer_spec(cfg.net_base), opt, lg);
          });
    }
    return lm;
  }

  std::string run() {
    Splits sp;
    stage("setup", [&] {
      out = fs::path(cfg.out_dir);
      cachedir = fs::path(cfg.cache_dir);
      fs::create_directories(out / "logs");
      fs::create_directories(out / "images");
      fs::create_directories(cachedir);
      sys = build_system(cfg.system);
      sysdesc = "sys:nf=" + std::to_string(cfg.system.grid.n_full) + ",nv=" + std::to_string(cfg.system.grid.n_fov) +
                ",dx=" + g17(cfg.system.grid.dx) + ",dt=" + g17(cfg.system.grid.dt) +
                ",k=" + std::to_string(cfg.system.grid.n_steps) + ",i=" + std::to_string(cfg.system.n_sources) +
                ",j=" + std::to_string(cfg.system.n_receivers) + ",r=" + g17(cfg.system.ring_radius) +
                ",f0=" + g17(cfg.system.f0) + ",t0=" + g17(cfg.system.t0) + ",sg=" + g17(cfg.system.sigma);
      write_text_file(out / "resolved.cfg", cfg.resolved_text());
      sp = resolve_splits(cfg.id, cfg.scale, cfg.seed);
      note("train " + std::to_string(sp.train.size()) + " phantoms, test " + std::to_string(sp.test.size()));
    });

    stage("noise-reference", [&] {
      compute_rms_ref();
      std::string levels;
      for (double db : cfg.train_snrs_db) levels += " " + gs(db) + "dB=" + gs(noise_std(db));
      note("reference rms " + gs(rms_ref) + ", noise stds:" + levels);
    });

    bool needs_born = false;
    for (const std::string& v : cfg.variants)
      if (v == "uncorrected" || v == "artifact" || v == "data" || v == "dual") needs_born = true;
    if (needs_born) stage("operator", [&] { born(); });

    std::map<std::string, LevelModels> models;
    for (double l : cfg.train_snrs_db)
      stage("models-tr" + gs(l), [&] { models.emplace(gs(l), ensure_models(sp, l)); });

    const int n_test = static_cast<int>(sp.test.size());
    std::vector<Image> truth(n_test);
    std::vector<Array2D<uint8_t>> tumor(n_test);
    parallel_for(n_test, [&](int t) {
      Phantom ph = phantom(sp.test[t]);
      truth[t] = ph.sos;
      tumor[t] = ph.tumor;
    });

    std::string metrics = "study,variant,train_snr_db,test_snr_db,phantom,class,rrmse,ssim\n";
    std::string aucs = "study,variant,train_snr_db,test_snr_db,auc,youden_threshold,n_pos,n_neg\n";
    const int n_examples = std::min(cfg.example_images, n_test);

    for (size_t li = 0; li < cfg.train_snrs_db.size(); ++li) {
      for (size_t mi = 0; mi < cfg.test_snrs_db.size(); ++mi) {
        const double l = cfg.train_snrs_db[li], m = cfg.test_snrs_db[mi];
        const std::string cell = "tr" + gs(l) + "_te" + gs(m);
        stage("evaluate-" + cell, [&] {
          const LevelModels& lm = models.at(gs(l));
          for (const std::string& v : cfg.variants) {
            std::vector<Image> recs(n_test);
            parallel_for(n_test, [&](int t) { recs[t] = variant_image(v, sp.test[t], lm, m); });
            for (int t = 0; t < n_test; ++t) {
              metrics += std::to_string(cfg.id) + "," + v + "," + gs(l) + "," + gs(m) + "," + sp.test[t].id() + "," +
                         std::string(1, "ABCD"[static_cast<int>(sp.test[t].cls)]) + "," +
                         g17(rrmse(recs[t], truth[t])) + "," + g17(ssim(recs[t], truth[t])) + "\n";
            }
            std::vector<double> scores;
            std::vector<uint8_t> labels;
            scores.reserve(static_cast<size_t>(n_test) * truth[0].size());
            labels.reserve(scores.capacity());
            const TrainedNet& obs = lm.observers.at(v);
            std::vector<Image> probs(n_test);
            parallel_for(n_test, [&](int t) { probs[t] = observer_probabilities(obs, recs[t]); });
            size_t n_pos = 0;
            for (int t = 0; t < n_test; ++t) {
              for (size_t k = 0; k < probs[t].data.size(); ++k) {
                scores.push_back(probs[t].data[k]);
                labels.push_back(tumor[t].data[k] ? 1 : 0);
                n_pos += tumor[t].data[k] ? 1 : 0;
              }
            }
            if (n_pos > 0 && n_pos < labels.size()) {
              RocCurve roc = roc_and_auc(scores, labels);
              write_roc_csv(out / ("roc_" + v + "_" + cell + ".csv"), roc);
              aucs += std::to_string(cfg.id) + "," + v + "," + gs(l) + "," + gs(m) + "," + g17(roc.auc) + "," +
                      g17(choose_threshold(roc)) + "," + std::to_string(n_pos) + "," +
                      std::to_string(labels.size() - n_pos) + "\n";
            } else {
              aucs += std::to_string(cfg.id) + "," + v + "," + gs(l) + "," + gs(m) + ",nan,nan," +
                      std::to_string(n_pos) + "," + std::to_string(labels.size() - n_pos) + "\n";
            }
            if (li == 0 && mi == 0) {
              for (int t = 0; t < n_examples; ++t) {
                save_matrix((out / "images" / (sp.test[t].id() + "_" + v + "_" + cell + ".bin")).string(), recs[t],
                            "variant=" + v + ";phantom=" + sp.test[t].id() + ";" + cell);
              }
            }
            note(cell + " " + v + " done");
          }
        });
      }
    }
    for (int t = 0; t < n_examples; ++t)
      save_matrix((out / "images" / (sp.test[t].id() + "_truth.bin")).string(), truth[t],
                  "truth;phantom=" + sp.test[t].id());

    write_text_file(out / "metrics.csv", metrics);
    write_text_file(out / "aucs.csv", aucs);
    stage("report", [&] { write_report(out.string()); });
    note("study complete: " + out.string());
    return out.string();
  }
};

}  // namespace

std::string run_study(const StudyConfig& cfg) {
  Runner runner(cfg);
  return runner.run();
}

std::string write_report(const std::string& study_dir) {
  fs::path dir(study_dir);
  std::ifstream mf(dir / "metrics.csv");
  if (!mf) throw std::runtime_error("write_report: missing " + (dir / "metrics.csv").string());

  struct Group {
    std::vector<std::string> phantoms;
    std::vector<double> rrmse, ssim;
  };
  std::vector<std::string> order;  // first-appearance order of variant cells
  std::map<std::string, Group> groups;
  std::string line;
  std::getline(mf, line);  // header
  while (std::getline(mf, line)) {
    if (trimmed(line).empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() != 8) throw std::runtime_error("write_report: malformed metrics row '" + line + "'");
    std::string key = f[1] + "," + f[2] + "," + f[3];
    if (!groups.count(key)) order.push_back(key);
    Group& g = groups[key];
    g.phantoms.push_back(f[4]);
    g.rrmse.push_back(parse_double(f[6], "metrics rrmse"));
    g.ssim.push_back(parse_double(f[7], "metrics ssim"));
  }

  std::map<std::string, std::pair<std::string, std::string>> auc_of;  // key -> (auc, youden), verbatim
  std::ifstream af(dir / "aucs.csv");
  if (af) {
    std::getline(af, line);
    while (std::getline(af, line)) {
      if (trimmed(line).empty()) continue;
      auto f = split_fields(line, ',');
      if (f.size() != 8) throw std::runtime_error("write_report: malformed auc row '" + line + "'");
      auc_of[f[1] + "," + f[2] + "," + f[3]] = {f[4], f[5]};
    }
  }

  std::string summary =
      "study,variant,train_snr_db,test_snr_db,mean_rrmse,rrmse_ci_lo,rrmse_ci_hi,mean_ssim,ssim_ci_lo,"
      "ssim_ci_hi,auc,youden_threshold,p_rrmse_vs_fwi\n";
  std::string study_id = "0";
  {
    std::ifstream mf2(dir / "metrics.csv");
    std::getline(mf2, line);
    if (std::getline(mf2, line)) study_id = split_fields(line, ',')[0];
  }
  for (const std::string& key : order) {
    const Group& g = groups[key];
    auto parts = split_fields(key, ',');
    MeanCi rc = mean_ci(g.rrmse), sc = mean_ci(g.ssim);
    std::string auc = "nan", youden = "nan";
    if (auc_of.count(key)) {
      auc = auc_of[key].first;
      youden = auc_of[key].second;
    }
    std::string p = "nan";
    std::string fwi_key = "fwi," + parts[1] + "," + parts[2];
    if (groups.count(fwi_key)) {
      const Group& fg = groups[fwi_key];
      if (fg.rrmse.size() == g.rrmse.size() && g.rrmse.size() >= 10)
        p = g17(paired_significance(g.rrmse, fg.rrmse));
    }
    summary += study_id + "," + key + "," + g17(rc.mean) + "," + g17(rc.lo) + "," + g17(rc.hi) + "," + g17(sc.mean) +
               "," + g17(sc.lo) + "," + g17(sc.hi) + "," + auc + "," + youden + "," + p + "\n";
  }
  write_text_file(dir / "summary.csv", summary);

  if (fs::exists(dir / "images")) {
    std::vector<fs::path> bins;
    for (const auto& e : fs::directory_iterator(dir / "images"))
      if (e.path().extension() == ".bin") bins.push_back(e.path());
    std::sort(bins.begin(), bins.end());
    for (const auto& p : bins) {
      fs::path pgm = p;
      pgm.replace_extension(".pgm");
      save_pgm(pgm.string(), load_matrix(p.string()));
    }
  }
  return (dir / "summary.csv").string();
}

}  // namespace wavetomo
