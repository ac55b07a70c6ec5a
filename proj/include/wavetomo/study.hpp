#ifndef WAVETOMO_STUDY_HPP
#define WAVETOMO_STUDY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wavetomo/assessment.hpp"
#include "wavetomo/config.hpp"
#include "wavetomo/correction.hpp"
#include "wavetomo/phantom.hpp"

namespace wavetomo {

// A phantom drawn from the global per-class pools. The generator seed is a
// pure function of (pool seed, class, index), so any study referencing the
// same coordinates gets bitwise the same phantom and cache entries.
struct PhantomRef {
  BreastClass cls = BreastClass::A;
  int index = 0;
  uint64_t seed = 0;

  std::string id() const;  // e.g. "B0007"
};

struct Splits {
  std::vector<PhantomRef> train, test;
};

// Per-class counts follow the published study designs scaled by `scale`
// (nonzero counts keep at least one phantom). Study 3 derives from study 1 by
// construction: half the training set, remainder moved into the test set.
Splits resolve_splits(int study_id, double scale, uint64_t pool_seed);

struct StudyConfig {
  int id = 1;
  double scale = 0.05;  // fraction of the published per-class phantom counts
  uint64_t seed = 7;    // feeds the phantom pools and everything derived
  std::string out_dir = "study_out";
  std::string cache_dir = "wavetomo_cache";
  std::vector<std::string> variants;  // default: all six

  SystemParams system;  // desk-scale defaults from the config module
  std::vector<double> train_snrs_db;  // study 4 defaults to {20, 14, 6}
  std::vector<double> test_snrs_db;

  BornInvOptions born;
  FwiOptions fwi;
  TrainOptions psi_train, phi_train, theta_train, observer_train;
  int net_base = 8;
  int example_images = 2;

  // every resolved value as key=value lines, echoed into the output directory
  std::string resolved_text() const;
};

// Fills a StudyConfig from parsed key=value data; unknown keys are rejected.
// study_id <= 0 takes the id from the config (key study.id).
StudyConfig resolve_study_config(const Config& cfg, int study_id = 0);

// Runs the full pipeline: splits, acquisition, model training, test-set
// reconstruction for every variant, observer scoring, and CSV/PGM emission.
// Returns the output directory. Heavy intermediates land in cfg.cache_dir
// keyed by content hashes, so repeated and overlapping runs reuse them.
std::string run_study(const StudyConfig& cfg);

// Rebuilds summary.csv from an existing metrics.csv and converts the emitted
// example image tensors to PGM; returns the summary path.
std::string write_report(const std::string& study_dir);

uint64_t fnv1a64(const std::string& text);
std::string hex64(uint64_t value);

}  // namespace wavetomo

#endif
