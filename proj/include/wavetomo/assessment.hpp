#ifndef WAVETOMO_ASSESSMENT_HPP
#define WAVETOMO_ASSESSMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wavetomo/correction.hpp"

namespace wavetomo {

// ||truth - estimate|| / ||truth - background||; throws when the truth is
// identically the background level.
double rrmse(const Image& estimate, const Image& truth, double background = kWaterSos);

// Mean local structural similarity over all fully-interior 7x7 windows,
// Gaussian-weighted (sigma 1.5), stabilizers C1=(0.01 L)^2, C2=(0.03 L)^2.
// L is the display dynamic range of the speed maps, not a per-image range.
double ssim(const Image& estimate, const Image& truth, double dynamic_range = 0.2);

struct RocPoint {
  double threshold, fpr, tpr;
};

// Pixel-pooled sweep; points run from (0,0) at the highest threshold to (1,1)
// at a sentinel below the lowest score. Detection uses score > threshold.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

RocCurve roc_and_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Youden's index: the threshold maximizing tpr - fpr; ties pick the smaller.
double choose_threshold(const RocCurve& curve);

// Two-sided Wilcoxon signed-rank on paired samples: exact sign-flip
// distribution up to 25 nonzero differences, tie-corrected normal
// approximation beyond. All-zero differences give p = 1.
double paired_significance(const std::vector<double>& a, const std::vector<double>& b);

struct MeanCi {
  double mean, lo, hi;  // normal-approximation 95% interval
};
MeanCi mean_ci(const std::vector<double>& values);

// Tumor segmentation observer: the image-correction U-shape with a sigmoid
// head, trained with positive-weighted pixel cross entropy. pos_weight <= 0
// derives the weight from the training masks (negative/positive ratio).
NetSpec observer_spec(int base = 8);
TrainedNet train_observer(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                          const TrainOptions& opt, TrainLog* log = nullptr);

// Per-pixel tumor probabilities for a reconstructed speed map.
Image observer_probabilities(const TrainedNet& observer, const Image& sos);

}  // namespace wavetomo

#endif
