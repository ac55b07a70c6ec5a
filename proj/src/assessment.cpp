#include "wavetomo/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wavetomo {

double rrmse(const Image& estimate, const Image& truth, double background) {
  if (!estimate.same_shape(truth)) throw std::invalid_argument("rrmse: shape mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < truth.data.size(); ++i) {
    const double e = truth.data[i] - estimate.data[i];
    const double b = truth.data[i] - background;
    num += e * e;
    den += b * b;
  }
  if (den == 0.0) throw std::invalid_argument("rrmse: truth equals the background everywhere");
  return std::sqrt(num / den);
}

double ssim(const Image& estimate, const Image& truth, double dynamic_range) {
  if (!estimate.same_shape(truth)) throw std::invalid_argument("ssim: shape mismatch");
  constexpr int kWin = 7;
  if (estimate.rows < kWin || estimate.cols < kWin) {
    throw std::invalid_argument("ssim: image smaller than the 7x7 window");
  }
  double w[kWin][kWin];
  {
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      for (int j = 0; j < kWin; ++j) {
        const double dy = i - 3.0, dx = j - 3.0;
        w[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        sum += w[i][j];
      }
    }
    for (auto& row : w) {
      for (double& v : row) v /= sum;
    }
  }
  const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
  const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;

  double total = 0.0;
  int count = 0;
  for (int r = 0; r + kWin <= truth.rows; ++r) {
    for (int c = 0; c + kWin <= truth.cols; ++c) {
      double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          const double x = estimate(r + i, c + j);
          const double y = truth(r + i, c + j);
          mx += w[i][j] * x;
          my += w[i][j] * y;
          xx += w[i][j] * x * x;
          yy += w[i][j] * y * y;
          xy += w[i][j] * x * y;
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cxy = xy - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

RocCurve roc_and_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("roc: scores and labels must be nonempty and equal length");
  }
  size_t n_pos = 0;
  for (uint8_t l : labels) n_pos += l ? 1 : 0;
  const size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc: a class is empty");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  RocCurve curve;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // the operating point at threshold s counts strictly greater scores
    curve.points.push_back({s, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]]) ++tp;
      else ++fp;
      ++i;
    }
  }
  const double lowest = scores[order.back()];
  curve.points.push_back({lowest - 1.0, 1.0, 1.0});

  double auc = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint& a = curve.points[k - 1];
    const RocPoint& b = curve.points[k];
    auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  curve.auc = auc;
  return curve;
}

double choose_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw std::invalid_argument("roc: empty curve");
  double best = curve.points.front().threshold;
  double best_obj = curve.points.front().tpr - curve.points.front().fpr;
  for (const RocPoint& p : curve.points) {
    const double obj = p.tpr - p.fpr;
    // >= so that equal objectives settle on the smallest threshold
    if (obj >= best_obj) {
      best_obj = obj;
      best = p.threshold;
    }
  }
  return best;
}

namespace {

double normal_sf2(double z) {
  // two-sided tail of the standard normal
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

}  // namespace

double paired_significance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("signed-rank: length mismatch");
  if (a.size() < 10) throw std::invalid_argument("signed-rank: needs at least 10 pairs");

  std::vector<double> mag;
  std::vector<int> sign;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) {
      mag.push_back(std::abs(d));
      sign.push_back(d > 0.0 ? 1 : -1);
    }
  }
  const size_t n = mag.size();
  if (n == 0) return 1.0;

  // average ranks over ties, doubled so they stay integral
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return mag[x] < mag[y]; });
  std::vector<long> rank2(n);
  double tie_correction = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && mag[order[j]] == mag[order[i]]) ++j;
    const long r2 = static_cast<long>(i + 1 + j);  // 2 * average of ranks i+1..j
    for (size_t k = i; k < j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i);
    tie_correction += t * t * t - t;
    i = j;
  }

  long w2_pos = 0;
  for (size_t k = 0; k < n; ++k) {
    if (sign[k] > 0) w2_pos += rank2[k];
  }

  if (n <= 25) {
    // exact null: each magnitude's rank joins W+ with probability 1/2
    const long total2 = static_cast<long>(n) * static_cast<long>(n + 1);
    std::vector<double> count(static_cast<size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (size_t k = 0; k < n; ++k) {
      const long r2 = rank2[k];
      for (long s = reach; s >= 0; --s) {
        if (count[static_cast<size_t>(s)] != 0.0) {
          count[static_cast<size_t>(s + r2)] += count[static_cast<size_t>(s)];
        }
      }
      reach += r2;
    }
    const double denom = std::pow(2.0, static_cast<double>(n));
    double le = 0.0, ge = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2_pos) le += count[static_cast<size_t>(s)];
      if (s >= w2_pos) ge += count[static_cast<size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / denom);
  }

  const double nn = static_cast<double>(n);
  const double mean2 = nn * (nn + 1.0) / 2.0;  // doubled mean
  const double var2 = 4.0 * (nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_correction / 48.0);
  const double centered = static_cast<double>(w2_pos) - mean2;
  const double correction = centered > 0.0 ? -1.0 : (centered < 0.0 ? 1.0 : 0.0);
  const double z = (centered + correction) / std::sqrt(var2);
  return normal_sf2(z);
}

MeanCi mean_ci(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_ci: empty sample");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return MeanCi{mean, mean - 1.96 * se, mean + 1.96 * se};
}

NetSpec observer_spec(int base) {
  NetSpec s;
  s.kind = "unet";
  s.base = base;
  s.final_sigmoid = true;
  return s;
}

TrainedNet train_observer(const SampleProvider& pairs, size_t n, const NetSpec& spec,
                          const TrainOptions& opt, TrainLog* log) {
  TrainOptions o = opt;
  o.bce = true;
  if (o.pos_weight <= 0.0) {
    double pos = 0.0, neg = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (double v : pairs(i).target.data) (v > 0.5 ? pos : neg) += 1.0;
    }
    o.pos_weight = pos == 0.0 ? 1.0 : std::clamp(neg / pos, 1.0, 100.0);
  }
  SampleProvider scaled = [&pairs](size_t i) {
    SamplePair raw = pairs(i);
    SamplePair s;
    s.input = raw.input;
    for (double& v : s.input.data) v = (v - kSosNormCenter) / kSosNormHalf;
    s.target = std::move(raw.target);
    return s;
  };
  TrainResult r = train_net(spec, scaled, n, o);
  if (log) *log = r.log;
  return TrainedNet{spec, std::move(r.params), 1.0};
}

Image observer_probabilities(const TrainedNet& observer, const Image& sos) {
  Net net(observer.spec);
  Tensor x(sos.rows, sos.cols, 1);
  for (size_t i = 0; i < sos.data.size(); ++i) {
    x.data[i] = (sos.data[i] - kSosNormCenter) / kSosNormHalf;
  }
  Tensor y = net.predict(x, observer.params);
  Image out(sos.rows, sos.cols);
  std::copy(y.data.begin(), y.data.end(), out.data.begin());
  return out;
}

}  // namespace wavetomo
