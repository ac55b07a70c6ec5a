#include "wavetomo/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wavetomo/grid.hpp"

namespace wavetomo {
namespace {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  // shrink > 0 tests against an ellipse smaller by that many cells per axis
  bool contains(double r, double c, double shrink = 0.0) const {
    const double dr = r - cx, dc = c - cy;
    const double x = cos_t * dc + sin_t * dr;
    const double y = -sin_t * dc + cos_t * dr;
    const double ea = a - shrink, eb = b - shrink;
    if (ea <= 0.0 || eb <= 0.0) return false;
    return (x / ea) * (x / ea) + (y / eb) * (y / eb) <= 1.0;
  }
};

void gaussian_smooth(Image& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = std::clamp(c + i, 0, img.cols - 1);
        acc += kernel[i + radius] * img(r, cc);
      }
      tmp(r, c) = acc;
    }
  }
  for (int c = 0; c < img.cols; ++c) {
    for (int r = 0; r < img.rows; ++r) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = std::clamp(r + i, 0, img.rows - 1);
        acc += kernel[i + radius] * tmp(rr, c);
      }
      img(r, c) = acc;
    }
  }
}

}  // namespace

const char* breast_class_name(BreastClass cls) {
  switch (cls) {
    case BreastClass::A: return "A";
    case BreastClass::B: return "B";
    case BreastClass::C: return "C";
    case BreastClass::D: return "D";
  }
  return "?";
}

BreastClass breast_class_from_name(const std::string& name) {
  if (name == "A" || name == "a") return BreastClass::A;
  if (name == "B" || name == "b") return BreastClass::B;
  if (name == "C" || name == "c") return BreastClass::C;
  if (name == "D" || name == "d") return BreastClass::D;
  throw std::invalid_argument("phantom: unknown breast class '" + name + "'");
}

bool Phantom::has_tumor() const {
  for (uint8_t v : tumor.data) {
    if (v) return true;
  }
  return false;
}

Phantom generate_phantom(int n_fov, BreastClass cls, uint64_t seed) {
  if (n_fov < 32) throw std::invalid_argument("phantom: field of view below 32 cells");
  Rng rng(seed);
  const double half = n_fov / 2.0;

  Ellipse e;
  {
    const bool dense = cls == BreastClass::D;
    const double lo = dense ? 0.40 : 0.45;
    const double hi = dense ? 0.55 : 0.70;
    e.a = rng.uniform(lo, hi) * half;
    e.b = rng.uniform(lo, hi) * half;
    e.cx = half - 0.5 + rng.uniform(-3.0, 3.0);
    e.cy = half - 0.5 + rng.uniform(-3.0, 3.0);
    const double theta = rng.uniform(0.0, M_PI);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
  }

  const double fat_speed = rng.normal(1.44, 0.01);
  const double gland_speed = rng.normal(1.54, 0.01);
  const double skin_speed = rng.normal(1.58, 0.005);
  const double tumor_speed = rng.normal(1.585, 0.015);

  Phantom ph;
  ph.cls = cls;
  ph.seed = seed;
  ph.sos = Image(n_fov, n_fov);
  ph.sos.fill(kWaterSos);
  ph.breast = Array2D<uint8_t>(n_fov, n_fov);
  ph.tumor = Array2D<uint8_t>(n_fov, n_fov);

  constexpr double kSkin = 2.0;  // rim thickness, cells
  std::vector<int> fat_cells;
  int n_breast = 0;
  for (int r = 0; r < n_fov; ++r) {
    for (int c = 0; c < n_fov; ++c) {
      if (!e.contains(r, c)) continue;
      ph.breast(r, c) = 1;
      ++n_breast;
      if (e.contains(r, c, kSkin)) {
        ph.sos(r, c) = fat_speed;
        fat_cells.push_back(r * n_fov + c);
      } else {
        ph.sos(r, c) = skin_speed;
      }
    }
  }

  // glandular texture: smoothed white noise thresholded at the quantile that
  // realizes the class's areal fraction of the breast
  Image field(n_fov, n_fov);
  for (double& v : field.data) v = rng.normal();
  gaussian_smooth(field, rng.uniform(2.5, 5.0));

  double frac = 0.0;
  switch (cls) {
    case BreastClass::A: frac = rng.uniform(0.02, 0.095); break;
    case BreastClass::B: frac = rng.uniform(0.105, 0.245); break;
    case BreastClass::C: frac = rng.uniform(0.255, 0.595); break;
    case BreastClass::D: frac = rng.uniform(0.605, 0.80); break;
  }
  size_t want = static_cast<size_t>(std::lround(frac * n_breast));
  want = std::min(want, fat_cells.size());
  std::vector<int> order = fat_cells;
  std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    const double fl = field.data[lhs], fr = field.data[rhs];
    if (fl != fr) return fl > fr;
    return lhs < rhs;
  });
  for (size_t i = 0; i < want; ++i) ph.sos.data[order[i]] = gland_speed;
  ph.gland_fraction = n_breast == 0 ? 0.0 : static_cast<double>(want) / n_breast;

  // lesions: even odds of any, then one or two stiff disks placed clear of
  // the skin rim
  if (rng.uniform() < 0.5) {
    const int count = rng.uniform() < 0.3 ? 2 : 1;
    for (int t = 0; t < count; ++t) {
      const double radius = rng.uniform(2.0, 6.0);
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const double rr = rng.uniform(0.0, n_fov - 1.0);
        const double cc = rng.uniform(0.0, n_fov - 1.0);
        if (!e.contains(rr, cc, kSkin + radius + 1.0)) continue;
        for (int r = std::max(0, static_cast<int>(rr - radius) - 1);
             r <= std::min(n_fov - 1, static_cast<int>(rr + radius) + 1); ++r) {
          for (int c = std::max(0, static_cast<int>(cc - radius) - 1);
               c <= std::min(n_fov - 1, static_cast<int>(cc + radius) + 1); ++c) {
            const double d2 = (r - rr) * (r - rr) + (c - cc) * (c - cc);
            if (d2 <= radius * radius) {
              ph.sos(r, c) = tumor_speed;
              ph.tumor(r, c) = 1;
            }
          }
        }
        placed = true;
      }
    }
  }

  for (double& v : ph.sos.data) v = std::clamp(v, 1.31, 1.69);
  return ph;
}

}  // namespace wavetomo
