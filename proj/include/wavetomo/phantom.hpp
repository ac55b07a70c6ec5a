#ifndef WAVETOMO_PHANTOM_HPP
#define WAVETOMO_PHANTOM_HPP

#include <cstdint>
#include <string>

#include "wavetomo/array.hpp"
#include "wavetomo/rng.hpp"

namespace wavetomo {

// Breast density classes by glandular areal fraction of the breast region:
// A < 10%, B 10-25%, C 25-60%, D > 60%.
enum class BreastClass : int { A = 0, B = 1, C = 2, D = 3 };

const char* breast_class_name(BreastClass cls);
BreastClass breast_class_from_name(const std::string& name);

struct Phantom {
  Image sos;                // field-of-view speed map, mm/us, water background
  Array2D<uint8_t> breast;  // support mask (skin included)
  Array2D<uint8_t> tumor;   // lesion mask, zero when no lesion present
  BreastClass cls = BreastClass::A;
  uint64_t seed = 0;
  double gland_fraction = 0.0;  // realized glandular share of the breast area

  bool has_tumor() const;
};

// Procedural map: elliptical breast with a 2-cell skin rim, constant fat
// background, glandular structure from a thresholded smoothed noise field
// (threshold picked by empirical quantile so the class fraction is exact),
// and 0-2 stiff circular lesions at even odds.
Phantom generate_phantom(int n_fov, BreastClass cls, uint64_t seed);

}  // namespace wavetomo

#endif
