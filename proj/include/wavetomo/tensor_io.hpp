#ifndef WAVETOMO_TENSOR_IO_HPP
#define WAVETOMO_TENSOR_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "wavetomo/array.hpp"

namespace wavetomo {

// Binary tensor container:
//   "USCT" | u16 version (=1) | u8 dtype | u8 ndim | ndim x u64 dims |
//   row-major payload | optional u32 length + UTF-8 metadata
// All integers and the payload are little-endian. Load errors report the byte
// offset of the first inconsistency.
enum class Dtype : uint8_t { f32 = 1, f64 = 2, u8 = 3 };

struct TensorFile {
  Dtype dtype = Dtype::f64;
  std::vector<size_t> dims;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<uint8_t> u8;
  std::string metadata;

  size_t element_count() const;
};

void save_tensor(const std::string& path, const TensorFile& t);
TensorFile load_tensor(const std::string& path);

void save_matrix(const std::string& path, const Array2D<double>& m, const std::string& meta = "");
Array2D<double> load_matrix(const std::string& path);

void save_movie(const std::string& path, const Array3D<float>& m, const std::string& meta = "");
Array3D<float> load_movie(const std::string& path);

void save_vector(const std::string& path, const std::vector<double>& v,
                 const std::string& meta = "");
std::vector<double> load_vector(const std::string& path);

// 8-bit grayscale dump for eyeballing speed maps: affine map from
// [1.3, 1.7] mm/us to [0, 255], clamped.
void save_pgm(const std::string& path, const Array2D<double>& img, double lo = 1.3,
              double hi = 1.7);

}  // namespace wavetomo

#endif
