#ifndef WAVETOMO_ARRAY_HPP
#define WAVETOMO_ARRAY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace wavetomo {

// Dense row-major 2D array. rows*cols doubles (or floats) in one contiguous block.
template <typename T>
struct Array2D {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Array2D() = default;
  Array2D(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Array2D: negative dimension");
  }

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  T* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Array2D& o) const { return rows == o.rows && cols == o.cols; }

  void fill(T x) { std::fill(data.begin(), data.end(), x); }
};

// Dense row-major 3D array, slice-major: (n0, n1, n2) with slice stride n1*n2.
template <typename T>
struct Array3D {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<T> data;

  Array3D() = default;
  Array3D(int a, int b, int c, T fill = T{})
      : n0(a), n1(b), n2(c), data(static_cast<size_t>(a) * b * c, fill) {
    if (a < 0 || b < 0 || c < 0) throw std::invalid_argument("Array3D: negative dimension");
  }

  T& operator()(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  const T& operator()(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }

  T* slice(int i) { return data.data() + static_cast<size_t>(i) * n1 * n2; }
  const T* slice(int i) const { return data.data() + static_cast<size_t>(i) * n1 * n2; }

  size_t size() const { return data.size(); }
  size_t slice_size() const { return static_cast<size_t>(n1) * n2; }
};

using Image = Array2D<double>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

}  // namespace wavetomo

#endif
