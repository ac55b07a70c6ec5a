#include "wavetomo/tensor_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wavetomo {
namespace {

constexpr char kMagic[4] = {'U', 'S', 'C', 'T'};
constexpr uint16_t kVersion = 1;

[[noreturn]] void fail(const std::string& path, size_t offset, const std::string& what) {
  throw std::runtime_error("tensor file " + path + ": " + what + " at byte offset " +
                           std::to_string(offset));
}

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::string path;
  std::string bytes;
  size_t pos = 0;

  void need(size_t n, const std::string& what) {
    if (pos + n > bytes.size()) {
      fail(path, pos,
           "truncated while reading " + what + " (need " + std::to_string(n) + " bytes, have " +
               std::to_string(bytes.size() - pos) + ")");
    }
  }
  uint8_t u8v(const std::string& what) {
    need(1, what);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  uint16_t u16v(const std::string& what) {
    need(2, what);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  uint32_t u32v(const std::string& what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64v(const std::string& what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace

size_t TensorFile::element_count() const {
  size_t n = 1;
  for (size_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void save_tensor(const std::string& path, const TensorFile& t) {
  const size_t n = t.element_count();
  size_t have = 0, esize = 0;
  switch (t.dtype) {
    case Dtype::f32: have = t.f32.size(); esize = 4; break;
    case Dtype::f64: have = t.f64.size(); esize = 8; break;
    case Dtype::u8: have = t.u8.size(); esize = 1; break;
    default: throw std::invalid_argument("tensor file " + path + ": unknown dtype");
  }
  if (have != n) {
    throw std::invalid_argument("tensor file " + path + ": dims want " + std::to_string(n) +
                                " elements, payload has " + std::to_string(have));
  }

  std::string buf;
  buf.reserve(16 + 8 * t.dims.size() + n * esize + t.metadata.size());
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  buf.push_back(static_cast<char>(t.dtype));
  buf.push_back(static_cast<char>(t.dims.size()));
  for (size_t d : t.dims) put_u64(buf, d);
  const size_t payload_at = buf.size();
  buf.resize(payload_at + n * esize);
  if (n > 0) {
    switch (t.dtype) {
      case Dtype::f32: std::memcpy(&buf[payload_at], t.f32.data(), n * esize); break;
      case Dtype::f64: std::memcpy(&buf[payload_at], t.f64.data(), n * esize); break;
      case Dtype::u8: std::memcpy(&buf[payload_at], t.u8.data(), n * esize); break;
    }
  }
  if (!t.metadata.empty()) {
    put_u32(buf, static_cast<uint32_t>(t.metadata.size()));
    buf += t.metadata;
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("tensor file " + tmp + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("tensor file " + tmp + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("tensor file " + path + ": rename from temporary failed");
  }
}

TensorFile load_tensor(const std::string& path) {
  Reader r;
  r.path = path;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tensor file " + path + ": cannot open");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    r.bytes = std::move(bytes);
  }

  r.need(4, "magic");
  if (std::memcmp(r.bytes.data(), kMagic, 4) != 0) fail(path, 0, "bad magic, not a tensor file");
  r.pos = 4;
  const uint16_t ver = r.u16v("version");
  if (ver != kVersion) fail(path, 4, "unsupported version " + std::to_string(ver));
  const size_t dtype_at = r.pos;
  const uint8_t dt = r.u8v("dtype");
  if (dt < 1 || dt > 3) fail(path, dtype_at, "unknown dtype code " + std::to_string(dt));
  const uint8_t ndim = r.u8v("ndim");

  TensorFile t;
  t.dtype = static_cast<Dtype>(dt);
  t.dims.resize(ndim);
  size_t n = ndim > 0 ? 1 : 0;
  for (int i = 0; i < ndim; ++i) {
    t.dims[i] = static_cast<size_t>(r.u64v("dim " + std::to_string(i)));
    if (n > 0 && t.dims[i] > 0 && n > (static_cast<size_t>(-1) / t.dims[i])) {
      fail(path, r.pos - 8, "dimension overflow");
    }
    n *= t.dims[i];
  }

  const size_t esize = dt == 1 ? 4 : (dt == 2 ? 8 : 1);
  r.need(n * esize, "payload");
  switch (t.dtype) {
    case Dtype::f32:
      t.f32.resize(n);
      if (n) std::memcpy(t.f32.data(), r.bytes.data() + r.pos, n * esize);
      break;
    case Dtype::f64:
      t.f64.resize(n);
      if (n) std::memcpy(t.f64.data(), r.bytes.data() + r.pos, n * esize);
      break;
    case Dtype::u8:
      t.u8.resize(n);
      if (n) std::memcpy(t.u8.data(), r.bytes.data() + r.pos, n * esize);
      break;
  }
  r.pos += n * esize;

  if (r.pos < r.bytes.size()) {
    const uint32_t mlen = r.u32v("metadata length");
    r.need(mlen, "metadata");
    t.metadata.assign(r.bytes, r.pos, mlen);
    r.pos += mlen;
    if (r.pos != r.bytes.size()) {
      fail(path, r.pos, "trailing bytes after metadata");
    }
  }
  return t;
}

void save_matrix(const std::string& path, const Array2D<double>& m, const std::string& meta) {
  TensorFile t;
  t.dtype = Dtype::f64;
  t.dims = {static_cast<size_t>(m.rows), static_cast<size_t>(m.cols)};
  t.f64 = m.data;
  t.metadata = meta;
  save_tensor(path, t);
}

Array2D<double> load_matrix(const std::string& path) {
  TensorFile t = load_tensor(path);
  if (t.dtype != Dtype::f64 || t.dims.size() != 2) {
    throw std::runtime_error("tensor file " + path + ": expected a 2D float64 tensor");
  }
  Array2D<double> m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
  m.data = std::move(t.f64);
  return m;
}

void save_movie(const std::string& path, const Array3D<float>& m, const std::string& meta) {
  TensorFile t;
  t.dtype = Dtype::f32;
  t.dims = {static_cast<size_t>(m.n0), static_cast<size_t>(m.n1), static_cast<size_t>(m.n2)};
  t.f32 = m.data;
  t.metadata = meta;
  save_tensor(path, t);
}

Array3D<float> load_movie(const std::string& path) {
  TensorFile t = load_tensor(path);
  if (t.dtype != Dtype::f32 || t.dims.size() != 3) {
    throw std::runtime_error("tensor file " + path + ": expected a 3D float32 tensor");
  }
  Array3D<float> m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                   static_cast<int>(t.dims[2]));
  m.data = std::move(t.f32);
  return m;
}

void save_vector(const std::string& path, const std::vector<double>& v, const std::string& meta) {
  TensorFile t;
  t.dtype = Dtype::f64;
  t.dims = {v.size()};
  t.f64 = v;
  t.metadata = meta;
  save_tensor(path, t);
}

std::vector<double> load_vector(const std::string& path) {
  TensorFile t = load_tensor(path);
  if (t.dtype != Dtype::f64 || t.dims.size() != 1) {
    throw std::runtime_error("tensor file " + path + ": expected a 1D float64 tensor");
  }
  return std::move(t.f64);
}

void save_pgm(const std::string& path, const Array2D<double>& img, double lo, double hi) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pgm file " + path + ": cannot open for writing");
  out << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  const double scale = 255.0 / (hi - lo);
  for (double v : img.data) {
    double g = (v - lo) * scale;
    g = g < 0.0 ? 0.0 : (g > 255.0 ? 255.0 : g);
    out.put(static_cast<char>(static_cast<int>(g + 0.5)));
  }
  if (!out) throw std::runtime_error("pgm file " + path + ": write failed");
}

}  // namespace wavetomo
