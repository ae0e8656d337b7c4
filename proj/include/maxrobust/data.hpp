#pragma once

// Synthetic linearly separable datasets and their on-disk container.
//
// Sampling: std::mt19937_64 seeded with the dataset seed; each uniform draw
// takes the top 53 bits of one engine output, and standard normals come from
// the Box-Muller transform (the cosine branch first, the sine branch cached
// for the next draw). The teacher is drawn first, then the points row by row.
// This keeps datasets identical across standard libraries, which is not the
// case for std::normal_distribution.
//
// File layout (all integers and doubles little-endian):
//   magic   8 bytes  "MXRBDS\0\0"
//   version u32      = 1
//   flags   u32      bit 0: augmented
//   seed    u64
//   n       u64      number of points
//   dim     u64      columns of X (includes the constant column if augmented)
//   tlen    u64      teacher length
//   X       f64[n * dim] row-major
//   y       f64[n]   each -1 or +1
//   teacher f64[tlen]
//   fnv1a   u64      FNV-1a 64 over every preceding byte

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "maxrobust/types.hpp"

namespace maxrobust {

struct Dataset {
  Matrix X;       // n x dim, rows are points
  Vector y;       // labels in {-1, +1}
  Vector teacher;  // generating separator over the raw (non-augmented) inputs
  std::uint64_t seed = 0;
  bool augmented = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  // Dimension before the constant column was appended.
  Eigen::Index input_dim() const { return augmented ? X.cols() - 1 : X.cols(); }

  // Exact (bitwise-value) equality of every field.
  bool operator==(const Dataset& o) const {
    return seed == o.seed && augmented == o.augmented && X.rows() == o.X.rows() && X.cols() == o.X.cols() &&
           y.size() == o.y.size() && teacher.size() == o.teacher.size() && X == o.X && y == o.y &&
           teacher == o.teacher;
  }
};

// Standard normal stream with a fixed, documented algorithm.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(angle);
    has_cached_ = true;
    return r * std::cos(angle);
  }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline constexpr double kBoundaryTol = 1e-12;

inline Dataset generate_gaussian_separable(Eigen::Index d, Eigen::Index n, std::uint64_t seed,
                                           bool augment = true) {
  if (d < 2) throw InvalidArgument("generate_gaussian_separable: d must be >= 2");
  if (n < 1) throw InvalidArgument("generate_gaussian_separable: n must be >= 1");
  GaussianSampler rng(seed);
  Dataset ds;
  ds.seed = seed;
  ds.augmented = augment;
  ds.teacher = rng.normal_vector(d);
  ds.X.resize(n, augment ? d + 1 : d);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector x = rng.normal_vector(d);
    double score = ds.teacher.dot(x);
    while (std::abs(score) < kBoundaryTol) {
      spdlog::warn("generate_gaussian_separable: point {} within {} of the teacher boundary, redrawing", i,
                   kBoundaryTol);
      x = rng.normal_vector(d);
      score = ds.teacher.dot(x);
    }
    ds.X.row(i).head(d) = x.transpose();
    if (augment) ds.X(i, d) = 1.0;
    ds.y[i] = score > 0 ? 1.0 : -1.0;
  }
  return ds;
}

// Teacher expressed over all dataset columns (zero bias when augmented).
inline Vector full_teacher(const Dataset& ds) {
  Vector w = Vector::Zero(ds.dim());
  w.head(ds.teacher.size()) = ds.teacher;
  return w;
}

inline bool has_both_classes(const Dataset& ds) {
  return (ds.y.array() > 0).any() && (ds.y.array() < 0).any();
}

// True iff y_i <w, x_i> > 0 for every point. `w` may cover all columns, or
// only the raw inputs of an augmented dataset (bias taken as zero).
inline bool verify_separable(const Dataset& ds, const Vector& w) {
  Vector full;
  if (w.size() == ds.dim()) {
    full = w;
  } else if (ds.augmented && w.size() == ds.input_dim()) {
    full = Vector::Zero(ds.dim());
    full.head(w.size()) = w;
  } else {
    throw DimensionError("verify_separable: weight has " + std::to_string(w.size()) + " entries, dataset has " +
                         std::to_string(ds.dim()) + " columns");
  }
  const Vector scores = ds.y.cwiseProduct(ds.X * full);
  return (scores.array() > 0.0).all();
}

namespace detail {

inline constexpr std::array<char, 8> kDatasetMagic = {'M', 'X', 'R', 'B', 'D', 'S', '\0', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

class ByteWriter {
 public:
  void raw(const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + len);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : b_(b) {}
  void raw(void* p, std::size_t len) {
    need(len);
    std::memcpy(p, b_.data() + pos_, len);
    pos_ += len;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t len) const {
    if (pos_ + len > b_.size()) throw FormatError("dataset: truncated file");
  }
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> serialize_dataset(const Dataset& ds) {
  detail::ByteWriter w;
  w.raw(detail::kDatasetMagic.data(), detail::kDatasetMagic.size());
  w.u32(detail::kDatasetVersion);
  w.u32(ds.augmented ? 1u : 0u);
  w.u64(ds.seed);
  w.u64(static_cast<std::uint64_t>(ds.n()));
  w.u64(static_cast<std::uint64_t>(ds.dim()));
  w.u64(static_cast<std::uint64_t>(ds.teacher.size()));
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    for (Eigen::Index j = 0; j < ds.dim(); ++j) w.f64(ds.X(i, j));
  for (Eigen::Index i = 0; i < ds.n(); ++i) w.f64(ds.y[i]);
  for (Eigen::Index j = 0; j < ds.teacher.size(); ++j) w.f64(ds.teacher[j]);
  const std::uint64_t sum = detail::fnv1a64(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return std::move(w.bytes());
}

inline Dataset deserialize_dataset(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != detail::kDatasetMagic) throw FormatError("dataset: bad magic");
  const std::uint32_t version = r.u32();
  if (version != detail::kDatasetVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  Dataset ds;
  const std::uint32_t flags = r.u32();
  ds.augmented = (flags & 1u) != 0;
  ds.seed = r.u64();
  const std::uint64_t n = r.u64();
  const std::uint64_t dim = r.u64();
  const std::uint64_t tlen = r.u64();
  // Guard allocations against garbage headers before reading the payload.
  const std::uint64_t payload = (n * dim + n + tlen + 1) * 8;
  if (n == 0 || dim == 0 || n > (1u << 24) || dim > (1u << 24) || tlen > (1u << 24) ||
      payload > bytes.size() - r.pos()) {
    throw FormatError("dataset: truncated file or implausible header");
  }
  const std::uint64_t expected_tlen = ds.augmented ? dim - 1 : dim;
  if (tlen != expected_tlen) throw FormatError("dataset: teacher length does not match dimension");
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.y.resize(static_cast<Eigen::Index>(n));
  ds.teacher.resize(static_cast<Eigen::Index>(tlen));
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) ds.X(i, j) = r.f64();
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) ds.y[i] = r.f64();
  for (Eigen::Index j = 0; j < ds.teacher.size(); ++j) ds.teacher[j] = r.f64();
  const std::size_t body = r.pos();
  const std::uint64_t stored = r.u64();
  if (stored != detail::fnv1a64(bytes.data(), body)) throw FormatError("dataset: checksum mismatch");
  if (r.pos() != bytes.size()) throw FormatError("dataset: trailing bytes");
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
    if (ds.y[i] != 1.0 && ds.y[i] != -1.0) throw FormatError("dataset: label not in {-1, +1}");
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  const auto bytes = serialize_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_dataset(bytes);
}

}  // namespace maxrobust
