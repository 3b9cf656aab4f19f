#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cryoforge/core/error.hpp"

namespace cryoforge {

// Grid extents in (depth, height, width) order; width is the fastest axis in
// memory and on disk. Depth maps to z, height to y, width to x.
struct Dims3 {
  std::size_t d = 0, h = 0, w = 0;

  std::size_t size() const noexcept { return d * h * w; }
  bool operator==(const Dims3&) const = default;
};

struct Dims2 {
  std::size_t h = 0, w = 0;

  std::size_t size() const noexcept { return h * w; }
  bool operator==(const Dims2&) const = default;
};

template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(Dims3 dims, T fill = T{}) : dims_(dims), data_(dims.size(), fill) {}
  Grid3(std::size_t d, std::size_t h, std::size_t w, T fill = T{}) : Grid3(Dims3{d, h, w}, fill) {}

  const Dims3& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(std::size_t d, std::size_t h, std::size_t w) const noexcept {
    return (d * dims_.h + h) * dims_.w + w;
  }
  T& operator()(std::size_t d, std::size_t h, std::size_t w) noexcept { return data_[index(d, h, w)]; }
  const T& operator()(std::size_t d, std::size_t h, std::size_t w) const noexcept {
    return data_[index(d, h, w)];
  }

  // Periodic access; indices may be any integer.
  const T& wrapped(long d, long h, long w) const noexcept {
    return (*this)(wrap(d, dims_.d), wrap(h, dims_.h), wrap(w, dims_.w));
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Grid3&) const = default;

  static std::size_t wrap(long i, std::size_t n) noexcept {
    const long m = static_cast<long>(n);
    long r = i % m;
    return static_cast<std::size_t>(r < 0 ? r + m : r);
  }

 private:
  Dims3 dims_{};
  std::vector<T> data_;
};

template <typename T>
class Grid2 {
 public:
  using value_type = T;

  Grid2() = default;
  explicit Grid2(Dims2 dims, T fill = T{}) : dims_(dims), data_(dims.size(), fill) {}
  Grid2(std::size_t h, std::size_t w, T fill = T{}) : Grid2(Dims2{h, w}, fill) {}

  const Dims2& dims() const noexcept { return dims_; }
  std::size_t height() const noexcept { return dims_.h; }
  std::size_t width() const noexcept { return dims_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t y, std::size_t x) noexcept { return data_[y * dims_.w + x]; }
  const T& operator()(std::size_t y, std::size_t x) const noexcept { return data_[y * dims_.w + x]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Grid2&) const = default;

 private:
  Dims2 dims_{};
  std::vector<T> data_;
};

using Image = Grid2<double>;

/// A 3D scalar density map with physical calibration.
///
/// `voxel_size` is in Ångström per voxel and `origin` is the Ångström
/// coordinate (x, y, z) of voxel (0, 0, 0).
struct DensityVolume {
  Grid3<float> data;
  double voxel_size = 1.0;
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  DensityVolume() = default;
  explicit DensityVolume(Dims3 dims, double voxel = 1.0) : data(dims, 0.0f), voxel_size(voxel) {}
  DensityVolume(Grid3<float> grid, double voxel) : data(std::move(grid)), voxel_size(voxel) {}

  const Dims3& dims() const noexcept { return data.dims(); }
  float& operator()(std::size_t d, std::size_t h, std::size_t w) noexcept { return data(d, h, w); }
  float operator()(std::size_t d, std::size_t h, std::size_t w) const noexcept { return data(d, h, w); }

  bool operator==(const DensityVolume&) const = default;
};

inline void validate(const DensityVolume& vol) {
  const auto& n = vol.dims();
  if (n.d < 1 || n.h < 1 || n.w < 1) throw ShapeError("volume dimensions must all be >= 1");
  if (!(vol.voxel_size > 0.0) || !std::isfinite(vol.voxel_size))
    throw ConfigError("voxel_size must be a positive finite number");
  for (float v : vol.data)
    if (!std::isfinite(v)) throw ConfigError("volume contains NaN or Inf");
}

template <typename To, typename From>
Grid3<To> grid_cast(const Grid3<From>& g) {
  Grid3<To> out(g.dims());
  std::transform(g.begin(), g.end(), out.begin(), [](From v) { return static_cast<To>(v); });
  return out;
}

struct Stats {
  double min = 0.0, max = 0.0, mean = 0.0, rms = 0.0;
};

// Population statistics; rms is the standard deviation about the mean, as in
// the MRC2014 header definition.
template <typename Range>
Stats compute_stats(const Range& values) {
  Stats s;
  std::size_t n = 0;
  double sum = 0.0;
  bool first = true;
  for (auto v : values) {
    const double x = static_cast<double>(v);
    if (first) {
      s.min = s.max = x;
      first = false;
    }
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    sum += x;
    ++n;
  }
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (auto v : values) {
    const double dx = static_cast<double>(v) - s.mean;
    ss += dx * dx;
  }
  s.rms = std::sqrt(ss / static_cast<double>(n));
  return s;
}

}  // namespace cryoforge
