#pragma once

#include <array>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"

namespace cryoforge::apt {

struct PatchSize {
  std::size_t d = 4, h = 4, w = 4;

  std::size_t count() const noexcept { return d * h * w; }
  bool operator==(const PatchSize&) const = default;
};

/// Phase offset (p, q, r) along (d, h, w).
struct PhaseIndex {
  std::size_t p = 0, q = 0, r = 0;
  bool operator==(const PhaseIndex&) const = default;
};

inline std::size_t linear_index(const PhaseIndex& k, const PatchSize& s) noexcept {
  return (k.p * s.h + k.q) * s.w + k.r;
}

inline PhaseIndex phase_index(std::size_t linear, const PatchSize& s) noexcept {
  return {linear / (s.h * s.w), (linear / s.w) % s.h, linear % s.w};
}

/// Components ordered lexicographically by (p, q, r).
struct PolyphaseSet {
  PatchSize patch;
  Dims3 component_dims;
  std::vector<Grid3<double>> components;

  const Grid3<double>& at(const PhaseIndex& k) const { return components[linear_index(k, patch)]; }
};

inline void check_divisible(const Dims3& n, const PatchSize& s) {
  if (s.d == 0 || s.h == 0 || s.w == 0) throw ShapeError("patch size must be positive");
  if (n.d % s.d || n.h % s.h || n.w % s.w)
    throw ShapeError("volume " + std::to_string(n.d) + "x" + std::to_string(n.h) + "x" + std::to_string(n.w) +
                     " is not divisible by patch " + std::to_string(s.d) + "x" + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
}

/// Component (p, q, r) holds the samples at (i·s_D + p, j·s_H + q, k·s_W + r).
template <typename T>
PolyphaseSet polyphase_decompose(const Grid3<T>& vol, const PatchSize& s) {
  const auto& n = vol.dims();
  check_divisible(n, s);
  PolyphaseSet ps;
  ps.patch = s;
  ps.component_dims = {n.d / s.d, n.h / s.h, n.w / s.w};
  ps.components.reserve(s.count());
  const auto& c = ps.component_dims;
  for (std::size_t p = 0; p < s.d; ++p)
    for (std::size_t q = 0; q < s.h; ++q)
      for (std::size_t r = 0; r < s.w; ++r) {
        Grid3<double> g(c);
        for (std::size_t i = 0; i < c.d; ++i)
          for (std::size_t j = 0; j < c.h; ++j)
            for (std::size_t k = 0; k < c.w; ++k)
              g(i, j, k) = static_cast<double>(vol(i * s.d + p, j * s.h + q, k * s.w + r));
        ps.components.push_back(std::move(g));
      }
  return ps;
}

inline PolyphaseSet polyphase_decompose(const DensityVolume& vol, const PatchSize& s) {
  return polyphase_decompose(vol.data, s);
}

/// Inverse of polyphase_decompose.
inline Grid3<double> interleave(const PolyphaseSet& ps) {
  const auto& s = ps.patch;
  const auto& c = ps.component_dims;
  if (ps.components.size() != s.count()) throw ShapeError("interleave: wrong component count");
  Grid3<double> out(Dims3{c.d * s.d, c.h * s.h, c.w * s.w});
  for (std::size_t p = 0; p < s.d; ++p)
    for (std::size_t q = 0; q < s.h; ++q)
      for (std::size_t r = 0; r < s.w; ++r) {
        const auto& g = ps.at({p, q, r});
        for (std::size_t i = 0; i < c.d; ++i)
          for (std::size_t j = 0; j < c.h; ++j)
            for (std::size_t k = 0; k < c.w; ++k) out(i * s.d + p, j * s.h + q, k * s.w + r) = g(i, j, k);
      }
  return out;
}

/// Circular shift: out(v) = in(v - g), g = (d, h, w).
template <typename T>
Grid3<T> circshift(const Grid3<T>& in, long gd, long gh, long gw) {
  const auto& n = in.dims();
  Grid3<T> out(n);
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w)
        out(d, h, w) = in.wrapped(static_cast<long>(d) - gd, static_cast<long>(h) - gh, static_cast<long>(w) - gw);
  return out;
}

}  // namespace cryoforge::apt
