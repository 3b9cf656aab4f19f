#pragma once

#include <cmath>

#include "cryoforge/core/grid.hpp"

namespace cryoforge {

namespace detail {

// Coordinates within this distance of an integer are treated as that
// integer so right-angle rotations and integer shifts resample exactly.
inline constexpr double kSnap = 1e-9;

inline double snap(double x) noexcept {
  const double r = std::nearbyint(x);
  return std::abs(x - r) < kSnap ? r : x;
}

}  // namespace detail

/// Trilinear interpolation at continuous index coordinates (d, h, w). The grid
/// is zero-extended: samples outside [0, n) contribute 0.
template <typename T>
double sample_trilinear(const Grid3<T>& g, double d, double h, double w) noexcept {
  d = detail::snap(d);
  h = detail::snap(h);
  w = detail::snap(w);
  const auto& n = g.dims();
  const double fd = std::floor(d), fh = std::floor(h), fw = std::floor(w);
  if (fd < -1.0 || fh < -1.0 || fw < -1.0) return 0.0;
  if (fd > static_cast<double>(n.d) - 1.0 || fh > static_cast<double>(n.h) - 1.0 ||
      fw > static_cast<double>(n.w) - 1.0)
    return 0.0;
  const long d0 = static_cast<long>(fd), h0 = static_cast<long>(fh), w0 = static_cast<long>(fw);
  const double td = d - fd, th = h - fh, tw = w - fw;
  auto at = [&](long i, long j, long k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(n.d) || j >= static_cast<long>(n.h) ||
        k >= static_cast<long>(n.w))
      return 0.0;
    return static_cast<double>(g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)));
  };
  double acc = 0.0;
  for (int a = 0; a < 2; ++a) {
    const double wa = a ? td : 1.0 - td;
    if (wa == 0.0) continue;
    for (int b = 0; b < 2; ++b) {
      const double wb = b ? th : 1.0 - th;
      if (wb == 0.0) continue;
      for (int c = 0; c < 2; ++c) {
        const double wc = c ? tw : 1.0 - tw;
        if (wc == 0.0) continue;
        acc += wa * wb * wc * at(d0 + a, h0 + b, w0 + c);
      }
    }
  }
  return acc;
}

/// Bilinear interpolation at continuous (y, x) with zero extension.
template <typename T>
double sample_bilinear(const Grid2<T>& g, double y, double x) noexcept {
  y = detail::snap(y);
  x = detail::snap(x);
  const double fy = std::floor(y), fx = std::floor(x);
  const long H = static_cast<long>(g.height()), W = static_cast<long>(g.width());
  if (fy < -1.0 || fx < -1.0 || fy > static_cast<double>(H - 1) || fx > static_cast<double>(W - 1)) return 0.0;
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double ty = y - fy, tx = x - fx;
  auto at = [&](long j, long i) -> double {
    if (j < 0 || i < 0 || j >= H || i >= W) return 0.0;
    return static_cast<double>(g(static_cast<std::size_t>(j), static_cast<std::size_t>(i)));
  };
  double acc = 0.0;
  if (ty != 1.0) {
    if (tx != 1.0) acc += (1 - ty) * (1 - tx) * at(y0, x0);
    if (tx != 0.0) acc += (1 - ty) * tx * at(y0, x0 + 1);
  }
  if (ty != 0.0) {
    if (tx != 1.0) acc += ty * (1 - tx) * at(y0 + 1, x0);
    if (tx != 0.0) acc += ty * tx * at(y0 + 1, x0 + 1);
  }
  return acc;
}

}  // namespace cryoforge
