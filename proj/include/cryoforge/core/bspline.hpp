#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

#include "cryoforge/core/grid.hpp"

// Cubic B-spline interpolation (Unser/Thevenaz): a recursive prefilter turns
// samples into spline coefficients, after which the interpolant is a 4-tap
// separable sum per axis. Boundaries are whole-sample mirrored.
namespace cryoforge::bspline {

inline constexpr double kPole = -0.26794919243112270647;  // sqrt(3) - 2

/// In-place conversion of n samples, spaced `stride` apart, to coefficients.
inline void prefilter_line(double* c, std::size_t n, std::ptrdiff_t stride) {
  if (n < 2) return;
  const double z = kPole;
  const double lambda = (1.0 - z) * (1.0 - 1.0 / z);
  auto at = [&](std::size_t k) -> double& { return c[static_cast<std::ptrdiff_t>(k) * stride]; };
  for (std::size_t k = 0; k < n; ++k) at(k) *= lambda;

  // Causal initialization with mirror-symmetric extension.
  const auto horizon = static_cast<std::size_t>(
      std::ceil(std::log(std::numeric_limits<double>::epsilon()) / std::log(std::abs(z))));
  if (horizon < n) {
    double zn = z, sum = at(0);
    for (std::size_t k = 1; k < horizon; ++k) {
      sum += zn * at(k);
      zn *= z;
    }
    at(0) = sum;
  } else {
    double zn = z;
    const double iz = 1.0 / z;
    double z2n = std::pow(z, static_cast<double>(n - 1));
    double sum = at(0) + z2n * at(n - 1);
    z2n *= z2n * iz;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      sum += (zn + z2n) * at(k);
      zn *= z;
      z2n *= iz;
    }
    at(0) = sum / (1.0 - zn * zn);
  }
  for (std::size_t k = 1; k < n; ++k) at(k) += z * at(k - 1);
  at(n - 1) = (z / (z * z - 1.0)) * (z * at(n - 2) + at(n - 1));
  for (std::size_t k = n - 1; k-- > 0;) at(k) = z * (at(k + 1) - at(k));
}

inline void prefilter(Grid3<double>& g) {
  const auto& n = g.dims();
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h) prefilter_line(&g(d, h, 0), n.w, 1);
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t w = 0; w < n.w; ++w) prefilter_line(&g(d, 0, w), n.h, static_cast<std::ptrdiff_t>(n.w));
  for (std::size_t h = 0; h < n.h; ++h)
    for (std::size_t w = 0; w < n.w; ++w)
      prefilter_line(&g(0, h, w), n.d, static_cast<std::ptrdiff_t>(n.h * n.w));
}

inline void prefilter(Image& g) {
  for (std::size_t y = 0; y < g.height(); ++y) prefilter_line(&g(y, 0), g.width(), 1);
  for (std::size_t x = 0; x < g.width(); ++x)
    prefilter_line(&g(0, x), g.height(), static_cast<std::ptrdiff_t>(g.width()));
}

/// Cubic B-spline basis value.
inline double basis(double x) noexcept {
  x = std::abs(x);
  if (x < 1.0) return 2.0 / 3.0 - x * x + 0.5 * x * x * x;
  if (x < 2.0) {
    const double t = 2.0 - x;
    return t * t * t / 6.0;
  }
  return 0.0;
}

/// Taps for position x: coefficient indices floor(x)-1 .. floor(x)+2.
struct Taps {
  long first;
  std::array<double, 4> w;
};

inline Taps taps(double x) noexcept {
  const double f = std::floor(x);
  const double t = x - f;
  const double t2 = t * t, t3 = t2 * t;
  const double omt = 1.0 - t;
  return {static_cast<long>(f) - 1,
          {omt * omt * omt / 6.0, 2.0 / 3.0 - t2 + 0.5 * t3, 2.0 / 3.0 - omt * omt + 0.5 * omt * omt * omt,
           t3 / 6.0}};
}

/// Whole-sample mirror of an index into [0, n).
inline std::size_t mirror(long i, std::size_t n) noexcept {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long r = i % period;
  if (r < 0) r += period;
  if (r >= static_cast<long>(n)) r = period - r;
  return static_cast<std::size_t>(r);
}

/// Evaluates the 2D spline with coefficients `c` at (y, x). Positions outside
/// [0, n-1] on either axis give 0.
inline double eval(const Image& c, double y, double x) noexcept {
  const double H = static_cast<double>(c.height()), W = static_cast<double>(c.width());
  if (y < 0.0 || x < 0.0 || y > H - 1.0 || x > W - 1.0) return 0.0;
  const Taps ty = taps(y), tx = taps(x);
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    const std::size_t yy = mirror(ty.first + j, c.height());
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += tx.w[i] * c(yy, mirror(tx.first + i, c.width()));
    acc += ty.w[j] * row;
  }
  return acc;
}

}  // namespace cryoforge::bspline
