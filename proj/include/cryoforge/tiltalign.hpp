#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/fft.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/parallel.hpp"
#include "cryoforge/tiltsim.hpp"

namespace cryoforge::tiltalign {

using tiltsim::Shift2;
using tiltsim::TiltSeries;

namespace detail {

inline bool is_constant(const Image& img) {
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  return *hi - *lo <= 1e-12 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
}

// Vertex of the parabola through (-1, l), (0, c), (1, r), clamped to ±0.5.
// Offsets below 1e-9 are round-off around a delta peak and snap to 0 so
// integer shifts come back as exact integers.
inline double parabola_offset(double l, double c, double r) {
  const double denom = l - 2.0 * c + r;
  if (!(denom < 0.0)) return 0.0;
  const double off = std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
  return std::abs(off) < 1e-9 ? 0.0 : off;
}

}  // namespace detail

/// Cross-power bins weaker than this fraction of the strongest bin are
/// zeroed before whitening. Relative, so the estimate does not depend on
/// image intensity scale.
inline constexpr double kCrossPowerFloor = 1e-12;

/// Sub-pixel translation between two images by phase correlation.
///
/// Returns s such that b ≈ a translated by s, i.e. b(x) = a(x - s); applying
/// a shift of -s to b maps it back onto a. The normalized cross-power
/// spectrum is zeroed where its magnitude is below kCrossPowerFloor times
/// its maximum, and the integer peak is refined per axis by a 3-point
/// parabola.
inline Shift2 phase_correlate(const Image& a, const Image& b) {
  if (a.dims() != b.dims()) throw ShapeError("phase_correlate: image dimensions differ");
  if (a.size() == 0) throw ShapeError("phase_correlate: empty image");
  if (detail::is_constant(a) || detail::is_constant(b))
    throw DegenerateInputError("phase_correlate: constant image has no defined shift");
  const std::size_t h = a.height(), w = a.width();
  auto fa = fft::to_complex(a);
  auto fb = fft::to_complex(b);
  fft::Plan fwd({static_cast<int>(h), static_cast<int>(w)}, fft::Direction::forward);
  fwd.execute(fa.data());
  fwd.execute(fb.data());
  double peak = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    fa.data()[i] = std::conj(fa.data()[i]) * fb.data()[i];
    peak = std::max(peak, std::abs(fa.data()[i]));
  }
  const double floor = kCrossPowerFloor * peak;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double m = std::abs(fa.data()[i]);
    fa.data()[i] = m < floor ? fft::cpx{} : fa.data()[i] / m;
  }
  fft::Plan inv({static_cast<int>(h), static_cast<int>(w)}, fft::Direction::inverse);
  inv.execute(fa.data());

  std::size_t py = 0, px = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (fa(y, x).real() > best) {
        best = fa(y, x).real();
        py = y;
        px = x;
      }
  const auto at = [&](long y, long x) {
    return fa(Grid3<int>::wrap(y, h), Grid3<int>::wrap(x, w)).real();
  };
  const long iy = static_cast<long>(py), ix = static_cast<long>(px);
  const double ox = w > 2 ? detail::parabola_offset(at(iy, ix - 1), best, at(iy, ix + 1)) : 0.0;
  const double oy = h > 2 ? detail::parabola_offset(at(iy - 1, ix), best, at(iy + 1, ix)) : 0.0;
  return {static_cast<double>(fft::signed_index(px, w)) + ox, static_cast<double>(fft::signed_index(py, h)) + oy};
}

struct AlignmentResult {
  std::vector<Shift2> shifts;  // estimated drift per view
  double axis_angle = 0.0;     // degrees
  double axis_offset = 0.0;    // pixels
  double residual_mse = 0.0;
  std::size_t iterations_used = 0;
  std::vector<double> max_update;  // largest shift update of each iteration
};

struct AlignConfig {
  std::size_t iterations = 3;
  double tolerance = 0.01;  // stop once the largest update falls below this
  unsigned jobs = 1;
};

inline std::size_t reference_view(const std::vector<double>& angles) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < angles.size(); ++i)
    if (std::abs(angles[i]) < std::abs(angles[best])) best = i;
  return best;
}

struct AxisFit {
  double axis_angle = 0.0;
  double axis_offset = 0.0;
  double residual_mse = 0.0;
};

/// Mean squared error between measured shift trajectories and the model of a
/// tilt axis rotated in-plane by `axis_angle_deg` with a vertical offset:
/// predicted shift(θ) = offset · sin θ · (cos φ, sin φ).
inline double axis_mse(const std::vector<double>& angles, const std::vector<Shift2>& shifts, double axis_angle_deg,
                       double offset) {
  const double phi = axis_angle_deg * std::numbers::pi / 180.0;
  const double ux = std::cos(phi), uy = std::sin(phi);
  double acc = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double m = offset * std::sin(angles[i] * std::numbers::pi / 180.0);
    const double ex = shifts[i].dx - m * ux, ey = shifts[i].dy - m * uy;
    acc += ex * ex + ey * ey;
  }
  return acc / static_cast<double>(2 * angles.size());
}

/// Exhaustive search over axis angle in [-5°, 5°] and offset in [-5, 5] px,
/// both on a 0.1 grid. Exact ties go to the smallest |angle|, then the
/// smallest |offset|.
inline AxisFit refine_axis(const std::vector<double>& angles, const std::vector<Shift2>& shifts) {
  if (angles.size() != shifts.size()) throw ShapeError("refine_axis: angle and shift counts differ");
  if (angles.size() < 3) throw PreconditionError("refine_axis: at least 3 views are required");
  AxisFit best{0.0, 0.0, std::numeric_limits<double>::infinity()};
  for (int ka = -50; ka <= 50; ++ka)
    for (int ko = -50; ko <= 50; ++ko) {
      const double a = 0.1 * ka, o = 0.1 * ko;
      const double mse = axis_mse(angles, shifts, a, o);
      const bool better =
          mse < best.residual_mse ||
          (mse == best.residual_mse &&
           (std::abs(a) < std::abs(best.axis_angle) ||
            (std::abs(a) == std::abs(best.axis_angle) && std::abs(o) < std::abs(best.axis_offset))));
      if (better) best = {a, o, mse};
    }
  return best;
}

inline AxisFit refine_axis(const TiltSeries& series, const std::vector<Shift2>& shifts) {
  return refine_axis(series.geometry.angles, shifts);
}

/// Iterative reference-based alignment. The first pass correlates every view
/// against the view nearest 0°; later passes use the mean of the currently
/// corrected views. Updates accumulate per view. Alignment only fixes shifts
/// up to a common translation, so every update is centred (zero mean over
/// views) and the returned shifts have zero mean.
inline AlignmentResult align_series(const TiltSeries& series, const AlignConfig& cfg = {}) {
  const auto& views = series.projections;
  if (views.empty()) throw PreconditionError("align_series: empty series");
  if (cfg.iterations < 1) throw PreconditionError("align_series: iterations must be >= 1");
  if (series.geometry.angles.size() != views.size())
    throw ShapeError("align_series: angle count does not match projection count");
  const std::size_t n = views.size();
  const std::size_t ref0 = reference_view(series.geometry.angles);

  AlignmentResult res;
  res.shifts.assign(n, Shift2{});
  std::vector<Image> corrected(views);
  Image reference = views[ref0];
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (it > 0) {
      reference = Image(views[0].dims(), 0.0);
      for (const auto& v : corrected)
        for (std::size_t k = 0; k < v.size(); ++k) reference.data()[k] += v.data()[k];
      for (double& v : reference) v /= static_cast<double>(n);
    }
    std::vector<Shift2> update(n);
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
      try {
        update[i] = phase_correlate(reference, corrected[i]);
      } catch (const DegenerateInputError& e) {
        throw DegenerateInputError("align_series: tilt " + std::to_string(i) + ": " + e.what());
      }
    });
    Shift2 mean;
    for (const auto& u : update) {
      mean.dx += u.dx / static_cast<double>(n);
      mean.dy += u.dy / static_cast<double>(n);
    }
    double largest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ux = update[i].dx - mean.dx, uy = update[i].dy - mean.dy;
      res.shifts[i].dx += ux;
      res.shifts[i].dy += uy;
      largest = std::max({largest, std::abs(ux), std::abs(uy)});
    }
    res.max_update.push_back(largest);
    res.iterations_used = it + 1;
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
      corrected[i] = fft::fourier_shift(views[i], -res.shifts[i].dx, -res.shifts[i].dy);
    });
    if (largest < cfg.tolerance) break;
  }
  if (n >= 3) {
    const AxisFit fit = refine_axis(series.geometry.angles, res.shifts);
    res.axis_angle = fit.axis_angle;
    res.axis_offset = fit.axis_offset;
    res.residual_mse = fit.residual_mse;
  }
  return res;
}

}  // namespace cryoforge::tiltalign
