#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "cryoforge/core/bspline.hpp"
#include "cryoforge/core/error.hpp"
#include "cryoforge/core/fft.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/parallel.hpp"
#include "cryoforge/core/rng.hpp"

// Tilt geometry: the tilt axis is the detector y axis (volume h), the beam
// runs along volume d (z), and rotation is about the volume center.
namespace cryoforge::tiltsim {

struct Shift2 {
  double dx = 0.0, dy = 0.0;
  bool operator==(const Shift2&) const = default;
};

/// Inclusive, evenly spaced angle list in degrees.
inline std::vector<double> angle_range(double first, double last, double step) {
  if (!(step > 0.0) || last < first) throw ConfigError("tilt angles: need step > 0 and last >= first");
  const auto n = static_cast<std::size_t>(std::floor((last - first) / step + 1e-9)) + 1;
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = first + static_cast<double>(i) * step;
  return a;
}

inline std::vector<double> default_angles() { return angle_range(-60.0, 60.0, 2.0); }
inline std::vector<double> pretraining_angles() { return angle_range(-90.0, 90.0, 2.0); }

struct TiltGeometry {
  std::vector<double> angles = default_angles();
  int oversample = 2;
  double shift_range = 1.0;
  std::uint64_t seed = 0;
  // Off by default; noise is added per subtomogram downstream.
  bool tilt_noise = false;
  double tilt_noise_sigma = 0.0;
};

inline void validate(const TiltGeometry& g) {
  if (g.angles.empty()) throw ConfigError("tilt geometry: no angles");
  for (std::size_t i = 0; i < g.angles.size(); ++i) {
    if (!(std::abs(g.angles[i]) <= 90.0)) throw ConfigError("tilt geometry: |angle| must be <= 90");
    if (i > 0 && !(g.angles[i] > g.angles[i - 1])) throw ConfigError("tilt geometry: angles must increase strictly");
  }
  if (g.angles.size() > 2) {
    const double step = g.angles[1] - g.angles[0];
    for (std::size_t i = 2; i < g.angles.size(); ++i)
      if (std::abs((g.angles[i] - g.angles[i - 1]) - step) > 1e-6)
        throw ConfigError("tilt geometry: angle step must be uniform");
  }
  if (g.oversample < 1) throw ConfigError("tilt geometry: oversample must be >= 1");
  if (!(g.shift_range >= 0.0)) throw ConfigError("tilt geometry: shift_range must be >= 0");
  if (g.tilt_noise && !(g.tilt_noise_sigma >= 0.0)) throw ConfigError("tilt geometry: noise sigma must be >= 0");
}

struct TiltSeries {
  TiltGeometry geometry;
  std::vector<Image> projections;
  std::vector<Shift2> applied_shifts;
  std::optional<std::vector<Shift2>> recovered_shifts;
  double pixel_size = 1.0;
};

/// Cubic B-spline coefficients of a volume, reusable across angles.
struct SplineVolume {
  Grid3<double> coeffs;

  explicit SplineVolume(const DensityVolume& vol) : coeffs(grid_cast<double>(vol.data)) {
    bspline::prefilter(coeffs);
  }
};

/// Projection of the volume tilted by `angle_deg` about the y axis.
///
/// The rotated volume is sampled on a grid `oversample` times finer than the
/// voxels along every axis (sample offsets at the sub-cell midpoints),
/// summed along the beam, and box-averaged back to detector pixels. The
/// integration depth covers the whole rotated slab. Points outside the
/// source grid contribute 0.
inline Image project_tilt(const SplineVolume& sv, double angle_deg, int oversample) {
  const Grid3<double>& c = sv.coeffs;
  const auto& n = c.dims();
  const std::size_t os = static_cast<std::size_t>(std::max(1, oversample));
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cx = (static_cast<double>(n.w) - 1.0) / 2.0, cz = (static_cast<double>(n.d) - 1.0) / 2.0;
  const double inv = 1.0 / static_cast<double>(os);
  std::vector<double> sub(os);
  for (std::size_t k = 0; k < os; ++k) sub[k] = (static_cast<double>(k) - 0.5 * static_cast<double>(os - 1)) * inv;

  // Beam-direction slots: the source depth range extended so the tilted slab
  // is fully traversed.
  const double half_depth = 0.5 * (std::abs(st) * (static_cast<double>(n.w) - 1.0) +
                                   std::abs(ct) * (static_cast<double>(n.d) - 1.0));
  const auto pad = static_cast<std::size_t>(
      std::max(0.0, std::ceil(half_depth - 0.5 * (static_cast<double>(n.d) - 1.0) - 1e-9)));
  const std::size_t slots = n.d + 2 * pad;

  Image out(n.h, n.w, 0.0);
  Image slab(n.d, n.w);  // coefficients collapsed along h for one detector row
  for (std::size_t y = 0; y < n.h; ++y) {
    // Combined h-weights of the os sub-rows, each a 4-tap spline evaluation.
    std::fill(slab.begin(), slab.end(), 0.0);
    bool any = false;
    for (std::size_t b = 0; b < os; ++b) {
      const double yy = static_cast<double>(y) + sub[b];
      if (yy < 0.0 || yy > static_cast<double>(n.h) - 1.0) continue;
      any = true;
      const auto t = bspline::taps(yy);
      for (int j = 0; j < 4; ++j) {
        const std::size_t hh = bspline::mirror(t.first + j, n.h);
        const double wgt = t.w[static_cast<std::size_t>(j)] * inv;
        for (std::size_t d = 0; d < n.d; ++d)
          for (std::size_t w = 0; w < n.w; ++w) slab(d, w) += wgt * c(d, hh, w);
      }
    }
    if (!any) continue;
    for (std::size_t x = 0; x < n.w; ++x) {
      double acc = 0.0;
      for (std::size_t a = 0; a < os; ++a) {
        const double rx = static_cast<double>(x) + sub[a] - cx;
        for (std::size_t s = 0; s < slots; ++s) {
          for (std::size_t k = 0; k < os; ++k) {
            const double rz = static_cast<double>(s) - static_cast<double>(pad) + sub[k] - cz;
            // Source = c + R_y(-theta) (p - c).
            const double sx = cx + ct * rx - st * rz;
            const double sz = cz + st * rx + ct * rz;
            acc += bspline::eval(slab, sz, sx);
          }
        }
      }
      out(y, x) = acc * inv * inv;
    }
  }
  return out;
}

inline Image project_tilt(const DensityVolume& vol, double angle_deg, const TiltGeometry& geom) {
  validate(vol);
  if (!(std::abs(angle_deg) <= 90.0)) throw ConfigError("project_tilt: |angle| must be <= 90");
  return project_tilt(SplineVolume(vol), angle_deg, geom.oversample);
}

/// Drift applied to view `index`: independent uniform draws in
/// [-shift_range, shift_range]^2 from the (seed, index) substream.
inline Shift2 drift_for_view(const TiltGeometry& geom, std::size_t index) {
  if (geom.shift_range == 0.0) return {};
  CounterRng rng(derive_key(geom.seed, {stream::tilt_shift, index}));
  const double dx = rng.uniform(-geom.shift_range, geom.shift_range);
  const double dy = rng.uniform(-geom.shift_range, geom.shift_range);
  return {dx, dy};
}

/// Projects every angle and applies the per-view drift by a Fourier shift.
inline TiltSeries simulate_tilt_series(const DensityVolume& vol, const TiltGeometry& geom, unsigned jobs = 1) {
  validate(geom);
  validate(vol);
  const SplineVolume sv(vol);
  TiltSeries ts;
  ts.geometry = geom;
  ts.pixel_size = vol.voxel_size;
  ts.projections.resize(geom.angles.size());
  ts.applied_shifts.resize(geom.angles.size());
  parallel_for(geom.angles.size(), jobs, [&](std::size_t i) {
    Image p = project_tilt(sv, geom.angles[i], geom.oversample);
    const Shift2 s = drift_for_view(geom, i);
    if (s.dx != 0.0 || s.dy != 0.0) p = fft::fourier_shift(p, s.dx, s.dy);
    if (geom.tilt_noise && geom.tilt_noise_sigma > 0.0) {
      CounterRng rng(derive_key(geom.seed, {stream::tilt_noise, i}));
      for (double& v : p) v += geom.tilt_noise_sigma * rng.normal();
    }
    ts.projections[i] = std::move(p);
    ts.applied_shifts[i] = s;
  });
  return ts;
}

}  // namespace cryoforge::tiltsim
