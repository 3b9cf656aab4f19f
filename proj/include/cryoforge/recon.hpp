#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/fft.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/parallel.hpp"
#include "cryoforge/tiltalign.hpp"
#include "cryoforge/tiltsim.hpp"

namespace cryoforge::recon {

enum class Filter { hann_ramp, ramp, none };
enum class Weighting { abs_cos, uniform };

struct ReconConfig {
  Dims3 output_dims{200, 500, 500};
  Filter filter = Filter::hann_ramp;
  Weighting weighting = Weighting::abs_cos;
  unsigned jobs = 1;
};

inline Filter parse_filter(const std::string& s) {
  if (s == "hann_ramp") return Filter::hann_ramp;
  if (s == "ramp") return Filter::ramp;
  if (s == "none") return Filter::none;
  throw ConfigError("unknown reconstruction filter '" + s + "'");
}

inline Weighting parse_weighting(const std::string& s) {
  if (s == "abs_cos") return Weighting::abs_cos;
  if (s == "uniform") return Weighting::uniform;
  throw ConfigError("unknown reconstruction weighting '" + s + "'");
}

/// Filter response at frequency f (cycles per pixel). f_N = 0.5.
inline double filter_response(Filter filter, double f) {
  const double r = std::abs(f) / 0.5;
  switch (filter) {
    case Filter::none:
      return 1.0;
    case Filter::ramp:
      return r <= 1.0 ? r : 0.0;
    case Filter::hann_ramp:
      return r <= 1.0 ? r * (0.5 + 0.5 * std::cos(std::numbers::pi * r)) : 0.0;
  }
  return 1.0;
}

/// Multiplies the 1D spectrum of every row (the axis perpendicular to the
/// tilt axis) by the filter response. With `padded_width` > width the rows
/// are zero-padded to that length first, so the filter acts as a linear
/// rather than circular convolution; 0 filters the periodic rows directly.
inline Image filter_projection(const Image& img, Filter filter, std::size_t padded_width = 0) {
  if (filter == Filter::none) return img;
  const std::size_t w = img.width();
  const std::size_t pw = std::max(w, padded_width);
  Grid2<fft::cpx> spec(img.height(), pw, fft::cpx{});
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < w; ++x) spec(y, x) = img(y, x);
  fft::transform_rows(spec, fft::Direction::forward);
  std::vector<double> resp(pw);
  for (std::size_t k = 0; k < pw; ++k) resp[k] = filter_response(filter, fft::frequency(k, pw));
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < pw; ++x) spec(y, x) *= resp[x];
  fft::transform_rows(spec, fft::Direction::inverse);
  Image out(img.dims());
  const double scale = 1.0 / static_cast<double>(pw);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < w; ++x) out(y, x) = spec(y, x).real() * scale;
  return out;
}

inline Image filter_projection(const Image& img, const ReconConfig& cfg) { return filter_projection(img, cfg.filter); }

/// Filtered weighted back-projection.
///
/// Views are corrected by the negated recovered shifts, filtered (rows
/// zero-padded to twice their width), weighted
/// by |cos θ| (or 1) and smeared back along their beam directions: voxel r
/// (relative to the volume center) reads detector column
/// cx + cos θ·r_x + sin θ·r_z, row y, by linear interpolation. The sum is
/// scaled by π / (2 N).
inline DensityVolume wbp_reconstruct(const tiltsim::TiltSeries& series, const tiltalign::AlignmentResult& align,
                                     const ReconConfig& cfg) {
  const auto& views = series.projections;
  const std::size_t nt = views.size();
  if (nt < 3) throw PreconditionError("wbp_reconstruct: at least 3 tilts are required");
  if (series.geometry.angles.size() != nt) throw ShapeError("wbp_reconstruct: angle count does not match views");
  if (!align.shifts.empty() && align.shifts.size() != nt)
    throw ShapeError("wbp_reconstruct: shift count does not match views");
  const auto& n = cfg.output_dims;
  if (n.size() == 0) throw ConfigError("wbp_reconstruct: output dimensions must be positive");
  for (const auto& v : views)
    if (v.height() != n.h || v.width() != n.w)
      throw ShapeError("wbp_reconstruct: projection " + std::to_string(v.height()) + "x" + std::to_string(v.width()) +
                       " does not match output H x W " + std::to_string(n.h) + "x" + std::to_string(n.w));

  std::vector<Image> prepared(nt);
  std::vector<double> cs(nt), sn(nt);
  parallel_for(nt, cfg.jobs, [&](std::size_t i) {
    Image p = views[i];
    if (!align.shifts.empty() && (align.shifts[i].dx != 0.0 || align.shifts[i].dy != 0.0))
      p = fft::fourier_shift(p, -align.shifts[i].dx, -align.shifts[i].dy);
    p = filter_projection(p, cfg.filter, 2 * p.width());
    const double theta = series.geometry.angles[i] * std::numbers::pi / 180.0;
    cs[i] = std::cos(theta);
    sn[i] = std::sin(theta);
    const double wgt = cfg.weighting == Weighting::abs_cos ? std::abs(cs[i]) : 1.0;
    if (wgt != 1.0)
      for (double& v : p) v *= wgt;
    prepared[i] = std::move(p);
  });

  DensityVolume out(n, series.pixel_size);
  const double cx = (static_cast<double>(n.w) - 1.0) / 2.0, cz = (static_cast<double>(n.d) - 1.0) / 2.0;
  const double scale = std::numbers::pi / (2.0 * static_cast<double>(nt));
  const long W = static_cast<long>(n.w);
  parallel_for(n.d, cfg.jobs, [&](std::size_t d) {
    std::vector<double> row(n.w);
    const double rz = static_cast<double>(d) - cz;
    for (std::size_t h = 0; h < n.h; ++h) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t i = 0; i < nt; ++i) {
        const Image& p = prepared[i];
        const double base = cx + sn[i] * rz;
        for (std::size_t w = 0; w < n.w; ++w) {
          const double u = base + cs[i] * (static_cast<double>(w) - cx);
          const double fu = std::floor(u);
          const long u0 = static_cast<long>(fu);
          const double t = u - fu;
          double v = 0.0;
          if (u0 >= 0 && u0 < W) v += (1.0 - t) * p(h, static_cast<std::size_t>(u0));
          if (u0 + 1 >= 0 && u0 + 1 < W && t != 0.0) v += t * p(h, static_cast<std::size_t>(u0 + 1));
          row[w] += v;
        }
      }
      for (std::size_t w = 0; w < n.w; ++w) out(d, h, w) = static_cast<float>(row[w] * scale);
    }
  });
  return out;
}

}  // namespace cryoforge::recon
