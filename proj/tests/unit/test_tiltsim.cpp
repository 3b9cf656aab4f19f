#include <gtest/gtest.h>

#include "cryoforge/tiltalign.hpp"
#include "cryoforge/tiltsim.hpp"
#include "support/helpers.hpp"

using namespace cryoforge;
using namespace cryoforge::tiltsim;
using testing_support::gaussian_blob;

namespace {

double total(const Image& p) {
  double s = 0;
  for (double v : p) s += v;
  return s;
}

double max_abs(const Image& p) {
  double m = 0;
  for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

double max_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Nearest-neighbour projection: every voxel center is rotated about the
// volume center and its value deposited in the nearest detector column.
Image nearest_projection(const DensityVolume& v, double angle_deg) {
  const auto& n = v.dims();
  const double th = angle_deg * std::numbers::pi / 180, cx = (n.w - 1) / 2.0, cz = (n.d - 1) / 2.0;
  Image out(n.h, n.w, 0.0);
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) {
        const double x = std::cos(th) * (w - cx) + std::sin(th) * (d - cz) + cx;
        const long col = std::lround(x);
        if (col >= 0 && col < static_cast<long>(n.w)) out(h, static_cast<std::size_t>(col)) += v(d, h, w);
      }
  return out;
}

TiltGeometry still(std::vector<double> angles) {
  TiltGeometry g;
  g.angles = std::move(angles);
  g.shift_range = 0.0;
  return g;
}

}  // namespace

TEST(TiltAngles, PresetsHaveExpectedCounts) {
  const auto d = default_angles(), p = pretraining_angles();
  EXPECT_EQ(d.size(), 61u);
  EXPECT_EQ(p.size(), 91u);
  EXPECT_EQ(d.front(), -60.0);
  EXPECT_EQ(d.back(), 60.0);
  EXPECT_EQ(p.front(), -90.0);
  EXPECT_EQ(p.back(), 90.0);
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_DOUBLE_EQ(d[i] - d[i - 1], 2.0);
}

TEST(TiltAngles, InvalidGeometryIsRejected) {
  TiltGeometry g;
  g.angles = {0, 2, 1};
  EXPECT_THROW(validate(g), ConfigError);
  g.angles = {0, 2, 6};
  EXPECT_THROW(validate(g), ConfigError);
  g.angles = {-92, 0};
  EXPECT_THROW(validate(g), ConfigError);
  g = {};
  g.oversample = 0;
  EXPECT_THROW(validate(g), ConfigError);
}

TEST(ProjectTilt, ZeroAngleIsPixelAveragedZSum) {
  // At 0° the projector sums along z exactly; in-plane, each detector pixel
  // averages the oversampled midpoints (±0.25 px), so the oracle is the
  // analytic blob's z-sum averaged over those four offsets.
  const double cx = 19.5, cy = 18.0, cz = 15.5, sg = 4.0;
  const auto v = gaussian_blob({32, 36, 40}, cx, cy, cz, sg);
  const auto p = project_tilt(v, 0.0, still({0}));
  Image oracle(36, 40, 0.0), zsum(36, 40, 0.0);
  for (std::size_t h = 0; h < 36; ++h)
    for (std::size_t w = 0; w < 40; ++w) {
      for (std::size_t d = 0; d < 32; ++d) {
        zsum(h, w) += v(d, h, w);
        const double gz = std::exp(-std::pow(d - cz, 2) / (2 * sg * sg));
        for (double oy : {-0.25, 0.25})
          for (double ox : {-0.25, 0.25})
            oracle(h, w) += 0.25 * gz * std::exp(-(std::pow(w + ox - cx, 2) + std::pow(h + oy - cy, 2)) / (2 * sg * sg));
      }
    }
  EXPECT_LT(max_diff(p, oracle), 1e-4 * max_abs(oracle));
  // Relative to the plain z-sum the only change is that pixel averaging.
  EXPECT_LT(max_diff(p, zsum), 2 * 0.0625 / (2 * sg * sg) * max_abs(zsum) * 1.05);
  EXPECT_NEAR(total(p), total(zsum), 1e-4 * total(zsum));
}

TEST(ProjectTilt, SymmetricBlobGivesEqualOppositeTilts) {
  const auto v = gaussian_blob({32, 32, 32}, 15.5, 15.5, 15.5, 3.0);
  const auto g = still({-60, 60});
  const auto a = project_tilt(v, -60.0, g), b = project_tilt(v, 60.0, g);
  EXPECT_LT(max_diff(a, b), 1e-3 * max_abs(a));
}

TEST(ProjectTilt, MassAtSixtyDegreesTracksNearestNeighbourOracle) {
  // Elongated off-centre phantom so the tilted slab clips at the detector edge.
  DensityVolume v(Dims3{16, 24, 40}, 1.0);
  for (std::size_t d = 0; d < 16; ++d)
    for (std::size_t h = 0; h < 24; ++h)
      for (std::size_t w = 0; w < 40; ++w)
        v(d, h, w) = static_cast<float>(std::exp(-(std::pow((w - 26.0) / 7.0, 2) + std::pow((h - 11.5) / 3.0, 2) +
                                                   std::pow((d - 7.5) / 2.5, 2)) /
                                                 2));
  for (double angle : {-60.0, 60.0}) {
    const auto p = project_tilt(v, angle, still({angle}));
    const double oracle = total(nearest_projection(v, angle));
    EXPECT_NEAR(total(p), oracle, 0.02 * oracle) << angle;
  }
}

TEST(ProjectTilt, IsLinear) {
  const auto v1 = testing_support::random_density({16, 16, 16}, 1, 1.0);
  const auto v2 = gaussian_blob({16, 16, 16}, 7, 8, 9, 2.5);
  DensityVolume mix(Dims3{16, 16, 16});
  for (std::size_t i = 0; i < mix.data.size(); ++i)
    mix.data.data()[i] = static_cast<float>(2.0 * v1.data.data()[i] - 0.5 * v2.data.data()[i]);
  const auto g = still({30});
  const auto p1 = project_tilt(v1, 30, g), p2 = project_tilt(v2, 30, g), pm = project_tilt(mix, 30, g);
  Image combo(p1.dims());
  for (std::size_t i = 0; i < combo.size(); ++i) combo.data()[i] = 2.0 * p1.data()[i] - 0.5 * p2.data()[i];
  EXPECT_LT(max_diff(pm, combo), 1e-5 * max_abs(combo));
}

TEST(ProjectTilt, OversampleTwoAgreesWithFour) {
  const auto v = gaussian_blob({24, 24, 24}, 11.5, 11.0, 12.0, 3.0);
  auto g = still({40});
  const auto p2 = project_tilt(v, 40, g);
  g.oversample = 4;
  const auto p4 = project_tilt(v, 40, g);
  EXPECT_LT(max_diff(p2, p4), 0.01 * max_abs(p4));
}

TEST(SimulateTiltSeries, ZeroRangeGivesZeroShifts) {
  const auto v = gaussian_blob({16, 16, 16}, 7.5, 7.5, 7.5, 2.5);
  auto g = still(angle_range(-20, 20, 10));
  g.seed = 4;
  const auto ts = simulate_tilt_series(v, g);
  ASSERT_EQ(ts.projections.size(), 5u);
  ASSERT_EQ(ts.applied_shifts.size(), 5u);
  for (const auto& s : ts.applied_shifts) EXPECT_EQ(s, Shift2{});
}

TEST(SimulateTiltSeries, DeterministicAndThreadIndependent) {
  const auto v = gaussian_blob({16, 16, 16}, 7.5, 7.5, 7.5, 2.5);
  TiltGeometry g;
  g.angles = angle_range(-30, 30, 10);
  g.seed = 99;
  const auto a = simulate_tilt_series(v, g, 1), b = simulate_tilt_series(v, g, 1), c = simulate_tilt_series(v, g, 3);
  EXPECT_EQ(a.projections, b.projections);
  EXPECT_EQ(a.applied_shifts, b.applied_shifts);
  EXPECT_EQ(a.projections, c.projections);
  for (const auto& s : a.applied_shifts) {
    EXPECT_LE(std::abs(s.dx), 1.0);
    EXPECT_LE(std::abs(s.dy), 1.0);
  }
  g.seed = 100;
  EXPECT_NE(simulate_tilt_series(v, g).applied_shifts, a.applied_shifts);
}

TEST(SimulateTiltSeries, RecordedShiftIsRecoverable) {
  // 64-pixel detector: the correlation peak is resolved finely enough for the
  // parabolic fit to reach a few hundredths of a pixel.
  const auto v = gaussian_blob({16, 64, 64}, 31.5, 31.5, 7.5, 4.0);
  const auto p0 = project_tilt(v, 0.0, still({0}));
  const Image shifted = fft::fourier_shift(p0, 0.37, -0.81);
  const auto s = tiltalign::phase_correlate(p0, shifted);
  EXPECT_NEAR(s.dx, 0.37, 0.05);
  EXPECT_NEAR(s.dy, -0.81, 0.05);

  TiltGeometry g;
  g.angles = {0};
  g.seed = 12;
  const auto ts = simulate_tilt_series(v, g);
  const auto r = tiltalign::phase_correlate(p0, ts.projections[0]);
  EXPECT_NEAR(r.dx, ts.applied_shifts[0].dx, 0.05);
  EXPECT_NEAR(r.dy, ts.applied_shifts[0].dy, 0.05);
}
