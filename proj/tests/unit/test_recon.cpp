#include <gtest/gtest.h>

#include "cryoforge/recon.hpp"
#include "support/helpers.hpp"

using namespace cryoforge;
using namespace cryoforge::recon;
using testing_support::gaussian_blob;

namespace {

constexpr std::size_t kEdge = 32;

tiltsim::TiltSeries blob_series(double max_angle, const DensityVolume& vol) {
  tiltsim::TiltGeometry g;
  g.angles = tiltsim::angle_range(-max_angle, max_angle, 2.0);
  g.shift_range = 0.0;
  return tiltsim::simulate_tilt_series(vol, g);
}

const DensityVolume& centered_blob() {
  static const DensityVolume v = gaussian_blob({kEdge, kEdge, kEdge}, 15.5, 15.5, 15.5, 3.0);
  return v;
}

const tiltsim::TiltSeries& full_series() {
  static const auto s = blob_series(90, centered_blob());
  return s;
}

ReconConfig config(Weighting w = Weighting::abs_cos) {
  ReconConfig c;
  c.output_dims = {kEdge, kEdge, kEdge};
  c.weighting = w;
  return c;
}

// Pearson correlation over the region excluding a 4-voxel border.
double central_correlation(const DensityVolume& a, const DensityVolume& b) {
  std::vector<double> x, y;
  const auto& n = a.dims();
  for (std::size_t d = 4; d + 4 < n.d; ++d)
    for (std::size_t h = 4; h + 4 < n.h; ++h)
      for (std::size_t w = 4; w + 4 < n.w; ++w) {
        x.push_back(a(d, h, w));
        y.push_back(b(d, h, w));
      }
  return testing_support::pearson(x, y);
}

}  // namespace

TEST(FilterResponse, HannRampFormula) {
  EXPECT_EQ(filter_response(Filter::hann_ramp, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(filter_response(Filter::hann_ramp, 0.25), 0.5 * (0.5 + 0.5 * std::cos(std::numbers::pi * 0.5)));
  EXPECT_NEAR(filter_response(Filter::hann_ramp, 0.5), 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(filter_response(Filter::ramp, -0.25), 0.5);
  EXPECT_EQ(filter_response(Filter::none, 0.3), 1.0);
  EXPECT_EQ(parse_filter("ramp"), Filter::ramp);
  EXPECT_EQ(parse_weighting("uniform"), Weighting::uniform);
  EXPECT_THROW(parse_filter("shepp"), ConfigError);
  EXPECT_THROW(parse_weighting("cos2"), ConfigError);
}

TEST(FilterProjection, ConstantImageBecomesZero) {
  const Image c(8, 16, 2.5);
  for (double v : filter_projection(c, config())) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(FilterProjection, NoneIsIdentity) {
  const auto img = testing_support::periodic_blobs(8, 16, 3);
  ReconConfig cfg = config();
  cfg.filter = Filter::none;
  EXPECT_EQ(filter_projection(img, cfg), img);
}

TEST(FilterProjection, ImpulseMatchesDirectInverseDft) {
  for (std::size_t w : {16u, 17u}) {
    Image img(3, w, 0.0);
    const std::size_t x0 = 5;
    img(1, x0) = 1.0;
    const auto out = filter_projection(img, config());
    for (std::size_t x = 0; x < w; ++x) {
      double ref = 0;
      for (std::size_t k = 0; k < w; ++k) {
        const long sk = k <= w / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(w);
        const double f = static_cast<double>(sk) / static_cast<double>(w);
        const double r = std::abs(f) / 0.5;
        const double hk = r <= 1 ? r * (0.5 + 0.5 * std::cos(std::numbers::pi * r)) : 0.0;
        ref += hk * std::cos(2 * std::numbers::pi * static_cast<double>(k) * (double(x) - double(x0)) / double(w));
      }
      ref /= static_cast<double>(w);
      EXPECT_NEAR(out(1, x), ref, 1e-6) << "w=" << w << " x=" << x;
      EXPECT_NEAR(out(0, x), 0.0, 1e-12);
    }
  }
}

TEST(FilterProjection, TiltAxisDirectionIsUnfiltered) {
  // A column impulse stays confined to its column profile: rows are
  // filtered independently, so an image constant along x is annihilated row
  // by row whatever its y profile.
  Image img(8, 16, 0.0);
  for (std::size_t x = 0; x < 16; ++x) img(3, x) = 1.0;
  for (double v : filter_projection(img, config())) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(FilterProjection, ZeroPaddingGivesLinearConvolution) {
  Image img(1, 12, 0.0);
  img(0, 0) = 1.0;
  const auto padded = filter_projection(img, Filter::ramp, 64);
  // Linear-convolution oracle: kernel of the ramp on the padded length, no wrap.
  for (std::size_t x = 0; x < 12; ++x) {
    double ref = 0;
    for (std::size_t k = 0; k < 64; ++k) {
      const long sk = k <= 32 ? static_cast<long>(k) : static_cast<long>(k) - 64;
      ref += std::abs(static_cast<double>(sk) / 64.0) / 0.5 * std::cos(2 * std::numbers::pi * k * double(x) / 64.0);
    }
    EXPECT_NEAR(padded(0, x), ref / 64.0, 1e-9);
  }
}

TEST(Wbp, FullRangePeakAtTrueCenter) {
  const auto rec = wbp_reconstruct(full_series(), {}, config());
  const auto it = std::max_element(rec.data.begin(), rec.data.end());
  const auto i = static_cast<std::size_t>(it - rec.data.begin());
  const double w = static_cast<double>(i % kEdge), h = static_cast<double>((i / kEdge) % kEdge),
               d = static_cast<double>(i / (kEdge * kEdge));
  EXPECT_LE(std::abs(w - 15.5), 1.0);
  EXPECT_LE(std::abs(h - 15.5), 1.0);
  EXPECT_LE(std::abs(d - 15.5), 1.0);
}

TEST(Wbp, MissingWedgeLowersButKeepsCorrelation) {
  const auto full = central_correlation(wbp_reconstruct(full_series(), {}, config()), centered_blob());
  const auto wedge =
      central_correlation(wbp_reconstruct(blob_series(60, centered_blob()), {}, config()), centered_blob());
  EXPECT_GE(full, 0.90);
  EXPECT_GE(wedge, 0.70);
  EXPECT_LT(wedge, full);
}

TEST(Wbp, UsesRecoveredShifts) {
  // Drifted series corrected by the true drift matches the drift-free result.
  tiltsim::TiltGeometry g;
  g.angles = tiltsim::angle_range(-60, 60, 6);
  g.seed = 7;
  const auto drifted = tiltsim::simulate_tilt_series(centered_blob(), g);
  g.shift_range = 0;
  const auto clean = tiltsim::simulate_tilt_series(centered_blob(), g);
  tiltalign::AlignmentResult truth;
  truth.shifts = drifted.applied_shifts;
  const auto a = wbp_reconstruct(drifted, truth, config()), b = wbp_reconstruct(clean, {}, config());
  double worst = 0, peak = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    worst = std::max(worst, double(std::abs(a.data.data()[i] - b.data.data()[i])));
    peak = std::max(peak, double(std::abs(b.data.data()[i])));
  }
  EXPECT_LT(worst, 0.02 * peak);
}

TEST(Wbp, LinearInProjections) {
  auto scaled = full_series();
  for (auto& p : scaled.projections)
    for (double& v : p) v *= 3.5;
  const auto a = wbp_reconstruct(full_series(), {}, config()), b = wbp_reconstruct(scaled, {}, config());
  double peak = 0;
  for (float v : a.data) peak = std::max(peak, double(std::abs(v)));
  for (std::size_t i = 0; i < a.data.size(); ++i)
    EXPECT_NEAR(b.data.data()[i], 3.5 * a.data.data()[i], 1e-6 * 3.5 * peak);
}

TEST(Wbp, YSymmetricPhantomGivesYSymmetricVolume) {
  // Two blobs mirrored about the central h plane, off-centre in x and z.
  DensityVolume v(Dims3{kEdge, kEdge, kEdge});
  const auto a = gaussian_blob({kEdge, kEdge, kEdge}, 11.0, 10.0, 18.0, 2.5);
  const auto b = gaussian_blob({kEdge, kEdge, kEdge}, 11.0, 21.0, 18.0, 2.5);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data.data()[i] = a.data.data()[i] + b.data.data()[i];
  const auto rec = wbp_reconstruct(blob_series(60, v), {}, config());
  double worst = 0, peak = 0;
  for (std::size_t d = 0; d < kEdge; ++d)
    for (std::size_t h = 0; h < kEdge; ++h)
      for (std::size_t w = 0; w < kEdge; ++w) {
        worst = std::max(worst, double(std::abs(rec(d, h, w) - rec(d, kEdge - 1 - h, w))));
        peak = std::max(peak, double(std::abs(rec(d, h, w))));
      }
  EXPECT_LT(worst, 0.01 * peak);
}

TEST(Wbp, ParallelMatchesSerial) {
  auto cfg = config();
  const auto a = wbp_reconstruct(full_series(), {}, cfg);
  cfg.jobs = 3;
  EXPECT_EQ(wbp_reconstruct(full_series(), {}, cfg).data, a.data);
}

TEST(Wbp, ShapeAndCountErrors) {
  auto cfg = config();
  cfg.output_dims = {kEdge, kEdge + 1, kEdge};
  EXPECT_THROW(wbp_reconstruct(full_series(), {}, cfg), ShapeError);
  auto two = full_series();
  two.projections.resize(2);
  two.geometry.angles.resize(2);
  EXPECT_THROW(wbp_reconstruct(two, {}, config()), PreconditionError);
  tiltalign::AlignmentResult bad;
  bad.shifts.resize(3);
  EXPECT_THROW(wbp_reconstruct(full_series(), bad, config()), ShapeError);
}

// |cos θ| weighting against uniform weighting on a noise-free full-range
// series of the Gaussian phantom.
TEST(Wbp, AbsCosWeightingDoesNotLowerCorrelation) {
  const auto abs_cos = central_correlation(wbp_reconstruct(full_series(), {}, config()), centered_blob());
  const auto uniform =
      central_correlation(wbp_reconstruct(full_series(), {}, config(Weighting::uniform)), centered_blob());
  RecordProperty("abs_cos", std::to_string(abs_cos));
  RecordProperty("uniform", std::to_string(uniform));
  EXPECT_GE(abs_cos, uniform);
}
