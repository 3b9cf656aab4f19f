#include <gtest/gtest.h>

#include <numeric>

#include "cryoforge/subtomo.hpp"
#include "support/helpers.hpp"

using namespace cryoforge;
using namespace cryoforge::subtomo;
using scene::ParticleInstance;

namespace {

DensityVolume indexed_volume(Dims3 n) {
  DensityVolume v(n, 10.0);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data.data()[i] = static_cast<float>(i);
  return v;
}

ExtractionConfig no_jitter() {
  ExtractionConfig c;
  c.jitter_range = 0;
  return c;
}

double measured_snr(const DensityVolume& clean, const DensityVolume& noisy) {
  // Independent two-pass variance of the difference.
  double s = 0;
  const std::size_t n = clean.data.size();
  for (std::size_t i = 0; i < n; ++i) s += double(noisy.data.data()[i]) - clean.data.data()[i];
  const double m = s / n;
  double v = 0;
  for (std::size_t i = 0; i < n; ++i) v += std::pow(double(noisy.data.data()[i]) - clean.data.data()[i] - m, 2);
  return signal_variance(clean) / (v / n);
}

}  // namespace

TEST(Extract, CenteredCropIsWholeTomogram) {
  const auto tomo = indexed_volume({32, 32, 32});
  const auto res = extract(tomo, {{"A", {16, 16, 16}, {}}}, no_jitter());
  ASSERT_EQ(res.accepted.size(), 1u);
  EXPECT_EQ(res.accepted[0].volume.data, tomo.data);
  EXPECT_TRUE(res.rejections.empty());
}

TEST(Extract, NearFaceIsBoundaryRejection) {
  const auto tomo = indexed_volume({64, 64, 64});
  const auto res = extract(tomo, {{"A", {10, 32, 32}, {}}}, no_jitter());
  EXPECT_TRUE(res.accepted.empty());
  ASSERT_EQ(res.rejections.size(), 1u);
  EXPECT_EQ(res.rejections[0].reason, "boundary");
}

TEST(Extract, CloseNeighboursAreBothRejected) {
  const auto tomo = indexed_volume({64, 64, 96});
  const auto res = extract(tomo, {{"A", {40, 32, 32}, {}}, {"B", {56, 32, 32}, {}}}, no_jitter());
  EXPECT_TRUE(res.accepted.empty());
  ASSERT_EQ(res.rejections.size(), 2u);
  EXPECT_EQ(res.rejections[0].reason, "neighbor");
  EXPECT_EQ(res.rejections[1].reason, "neighbor");
  // 17 apart is allowed.
  const auto ok = extract(tomo, {{"A", {40, 32, 32}, {}}, {"B", {57, 32, 32}, {}}}, no_jitter());
  EXPECT_EQ(ok.accepted.size(), 2u);
}

TEST(Extract, CropContentAndRecordFields) {
  const auto tomo = indexed_volume({48, 50, 60});
  const ParticleInstance inst{"7XYZ", {30.4, 24.6, 23.2}, {0.5, 0.5, 0.5, 0.5}};
  ExtractionConfig cfg;
  cfg.seed = 3;
  const auto res = extract(tomo, {inst}, cfg);
  ASSERT_EQ(res.accepted.size(), 1u);
  const auto& st = res.accepted[0];
  const auto jit = jitter_for(cfg, 0);
  const std::array<long, 3> expect_center{30 + jit[0], 25 + jit[1], 23 + jit[2]};
  EXPECT_EQ(st.crop_center, expect_center);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(std::abs(jit[k]), 2);
    EXPECT_DOUBLE_EQ(st.record.center_offset[k], expect_center[k] - inst.center[static_cast<int>(k)]);
  }
  EXPECT_EQ(st.record.class_label, "7XYZ");
  EXPECT_EQ(st.record.orientation, inst.orientation);
  EXPECT_EQ(st.volume(0, 0, 0), tomo(expect_center[2] - 16, expect_center[1] - 16, expect_center[0] - 16));
  EXPECT_EQ(st.volume(31, 31, 31), tomo(expect_center[2] + 15, expect_center[1] + 15, expect_center[0] + 15));
}

TEST(Extract, AcceptedCropsSatisfyInvariants) {
  scene::PlacementConfig pc;
  pc.volume_dims = {64, 160, 160};
  pc.box_size = 24;  // denser than the extraction exclusion so both rejection kinds occur
  pc.safety_margin = 0;
  pc.target_count = 60;
  pc.seed = 9;
  const auto inst = scene::place_particles(pc, {"A"});
  DensityVolume tomo(pc.volume_dims, 10.0);
  ExtractionConfig cfg;
  cfg.seed = 4;
  cfg.neighbor_exclusion = 20;
  const auto res = extract(tomo, inst, cfg);
  EXPECT_EQ(res.accepted.size() + res.rejections.size(), inst.size());
  std::size_t prev = 0;
  for (std::size_t k = 0; k < res.accepted.size(); ++k) {
    const auto& st = res.accepted[k];
    if (k) EXPECT_GT(st.instance_index, prev);
    prev = st.instance_index;
    const auto& c = st.crop_center;
    EXPECT_GE(c[0] - 16, 0);
    EXPECT_LE(c[0] + 16, 160);
    EXPECT_GE(c[1] - 16, 0);
    EXPECT_LE(c[1] + 16, 160);
    EXPECT_GE(c[2] - 16, 0);
    EXPECT_LE(c[2] + 16, 64);
    for (std::size_t j = 0; j < inst.size(); ++j)
      if (j != st.instance_index)
        EXPECT_GE((inst[j].center - geometry::Vec3(c[0], c[1], c[2])).norm(), 20.0);
  }
}

TEST(Extract, ConfigValidation) {
  ExtractionConfig c;
  c.box = 4;
  EXPECT_THROW(extract(indexed_volume({8, 8, 8}), {}, c), ConfigError);
  c = {};
  c.neighbor_exclusion = 0;
  EXPECT_THROW(extract(indexed_volume({8, 8, 8}), {}, c), ConfigError);
}

TEST(Mask, ThresholdDefinition) {
  DensityVolume v(Dims3{4, 4, 4});
  CounterRng rng(2);
  for (float& x : v.data) x = static_cast<float>(rng.uniform(0, 0.1));
  v(1, 2, 3) = 1.0f;
  v(0, 0, 0) = 0.05f;
  const auto m = make_mask(v, ExtractionConfig{});
  EXPECT_FALSE(m.empty);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    EXPECT_EQ(m.mask.data.data()[i], v.data.data()[i] >= 0.05f ? 1.0f : 0.0f);
}

TEST(Mask, ZeroDensityGivesEmptyMask) {
  const auto m = make_mask(DensityVolume(Dims3{5, 5, 5}), 0.05);
  EXPECT_TRUE(m.empty);
  for (float x : m.mask.data) EXPECT_EQ(x, 0.0f);
}

TEST(Mask, GaussianBlobCountMatchesThresholdingOracle) {
  const auto blob = testing_support::gaussian_blob({32, 32, 32}, 15.2, 16.1, 15.7, 3.0);
  const auto m = make_mask(blob, 0.05);
  float peak = 0;
  for (float x : blob.data) peak = std::max(peak, x);
  std::size_t expected = 0, got = 0;
  for (float x : blob.data) expected += double(x) >= 0.05 * double(peak);
  for (float x : m.mask.data) got += x == 1.0f;
  EXPECT_EQ(got, expected);
  EXPECT_GT(expected, 100u);
}

TEST(Noise, SigmaFollowsVarianceOverSnr) {
  // Two-valued volume with population variance exactly 1.
  DensityVolume v(Dims3{2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) v.data.data()[i] = i % 2 ? 1.0f : -1.0f;
  EXPECT_DOUBLE_EQ(signal_variance(v), 1.0);
  EXPECT_DOUBLE_EQ(std::pow(noise_sigma(v, {0.01, 0}), 2), 100.0);
  EXPECT_DOUBLE_EQ(noise_sigma(v, {100, 0}), 0.1);
}

TEST(Noise, ZeroVarianceAndBadTargetAreErrors) {
  DensityVolume flat(Dims3{4, 4, 4});
  for (float& x : flat.data) x = 2.0f;
  EXPECT_THROW(add_noise(flat, {0.1, 0}), DegenerateInputError);
  const auto v = testing_support::random_density({4, 4, 4}, 1);
  EXPECT_THROW(add_noise(v, {0.0, 0}), ConfigError);
  EXPECT_THROW(add_noise(v, {-1.0, 0}), ConfigError);
}

TEST(Noise, MeasuredSnrWithinFivePercentPooled) {
  const auto clean = testing_support::gaussian_blob({32, 32, 32}, 15.5, 15.5, 15.5, 5.0);
  for (double target : {100.0, 0.10, 0.05, 0.03, 0.01}) {
    double ratio = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      ratio += measured_snr(clean, add_noise(clean, {target, seed})) / target;
    ratio /= 20;
    EXPECT_GE(ratio, 0.95) << target;
    EXPECT_LE(ratio, 1.05) << target;
  }
}

TEST(Noise, UnitVarianceAtSnr100HasStdPointOne) {
  const auto clean = testing_support::random_density({32, 32, 32}, 5);
  const double scale = 1.0 / std::sqrt(signal_variance(clean));
  DensityVolume unit(clean.dims());
  for (std::size_t i = 0; i < unit.data.size(); ++i) unit.data.data()[i] = float(clean.data.data()[i] * scale);
  const auto noisy = add_noise(unit, {100, 1});
  double s2 = 0;
  for (std::size_t i = 0; i < unit.data.size(); ++i) s2 += std::pow(double(noisy.data.data()[i]) - unit.data.data()[i], 2);
  EXPECT_NEAR(std::sqrt(s2 / unit.data.size()), 0.1 * std::sqrt(signal_variance(unit)), 0.002);
}

TEST(Noise, RegeneratedFieldReproducesNoisyVolume) {
  const auto clean = testing_support::gaussian_blob({16, 16, 16}, 7.5, 7.5, 7.5, 3.0);
  const NoiseSpec spec{0.03, 77};
  const auto noisy = add_noise(clean, spec);
  const auto field = regenerate_noise(clean.dims(), noise_sigma(clean, spec), spec.seed);
  for (std::size_t i = 0; i < clean.data.size(); ++i) {
    // Bit-exact against the float rounding of clean + field...
    EXPECT_EQ(noisy.data.data()[i], static_cast<float>(double(clean.data.data()[i]) + field.data()[i]));
    // ...so subtracting the field recovers clean to within that rounding.
    const double back = double(noisy.data.data()[i]) - field.data()[i];
    const float n = noisy.data.data()[i];
    const double half_ulp = 0.5 * (std::nextafter(std::abs(n), INFINITY) - std::abs(n));
    EXPECT_LE(std::abs(back - clean.data.data()[i]), half_ulp);
  }
}

TEST(Noise, DeterministicPerSeed) {
  const auto clean = testing_support::random_density({8, 8, 8}, 5);
  EXPECT_EQ(add_noise(clean, {0.1, 3}).data, add_noise(clean, {0.1, 3}).data);
  EXPECT_NE(add_noise(clean, {0.1, 3}).data, add_noise(clean, {0.1, 4}).data);
  EXPECT_NE(noise_seed(1, 0, 0.1), noise_seed(1, 0, 0.05));
  EXPECT_NE(noise_seed(1, 0, 0.1), noise_seed(1, 1, 0.1));
}

TEST(Noise, MaskedVarianceUsesOnlyMaskVoxels) {
  const auto clean = testing_support::gaussian_blob({16, 16, 16}, 7.5, 7.5, 7.5, 2.0);
  const auto m = make_mask(clean, 0.05);
  std::vector<double> inside;
  for (std::size_t i = 0; i < clean.data.size(); ++i)
    if (m.mask.data.data()[i] > 0) inside.push_back(clean.data.data()[i]);
  const double mean = std::accumulate(inside.begin(), inside.end(), 0.0) / inside.size();
  double var = 0;
  for (double x : inside) var += (x - mean) * (x - mean);
  EXPECT_NEAR(signal_variance(clean, &m.mask), var / inside.size(), 1e-12);
  EXPECT_GT(signal_variance(clean, &m.mask), signal_variance(clean));
}
