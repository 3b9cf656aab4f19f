#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/rng.hpp"
#include "cryoforge/io/metadata.hpp"
#include "cryoforge/scene.hpp"

namespace cryoforge::subtomo {

struct ExtractionConfig {
  std::size_t box = 32;
  long jitter_range = 2;
  double neighbor_exclusion = 17.0;
  std::uint64_t seed = 0;
  double mask_threshold = 0.05;
};

inline void validate(const ExtractionConfig& cfg) {
  if (cfg.box < 8) throw ConfigError("extraction: box must be >= 8");
  if (cfg.jitter_range < 0) throw ConfigError("extraction: jitter_range must be >= 0");
  if (!(cfg.neighbor_exclusion > 0.0)) throw ConfigError("extraction: neighbor_exclusion must be > 0");
  if (!(cfg.mask_threshold >= 0.0 && cfg.mask_threshold <= 1.0))
    throw ConfigError("extraction: mask_threshold must be in [0, 1]");
}

struct Subtomogram {
  std::size_t instance_index = 0;
  std::array<long, 3> crop_center{};  // (x, y, z) voxels in the tomogram
  DensityVolume volume;
  io::SubtomogramRecord record;  // volume_path / mask_path left for the writer
};

struct Rejection {
  std::size_t instance_index = 0;
  std::string reason;  // "boundary" or "neighbor"
};

struct ExtractionResult {
  std::vector<Subtomogram> accepted;
  std::vector<Rejection> rejections;
};

/// Integer jitter of instance `index`, uniform in [-range, range]^3, (x, y, z).
inline std::array<long, 3> jitter_for(const ExtractionConfig& cfg, std::size_t index) {
  CounterRng rng(derive_key(cfg.seed, {stream::jitter, index}));
  std::array<long, 3> j{};
  for (auto& v : j) v = rng.uniform_int(-cfg.jitter_range, cfg.jitter_range);
  return j;
}

/// Crops box³ cubes [c - box/2, c + box/2) around each jittered, rounded
/// center. Instances whose cube leaves the tomogram are rejected with reason
/// "boundary"; those with another recorded center closer than
/// neighbor_exclusion to the crop center with reason "neighbor".
/// center_offset records crop center minus particle center.
inline ExtractionResult extract(const DensityVolume& tomo, const std::vector<scene::ParticleInstance>& instances,
                                const ExtractionConfig& cfg) {
  validate(cfg);
  const auto& n = tomo.dims();
  const std::array<long, 3> extent{static_cast<long>(n.w), static_cast<long>(n.h), static_cast<long>(n.d)};
  const long half = static_cast<long>(cfg.box / 2);
  const long box = static_cast<long>(cfg.box);
  ExtractionResult res;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto jit = jitter_for(cfg, i);
    std::array<long, 3> c{};
    bool inside = true;
    for (std::size_t k = 0; k < 3; ++k) {
      c[k] = static_cast<long>(std::lround(inst.center[static_cast<int>(k)])) + jit[k];
      if (c[k] - half < 0 || c[k] - half + box > extent[k]) inside = false;
    }
    if (!inside) {
      res.rejections.push_back({i, "boundary"});
      continue;
    }
    const geometry::Vec3 cc(static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2]));
    bool crowded = false;
    for (std::size_t j = 0; j < instances.size() && !crowded; ++j)
      if (j != i && (instances[j].center - cc).norm() < cfg.neighbor_exclusion) crowded = true;
    if (crowded) {
      res.rejections.push_back({i, "neighbor"});
      continue;
    }

    Subtomogram st;
    st.instance_index = i;
    st.crop_center = c;
    st.volume = DensityVolume(Dims3{cfg.box, cfg.box, cfg.box}, tomo.voxel_size);
    for (std::size_t k = 0; k < 3; ++k)
      st.volume.origin[k] = tomo.origin[k] + static_cast<double>(c[k] - half) * tomo.voxel_size;
    for (long d = 0; d < box; ++d)
      for (long h = 0; h < box; ++h)
        for (long w = 0; w < box; ++w)
          st.volume(static_cast<std::size_t>(d), static_cast<std::size_t>(h), static_cast<std::size_t>(w)) =
              tomo(static_cast<std::size_t>(c[2] - half + d), static_cast<std::size_t>(c[1] - half + h),
                   static_cast<std::size_t>(c[0] - half + w));
    st.record.class_label = inst.class_label;
    st.record.orientation = inst.orientation;
    for (std::size_t k = 0; k < 3; ++k)
      st.record.center_offset[k] = static_cast<double>(c[k]) - inst.center[static_cast<int>(k)];
    st.record.snr_tag = io::SnrTag::clean;
    res.accepted.push_back(std::move(st));
  }
  return res;
}

/// Ground-truth particle density in the frame of a crop: the class density
/// rotated by the instance orientation and placed at the particle center
/// relative to the crop corner.
inline DensityVolume particle_in_box(const DensityVolume& class_density, const scene::ParticleInstance& inst,
                                     const std::array<long, 3>& crop_center, std::size_t box) {
  DensityVolume out(Dims3{box, box, box}, class_density.voxel_size);
  const long half = static_cast<long>(box / 2);
  geometry::Vec3 local;
  for (int k = 0; k < 3; ++k)
    local[k] = inst.center[k] - static_cast<double>(crop_center[static_cast<std::size_t>(k)] - half);
  scene::render_particle(out.data, class_density, local, inst.orientation, scene::support_radius(class_density));
  return out;
}

struct MaskResult {
  DensityVolume mask;
  bool empty = false;
};

/// 1 where density >= threshold · max(density), else 0. An all-zero (or
/// non-positive) density yields an all-zero mask with `empty` set.
inline MaskResult make_mask(const DensityVolume& density, double threshold) {
  MaskResult r{DensityVolume(density.dims(), density.voxel_size), false};
  r.mask.origin = density.origin;
  float peak = 0.0f;
  for (float v : density.data) peak = std::max(peak, v);
  if (!(peak > 0.0f)) {
    r.empty = true;
    return r;
  }
  const double cut = threshold * static_cast<double>(peak);
  bool any = false;
  for (std::size_t i = 0; i < density.data.size(); ++i)
    if (static_cast<double>(density.data.data()[i]) >= cut) {
      r.mask.data.data()[i] = 1.0f;
      any = true;
    }
  r.empty = !any;
  return r;
}

inline MaskResult make_mask(const DensityVolume& density, const ExtractionConfig& cfg) {
  return make_mask(density, cfg.mask_threshold);
}

struct NoiseSpec {
  double snr_target = 100.0;
  std::uint64_t seed = 0;
};

/// Population variance of the volume, optionally restricted to mask > 0.
inline double signal_variance(const DensityVolume& clean, const DensityVolume* mask = nullptr) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < clean.data.size(); ++i) {
    if (mask && !(mask->data.data()[i] > 0.0f)) continue;
    const double v = clean.data.data()[i];
    sum += v;
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  for (std::size_t i = 0; i < clean.data.size(); ++i) {
    if (mask && !(mask->data.data()[i] > 0.0f)) continue;
    const double dv = clean.data.data()[i] - mean;
    sum2 += dv * dv;
  }
  return sum2 / static_cast<double>(count);
}

inline double noise_sigma(const DensityVolume& clean, const NoiseSpec& spec, const DensityVolume* mask = nullptr) {
  if (!(spec.snr_target > 0.0) || !std::isfinite(spec.snr_target))
    throw ConfigError("add_noise: snr_target must be a positive finite number");
  const double v_sig = signal_variance(clean, mask);
  if (!(v_sig > 0.0)) throw DegenerateInputError("add_noise: clean volume has zero variance");
  return std::sqrt(v_sig / spec.snr_target);
}

/// The Gaussian field add_noise draws for `seed`, re-created on demand.
inline Grid3<double> regenerate_noise(const Dims3& dims, double sigma, std::uint64_t seed) {
  Grid3<double> g(dims);
  CounterRng rng(derive_key(seed, {stream::noise}));
  for (double& v : g) v = sigma * rng.normal();
  return g;
}

/// V_noisy = S + N with N ~ N(0, σ²), σ² = v_sig / snr_target, v_sig the
/// population variance of `clean` (over mask > 0 if a mask is given).
inline DensityVolume add_noise(const DensityVolume& clean, const NoiseSpec& spec,
                               const DensityVolume* variance_mask = nullptr) {
  validate(clean);
  const double sigma = noise_sigma(clean, spec, variance_mask);
  const auto noise = regenerate_noise(clean.dims(), sigma, spec.seed);
  DensityVolume out(clean.dims(), clean.voxel_size);
  out.origin = clean.origin;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data.data()[i] = static_cast<float>(static_cast<double>(clean.data.data()[i]) + noise.data()[i]);
  return out;
}

/// Seed for the noise of one subtomogram at one SNR level.
inline std::uint64_t noise_seed(std::uint64_t seed, std::size_t instance_index, double snr) {
  return derive_key(seed, {stream::noise, instance_index, static_cast<std::uint64_t>(std::llround(snr * 1e6))});
}

}  // namespace cryoforge::subtomo
