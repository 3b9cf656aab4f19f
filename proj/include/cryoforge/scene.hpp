#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/interp.hpp"
#include "cryoforge/core/parallel.hpp"
#include "cryoforge/core/rng.hpp"
#include "cryoforge/geometry.hpp"

namespace cryoforge::scene {

using geometry::Quaternion;
using geometry::Vec3;

struct PlacementConfig {
  Dims3 volume_dims{200, 500, 500};
  double box_size = 32.0;
  double safety_margin = 3.0;
  std::size_t target_count = 100;
  std::size_t max_attempts = 10000;
  std::uint64_t seed = 0;

  double exclusion_radius() const noexcept { return 0.5 * box_size + safety_margin; }
};

inline void validate(const PlacementConfig& cfg) {
  if (cfg.volume_dims.size() == 0) throw ConfigError("placement: volume dimensions must be positive");
  if (!(cfg.box_size > 0.0)) throw ConfigError("placement: box_size must be > 0");
  if (!(cfg.safety_margin >= 0.0)) throw ConfigError("placement: safety_margin must be >= 0");
  if (cfg.target_count < 1) throw ConfigError("placement: target_count must be >= 1");
  if (cfg.max_attempts < 1) throw ConfigError("placement: max_attempts must be >= 1");
}

/// Ground truth for one placed particle. `center` is (x, y, z) in voxels.
struct ParticleInstance {
  std::string class_label;
  Vec3 center = Vec3::Zero();
  Quaternion orientation;
};

/// Uniform rotation from three uniforms in [0, 1). Shoemake's construction
/// gives (x, y, z, w) = (sqrt(1-u1) sin 2πu2, sqrt(1-u1) cos 2πu2,
/// sqrt(u1) sin 2πu3, sqrt(u1) cos 2πu3).
inline Quaternion shoemake_quaternion(double u1, double u2, double u3) noexcept {
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return {b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3)};
}

inline Quaternion shoemake_quaternion(CounterRng& rng) noexcept {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  return shoemake_quaternion(u1, u2, u3);
}

namespace detail {

struct CellKey {
  long x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return static_cast<std::size_t>(mix64(static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL ^
                                          static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL ^
                                          static_cast<std::uint64_t>(k.z)));
  }
};

}  // namespace detail

/// Dart-throwing Poisson-disk sampling. Candidates are drawn uniformly from
/// the interior box where every face is at least R_ex away, so boundary
/// crossings never occur; a candidate closer than R_ex to an accepted center
/// is rejected. Stops at target_count or after max_attempts consecutive
/// rejections. Centers are (x, y, z) voxels.
inline std::vector<Vec3> poisson_disk_sample(const PlacementConfig& cfg) {
  validate(cfg);
  const double r = cfg.exclusion_radius();
  const std::array<double, 3> extent{static_cast<double>(cfg.volume_dims.w), static_cast<double>(cfg.volume_dims.h),
                                     static_cast<double>(cfg.volume_dims.d)};
  for (double e : extent)
    if (e < 2.0 * r)
      throw PlacementError("placement infeasible: volume " + std::to_string(cfg.volume_dims.d) + "x" +
                           std::to_string(cfg.volume_dims.h) + "x" + std::to_string(cfg.volume_dims.w) +
                           " cannot hold a center at distance " + std::to_string(r) + " from every face");

  CounterRng rng(derive_key(cfg.seed, {stream::placement}));
  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellHash> cells;
  const auto cell_of = [r](const Vec3& p) {
    return detail::CellKey{static_cast<long>(std::floor(p.x() / r)), static_cast<long>(std::floor(p.y() / r)),
                           static_cast<long>(std::floor(p.z() / r))};
  };

  std::vector<Vec3> centers;
  std::size_t misses = 0;
  while (centers.size() < cfg.target_count && misses < cfg.max_attempts) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = rng.uniform(r, extent[static_cast<std::size_t>(k)] - r);
    const auto c = cell_of(p);
    bool ok = true;
    for (long dz = -1; dz <= 1 && ok; ++dz)
      for (long dy = -1; dy <= 1 && ok; ++dy)
        for (long dx = -1; dx <= 1 && ok; ++dx) {
          const auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells.end()) continue;
          for (std::size_t j : it->second)
            if ((centers[j] - p).norm() < r) {
              ok = false;
              break;
            }
        }
    if (!ok) {
      ++misses;
      continue;
    }
    misses = 0;
    cells[c].push_back(centers.size());
    centers.push_back(p);
  }
  return centers;
}

/// Samples centers and assigns classes round-robin in the given order, each
/// with an orientation from its own substream.
inline std::vector<ParticleInstance> place_particles(const PlacementConfig& cfg,
                                                     const std::vector<std::string>& class_labels) {
  if (class_labels.empty()) throw ConfigError("placement: at least one class label is required");
  const auto centers = poisson_disk_sample(cfg);
  std::vector<ParticleInstance> out;
  out.reserve(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    CounterRng rng(derive_key(cfg.seed, {stream::orientation, i}));
    out.push_back({class_labels[i % class_labels.size()], centers[i], shoemake_quaternion(rng)});
  }
  return out;
}

/// Distance from the geometric center of `src` to the farthest nonzero voxel.
inline double support_radius(const DensityVolume& src) {
  const auto& n = src.dims();
  const Vec3 c = geometry::volume_center(n);
  double r2 = 0.0;
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w)
        if (src(d, h, w) != 0.0f) {
          const Vec3 v(static_cast<double>(w) - c.x(), static_cast<double>(h) - c.y(), static_cast<double>(d) - c.z());
          r2 = std::max(r2, v.squaredNorm());
        }
  return std::sqrt(r2);
}

/// Adds `src`, rotated about its center and translated so the center lands on
/// `center` (x, y, z in `out` voxels), into `out`. Trilinear resampling;
/// samples falling outside `out` are dropped. Rows are distributed over
/// `jobs` threads, each writing disjoint voxels.
inline void render_particle(Grid3<float>& out, const DensityVolume& src, const Vec3& center, const Quaternion& q,
                            double radius, unsigned jobs = 1) {
  const auto& n = out.dims();
  const Vec3 cs = geometry::volume_center(src.dims());
  const geometry::Mat3 rt = geometry::quaternion_to_matrix(q).transpose();
  const double reach = radius + 1.0;
  const auto lo = [&](double c) { return static_cast<long>(std::floor(c - reach)); };
  const auto hi = [&](double c) { return static_cast<long>(std::ceil(c + reach)); };
  const long d0 = std::max(0L, lo(center.z())), d1 = std::min(static_cast<long>(n.d) - 1, hi(center.z()));
  const long h0 = std::max(0L, lo(center.y())), h1 = std::min(static_cast<long>(n.h) - 1, hi(center.y()));
  const long w0 = std::max(0L, lo(center.x())), w1 = std::min(static_cast<long>(n.w) - 1, hi(center.x()));
  if (d0 > d1 || h0 > h1 || w0 > w1) return;
  parallel_for(static_cast<std::size_t>(d1 - d0 + 1), jobs, [&](std::size_t i) {
    const long d = d0 + static_cast<long>(i);
    for (long h = h0; h <= h1; ++h)
      for (long w = w0; w <= w1; ++w) {
        const Vec3 x(static_cast<double>(w), static_cast<double>(h), static_cast<double>(d));
        const Vec3 s = rt * (x - center) + cs;
        const double v = sample_trilinear(src.data, s.z(), s.y(), s.x());
        if (v != 0.0)
          out(static_cast<std::size_t>(d), static_cast<std::size_t>(h), static_cast<std::size_t>(w)) +=
              static_cast<float>(v);
      }
  });
}

/// Sums every instance's rotated class density into a volume of
/// cfg.volume_dims. Instances are rendered in list order so float
/// accumulation is reproducible for any `jobs`.
inline DensityVolume compose_sample(const std::map<std::string, DensityVolume>& density_by_class,
                                    const std::vector<ParticleInstance>& instances, const PlacementConfig& cfg,
                                    unsigned jobs = 1) {
  if (cfg.volume_dims.size() == 0) throw ConfigError("compose: volume dimensions must be positive");
  double voxel = density_by_class.empty() ? 1.0 : density_by_class.begin()->second.voxel_size;
  std::map<std::string, double> radius;
  for (const auto& [label, vol] : density_by_class) radius[label] = support_radius(vol);

  const std::array<double, 3> extent{static_cast<double>(cfg.volume_dims.w) - 1.0,
                                     static_cast<double>(cfg.volume_dims.h) - 1.0,
                                     static_cast<double>(cfg.volume_dims.d) - 1.0};
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto it = density_by_class.find(inst.class_label);
    if (it == density_by_class.end())
      throw LookupError("compose: no density for class '" + inst.class_label + "' (instance " + std::to_string(i) +
                        ")");
    const double r = radius[inst.class_label];
    for (int k = 0; k < 3; ++k)
      if (inst.center[k] - r < 0.0 || inst.center[k] + r > extent[static_cast<std::size_t>(k)])
        throw PlacementError("compose: footprint of instance " + std::to_string(i) + " (class '" + inst.class_label +
                             "', radius " + std::to_string(r) + ") exceeds the volume");
  }

  DensityVolume out(cfg.volume_dims, voxel);
  for (const auto& inst : instances)
    render_particle(out.data, density_by_class.at(inst.class_label), inst.center, inst.orientation,
                    radius[inst.class_label], jobs);
  return out;
}

}  // namespace cryoforge::scene
