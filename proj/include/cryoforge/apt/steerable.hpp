#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/fft.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/rng.hpp"

namespace cryoforge::apt {

/// Orthonormal real spherical harmonic Y_J^m at the unit direction (x, y, z),
/// m in [-J, J]: m > 0 uses cos(mφ), m < 0 uses sin(|m|φ).
inline double real_sph_harm(int J, int m, double x, double y, double z) {
  const int am = std::abs(m);
  const double ct = std::clamp(z, -1.0, 1.0);
  const double phi = std::atan2(y, x);
  // Normalization sqrt((2J+1)/(4π) · (J-|m|)!/(J+|m|)!).
  double ratio = 1.0;
  for (int k = J - am + 1; k <= J + am; ++k) ratio /= static_cast<double>(k);
  const double norm = std::sqrt((2.0 * J + 1.0) / (4.0 * std::numbers::pi) * ratio);
  const double plm = std::assoc_legendre(static_cast<unsigned>(J), static_cast<unsigned>(am), ct);
  if (m == 0) return norm * plm;
  const double s = std::numbers::sqrt2 * norm * plm;
  return m > 0 ? s * std::cos(am * phi) : s * std::sin(am * phi);
}

/// Rotation-aware phase scoring network built from spherical steerable
/// kernels. Weights are stored per (J, m, radial basis b).
///
/// For each degree J and radial basis b the kernels K_{J,m,b}(x) =
/// R_b(|x|) · Y_J^m(x/|x|) are correlated (circularly) with the component
/// giving a (2J+1)-vector field F_{J,b}. Under a rotation R of the input this
/// vector transforms by the orthogonal Wigner matrix of degree J, so its norm
/// is invariant. The scalar output field is
///   h = Σ_b w_{0,0,b} F_{0,b} + Σ_{J≥1,b} |w_{J,·,b}| · |F_{J,b}|
/// and the logit is the spatial mean of h.
struct SteerableSelectionNet {
  int j_max_cap = 2;
  std::vector<double> radial_centers{1.0, 2.0, 3.0};
  double radial_width = 0.75;
  int kernel_radius = 3;  // stencil edge 2 * radius + 1
  double grid_spacing = 1.0;
  std::vector<double> weights;  // size weight_count(), zero when empty
  // Test fixture: replaces the degree-1 kernels with random values that are
  // not spherical harmonics, breaking rotation equivariance on purpose.
  std::optional<std::uint64_t> broken_kernel_seed;

  std::size_t basis_count() const noexcept { return radial_centers.size(); }
  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>((j_max_cap + 1) * (j_max_cap + 1)) * basis_count();
  }
  std::size_t weight_index(int J, int m, std::size_t b) const noexcept {
    return static_cast<std::size_t>(J * J + (m + J)) * basis_count() + b;
  }
  double weight(int J, int m, std::size_t b) const noexcept {
    return weights.empty() ? 0.0 : weights[weight_index(J, m, b)];
  }
  double& weight(int J, int m, std::size_t b) {
    if (weights.empty()) weights.assign(weight_count(), 0.0);
    return weights[weight_index(J, m, b)];
  }

  int j_max(double r) const noexcept {
    const int j = static_cast<int>(std::floor(std::numbers::pi * r / grid_spacing + 1e-12));
    return std::min(j, j_max_cap);
  }
  double radial(std::size_t b, double r) const noexcept {
    const double t = (r - radial_centers[b]) / radial_width;
    return std::exp(-0.5 * t * t);
  }

  /// Standard normal weights drawn from `rng`.
  void randomize(CounterRng& rng) {
    weights.assign(weight_count(), 0.0);
    for (double& w : weights) w = rng.normal();
  }
};

inline void validate(const SteerableSelectionNet& net) {
  if (net.j_max_cap < 0) throw ConfigError("selection net: j_max_cap must be >= 0");
  if (net.radial_centers.empty()) throw ConfigError("selection net: no radial basis functions");
  if (!(net.radial_width > 0.0)) throw ConfigError("selection net: radial width must be > 0");
  if (net.kernel_radius < 0) throw ConfigError("selection net: kernel radius must be >= 0");
  if (!(net.grid_spacing > 0.0)) throw ConfigError("selection net: grid spacing must be > 0");
  if (!net.weights.empty() && net.weights.size() != net.weight_count())
    throw ConfigError("selection net: expected " + std::to_string(net.weight_count()) + " weights, got " +
                      std::to_string(net.weights.size()));
}

/// One stencil point of one kernel: offset (d, h, w) and value.
struct KernelTap {
  int dd, dh, dw;
  double value;
};

/// Kernel K_{J,m,b} sampled on the (2R+1)^3 stencil. Directions use
/// x = w, y = h, z = d; the center point carries only J = 0.
inline std::vector<KernelTap> steerable_kernel(const SteerableSelectionNet& net, int J, int m, std::size_t b) {
  std::vector<KernelTap> taps;
  const int R = net.kernel_radius;
  std::optional<CounterRng> broken;
  if (J == 1 && net.broken_kernel_seed)
    broken.emplace(derive_key(*net.broken_kernel_seed, {static_cast<std::uint64_t>(m + 1), b}));
  for (int dd = -R; dd <= R; ++dd)
    for (int dh = -R; dh <= R; ++dh)
      for (int dw = -R; dw <= R; ++dw) {
        const double x = dw * net.grid_spacing, y = dh * net.grid_spacing, z = dd * net.grid_spacing;
        const double r = std::sqrt(x * x + y * y + z * z);
        double v = 0.0;
        if (broken) {
          v = broken->uniform(-1.0, 1.0) * net.radial(b, r);
        } else if (r == 0.0) {
          if (J == 0) v = net.radial(b, 0.0) * real_sph_harm(0, 0, 0.0, 0.0, 1.0);
        } else if (J <= net.j_max(r)) {
          v = net.radial(b, r) * real_sph_harm(J, m, x / r, y / r, z / r);
        }
        if (v != 0.0) taps.push_back({dd, dh, dw, v});
      }
  return taps;
}

/// Spectra of every kernel on the periodic grid of a component, reused for
/// all components of that shape.
class KernelBank {
 public:
  KernelBank(const SteerableSelectionNet& net, const Dims3& dims)
      : net_(net),
        dims_(dims),
        fwd_({static_cast<int>(dims.d), static_cast<int>(dims.h), static_cast<int>(dims.w)}, fft::Direction::forward),
        inv_({static_cast<int>(dims.d), static_cast<int>(dims.h), static_cast<int>(dims.w)}, fft::Direction::inverse) {
    validate(net);
    for (int J = 0; J <= net.j_max_cap; ++J)
      for (int m = -J; m <= J; ++m)
        for (std::size_t b = 0; b < net.basis_count(); ++b) {
          const auto taps = steerable_kernel(net, J, m, b);
          Grid3<fft::cpx> k(dims, fft::cpx{});
          double sum = 0.0;
          for (const auto& t : taps) {
            k(Grid3<int>::wrap(t.dd, dims.d), Grid3<int>::wrap(t.dh, dims.h), Grid3<int>::wrap(t.dw, dims.w)) +=
                t.value;
            sum += t.value;
          }
          fwd_.execute(k.data());
          for (auto& v : k) v = std::conj(v);
          spectra_.push_back(std::move(k));
          sums_.push_back(sum);
        }
  }

  const Dims3& dims() const noexcept { return dims_; }

  /// Pooled logit of one component (mean of the invariant field h).
  double logit(const Grid3<double>& component) const {
    if (component.dims() != dims_) throw ShapeError("selection net: component shape does not match kernel bank");
    const std::size_t nb = net_.basis_count();
    const std::size_t nvox = component.size();
    double mean = 0.0;
    for (double v : component) mean += v;
    mean /= static_cast<double>(nvox);

    double acc = 0.0;
    // Degree 0: the mean of a circular correlation is mean(X) · Σ K.
    for (std::size_t b = 0; b < nb; ++b) acc += net_.weight(0, 0, b) * mean * sums_[net_.weight_index(0, 0, b)];
    if (net_.j_max_cap < 1) return acc;

    auto spec = fft::to_complex(component);
    fwd_.execute(spec.data());
    Grid3<fft::cpx> buf(dims_);
    std::vector<double> norm2(nvox);
    const double scale = 1.0 / static_cast<double>(nvox);
    for (int J = 1; J <= net_.j_max_cap; ++J)
      for (std::size_t b = 0; b < nb; ++b) {
        double wn = 0.0;
        for (int m = -J; m <= J; ++m) wn += net_.weight(J, m, b) * net_.weight(J, m, b);
        wn = std::sqrt(wn);
        if (wn == 0.0) continue;
        std::fill(norm2.begin(), norm2.end(), 0.0);
        for (int m = -J; m <= J; ++m) {
          const auto& ks = spectra_[net_.weight_index(J, m, b)];
          for (std::size_t i = 0; i < nvox; ++i) buf.data()[i] = spec.data()[i] * ks.data()[i];
          inv_.execute(buf.data());
          for (std::size_t i = 0; i < nvox; ++i) {
            const double f = buf.data()[i].real() * scale;
            norm2[i] += f * f;
          }
        }
        double field = 0.0;
        for (double v : norm2) field += std::sqrt(v);
        acc += wn * field / static_cast<double>(nvox);
      }
    return acc;
  }

 private:
  SteerableSelectionNet net_;
  Dims3 dims_;
  fft::Plan fwd_;
  fft::Plan inv_;
  std::vector<Grid3<fft::cpx>> spectra_;
  std::vector<double> sums_;
};

/// Pooled logit of a single component.
inline double steerable_features(const Grid3<double>& component, const SteerableSelectionNet& net) {
  return KernelBank(net, component.dims()).logit(component);
}

}  // namespace cryoforge::apt
