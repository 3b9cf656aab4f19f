#pragma once

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include "cryoforge/core/grid.hpp"

namespace cryoforge::fft {

using cpx = std::complex<double>;

enum class Direction { forward = FFTW_FORWARD, inverse = FFTW_BACKWARD };

// FFTW's planner is not reentrant; execution of an existing plan is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// In-place complex DFT plan over a fixed shape. Unnormalized in both
/// directions. Plans are created FFTW_UNALIGNED so any buffer of the right
/// shape may be passed to execute().
class Plan {
 public:
  Plan(std::vector<int> shape, Direction dir, int howmany = 1) : shape_(std::move(shape)), howmany_(howmany) {
    std::size_t n = static_cast<std::size_t>(howmany);
    for (int s : shape_) n *= static_cast<std::size_t>(s);
    std::vector<cpx> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    int dist = 1;
    for (int s : shape_) dist *= s;
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_many_dft(static_cast<int>(shape_.size()), shape_.data(), howmany, buf, nullptr, 1, dist, buf,
                               nullptr, 1, dist, static_cast<int>(dir), FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_) throw Error("FFTW failed to create a plan");
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }

  void execute(cpx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(plan_, p, p);
  }

 private:
  std::vector<int> shape_;
  int howmany_;
  fftw_plan plan_{};
};

/// Signed integer frequency index of DFT bin k for length n.
inline long signed_index(std::size_t k, std::size_t n) noexcept {
  return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

/// Frequency in cycles per sample of DFT bin k for length n.
inline double frequency(std::size_t k, std::size_t n) noexcept {
  return static_cast<double>(signed_index(k, n)) / static_cast<double>(n);
}

inline void transform(Grid3<cpx>& g, Direction dir) {
  const auto& n = g.dims();
  Plan plan({static_cast<int>(n.d), static_cast<int>(n.h), static_cast<int>(n.w)}, dir);
  plan.execute(g.data());
}

inline void transform(Grid2<cpx>& g, Direction dir) {
  Plan plan({static_cast<int>(g.height()), static_cast<int>(g.width())}, dir);
  plan.execute(g.data());
}

/// 1D transform of every row (along the fast x axis).
inline void transform_rows(Grid2<cpx>& g, Direction dir) {
  Plan plan({static_cast<int>(g.width())}, dir, static_cast<int>(g.height()));
  plan.execute(g.data());
}

template <typename T>
Grid2<cpx> to_complex(const Grid2<T>& g) {
  Grid2<cpx> out(g.dims());
  for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = cpx(static_cast<double>(g.data()[i]), 0.0);
  return out;
}

template <typename T>
Grid3<cpx> to_complex(const Grid3<T>& g) {
  Grid3<cpx> out(g.dims());
  for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = cpx(static_cast<double>(g.data()[i]), 0.0);
  return out;
}

/// Real part of an inverse transform result, divided by the element count.
inline Image real_part_normalized(const Grid2<cpx>& g) {
  Image out(g.dims());
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = g.data()[i].real() * scale;
  return out;
}

inline Grid3<double> real_part_normalized(const Grid3<cpx>& g) {
  Grid3<double> out(g.dims());
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.data()[i] = g.data()[i].real() * scale;
  return out;
}

/// Translates an image by (dx, dy) pixels with periodic boundaries using the
/// Fourier shift theorem: out(x, y) = in(x - dx, y - dy). Nyquist bins of
/// even-length axes use the real (cosine) factor so the output stays real.
inline Image fourier_shift(const Image& img, double dx, double dy) {
  auto spec = to_complex(img);
  transform(spec, Direction::forward);
  const std::size_t h = img.height(), w = img.width();
  const double two_pi = 2.0 * 3.14159265358979323846;
  std::vector<cpx> fx(w), fy(h);
  for (std::size_t k = 0; k < w; ++k) {
    const double ph = -two_pi * frequency(k, w) * dx;
    fx[k] = (w % 2 == 0 && k == w / 2) ? cpx(std::cos(ph), 0.0) : std::polar(1.0, ph);
  }
  for (std::size_t k = 0; k < h; ++k) {
    const double ph = -two_pi * frequency(k, h) * dy;
    fy[k] = (h % 2 == 0 && k == h / 2) ? cpx(std::cos(ph), 0.0) : std::polar(1.0, ph);
  }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) spec(y, x) *= fy[y] * fx[x];
  transform(spec, Direction::inverse);
  return real_part_normalized(spec);
}

}  // namespace cryoforge::fft
