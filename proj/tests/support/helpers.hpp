#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/rng.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cf") {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

template <typename A, typename B>
double pearson(const A& a, const B& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += static_cast<double>(a[i]);
    mb += static_cast<double>(b[i]);
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(a[i]) - ma, y = static_cast<double>(b[i]) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return sab / std::sqrt(saa * sbb);
}

inline cryoforge::DensityVolume random_density(cryoforge::Dims3 n, std::uint64_t seed, double voxel = 10.0) {
  cryoforge::DensityVolume v(n, voxel);
  cryoforge::CounterRng rng(seed);
  for (float& x : v.data) x = static_cast<float>(rng.normal());
  return v;
}

// Isotropic Gaussian blob centered at (cx, cy, cz) in voxel units.
inline cryoforge::DensityVolume gaussian_blob(cryoforge::Dims3 n, double cx, double cy, double cz, double sigma,
                                              double voxel = 1.0) {
  cryoforge::DensityVolume v(n, voxel);
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) {
        const double r2 = std::pow(w - cx, 2) + std::pow(h - cy, 2) + std::pow(d - cz, 2);
        v(d, h, w) = static_cast<float>(std::exp(-r2 / (2 * sigma * sigma)));
      }
  return v;
}

// Smooth image made of a few Gaussian blobs wrapped periodically (minimum
// image convention), so it has no edge discontinuity under circular shifts.
inline cryoforge::Image periodic_blobs(std::size_t h, std::size_t w, std::uint64_t seed, double sigma = 4.0,
                                       int count = 4) {
  cryoforge::Image img(h, w);
  cryoforge::CounterRng rng(seed);
  for (int k = 0; k < count; ++k) {
    const double by = rng.uniform(0, static_cast<double>(h)), bx = rng.uniform(0, static_cast<double>(w));
    const double amp = rng.uniform(0.5, 1.5);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double dy = std::fmod(std::abs(static_cast<double>(y) - by), static_cast<double>(h));
        double dx = std::fmod(std::abs(static_cast<double>(x) - bx), static_cast<double>(w));
        dy = std::min(dy, static_cast<double>(h) - dy);
        dx = std::min(dx, static_cast<double>(w) - dx);
        img(y, x) += amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      }
  }
  return img;
}

// One fixed-column PDB ATOM/HETATM record.
inline std::string pdb_line(const char* record, int serial, const char* name, const char* resname, int resseq,
                            double x, double y, double z, double occ, const char* element) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-6s%5d %-4s %3s A%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2s", record, serial,
                name, resname, resseq, x, y, z, occ, 0.0, element);
  return buf;
}

// Solid ball of carbon atoms on a cubic lattice (Å).
inline std::string solid_ball_pdb(double radius, double spacing = 4.0) {
  std::string out = "HEADER    TEST BALL                                               BALL\n";
  int serial = 1;
  const int n = static_cast<int>(std::floor(radius / spacing));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      for (int k = -n; k <= n; ++k) {
        const double x = i * spacing, y = j * spacing, z = k * spacing;
        if (x * x + y * y + z * z > radius * radius) continue;
        out += pdb_line("ATOM", serial, " C  ", "GLY", serial % 9999 + 1, x, y, z, 1.0, "C") + "\n";
        ++serial;
      }
  return out + "END\n";
}

// Hollow spherical shell of carbon atoms (Fibonacci lattice, about one atom per spacing² Å²).
inline std::string hollow_shell_pdb(double radius, double spacing = 4.0) {
  std::string out = "HEADER    TEST SHELL                                              SHEL\n";
  const int count = static_cast<int>(4.0 * 3.141592653589793 * radius * radius / (spacing * spacing));
  const double golden = 3.141592653589793 * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (i + 0.5) * 2.0 / count, rho = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    out += pdb_line("ATOM", i + 1, " C  ", "GLY", i % 9999 + 1, radius * rho * std::cos(phi),
                    radius * rho * std::sin(phi), radius * z, 1.0, "C") +
           "\n";
  }
  return out + "END\n";
}

}  // namespace testing_support
