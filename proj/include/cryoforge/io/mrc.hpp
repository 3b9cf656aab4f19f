#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"

// MRC2014, mode 2 (float32) only, little-endian. Columns (nx) map to the w
// axis, rows (ny) to h and sections (nz) to d.
namespace cryoforge::io {

static_assert(std::endian::native == std::endian::little, "MRC I/O assumes a little-endian host");

inline constexpr std::size_t kMrcHeaderBytes = 1024;
inline constexpr std::int32_t kMrcModeFloat32 = 2;
inline constexpr std::int32_t kMrcVersion = 20140;

struct MrcHeader {
  std::int32_t nx = 0, ny = 0, nz = 0;
  std::int32_t mode = kMrcModeFloat32;
  std::int32_t nxstart = 0, nystart = 0, nzstart = 0;
  std::int32_t mx = 0, my = 0, mz = 0;
  float cella[3] = {0, 0, 0};
  float cellb[3] = {90, 90, 90};
  std::int32_t mapc = 1, mapr = 2, maps = 3;
  float dmin = 0, dmax = 0, dmean = 0;
  std::int32_t ispg = 1;
  std::int32_t nsymbt = 0;
  std::int32_t nversion = kMrcVersion;
  float origin[3] = {0, 0, 0};
  float rms = 0;
  std::int32_t nlabl = 0;
  std::array<char, 800> labels{};
};

namespace detail {

template <typename T>
T load(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store(unsigned char* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

}  // namespace detail

inline std::array<unsigned char, kMrcHeaderBytes> encode_header(const MrcHeader& h) {
  using detail::store;
  std::array<unsigned char, kMrcHeaderBytes> b{};
  unsigned char* p = b.data();
  store(p + 0, h.nx);
  store(p + 4, h.ny);
  store(p + 8, h.nz);
  store(p + 12, h.mode);
  store(p + 16, h.nxstart);
  store(p + 20, h.nystart);
  store(p + 24, h.nzstart);
  store(p + 28, h.mx);
  store(p + 32, h.my);
  store(p + 36, h.mz);
  for (int i = 0; i < 3; ++i) store(p + 40 + 4 * i, h.cella[i]);
  for (int i = 0; i < 3; ++i) store(p + 52 + 4 * i, h.cellb[i]);
  store(p + 64, h.mapc);
  store(p + 68, h.mapr);
  store(p + 72, h.maps);
  store(p + 76, h.dmin);
  store(p + 80, h.dmax);
  store(p + 84, h.dmean);
  store(p + 88, h.ispg);
  store(p + 92, h.nsymbt);
  std::memcpy(p + 104, "\0\0\0\0", 4);  // EXTTYP
  store(p + 108, h.nversion);
  for (int i = 0; i < 3; ++i) store(p + 196 + 4 * i, h.origin[i]);
  std::memcpy(p + 208, "MAP ", 4);
  p[212] = 0x44;
  p[213] = 0x44;
  p[214] = 0x00;
  p[215] = 0x00;
  store(p + 216, h.rms);
  store(p + 220, h.nlabl);
  std::memcpy(p + 224, h.labels.data(), h.labels.size());
  return b;
}

inline MrcHeader decode_header(const unsigned char* p) {
  using detail::load;
  MrcHeader h;
  if (std::memcmp(p + 208, "MAP ", 4) != 0) throw FormatError("map", "missing 'MAP ' identifier at byte 208");
  if (p[212] != 0x44 || (p[213] != 0x44 && p[213] != 0x41))
    throw FormatError("machst", "machine stamp is not little-endian (expected 0x44 0x44)");
  h.nx = load<std::int32_t>(p + 0);
  h.ny = load<std::int32_t>(p + 4);
  h.nz = load<std::int32_t>(p + 8);
  h.mode = load<std::int32_t>(p + 12);
  h.nxstart = load<std::int32_t>(p + 16);
  h.nystart = load<std::int32_t>(p + 20);
  h.nzstart = load<std::int32_t>(p + 24);
  h.mx = load<std::int32_t>(p + 28);
  h.my = load<std::int32_t>(p + 32);
  h.mz = load<std::int32_t>(p + 36);
  for (int i = 0; i < 3; ++i) h.cella[i] = load<float>(p + 40 + 4 * i);
  for (int i = 0; i < 3; ++i) h.cellb[i] = load<float>(p + 52 + 4 * i);
  h.mapc = load<std::int32_t>(p + 64);
  h.mapr = load<std::int32_t>(p + 68);
  h.maps = load<std::int32_t>(p + 72);
  h.dmin = load<float>(p + 76);
  h.dmax = load<float>(p + 80);
  h.dmean = load<float>(p + 84);
  h.ispg = load<std::int32_t>(p + 88);
  h.nsymbt = load<std::int32_t>(p + 92);
  h.nversion = load<std::int32_t>(p + 108);
  for (int i = 0; i < 3; ++i) h.origin[i] = load<float>(p + 196 + 4 * i);
  h.rms = load<float>(p + 216);
  h.nlabl = load<std::int32_t>(p + 220);
  std::memcpy(h.labels.data(), p + 224, h.labels.size());

  if (h.nx < 1) throw FormatError("nx", "must be >= 1, got " + std::to_string(h.nx));
  if (h.ny < 1) throw FormatError("ny", "must be >= 1, got " + std::to_string(h.ny));
  if (h.nz < 1) throw FormatError("nz", "must be >= 1, got " + std::to_string(h.nz));
  if (h.mode != kMrcModeFloat32) throw UnsupportedModeError(h.mode);
  if (h.mx < 1) throw FormatError("mx", "sampling must be >= 1");
  if (!(h.cella[0] > 0.0f) || !std::isfinite(h.cella[0]))
    throw FormatError("cella", "cell length along x must be positive");
  if (h.mapc != 1 || h.mapr != 2 || h.maps != 3)
    throw FormatError("mapc", "only the standard axis order (1,2,3) is supported");
  if (h.nsymbt < 0) throw FormatError("nsymbt", "negative extended header size");
  return h;
}

/// Builds the header for a volume; statistics come from the data.
inline MrcHeader make_header(const Dims3& n, double voxel_size, const std::array<double, 3>& origin,
                             const Stats& s) {
  MrcHeader h;
  h.nx = static_cast<std::int32_t>(n.w);
  h.ny = static_cast<std::int32_t>(n.h);
  h.nz = static_cast<std::int32_t>(n.d);
  h.mx = h.nx;
  h.my = h.ny;
  h.mz = h.nz;
  h.cella[0] = static_cast<float>(voxel_size * static_cast<double>(n.w));
  h.cella[1] = static_cast<float>(voxel_size * static_cast<double>(n.h));
  h.cella[2] = static_cast<float>(voxel_size * static_cast<double>(n.d));
  h.dmin = static_cast<float>(s.min);
  h.dmax = static_cast<float>(s.max);
  h.dmean = static_cast<float>(s.mean);
  h.rms = static_cast<float>(s.rms);
  for (int i = 0; i < 3; ++i) h.origin[i] = static_cast<float>(origin[static_cast<std::size_t>(i)]);
  return h;
}

inline MrcHeader read_mrc_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::array<unsigned char, kMrcHeaderBytes> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), kMrcHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kMrcHeaderBytes))
    throw FormatError("header", "file shorter than the 1024-byte header");
  return decode_header(buf.data());
}

inline DensityVolume read_mrc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::array<unsigned char, kMrcHeaderBytes> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), kMrcHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kMrcHeaderBytes))
    throw FormatError("header", "file shorter than the 1024-byte header");
  const MrcHeader h = decode_header(buf.data());

  if (h.nsymbt > 0) in.seekg(h.nsymbt, std::ios::cur);
  DensityVolume vol(Dims3{static_cast<std::size_t>(h.nz), static_cast<std::size_t>(h.ny),
                          static_cast<std::size_t>(h.nx)});
  const auto bytes = static_cast<std::streamsize>(vol.data.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(vol.data.data()), bytes);
  if (in.gcount() != bytes)
    throw FormatError("data", "payload truncated: expected " + std::to_string(bytes) + " bytes, got " +
                                  std::to_string(in.gcount()));
  for (float v : vol.data)
    if (!std::isfinite(v)) throw FormatError("data", "payload contains NaN or Inf");
  vol.voxel_size = static_cast<double>(h.cella[0]) / static_cast<double>(h.mx);
  for (int i = 0; i < 3; ++i) vol.origin[static_cast<std::size_t>(i)] = static_cast<double>(h.origin[i]);
  return vol;
}

inline void write_mrc(const DensityVolume& vol, const std::filesystem::path& path) {
  validate(vol);
  const MrcHeader h = make_header(vol.dims(), vol.voxel_size, vol.origin, compute_stats(vol.data));
  const auto header = encode_header(h);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(vol.data.data()),
            static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Writes a stack of equally sized images as an MRC volume with nz = count.
inline void write_mrc_stack(const std::vector<Image>& images, double pixel_size, const std::filesystem::path& path) {
  if (images.empty()) throw ShapeError("cannot write an empty image stack");
  const Dims2 n = images.front().dims();
  DensityVolume vol(Dims3{images.size(), n.h, n.w}, pixel_size);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].dims() != n) throw ShapeError("stack images differ in size");
    for (std::size_t y = 0; y < n.h; ++y)
      for (std::size_t x = 0; x < n.w; ++x) vol(k, y, x) = static_cast<float>(images[k](y, x));
  }
  write_mrc(vol, path);
}

inline std::vector<Image> read_mrc_stack(const std::filesystem::path& path) {
  const DensityVolume vol = read_mrc(path);
  const auto& n = vol.dims();
  std::vector<Image> images(n.d, Image(n.h, n.w));
  for (std::size_t k = 0; k < n.d; ++k)
    for (std::size_t y = 0; y < n.h; ++y)
      for (std::size_t x = 0; x < n.w; ++x) images[k](y, x) = vol(k, y, x);
  return images;
}

}  // namespace cryoforge::io
