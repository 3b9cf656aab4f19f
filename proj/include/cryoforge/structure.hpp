#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/fft.hpp"
#include "cryoforge/core/grid.hpp"

namespace cryoforge::structure {

struct Atom {
  std::string element;  // upper case, e.g. "C", "FE"
  std::array<double, 3> position{};  // Å, (x, y, z)
  double occupancy = 1.0;
};

struct AtomicModel {
  std::vector<Atom> atoms;
  std::string source_id;
};

struct ElementParams {
  double sigma = 0.38;      // Å
  double amplitude = 6.0;   // proportional to atomic number
};

namespace detail {

inline const std::map<std::string, int>& atomic_numbers() {
  static const std::map<std::string, int> z{
      {"H", 1},   {"C", 6},   {"N", 7},   {"O", 8},   {"F", 9},   {"NA", 11}, {"MG", 12}, {"P", 15},
      {"S", 16},  {"CL", 17}, {"K", 19},  {"CA", 20}, {"MN", 25}, {"FE", 26}, {"CO", 27}, {"NI", 28},
      {"CU", 29}, {"ZN", 30}, {"SE", 34}, {"BR", 35}, {"I", 53}};
  return z;
}

// Van der Waals radii in Å (Bondi).
inline double vdw_radius(const std::string& e) {
  static const std::map<std::string, double> r{{"H", 1.20}, {"C", 1.70}, {"N", 1.55}, {"O", 1.52},
                                               {"P", 1.80}, {"S", 1.80}};
  const auto it = r.find(e);
  return it == r.end() ? 2.0 : it->second;
}

inline std::string_view columns(std::string_view line, std::size_t first, std::size_t last) {
  // 1-based inclusive PDB column range, clipped to the line.
  if (line.size() < first) return {};
  return line.substr(first - 1, std::min(last, line.size()) - first + 1);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

// Element from the atom name (columns 13-16) when columns 77-78 are blank.
// Names aligned to column 13 carry a two-letter element ("FE  ", "CA  "),
// names aligned to column 14 a one-letter element (" CA ", " N  ").
inline std::string element_from_name(std::string_view name) {
  std::string n(name);
  n.resize(4, ' ');
  const auto alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  if (alpha(n[0])) {
    // Four-character hydrogen names such as "HG21" start in column 13.
    if (std::toupper(static_cast<unsigned char>(n[0])) == 'H' && alpha(n[1]) && n[3] != ' ') return "H";
    if (alpha(n[1])) {
      const std::string two = upper(n.substr(0, 2));
      if (atomic_numbers().count(two)) return two;
    }
    return upper(n.substr(0, 1));
  }
  for (char c : n)
    if (alpha(c)) return upper(std::string(1, c));
  return "";
}

}  // namespace detail

/// Default element table: widths follow van der Waals radii, amplitudes the
/// atomic number. Elements not listed use `fallback`.
struct ElementTable {
  std::map<std::string, ElementParams> entries{
      {"H", {0.25, 1.0}}, {"C", {0.35, 6.0}}, {"N", {0.33, 7.0}},
      {"O", {0.31, 8.0}}, {"P", {0.42, 15.0}}, {"S", {0.44, 16.0}}};
  double fallback_sigma = 0.38;

  ElementParams lookup(const std::string& element) const {
    if (auto it = entries.find(element); it != entries.end()) return it->second;
    const auto& z = detail::atomic_numbers();
    const auto zt = z.find(element);
    return {fallback_sigma, zt == z.end() ? 6.0 : static_cast<double>(zt->second)};
  }
};

struct DensifyConfig {
  double voxel_size = 10.0;               // Å per voxel
  double target_resolution = 30.0;        // Å; <= 0 disables the low-pass
  double solvent_margin_factor = 2.0;     // multiples of the outermost vdW radius
  double peak_threshold_fraction = 0.005;
  ElementTable element_table;
  unsigned jobs = 1;
};

inline void validate(const DensifyConfig& cfg) {
  if (!(cfg.voxel_size > 0.0)) throw ConfigError("densify: voxel_size must be > 0");
  if (!(cfg.target_resolution >= 0.0)) throw ConfigError("densify: target_resolution must be >= 0");
  if (!(cfg.peak_threshold_fraction >= 0.0 && cfg.peak_threshold_fraction < 1.0))
    throw ConfigError("densify: peak_threshold_fraction must be in [0, 1)");
  if (!(cfg.solvent_margin_factor >= 0.0)) throw ConfigError("densify: solvent_margin_factor must be >= 0");
  for (const auto& [el, p] : cfg.element_table.entries) {
    if (!(p.amplitude > 0.0)) throw ConfigError("densify: element '" + el + "' has a non-positive amplitude");
    if (!(p.sigma > 0.0)) throw ConfigError("densify: element '" + el + "' has a non-positive sigma");
  }
  if (!(cfg.element_table.fallback_sigma > 0.0)) throw ConfigError("densify: fallback sigma must be > 0");
}

/// Parses ATOM/HETATM records of the first model, skipping waters.
inline AtomicModel parse_pdb(std::string_view text, std::string source_id = {}) {
  using detail::columns;
  AtomicModel model;
  model.source_id = std::move(source_id);
  std::size_t lineno = 0;
  bool in_model = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    const std::string_view rec = columns(line, 1, 6);
    if (rec.starts_with("MODEL")) {
      in_model = true;
      continue;
    }
    if (rec.starts_with("ENDMDL")) {
      if (in_model) break;
      continue;
    }
    if (model.source_id.empty() && rec.starts_with("HEADER")) {
      model.source_id = std::string(detail::trim(columns(line, 63, 66)));
      continue;
    }
    const std::string_view kind = detail::trim(rec);
    if (kind != "ATOM" && kind != "HETATM") continue;
    if (detail::trim(columns(line, 18, 20)) == "HOH") continue;

    Atom a;
    const char* axis = "xyz";
    for (std::size_t k = 0; k < 3; ++k) {
      const std::string_view field = columns(line, 31 + 8 * k, 38 + 8 * k);
      if (!detail::parse_double(field, a.position[k]))
        throw ParseError(lineno, std::string("cannot parse ") + axis[k] + " coordinate '" + std::string(field) + "'");
    }
    const std::string_view occ = detail::trim(columns(line, 55, 60));
    if (!occ.empty() && !detail::parse_double(occ, a.occupancy))
      throw ParseError(lineno, "cannot parse occupancy '" + std::string(occ) + "'");
    std::string el = detail::upper(detail::trim(columns(line, 77, 78)));
    el.erase(std::remove_if(el.begin(), el.end(), [](char c) { return !std::isalpha(static_cast<unsigned char>(c)); }),
             el.end());
    if (el.empty()) el = detail::element_from_name(columns(line, 13, 16));
    if (el == "D") el = "H";
    if (el.empty()) throw ParseError(lineno, "cannot determine element");
    a.element = std::move(el);
    model.atoms.push_back(std::move(a));
  }
  if (model.atoms.empty()) throw EmptyModelError("PDB text contains no ATOM/HETATM records");
  return model;
}

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Mean of exp(-(u-a)^2 / (2 s^2)) over the unit cell [x - h, x + h] along one
// axis, h = half the voxel size.
inline double cell_average(double x, double a, double s, double voxel) {
  const double h = 0.5 * voxel;
  const double mass = normal_cdf((x + h - a) / s) - normal_cdf((x - h - a) / s);
  return mass * std::sqrt(2.0 * std::numbers::pi) * s / voxel;
}

}  // namespace detail

/// Deposits every atom as an element-specific isotropic Gaussian onto the grid
/// whose voxel (0,0,0) sits at `origin` (Å). Each voxel receives the Gaussian
/// averaged over its cell, which reduces to the point value when sigma is
/// large against the voxel and still conserves mass when it is not. Voxels
/// beyond 4 sigma of an atom are untouched.
inline void splat_atoms(Grid3<double>& grid, const std::array<double, 3>& origin, const AtomicModel& model,
                        const DensifyConfig& cfg) {
  const auto& n = grid.dims();
  const double vs = cfg.voxel_size;
  const std::array<std::size_t, 3> extent{n.w, n.h, n.d};
  for (const Atom& atom : model.atoms) {
    const ElementParams p = cfg.element_table.lookup(atom.element);
    const double amp = p.amplitude * atom.occupancy;
    const double cutoff = 4.0 * p.sigma;
    std::array<long, 3> lo{}, hi{};
    std::array<std::vector<double>, 3> f;
    bool outside = false;
    for (std::size_t k = 0; k < 3; ++k) {
      const double rel = (atom.position[k] - origin[k]) / vs;
      lo[k] = std::max(0L, static_cast<long>(std::ceil(rel - cutoff / vs - 0.5)));
      hi[k] = std::min(static_cast<long>(extent[k]) - 1, static_cast<long>(std::floor(rel + cutoff / vs + 0.5)));
      if (lo[k] > hi[k]) {
        outside = true;
        break;
      }
      for (long i = lo[k]; i <= hi[k]; ++i)
        f[k].push_back(detail::cell_average(origin[k] + static_cast<double>(i) * vs, atom.position[k], p.sigma, vs));
    }
    if (outside) continue;
    for (long d = lo[2]; d <= hi[2]; ++d)
      for (long h = lo[1]; h <= hi[1]; ++h) {
        const double fzy = amp * f[2][static_cast<std::size_t>(d - lo[2])] * f[1][static_cast<std::size_t>(h - lo[1])];
        for (long w = lo[0]; w <= hi[0]; ++w)
          grid(static_cast<std::size_t>(d), static_cast<std::size_t>(h), static_cast<std::size_t>(w)) +=
              fzy * f[0][static_cast<std::size_t>(w - lo[0])];
      }
  }
}

/// Sampled isotropic Gaussian (sigma in voxels) normalized to unit sum on a
/// periodic grid, centred on voxel (0,0,0).
inline Grid3<double> periodic_gaussian_kernel(const Dims3& n, double sigma) {
  Grid3<double> k(n, 0.0);
  auto dist = [](std::size_t i, std::size_t len) {
    const long s = fft::signed_index(i, len);
    return static_cast<double>(s);
  };
  double sum = 0.0;
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) {
        const double r2 = dist(d, n.d) * dist(d, n.d) + dist(h, n.h) * dist(h, n.h) + dist(w, n.w) * dist(w, n.w);
        const double v = std::exp(-r2 / (2.0 * sigma * sigma));
        k(d, h, w) = v;
        sum += v;
      }
  for (double& v : k) v /= sum;
  return k;
}

/// Gaussian low-pass with sigma in voxels: zero-pad by ceil(4 sigma) per side,
/// multiply by the DFT of the sampled kernel, crop back.
inline Grid3<double> gaussian_lowpass(const Grid3<double>& in, double sigma) {
  const auto& n = in.dims();
  const auto pad = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  const Dims3 pn{n.d + 2 * pad, n.h + 2 * pad, n.w + 2 * pad};
  Grid3<fft::cpx> buf(pn, fft::cpx{});
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) buf(d + pad, h + pad, w + pad) = in(d, h, w);
  auto kernel = fft::to_complex(periodic_gaussian_kernel(pn, sigma));
  fft::Plan fwd({static_cast<int>(pn.d), static_cast<int>(pn.h), static_cast<int>(pn.w)}, fft::Direction::forward);
  fft::Plan inv({static_cast<int>(pn.d), static_cast<int>(pn.h), static_cast<int>(pn.w)}, fft::Direction::inverse);
  fwd.execute(buf.data());
  fwd.execute(kernel.data());
  for (std::size_t i = 0; i < buf.size(); ++i) buf.data()[i] *= kernel.data()[i];
  inv.execute(buf.data());
  const double scale = 1.0 / static_cast<double>(pn.size());
  Grid3<double> out(n);
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) out(d, h, w) = buf(d + pad, h + pad, w + pad).real() * scale;
  return out;
}

/// Cubic grid geometry enclosing the model plus its solvent margin.
struct GridPlacement {
  std::size_t edge = 1;
  std::array<double, 3> origin{};  // Å coordinate of voxel (0,0,0)
};

inline GridPlacement place_grid(const AtomicModel& model, const DensifyConfig& cfg) {
  std::array<double, 3> lo{}, hi{};
  std::array<double, 3> lo_margin{}, hi_margin{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto by_axis = [k](const Atom& a, const Atom& b) { return a.position[k] < b.position[k]; };
    const auto [mn, mx] = std::minmax_element(model.atoms.begin(), model.atoms.end(), by_axis);
    lo[k] = mn->position[k];
    hi[k] = mx->position[k];
    lo_margin[k] = cfg.solvent_margin_factor * detail::vdw_radius(mn->element);
    hi_margin[k] = cfg.solvent_margin_factor * detail::vdw_radius(mx->element);
  }
  GridPlacement gp;
  double span = 0.0;
  for (std::size_t k = 0; k < 3; ++k) span = std::max(span, (hi[k] + hi_margin[k]) - (lo[k] - lo_margin[k]));
  gp.edge = static_cast<std::size_t>(std::ceil(span / cfg.voxel_size - 1e-9)) + 1;
  for (std::size_t k = 0; k < 3; ++k) {
    const double center = 0.5 * ((lo[k] - lo_margin[k]) + (hi[k] + hi_margin[k]));
    gp.origin[k] = center - 0.5 * static_cast<double>(gp.edge - 1) * cfg.voxel_size;
  }
  return gp;
}

/// Converts an atomic model into a normalized electron-density map:
/// splat, Gaussian low-pass (sigma = resolution / 2), scale to unit maximum,
/// suppress voxels below `peak_threshold_fraction`.
inline DensityVolume densify(const AtomicModel& model, const DensifyConfig& cfg) {
  validate(cfg);
  if (model.atoms.empty()) throw EmptyModelError("densify: model has no atoms");
  for (const auto& a : model.atoms)
    for (double c : a.position)
      if (!std::isfinite(c)) throw ConfigError("densify: atom position is not finite");

  const GridPlacement gp = place_grid(model, cfg);
  Grid3<double> grid(Dims3{gp.edge, gp.edge, gp.edge}, 0.0);
  splat_atoms(grid, gp.origin, model, cfg);
  if (cfg.target_resolution > 0.0) grid = gaussian_lowpass(grid, 0.5 * cfg.target_resolution / cfg.voxel_size);

  const double peak = *std::max_element(grid.begin(), grid.end());
  if (!(peak > 0.0)) throw ConfigError("densify: density has no positive values");
  DensityVolume vol(grid.dims(), cfg.voxel_size);
  vol.origin = gp.origin;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = grid.data()[i] / peak;
    vol.data.data()[i] = v < cfg.peak_threshold_fraction ? 0.0f : static_cast<float>(v);
  }
  return vol;
}

}  // namespace cryoforge::structure
