#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cryoforge/core/error.hpp"
#include "cryoforge/geometry.hpp"

// Ground-truth sidecars: newline-delimited JSON, one object per line.
//
// SubtomogramRecord schema:
//   {"volume_path": str, "class_label": str,
//    "center_offset": [x, y, z],           voxels
//    "orientation": [w, x, y, z],          unit quaternion
//    "snr_tag": 100 | 0.1 | 0.05 | 0.03 | 0.01,
//    "mask_path": str | null}
namespace cryoforge::io {

using json = nlohmann::json;

enum class SnrTag { clean, snr_0_10, snr_0_05, snr_0_03, snr_0_01 };

inline constexpr std::array<SnrTag, 5> kAllSnrTags{SnrTag::clean, SnrTag::snr_0_10, SnrTag::snr_0_05,
                                                   SnrTag::snr_0_03, SnrTag::snr_0_01};

inline double snr_value(SnrTag t) noexcept {
  switch (t) {
    case SnrTag::clean: return 100.0;
    case SnrTag::snr_0_10: return 0.10;
    case SnrTag::snr_0_05: return 0.05;
    case SnrTag::snr_0_03: return 0.03;
    case SnrTag::snr_0_01: return 0.01;
  }
  return 0.0;
}

inline std::optional<SnrTag> snr_tag_from_value(double v) noexcept {
  for (SnrTag t : kAllSnrTags)
    if (std::abs(snr_value(t) - v) <= 1e-12 * snr_value(t)) return t;
  return std::nullopt;
}

/// Short text used in file names: "100", "0.1", "0.05", ...
inline std::string snr_label(SnrTag t) {
  switch (t) {
    case SnrTag::clean: return "100";
    case SnrTag::snr_0_10: return "0.1";
    case SnrTag::snr_0_05: return "0.05";
    case SnrTag::snr_0_03: return "0.03";
    case SnrTag::snr_0_01: return "0.01";
  }
  return "?";
}

struct SubtomogramRecord {
  std::string volume_path;
  std::string class_label;
  std::array<double, 3> center_offset{0.0, 0.0, 0.0};
  geometry::Quaternion orientation;
  SnrTag snr_tag = SnrTag::clean;
  std::optional<std::string> mask_path;

  bool operator==(const SubtomogramRecord&) const = default;
};

inline void validate(const SubtomogramRecord& r) {
  if (std::abs(r.orientation.norm() - 1.0) > 1e-9)
    throw ContractError("record '" + r.volume_path + "': orientation quaternion is not unit norm");
}

inline json to_json(const SubtomogramRecord& r) {
  json j;
  j["volume_path"] = r.volume_path;
  j["class_label"] = r.class_label;
  j["center_offset"] = r.center_offset;
  j["orientation"] = {r.orientation.w, r.orientation.x, r.orientation.y, r.orientation.z};
  j["snr_tag"] = snr_value(r.snr_tag);
  j["mask_path"] = r.mask_path ? json(*r.mask_path) : json(nullptr);
  return j;
}

inline SubtomogramRecord record_from_json(const json& j) {
  SubtomogramRecord r;
  r.volume_path = j.at("volume_path").get<std::string>();
  r.class_label = j.at("class_label").get<std::string>();
  const auto& c = j.at("center_offset");
  if (!c.is_array() || c.size() != 3) throw Error("center_offset must be an array of 3 numbers");
  for (std::size_t i = 0; i < 3; ++i) r.center_offset[i] = c.at(i).get<double>();
  const auto& q = j.at("orientation");
  if (!q.is_array() || q.size() != 4) throw Error("orientation must be an array of 4 numbers [w, x, y, z]");
  r.orientation = {q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>()};
  const auto& s = j.at("snr_tag");
  std::optional<SnrTag> tag;
  if (s.is_string() && s.get<std::string>() == "clean")
    tag = SnrTag::clean;
  else if (s.is_number())
    tag = snr_tag_from_value(s.get<double>());
  if (!tag) throw Error("snr_tag must be one of 100, 0.1, 0.05, 0.03, 0.01");
  r.snr_tag = *tag;
  if (j.contains("mask_path") && !j.at("mask_path").is_null()) r.mask_path = j.at("mask_path").get<std::string>();
  validate(r);
  return r;
}

/// Reads an NDJSON file line by line, handing each parsed object to `fn`.
/// Blank lines are skipped; a malformed line raises ParseError with its number.
template <typename Fn>
void for_each_ndjson(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
}

inline void write_ndjson(const std::vector<json>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void append_ndjson(const json& line, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open '" + path.string() + "' for appending");
  out << line.dump() << '\n';
}

inline std::vector<json> read_ndjson(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each_ndjson(path, [&](json j) { out.push_back(std::move(j)); });
  return out;
}

inline void write_metadata(const std::vector<SubtomogramRecord>& records, const std::filesystem::path& path) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    validate(r);
    lines.push_back(to_json(r));
  }
  write_ndjson(lines, path);
}

inline std::vector<SubtomogramRecord> read_metadata(const std::filesystem::path& path) {
  std::vector<SubtomogramRecord> out;
  for_each_ndjson(path, [&](const json& j) { out.push_back(record_from_json(j)); });
  return out;
}

}  // namespace cryoforge::io
