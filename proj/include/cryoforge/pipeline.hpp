#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cryoforge/core/error.hpp"
#include "cryoforge/io/metadata.hpp"
#include "cryoforge/io/mrc.hpp"
#include "cryoforge/recon.hpp"
#include "cryoforge/scene.hpp"
#include "cryoforge/structure.hpp"
#include "cryoforge/subtomo.hpp"
#include "cryoforge/tiltalign.hpp"
#include "cryoforge/tiltsim.hpp"

// Stage runners shared by the CLI subcommands and the end-to-end pipeline,
// plus the JSON configuration schema and provenance records.
namespace cryoforge::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct StructureInput {
  std::string label;
  fs::path pdb;      // either a PDB file ...
  fs::path density;  // ... or a ready density map
};

struct PipelineConfig {
  std::vector<StructureInput> inputs;
  fs::path output_dir = "cryoforge_out";
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  structure::DensifyConfig densify;
  scene::PlacementConfig placement;
  tiltsim::TiltGeometry tilt;
  tiltalign::AlignConfig align;
  recon::ReconConfig recon;
  subtomo::ExtractionConfig extraction;
  std::vector<double> snr_targets{100.0, 0.1, 0.05, 0.03, 0.01};
  bool masked_variance = false;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  const auto& s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return s;
}

inline Dims3 dims_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("dimensions must be an array [D, H, W]");
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

inline std::string filter_name(recon::Filter f) {
  switch (f) {
    case recon::Filter::hann_ramp:
      return "hann_ramp";
    case recon::Filter::ramp:
      return "ramp";
    case recon::Filter::none:
      return "none";
  }
  return "?";
}

}  // namespace detail

inline void apply_densify(const json& s, structure::DensifyConfig& c) {
  detail::read_opt(s, "voxel_size", c.voxel_size);
  detail::read_opt(s, "target_resolution", c.target_resolution);
  detail::read_opt(s, "solvent_margin_factor", c.solvent_margin_factor);
  detail::read_opt(s, "peak_threshold_fraction", c.peak_threshold_fraction);
  if (s.contains("element_table")) {
    // {"C": [sigma, amplitude], ...}
    for (const auto& [el, v] : s.at("element_table").items()) {
      if (!v.is_array() || v.size() != 2) throw ConfigError("element_table entries must be [sigma, amplitude]");
      c.element_table.entries[el] = {v.at(0).get<double>(), v.at(1).get<double>()};
    }
  }
}

inline void apply_placement(const json& s, scene::PlacementConfig& c) {
  if (s.contains("volume_dims")) c.volume_dims = detail::dims_from(s.at("volume_dims"));
  detail::read_opt(s, "box_size", c.box_size);
  detail::read_opt(s, "safety_margin", c.safety_margin);
  detail::read_opt(s, "target_count", c.target_count);
  detail::read_opt(s, "max_attempts", c.max_attempts);
}

inline void apply_tilt(const json& s, tiltsim::TiltGeometry& g) {
  if (s.contains("angles")) {
    const auto& a = s.at("angles");
    if (a.is_string()) {
      const auto name = a.get<std::string>();
      if (name == "default")
        g.angles = tiltsim::default_angles();
      else if (name == "pretraining")
        g.angles = tiltsim::pretraining_angles();
      else
        throw ConfigError("unknown angle preset '" + name + "'");
    } else if (a.is_object()) {
      g.angles = tiltsim::angle_range(a.at("min").get<double>(), a.at("max").get<double>(), a.at("step").get<double>());
    } else {
      g.angles = a.get<std::vector<double>>();
    }
  }
  detail::read_opt(s, "oversample", g.oversample);
  detail::read_opt(s, "shift_range", g.shift_range);
  detail::read_opt(s, "tilt_noise", g.tilt_noise);
  detail::read_opt(s, "tilt_noise_sigma", g.tilt_noise_sigma);
}

inline void apply_align(const json& s, tiltalign::AlignConfig& c) {
  detail::read_opt(s, "iterations", c.iterations);
  detail::read_opt(s, "tolerance", c.tolerance);
}

inline void apply_recon(const json& s, recon::ReconConfig& c) {
  if (s.contains("output_dims")) c.output_dims = detail::dims_from(s.at("output_dims"));
  if (s.contains("filter")) c.filter = recon::parse_filter(s.at("filter").get<std::string>());
  if (s.contains("weighting")) c.weighting = recon::parse_weighting(s.at("weighting").get<std::string>());
}

inline void apply_extraction(const json& s, subtomo::ExtractionConfig& c) {
  detail::read_opt(s, "box", c.box);
  detail::read_opt(s, "jitter_range", c.jitter_range);
  detail::read_opt(s, "neighbor_exclusion", c.neighbor_exclusion);
  detail::read_opt(s, "mask_threshold", c.mask_threshold);
}

/// Seeds every stage from the global seed and fans out the job count.
inline void propagate(PipelineConfig& c) {
  c.placement.seed = c.seed;
  c.tilt.seed = c.seed;
  c.extraction.seed = c.seed;
  c.densify.jobs = c.jobs;
  c.align.jobs = c.jobs;
  c.recon.jobs = c.jobs;
}

/// Parses a pipeline configuration. Relative input paths resolve against
/// `base_dir` (normally the config file's directory).
inline PipelineConfig parse_config(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  try {
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "jobs", c.jobs);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("inputs")) {
      for (const auto& in : j.at("inputs")) {
        StructureInput s;
        detail::read_opt(in, "label", s.label);
        if (in.contains("pdb")) s.pdb = in.at("pdb").get<std::string>();
        if (in.contains("density")) s.density = in.at("density").get<std::string>();
        if (s.pdb.empty() == s.density.empty())
          throw ConfigError("each input needs exactly one of 'pdb' or 'density'");
        if (!base_dir.empty()) {
          if (!s.pdb.empty() && s.pdb.is_relative()) s.pdb = base_dir / s.pdb;
          if (!s.density.empty() && s.density.is_relative()) s.density = base_dir / s.density;
        }
        if (s.label.empty()) s.label = (s.pdb.empty() ? s.density : s.pdb).stem().string();
        c.inputs.push_back(std::move(s));
      }
    }
    apply_densify(detail::section(j, "densify"), c.densify);
    apply_placement(detail::section(j, "placement"), c.placement);
    apply_tilt(detail::section(j, "tilt"), c.tilt);
    apply_align(detail::section(j, "align"), c.align);
    c.recon.output_dims = c.placement.volume_dims;
    apply_recon(detail::section(j, "recon"), c.recon);
    apply_extraction(detail::section(j, "extraction"), c.extraction);
    const auto& noise = detail::section(j, "noise");
    detail::read_opt(noise, "snr_targets", c.snr_targets);
    detail::read_opt(noise, "masked_variance", c.masked_variance);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (!base_dir.empty() && c.output_dir.is_relative()) c.output_dir = base_dir / c.output_dir;
  propagate(c);
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// Normalized JSON form of a configuration; its hash identifies a run.
inline json to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["inputs"] = json::array();
  for (const auto& in : c.inputs)
    j["inputs"].push_back({{"label", in.label},
                           {"pdb", in.pdb.empty() ? json(nullptr) : json(in.pdb.filename().string())},
                           {"density", in.density.empty() ? json(nullptr) : json(in.density.filename().string())}});
  j["densify"] = {{"voxel_size", c.densify.voxel_size},
                  {"target_resolution", c.densify.target_resolution},
                  {"solvent_margin_factor", c.densify.solvent_margin_factor},
                  {"peak_threshold_fraction", c.densify.peak_threshold_fraction}};
  for (const auto& [el, p] : c.densify.element_table.entries)
    j["densify"]["element_table"][el] = {p.sigma, p.amplitude};
  const auto& pd = c.placement.volume_dims;
  j["placement"] = {{"volume_dims", {pd.d, pd.h, pd.w}},
                    {"box_size", c.placement.box_size},
                    {"safety_margin", c.placement.safety_margin},
                    {"target_count", c.placement.target_count},
                    {"max_attempts", c.placement.max_attempts}};
  j["tilt"] = {{"angles", c.tilt.angles},
               {"oversample", c.tilt.oversample},
               {"shift_range", c.tilt.shift_range},
               {"tilt_noise", c.tilt.tilt_noise},
               {"tilt_noise_sigma", c.tilt.tilt_noise_sigma}};
  j["align"] = {{"iterations", c.align.iterations}, {"tolerance", c.align.tolerance}};
  const auto& rd = c.recon.output_dims;
  j["recon"] = {{"output_dims", {rd.d, rd.h, rd.w}},
                {"filter", detail::filter_name(c.recon.filter)},
                {"weighting", c.recon.weighting == recon::Weighting::abs_cos ? "abs_cos" : "uniform"}};
  j["extraction"] = {{"box", c.extraction.box},
                     {"jitter_range", c.extraction.jitter_range},
                     {"neighbor_exclusion", c.extraction.neighbor_exclusion},
                     {"mask_threshold", c.extraction.mask_threshold}};
  j["noise"] = {{"snr_targets", c.snr_targets}, {"masked_variance", c.masked_variance}};
  return j;
}

inline void validate(const PipelineConfig& c) {
  if (c.inputs.empty()) throw ConfigError("config: no inputs");
  std::map<std::string, int> seen;
  for (const auto& in : c.inputs)
    if (seen[in.label]++) throw ConfigError("config: duplicate class label '" + in.label + "'");
  structure::validate(c.densify);
  scene::validate(c.placement);
  tiltsim::validate(c.tilt);
  subtomo::validate(c.extraction);
  if (c.snr_targets.empty()) throw ConfigError("config: no SNR targets");
  for (double s : c.snr_targets)
    if (!io::snr_tag_from_value(s))
      throw ConfigError("config: SNR target " + std::to_string(s) + " is not one of 100, 0.1, 0.05, 0.03, 0.01");
  if (c.recon.output_dims != c.placement.volume_dims)
    throw ConfigError("config: reconstruction dimensions must equal the sample volume dimensions");
  if (c.jobs < 1) throw ConfigError("config: jobs must be >= 1");
}

// ---------------------------------------------------------------------------
// Provenance

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline json provenance_record(const std::string& stage, const std::vector<std::string>& inputs, const json& config,
                              std::uint64_t seed, double seconds) {
  return {{"stage", stage},
          {"inputs", inputs},
          {"config_hash", config_hash(config)},
          {"config", config},
          {"seed", seed},
          {"timings", {{"wall_seconds", seconds}}}};
}

// ---------------------------------------------------------------------------
// Serialization of intermediate products

inline json to_json(const scene::ParticleInstance& p) {
  return {{"class_label", p.class_label},
          {"center", {p.center.x(), p.center.y(), p.center.z()}},
          {"orientation", {p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z}}};
}

inline scene::ParticleInstance instance_from_json(const json& j) {
  scene::ParticleInstance p;
  p.class_label = j.at("class_label").get<std::string>();
  const auto c = j.at("center").get<std::vector<double>>();
  const auto q = j.at("orientation").get<std::vector<double>>();
  if (c.size() != 3 || q.size() != 4) throw Error("instance needs center[3] and orientation[4]");
  p.center = {c[0], c[1], c[2]};
  p.orientation = {q[0], q[1], q[2], q[3]};
  return p;
}

inline void write_instances(const std::vector<scene::ParticleInstance>& v, const fs::path& path) {
  std::vector<json> lines;
  for (const auto& p : v) lines.push_back(to_json(p));
  io::write_ndjson(lines, path);
}

inline std::vector<scene::ParticleInstance> read_instances(const fs::path& path) {
  std::vector<scene::ParticleInstance> out;
  io::for_each_ndjson(path, [&](const json& j) { out.push_back(instance_from_json(j)); });
  return out;
}

/// Tilt series on disk: `tilt_series.mrc` (one slice per view) and
/// `tilts.ndjson` with one {"index", "angle", "applied_shift"} line per view.
inline void write_tilt_series(const tiltsim::TiltSeries& ts, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_mrc_stack(ts.projections, ts.pixel_size, dir / "tilt_series.mrc");
  std::vector<json> lines;
  for (std::size_t i = 0; i < ts.projections.size(); ++i)
    lines.push_back({{"index", i},
                     {"angle", ts.geometry.angles[i]},
                     {"applied_shift", {ts.applied_shifts[i].dx, ts.applied_shifts[i].dy}}});
  io::write_ndjson(lines, dir / "tilts.ndjson");
}

inline tiltsim::TiltSeries read_tilt_series(const fs::path& dir) {
  tiltsim::TiltSeries ts;
  const auto vol = io::read_mrc(dir / "tilt_series.mrc");
  ts.pixel_size = vol.voxel_size;
  ts.projections = io::read_mrc_stack(dir / "tilt_series.mrc");
  ts.geometry.angles.clear();
  io::for_each_ndjson(dir / "tilts.ndjson", [&](const json& j) {
    ts.geometry.angles.push_back(j.at("angle").get<double>());
    const auto s = j.at("applied_shift").get<std::vector<double>>();
    if (s.size() != 2) throw Error("applied_shift must have 2 components");
    ts.applied_shifts.push_back({s[0], s[1]});
  });
  if (ts.geometry.angles.size() != ts.projections.size())
    throw ShapeError("tilt series: " + std::to_string(ts.projections.size()) + " images but " +
                     std::to_string(ts.geometry.angles.size()) + " angle records");
  return ts;
}

inline json to_json(const tiltalign::AlignmentResult& a) {
  json shifts = json::array();
  for (const auto& s : a.shifts) shifts.push_back({s.dx, s.dy});
  return {{"shifts", shifts},
          {"axis_angle", a.axis_angle},
          {"axis_offset", a.axis_offset},
          {"residual_mse", a.residual_mse},
          {"iterations_used", a.iterations_used},
          {"max_update", a.max_update}};
}

inline tiltalign::AlignmentResult alignment_from_json(const json& j) {
  tiltalign::AlignmentResult a;
  for (const auto& s : j.at("shifts")) a.shifts.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  detail::read_opt(j, "axis_angle", a.axis_angle);
  detail::read_opt(j, "axis_offset", a.axis_offset);
  detail::read_opt(j, "residual_mse", a.residual_mse);
  detail::read_opt(j, "iterations_used", a.iterations_used);
  detail::read_opt(j, "max_update", a.max_update);
  return a;
}

/// Alignment NDJSON: a single record with per-view shifts and the axis fit.
inline void write_alignment(const tiltalign::AlignmentResult& a, const fs::path& path) {
  io::write_ndjson({to_json(a)}, path);
}

inline tiltalign::AlignmentResult read_alignment(const fs::path& path) {
  const auto lines = io::read_ndjson(path);
  if (lines.size() != 1) throw ParseError(0, "alignment file must contain exactly one record");
  try {
    return alignment_from_json(lines.front());
  } catch (const json::exception& e) {
    throw ParseError(1, e.what());
  }
}

// ---------------------------------------------------------------------------
// Stages

inline DensityVolume densify_pdb(const fs::path& pdb, const structure::DensifyConfig& cfg) {
  std::ifstream in(pdb);
  if (!in) throw IoError("cannot open PDB file '" + pdb.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return structure::densify(structure::parse_pdb(ss.str(), pdb.stem().string()), cfg);
}

/// Class density from a PDB (densified) or an existing map.
inline DensityVolume load_class_density(const StructureInput& in, const structure::DensifyConfig& cfg) {
  return in.pdb.empty() ? io::read_mrc(in.density) : densify_pdb(in.pdb, cfg);
}

struct ExtractOutput {
  std::vector<io::SubtomogramRecord> records;  // one per accepted crop and SNR level
  std::vector<json> rejections;
  std::size_t accepted = 0;
};

inline std::string instance_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// Writes every accepted crop as <class>/<id>/{clean,snr_<label>,mask}.mrc
/// with a record.ndjson, and returns all records and rejections. Paths in
/// records are relative to `out_dir`.
inline ExtractOutput extract_and_write(const DensityVolume& tomo, const std::vector<scene::ParticleInstance>& instances,
                                       const std::map<std::string, DensityVolume>& densities,
                                       const subtomo::ExtractionConfig& cfg, const std::vector<double>& snr_targets,
                                       bool masked_variance, const fs::path& out_dir) {
  ExtractOutput out;
  const auto res = subtomo::extract(tomo, instances, cfg);
  out.accepted = res.accepted.size();
  for (const auto& r : res.rejections)
    out.rejections.push_back({{"instance", r.instance_index},
                              {"id", instance_id(r.instance_index)},
                              {"class_label", instances[r.instance_index].class_label},
                              {"reason", r.reason}});
  for (const auto& st : res.accepted) {
    const auto& inst = instances[st.instance_index];
    const fs::path rel = fs::path(inst.class_label) / instance_id(st.instance_index);
    fs::create_directories(out_dir / rel);
    io::write_mrc(st.volume, out_dir / rel / "clean.mrc");
    const auto it = densities.find(inst.class_label);
    if (it == densities.end()) throw LookupError("extract: no density for class '" + inst.class_label + "'");
    const auto particle = subtomo::particle_in_box(it->second, inst, st.crop_center, cfg.box);
    auto mask = subtomo::make_mask(particle, cfg).mask;
    mask.origin = st.volume.origin;
    io::write_mrc(mask, out_dir / rel / "mask.mrc");
    std::vector<io::SubtomogramRecord> recs;
    for (double snr : snr_targets) {
      const auto tag = io::snr_tag_from_value(snr);
      if (!tag) throw ConfigError("SNR target " + std::to_string(snr) + " has no metadata tag");
      const subtomo::NoiseSpec spec{snr, subtomo::noise_seed(cfg.seed, st.instance_index, snr)};
      const auto noisy = subtomo::add_noise(st.volume, spec, masked_variance ? &mask : nullptr);
      const std::string name = "snr_" + io::snr_label(*tag) + ".mrc";
      io::write_mrc(noisy, out_dir / rel / name);
      io::SubtomogramRecord rec = st.record;
      rec.volume_path = (rel / name).generic_string();
      rec.mask_path = (rel / "mask.mrc").generic_string();
      rec.snr_tag = *tag;
      recs.push_back(rec);
    }
    io::write_metadata(recs, out_dir / rel / "record.ndjson");
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  }
  return out;
}

struct PipelineSummary {
  std::size_t placed = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t records = 0;
};

/// densify -> place -> project -> align -> reconstruct -> extract -> noise.
/// Any stage failure is rethrown with the stage name prefixed.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create output directory '" + out.string() + "': " + e.what());
  }
  const fs::path prov = out / "provenance.ndjson";
  io::write_ndjson({}, prov);
  const json cfg_json = to_json(cfg);

  auto stage = [&](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const IoError& e) {
      throw IoError(std::string("stage ") + name + ": " + e.what());
    } catch (const Error& e) {
      throw Error(std::string("stage ") + name + ": " + e.what());
    }
  };

  PipelineSummary summary;
  // densify
  std::map<std::string, DensityVolume> densities;
  std::vector<std::string> labels;
  stage("densify", [&] {
    Stopwatch sw;
    std::vector<std::string> inputs;
    fs::create_directories(out / "densities");
    for (const auto& in : cfg.inputs) {
      auto vol = load_class_density(in, cfg.densify);
      io::write_mrc(vol, out / "densities" / (in.label + ".mrc"));
      densities.emplace(in.label, std::move(vol));
      labels.push_back(in.label);
      inputs.push_back((in.pdb.empty() ? in.density : in.pdb).filename().string());
    }
    io::append_ndjson(provenance_record("densify", inputs, cfg_json["densify"], cfg.seed, sw.seconds()), prov);
    return 0;
  });

  // place
  std::vector<scene::ParticleInstance> instances;
  DensityVolume sample;
  stage("place", [&] {
    Stopwatch sw;
    instances = scene::place_particles(cfg.placement, labels);
    sample = scene::compose_sample(densities, instances, cfg.placement, cfg.jobs);
    write_instances(instances, out / "instances.ndjson");
    io::write_mrc(sample, out / "sample.mrc");
    io::append_ndjson(provenance_record("place", {"densities"}, cfg_json["placement"], cfg.seed, sw.seconds()), prov);
    return 0;
  });
  summary.placed = instances.size();

  // project
  tiltsim::TiltSeries series;
  stage("project", [&] {
    Stopwatch sw;
    series = tiltsim::simulate_tilt_series(sample, cfg.tilt, cfg.jobs);
    write_tilt_series(series, out);
    io::append_ndjson(provenance_record("project", {"sample.mrc"}, cfg_json["tilt"], cfg.seed, sw.seconds()), prov);
    return 0;
  });

  // align
  tiltalign::AlignmentResult alignment;
  stage("align", [&] {
    Stopwatch sw;
    alignment = tiltalign::align_series(series, cfg.align);
    write_alignment(alignment, out / "alignment.ndjson");
    io::append_ndjson(
        provenance_record("align", {"tilt_series.mrc", "tilts.ndjson"}, cfg_json["align"], cfg.seed, sw.seconds()),
        prov);
    return 0;
  });

  // reconstruct
  DensityVolume tomo;
  stage("reconstruct", [&] {
    Stopwatch sw;
    tomo = recon::wbp_reconstruct(series, alignment, cfg.recon);
    io::write_mrc(tomo, out / "tomogram.mrc");
    io::append_ndjson(provenance_record("reconstruct", {"tilt_series.mrc", "alignment.ndjson"}, cfg_json["recon"],
                                        cfg.seed, sw.seconds()),
                      prov);
    return 0;
  });

  // extract + noise
  stage("extract", [&] {
    Stopwatch sw;
    const auto ex =
        extract_and_write(tomo, instances, densities, cfg.extraction, cfg.snr_targets, cfg.masked_variance, out);
    io::write_metadata(ex.records, out / "metadata.ndjson");
    io::write_ndjson(ex.rejections, out / "rejections.ndjson");
    summary.accepted = ex.accepted;
    summary.rejected = ex.rejections.size();
    summary.records = ex.records.size();
    json c = cfg_json["extraction"];
    c["noise"] = cfg_json["noise"];
    io::append_ndjson(
        provenance_record("extract", {"tomogram.mrc", "instances.ndjson"}, c, cfg.seed, sw.seconds()), prov);
    return 0;
  });
  return summary;
}

}  // namespace cryoforge::pipeline
