// cryoforge: batch front end for the synthetic cryo-ET data engine.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cryoforge/cryoforge.hpp"

namespace fs = std::filesystem;
using namespace cryoforge;
using pipeline::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool strict = false;
};

unsigned resolve_jobs(const Globals& g, unsigned from_config) {
  if (g.strict) return 1;
  if (g.jobs) return std::max(1u, *g.jobs);
  if (const char* env = std::getenv("CRYOFORGE_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CRYOFORGE_JOBS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, from_config);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// Stage subcommands accept the same config file as the pipeline and use the
// section they need; command-line flags override it.
pipeline::PipelineConfig stage_config(const Globals& g) {
  pipeline::PipelineConfig c;
  if (!g.config.empty()) c = pipeline::parse_config(read_json_file(g.config), fs::path(g.config).parent_path());
  if (g.seed) c.seed = *g.seed;
  c.jobs = resolve_jobs(g, c.jobs);
  pipeline::propagate(c);
  return c;
}

void provenance(const fs::path& dir, const std::string& stage, const std::vector<std::string>& inputs,
                const json& cfg, std::uint64_t seed, const pipeline::Stopwatch& sw) {
  io::append_ndjson(pipeline::provenance_record(stage, inputs, cfg, seed, sw.seconds()), dir / "provenance.ndjson");
}

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

const std::string& ensure_parent(const std::string& p) {
  fs::create_directories(parent_or_cwd(p));
  return p;
}

std::map<std::string, DensityVolume> load_densities(const std::vector<std::string>& specs) {
  std::map<std::string, DensityVolume> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--density expects LABEL=FILE, got '" + s + "'");
    if (out.count(s.substr(0, eq))) throw ConfigError("duplicate --density label '" + s.substr(0, eq) + "'");
    out[s.substr(0, eq)] = io::read_mrc(s.substr(eq + 1));
  }
  if (out.empty()) throw ConfigError("at least one --density LABEL=FILE is required");
  return out;
}

nrcl::EmbeddingBatch column(const std::vector<json>& rows, const char* key, bool normalize) {
  nrcl::Matrix m;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].contains(key)) throw ParseError(i + 1, std::string("missing field '") + key + "'");
    const auto v = rows[i].at(key).get<std::vector<double>>();
    if (i == 0) m.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(v.size()));
    if (static_cast<Eigen::Index>(v.size()) != m.cols()) throw ParseError(i + 1, std::string(key) + " has wrong length");
    for (std::size_t k = 0; k < v.size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[k];
  }
  if (normalize) return nrcl::normalized(m);
  return {m, true};
}

void print_table(const std::vector<std::tuple<std::string, double, double, bool>>& rows) {
  std::cout << std::left << std::setw(28) << "property" << std::setw(16) << "max_deviation" << std::setw(12)
            << "tolerance"
            << "result\n";
  for (const auto& [name, dev, tol, ok] : rows)
    std::cout << std::left << std::setw(28) << name << std::setw(16) << std::setprecision(4) << dev << std::setw(12)
              << tol << (ok ? "PASS" : "FAIL") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cryoforge: synthetic cryo-ET subtomogram engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "global seed (overrides config)");
  app.add_option("--jobs", g.jobs, "worker threads (default: CRYOFORGE_JOBS or config)");
  app.add_flag("--strict", g.strict, "force serial, bit-exact execution");

  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "JSON configuration file");
    sub->add_option("--seed", g.seed, "global seed (overrides config)");
    sub->add_option("--jobs", g.jobs, "worker threads");
    sub->add_flag("--strict", g.strict, "force serial, bit-exact execution");
  };

  // densify
  std::string pdb_path, out_path;
  auto* densify = app.add_subcommand("densify", "PDB -> density map (MRC)");
  add_globals(densify);
  densify->add_option("--pdb", pdb_path, "input PDB file")->required();
  densify->add_option("--out", out_path, "output MRC file")->required();
  densify->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto vol = pipeline::densify_pdb(pdb_path, c.densify);
    io::write_mrc(vol, ensure_parent(out_path));
    provenance(parent_or_cwd(out_path), "densify", {pdb_path}, pipeline::to_json(c)["densify"], c.seed, sw);
    std::cout << "wrote " << out_path << " (" << vol.dims().d << "x" << vol.dims().h << "x" << vol.dims().w << ")\n";
  });

  // place
  std::vector<std::string> density_specs;
  std::string out_dir;
  std::optional<std::size_t> count;
  auto* place = app.add_subcommand("place", "place particles and compose the sample volume");
  add_globals(place);
  place->add_option("--density", density_specs, "LABEL=FILE.mrc, repeatable")->required();
  place->add_option("--count", count, "target particle count");
  place->add_option("--out", out_dir, "output directory")->required();
  place->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    if (count) c.placement.target_count = *count;
    const auto densities = load_densities(density_specs);
    std::vector<std::string> labels;  // classes cycle in --density order
    for (const auto& spec : density_specs) labels.push_back(spec.substr(0, spec.find('=')));
    const auto inst = scene::place_particles(c.placement, labels);
    const auto sample = scene::compose_sample(densities, inst, c.placement, c.jobs);
    fs::create_directories(out_dir);
    pipeline::write_instances(inst, fs::path(out_dir) / "instances.ndjson");
    io::write_mrc(sample, fs::path(out_dir) / "sample.mrc");
    provenance(out_dir, "place", density_specs, pipeline::to_json(c)["placement"], c.seed, sw);
    std::cout << "placed " << inst.size() << " particles\n";
  });

  // project
  std::string volume_path;
  auto* project = app.add_subcommand("project", "simulate a tilt series from a volume");
  add_globals(project);
  project->add_option("--volume", volume_path, "input MRC volume")->required();
  project->add_option("--out", out_dir, "output directory")->required();
  project->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto vol = io::read_mrc(volume_path);
    const auto ts = tiltsim::simulate_tilt_series(vol, c.tilt, c.jobs);
    pipeline::write_tilt_series(ts, out_dir);
    provenance(out_dir, "project", {volume_path}, pipeline::to_json(c)["tilt"], c.seed, sw);
    std::cout << "projected " << ts.projections.size() << " views\n";
  });

  // align
  std::string series_dir;
  auto* align = app.add_subcommand("align", "estimate per-view shifts and the tilt axis");
  add_globals(align);
  align->add_option("--series", series_dir, "directory with tilt_series.mrc and tilts.ndjson")->required();
  align->add_option("--out", out_path, "output alignment NDJSON")->required();
  align->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto ts = pipeline::read_tilt_series(series_dir);
    const auto res = tiltalign::align_series(ts, c.align);
    pipeline::write_alignment(res, ensure_parent(out_path));
    provenance(parent_or_cwd(out_path), "align", {series_dir}, pipeline::to_json(c)["align"], c.seed, sw);
    std::cout << "aligned " << res.shifts.size() << " views in " << res.iterations_used << " iterations; axis "
              << res.axis_angle << " deg, offset " << res.axis_offset << "\n";
  });

  // reconstruct
  std::string alignment_path;
  std::vector<std::size_t> dims;
  auto* reconstruct = app.add_subcommand("reconstruct", "weighted back-projection");
  add_globals(reconstruct);
  reconstruct->add_option("--series", series_dir, "tilt series directory")->required();
  reconstruct->add_option("--alignment", alignment_path, "alignment NDJSON (omit for no correction)");
  reconstruct->add_option("--dims", dims, "output D H W")->expected(3);
  reconstruct->add_option("--out", out_path, "output MRC")->required();
  reconstruct->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto ts = pipeline::read_tilt_series(series_dir);
    const auto al = alignment_path.empty() ? tiltalign::AlignmentResult{} : pipeline::read_alignment(alignment_path);
    if (!dims.empty()) c.recon.output_dims = {dims[0], dims[1], dims[2]};
    else if (g.config.empty())
      c.recon.output_dims = {c.recon.output_dims.d, ts.projections.front().height(), ts.projections.front().width()};
    const auto tomo = recon::wbp_reconstruct(ts, al, c.recon);
    io::write_mrc(tomo, ensure_parent(out_path));
    provenance(parent_or_cwd(out_path), "reconstruct", {series_dir, alignment_path}, pipeline::to_json(c)["recon"],
               c.seed, sw);
    std::cout << "wrote " << out_path << "\n";
  });

  // extract
  std::string tomo_path, instances_path;
  auto* extract = app.add_subcommand("extract", "crop subtomograms, masks and noisy replicas");
  add_globals(extract);
  extract->add_option("--tomogram", tomo_path, "tomogram MRC")->required();
  extract->add_option("--instances", instances_path, "instances NDJSON")->required();
  extract->add_option("--density", density_specs, "LABEL=FILE.mrc, repeatable")->required();
  extract->add_option("--out", out_dir, "output directory")->required();
  extract->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto tomo = io::read_mrc(tomo_path);
    const auto inst = pipeline::read_instances(instances_path);
    const auto densities = load_densities(density_specs);
    fs::create_directories(out_dir);
    const auto ex = pipeline::extract_and_write(tomo, inst, densities, c.extraction, c.snr_targets,
                                                c.masked_variance, out_dir);
    io::write_metadata(ex.records, fs::path(out_dir) / "metadata.ndjson");
    io::write_ndjson(ex.rejections, fs::path(out_dir) / "rejections.ndjson");
    provenance(out_dir, "extract", {tomo_path, instances_path}, pipeline::to_json(c)["extraction"], c.seed, sw);
    std::cout << "accepted " << ex.accepted << ", rejected " << ex.rejections.size() << "\n";
  });

  // noise
  std::string input_path;
  double snr = 0.0;
  bool report = false;
  auto* noise = app.add_subcommand("noise", "add SNR-calibrated Gaussian noise to a volume");
  add_globals(noise);
  noise->add_option("--input", input_path, "clean MRC")->required();
  noise->add_option("--snr", snr, "target SNR (v_sig / sigma^2)")->required();
  noise->add_option("--out", out_path, "output MRC")->required();
  noise->add_flag("--report", report, "print the measured SNR");
  noise->callback([&] {
    pipeline::Stopwatch sw;
    auto c = stage_config(g);
    const auto clean = io::read_mrc(input_path);
    const subtomo::NoiseSpec spec{snr, c.seed};
    const auto noisy = subtomo::add_noise(clean, spec);
    io::write_mrc(noisy, ensure_parent(out_path));
    provenance(parent_or_cwd(out_path), "noise", {input_path}, json{{"snr_target", snr}}, c.seed, sw);
    if (report) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < clean.data.size(); ++i) {
        const double d = static_cast<double>(noisy.data.data()[i]) - clean.data.data()[i];
        s += d;
        s2 += d * d;
      }
      const double n = static_cast<double>(clean.data.size());
      const double var = s2 / n - (s / n) * (s / n);
      std::cout << json{{"snr_target", snr}, {"measured_snr", subtomo::signal_variance(clean) / var}}.dump() << "\n";
    }
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run every stage from a config file");
  add_globals(pipe);
  std::string out_override;
  pipe->add_option("--out", out_override, "output directory (overrides config)");
  pipe->callback([&] {
    if (g.config.empty()) throw ConfigError("pipeline requires --config FILE");
    auto c = stage_config(g);
    if (!out_override.empty()) c.output_dir = out_override;
    const auto s = pipeline::run_pipeline(c);
    std::cout << json{{"placed", s.placed}, {"accepted", s.accepted}, {"rejected", s.rejected},
                      {"records", s.records}, {"output_dir", c.output_dir.string()}}
                     .dump()
              << "\n";
  });

  // verify
  std::size_t trials = 5;
  bool broken = false;
  std::string json_out;
  std::size_t edge = 32;
  auto* verify = app.add_subcommand("verify", "equivariance, geometry and loss property checks");
  add_globals(verify);
  verify->add_option("--trials", trials, "random trials for the equivariance suite");
  verify->add_option("--edge", edge, "random volume edge length");
  verify->add_flag("--broken-kernel", broken, "inject a non-steerable degree-1 kernel (negative control)");
  verify->add_option("--json", json_out, "write the report as JSON");
  int verify_status = 0;
  verify->callback([&] {
    const std::uint64_t seed = g.seed.value_or(0);
    apt::SteerableSelectionNet net;
    if (broken) net.broken_kernel_seed = seed + 1;
    apt::VerifyOptions opt;
    opt.trials = trials;
    opt.seed = seed;
    opt.edge = edge;
    opt.jobs = resolve_jobs(g, 1);
    const auto rep = apt::verify_equivariance(net, opt);

    std::vector<std::tuple<std::string, double, double, bool>> rows;
    for (const auto& p : rep.properties) rows.emplace_back(p.name, p.max_deviation, p.tolerance, p.passed());

    // Geometry decoders and loss identities.
    CounterRng rng(derive_key(seed, {100}));
    double decode_err = 0.0, idem = 0.0;
    for (int i = 0; i < 2000; ++i) {
      geometry::SixVec v;
      geometry::NineMat m;
      for (int k = 0; k < 3; ++k) {
        v.nu1[k] = rng.normal();
        v.nu2[k] = rng.normal();
      }
      for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = rng.normal();
      const auto r1 = geometry::gso_to_matrix(v);
      const auto r2 = geometry::svd_to_matrix(m);
      decode_err = std::max({decode_err, geometry::orthogonality_error(r1), geometry::orthogonality_error(r2),
                             std::abs(r1.determinant() - 1.0), std::abs(r2.determinant() - 1.0)});
      idem = std::max(idem, (geometry::svd_to_matrix(r2) - r2).cwiseAbs().maxCoeff());
    }
    rows.emplace_back("geometry_decoders_so3", decode_err, 1e-9, decode_err < 1e-9);
    rows.emplace_back("svd_idempotence", idem, 1e-9, idem < 1e-9);
    nrcl::LossConfig lc;
    lc.temperature = 1.0;
    nrcl::Matrix z(1, 2), zc(1, 2), zn(1, 2);
    z << 1, 0;
    zc << 1, 0;
    zn << 0, 1;
    const double inf = nrcl::infonce_loss({z, true}, {zc, true}, {zn, true}, lc);
    const double dev = std::abs(inf - std::log1p(std::exp(-1.0)));
    rows.emplace_back("infonce_closed_form", dev, 1e-9, dev < 1e-9);
    print_table(rows);

    bool ok = true;
    for (const auto& r : rows) ok = ok && std::get<3>(r);
    if (!json_out.empty()) {
      json j = apt::to_json(rep);
      for (std::size_t i = rep.properties.size(); i < rows.size(); ++i)
        j["properties"].push_back({{"name", std::get<0>(rows[i])},
                                   {"max_deviation", std::get<1>(rows[i])},
                                   {"tolerance", std::get<2>(rows[i])},
                                   {"passed", std::get<3>(rows[i])}});
      j["passed"] = ok;
      std::ofstream f(json_out);
      if (!f) throw IoError("cannot write '" + json_out + "'");
      f << j.dump(2) << "\n";
    }
    verify_status = ok ? 0 : 1;
  });

  // nrcl-eval
  std::string embeddings_path;
  bool normalize = false;
  auto* nrcl_eval = app.add_subcommand("nrcl-eval", "contrastive losses over an embedding NDJSON file");
  add_globals(nrcl_eval);
  nrcl_eval->add_option("--input", embeddings_path,
                        "NDJSON, one line per sample: {q1, q2, k1, k2, k_clean, k_noisy}")
      ->required();
  nrcl_eval->add_flag("--normalize", normalize, "L2-normalize vectors before evaluation");
  nrcl::LossConfig loss_cfg;
  nrcl_eval->add_option("--temperature", loss_cfg.temperature, "tau");
  nrcl_eval->add_option("--rince-c", loss_cfg.rince_c, "c of the symmetric loss");
  nrcl_eval->add_option("--lambda-w", loss_cfg.lambda_w, "Wasserstein weight");
  nrcl_eval->add_option("--epsilon", loss_cfg.sinkhorn_epsilon, "Sinkhorn regularization");
  nrcl_eval->callback([&] {
    const auto rows = io::read_ndjson(embeddings_path);
    if (rows.empty()) throw ConfigError("nrcl-eval: no embeddings in '" + embeddings_path + "'");
    const auto b = nrcl::nrcl_losses(column(rows, "q1", normalize), column(rows, "q2", normalize),
                                     column(rows, "k1", normalize), column(rows, "k2", normalize),
                                     column(rows, "k_clean", normalize), column(rows, "k_noisy", normalize), loss_cfg);
    std::cout << json{{"sym_12", b.sym_12},     {"wass_12", b.wass_12}, {"sym_21", b.sym_21},
                      {"wass_21", b.wass_21},   {"instance", b.instance}, {"noise", b.noise},
                      {"total", b.total}}
                     .dump()
              << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << "cryoforge: I/O error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "cryoforge: I/O error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "cryoforge: error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "cryoforge: error: " << e.what() << "\n";
    return 1;
  }
  return verify_status;
}
