#include <gtest/gtest.h>

#include <map>

#include "cryoforge/pipeline.hpp"
#include "support/helpers.hpp"

using namespace cryoforge;
using namespace cryoforge::pipeline;
using testing_support::TempDir;

namespace {

json small_config(const fs::path& dir, std::uint64_t seed = 5) {
  testing_support::spit(dir / "ball.pdb", testing_support::solid_ball_pdb(70.0));
  testing_support::spit(dir / "shell.pdb", testing_support::hollow_shell_pdb(100.0));
  return {{"seed", seed},
          {"inputs", {{{"label", "ball"}, {"pdb", "ball.pdb"}}, {{"label", "shell"}, {"pdb", "shell.pdb"}}}},
          {"placement", {{"volume_dims", {48, 160, 160}}, {"target_count", 10}}},
          {"output_dir", "out"}};
}

// One end-to-end run shared by the tests that only inspect its outputs.
class PipelineRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cf_pipe");
    config_ = parse_config(small_config(dir_->path()), dir_->path());
    summary_ = run_pipeline(config_);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path out() { return config_.output_dir; }

  static inline TempDir* dir_ = nullptr;
  static inline PipelineConfig config_;
  static inline PipelineSummary summary_;
};

}  // namespace

TEST(Config, DefaultsFollowTheDataEngine) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.densify.voxel_size, 10.0);
  EXPECT_EQ(c.extraction.box, 32u);
  EXPECT_EQ(c.placement.safety_margin, 3.0);
  ASSERT_EQ(c.tilt.angles.size(), 61u);
  EXPECT_EQ(c.tilt.angles.front(), -60.0);
  EXPECT_EQ(c.tilt.angles.back(), 60.0);
  EXPECT_EQ(c.snr_targets, (std::vector<double>{100.0, 0.1, 0.05, 0.03, 0.01}));
  EXPECT_EQ(c.recon.output_dims, c.placement.volume_dims);
}

TEST(Config, SeedAndJobsPropagate) {
  const auto c = parse_config({{"seed", 42}, {"jobs", 3}});
  EXPECT_EQ(c.placement.seed, 42u);
  EXPECT_EQ(c.tilt.seed, 42u);
  EXPECT_EQ(c.extraction.seed, 42u);
  EXPECT_EQ(c.recon.jobs, 3u);
  EXPECT_EQ(c.align.jobs, 3u);
}

TEST(Config, SectionsOverrideDefaults) {
  const auto c = parse_config({{"tilt", {{"angles", {{"min", -30}, {"max", 30}, {"step", 10}}}, {"shift_range", 0}}},
                               {"recon", {{"filter", "ramp"}, {"weighting", "uniform"}}},
                               {"extraction", {{"box", 16}, {"jitter_range", 0}}},
                               {"noise", {{"snr_targets", {0.05}}, {"masked_variance", true}}},
                               {"densify", {{"element_table", {{"C", {0.5, 6.0}}}}}}});
  EXPECT_EQ(c.tilt.angles, (std::vector<double>{-30, -20, -10, 0, 10, 20, 30}));
  EXPECT_EQ(c.tilt.shift_range, 0.0);
  EXPECT_EQ(c.recon.filter, recon::Filter::ramp);
  EXPECT_EQ(c.recon.weighting, recon::Weighting::uniform);
  EXPECT_EQ(c.extraction.box, 16u);
  EXPECT_EQ(c.snr_targets, std::vector<double>{0.05});
  EXPECT_TRUE(c.masked_variance);
  EXPECT_EQ(c.densify.element_table.entries.at("C").sigma, 0.5);
  EXPECT_EQ(parse_config({{"tilt", {{"angles", "pretraining"}}}}).tilt.angles.size(), 91u);
}

TEST(Config, RelativePathsResolveAgainstBaseDir) {
  const auto c = parse_config({{"inputs", {{{"pdb", "a/x.pdb"}}}}, {"output_dir", "o"}}, "/base");
  EXPECT_EQ(c.inputs[0].pdb, fs::path("/base/a/x.pdb"));
  EXPECT_EQ(c.inputs[0].label, "x");
  EXPECT_EQ(c.output_dir, fs::path("/base/o"));
}

TEST(Config, InvalidConfigsAreConfigErrors) {
  EXPECT_THROW(parse_config(json::array()), ConfigError);
  EXPECT_THROW(parse_config({{"inputs", {{{"label", "a"}}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"inputs", {{{"pdb", "a"}, {"density", "b"}}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"placement", 3}}), ConfigError);
  EXPECT_THROW(parse_config({{"seed", "x"}}), ConfigError);
  EXPECT_THROW(parse_config({{"recon", {{"filter", "shepp"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"tilt", {{"angles", "sparse"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"placement", {{"volume_dims", {1, 2}}}}}), ConfigError);

  auto c = parse_config({{"inputs", {{{"pdb", "a.pdb"}}, {{"pdb", "b/a.pdb"}}}}});
  EXPECT_THROW(validate(c), ConfigError);  // both labelled "a"
  c = parse_config({{"inputs", {{{"pdb", "a.pdb"}}}}, {"noise", {{"snr_targets", {0.2}}}}});
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config({{"inputs", {{{"pdb", "a.pdb"}}}}, {"recon", {{"output_dims", {10, 10, 10}}}}});
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(validate(parse_config(json::object())), ConfigError);
}

TEST(Config, LoadConfigErrors) {
  TempDir dir;
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
  testing_support::spit(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(Config, HashIdentifiesTheRun) {
  const auto a = to_json(parse_config({{"seed", 1}}));
  EXPECT_EQ(config_hash(a), config_hash(to_json(parse_config({{"seed", 1}}))));
  EXPECT_NE(config_hash(a), config_hash(to_json(parse_config({{"seed", 2}}))));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // Reparsing the normalized form reproduces it.
  EXPECT_EQ(to_json(parse_config(a)), a);
}

TEST(Serialization, InstancesRoundTrip) {
  TempDir dir;
  std::vector<scene::ParticleInstance> v{{"a", {1.5, 2.25, 3.125}, {0.5, 0.5, -0.5, 0.5}},
                                         {"b", {0.1, 0.2, 0.3}, {1, 0, 0, 0}}};
  write_instances(v, dir / "i.ndjson");
  const auto back = read_instances(dir / "i.ndjson");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].class_label, v[i].class_label);
    EXPECT_EQ(back[i].center, v[i].center);
    EXPECT_EQ(back[i].orientation, v[i].orientation);
  }
}

TEST(Serialization, TiltSeriesAndAlignmentRoundTrip) {
  TempDir dir;
  tiltsim::TiltSeries ts;
  ts.pixel_size = 10.0;
  ts.geometry.angles = {-10, 0, 10};
  for (int i = 0; i < 3; ++i) {
    ts.projections.push_back(testing_support::periodic_blobs(8, 12, i));
    ts.applied_shifts.push_back({0.25 * i, -0.5 * i});
  }
  write_tilt_series(ts, dir.path());
  const auto back = read_tilt_series(dir.path());
  EXPECT_EQ(back.geometry.angles, ts.geometry.angles);
  ASSERT_EQ(back.projections.size(), 3u);
  EXPECT_EQ(back.applied_shifts[2].dx, 0.5);
  EXPECT_EQ(back.projections[1](3, 4), static_cast<float>(ts.projections[1](3, 4)));
  EXPECT_EQ(back.pixel_size, 10.0);

  tiltalign::AlignmentResult a;
  a.shifts = {{0.1, 0.2}, {-0.3, 0.4}, {0.2, -0.6}};
  a.axis_angle = 1.2;
  a.max_update = {0.5, 0.01};
  write_alignment(a, dir / "al.ndjson");
  const auto ab = read_alignment(dir / "al.ndjson");
  EXPECT_EQ(ab.shifts[1].dx, -0.3);
  EXPECT_EQ(ab.axis_angle, 1.2);
  EXPECT_EQ(ab.max_update, a.max_update);

  testing_support::spit(dir / "tilts.ndjson", R"({"index":0,"angle":0,"applied_shift":[0,0]})" "\n");
  EXPECT_THROW(read_tilt_series(dir.path()), ShapeError);
}

TEST_F(PipelineRun, CountsAreConserved) {
  EXPECT_EQ(summary_.placed, 10u);
  EXPECT_EQ(summary_.accepted + summary_.rejected, summary_.placed);
  EXPECT_EQ(summary_.records, summary_.accepted * 5);
  EXPECT_EQ(io::read_ndjson(out() / "rejections.ndjson").size(), summary_.rejected);
  EXPECT_EQ(read_instances(out() / "instances.ndjson").size(), summary_.placed);
}

TEST_F(PipelineRun, FivePerClassRoundRobin) {
  std::map<std::string, int> per_class;
  for (const auto& i : read_instances(out() / "instances.ndjson")) ++per_class[i.class_label];
  EXPECT_EQ(per_class["ball"], 5);
  EXPECT_EQ(per_class["shell"], 5);
}

TEST_F(PipelineRun, OutputLayout) {
  for (const char* f : {"densities/ball.mrc", "densities/shell.mrc", "sample.mrc", "tilt_series.mrc", "tilts.ndjson",
                        "alignment.ndjson", "tomogram.mrc", "metadata.ndjson", "provenance.ndjson"})
    EXPECT_TRUE(fs::exists(out() / f)) << f;
  const auto recs = io::read_metadata(out() / "metadata.ndjson");
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) {
    EXPECT_TRUE(fs::exists(out() / r.volume_path)) << r.volume_path;
    EXPECT_TRUE(fs::exists(out() / *r.mask_path));
    const fs::path dir = fs::path(r.volume_path).parent_path();
    EXPECT_EQ(dir.parent_path().string(), r.class_label);
    EXPECT_TRUE(fs::exists(out() / dir / "clean.mrc"));
    EXPECT_TRUE(fs::exists(out() / dir / "record.ndjson"));
  }
  EXPECT_EQ(io::read_mrc(out() / "tomogram.mrc").dims(), (Dims3{48, 160, 160}));
  EXPECT_EQ(io::read_mrc_stack(out() / "tilt_series.mrc").size(), 61u);
}

TEST_F(PipelineRun, ProvenanceHasOneLinePerStage) {
  const auto lines = io::read_ndjson(out() / "provenance.ndjson");
  std::vector<std::string> stages;
  for (const auto& l : lines) {
    stages.push_back(l.at("stage"));
    EXPECT_EQ(l.at("seed"), 5);
    EXPECT_EQ(l.at("config_hash"), config_hash(l.at("config")));
    EXPECT_GE(l.at("timings").at("wall_seconds").get<double>(), 0.0);
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"densify", "place", "project", "align", "reconstruct", "extract"}));
}

TEST_F(PipelineRun, MasksCoverTheParticleAndNoiseIsCalibrated) {
  const auto recs = io::read_metadata(out() / "metadata.ndjson");
  for (const auto& r : recs) {
    const auto mask = io::read_mrc(out() / *r.mask_path);
    double on = 0;
    for (float v : mask.data) on += v;
    EXPECT_GT(on, 50);
    const fs::path dir = fs::path(r.volume_path).parent_path();
    const auto clean = io::read_mrc(out() / dir / "clean.mrc");
    const auto noisy = io::read_mrc(out() / r.volume_path);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
      const double d = double(noisy.data.data()[i]) - clean.data.data()[i];
      s += d;
      s2 += d * d;
    }
    const double n = double(clean.data.size());
    const double snr = subtomo::signal_variance(clean) / (s2 / n - (s / n) * (s / n));
    EXPECT_NEAR(snr / io::snr_value(r.snr_tag), 1.0, 0.05) << r.volume_path;
  }
}

TEST_F(PipelineRun, CleanSubtomogramsSeparateByClass) {
  // Leave-one-out nearest-centroid classification by voxel correlation.
  const auto recs = io::read_metadata(out() / "metadata.ndjson");
  std::vector<std::pair<std::string, DensityVolume>> clean;
  for (const auto& r : recs)
    if (r.snr_tag == io::SnrTag::clean)
      clean.emplace_back(r.class_label, io::read_mrc(out() / fs::path(r.volume_path).parent_path() / "clean.mrc"));
  ASSERT_GE(clean.size(), 8u);
  int correct = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    std::map<std::string, std::vector<double>> sum;
    for (std::size_t j = 0; j < clean.size(); ++j) {
      if (j == i) continue;
      auto& acc = sum[clean[j].first];
      acc.resize(clean[j].second.data.size());
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += clean[j].second.data.data()[k];
    }
    std::string best;
    double best_r = -2;
    for (const auto& [label, centroid] : sum) {
      const double r = testing_support::pearson(clean[i].second.data.storage(), centroid);
      if (r > best_r) {
        best_r = r;
        best = label;
      }
    }
    correct += best == clean[i].first;
  }
  EXPECT_GE(double(correct) / double(clean.size()), 0.9);
}

TEST_F(PipelineRun, RerunIsByteIdentical) {
  TempDir again("cf_pipe2");
  auto c = parse_config(small_config(again.path()), again.path());
  run_pipeline(c);
  for (const char* f : {"metadata.ndjson", "rejections.ndjson", "instances.ndjson", "alignment.ndjson", "tilts.ndjson",
                        "tomogram.mrc"})
    EXPECT_EQ(testing_support::slurp(out() / f), testing_support::slurp(c.output_dir / f)) << f;
}

TEST_F(PipelineRun, ParallelRunMatchesSerialWithinTolerance) {
  TempDir again("cf_pipe3");
  json j = small_config(again.path());
  j["jobs"] = 3;
  auto c = parse_config(j, again.path());
  run_pipeline(c);
  const auto a = io::read_mrc(out() / "tomogram.mrc"), b = io::read_mrc(c.output_dir / "tomogram.mrc");
  double worst = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data.data()[i]) - b.data.data()[i]));
  EXPECT_LE(worst, 1e-6);
  EXPECT_EQ(testing_support::slurp(out() / "metadata.ndjson"), testing_support::slurp(c.output_dir / "metadata.ndjson"));
}

TEST(Pipeline, StageFailureNamesTheStage) {
  TempDir dir;
  auto j = small_config(dir.path());
  j["inputs"][1]["pdb"] = "nope.pdb";
  const auto c = parse_config(j, dir.path());
  try {
    run_pipeline(c);
    FAIL() << "expected an IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("stage densify"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("nope.pdb"), std::string::npos);
  }

  auto j2 = small_config(dir.path());
  j2["placement"]["volume_dims"] = {20, 160, 160};  // thinner than two exclusion radii
  const auto c2 = parse_config(j2, dir.path());
  try {
    run_pipeline(c2);
    FAIL() << "expected a stage error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage place"), std::string::npos) << e.what();
  }
}
