/* Copyright 2026 The fusionseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fseg/checkpoint.hpp"
#include "fseg/commands.hpp"
#include "fseg/config.hpp"
#include "fseg/image.hpp"
#include "fseg/metrics.hpp"
#include "fseg/seg_net.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

namespace fseg {
namespace {

namespace fs = std::filesystem;
using testing_support::TempDir;

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> Lines(const fs::path& path) {
  std::istringstream in(Slurp(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> Split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

// 32x32 scenes and a few iterations per phase.
Config TinyConfig(const std::string& root) {
  Config c = DeskProfile();
  c.data.root = root;
  c.synth.spec.height = 32;
  c.synth.spec.width = 32;
  c.synth.train_count = 3;
  c.synth.val_count = 2;
  c.seg.widths = {8, 8, 16, 16};
  c.seg.depths = {1, 1, 1, 1};
  c.seg.heads = {1, 1, 2, 2};
  c.seg.sr_ratios = {4, 2, 1, 1};
  c.seg.mlp_ratio = 2;
  c.seg.decoder_width = 8;
  c.fusion.base_channels = 8;
  c.fusion.growth = 4;
  c.fusion.dense_layers = 2;
  c.fusion.decoder_width = 8;
  c.fusion.tap_channels = 8;
  c.fusion.hia.channels = 8;
  c.fusion.hia.heads = 2;
  c.plan.rounds = 2;
  c.plan.seg_iters = 3;
  c.plan.fusion_iters = 2;
  c.plan.batch_size = 2;
  c.plan.warmup_iters = 2;
  return c;
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(FSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kShapeMismatch;
}

TEST(Config, JsonRoundTripIsExact) {
  const Config c = TinyConfig("somewhere");
  EXPECT_EQ(ConfigToJson(ConfigFromJson(ConfigToJson(c))), ConfigToJson(c));
  EXPECT_EQ(ConfigToJson(ConfigFromJson(ConfigToJson(FullProfile()))),
            ConfigToJson(FullProfile()));
}

TEST(Config, OverlayKeepsProfileDefaults) {
  const Config c = ConfigFromJson({{"plan", {{"rounds", 5}}}});
  EXPECT_EQ(c.plan.rounds, 5);
  EXPECT_EQ(c.plan.seg_iters, DeskProfile().plan.seg_iters);
  const Config f = ConfigFromJson({{"profile", "full"}});
  EXPECT_EQ(f.plan.rounds, 8);
  EXPECT_EQ(f.plan.seg_iters, 10000);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(KindOf([] { ConfigFromJson({{"plan", {{"roundz", 1}}}}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { ConfigFromJson({{"extra", 1}}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { ConfigFromJson({{"profile", "huge"}}); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { ConfigFromJson({{"plan", {{"rounds", "two"}}}}); }),
            ErrorKind::kConfig);
}

TEST(Config, FileRoundTrip) {
  TempDir dir("cfg");
  const Config c = TinyConfig("x");
  SaveConfig((dir.path() / "c.json").string(), c);
  EXPECT_EQ(ConfigToJson(LoadConfig((dir.path() / "c.json").string())), ConfigToJson(c));
}

Checkpoint SampleCheckpoint() {
  Checkpoint c;
  c.created = "2026-01-01T00:00:00Z";
  c.config = ConfigToJson(TinyConfig("d"));
  c.seed = 7;
  c.round = 3;
  c.scalars["pi"] = 3.141592653589793;
  c.scalars["third"] = 1.0 / 3.0;
  c.tensors.push_back({"a", {2, 3}, {1.5f, -2.0f, 0.1f, 1e-30f, 3e30f, -0.0f}});
  c.tensors.push_back({"b", {1}, {42.0f}});
  return c;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt");
  SaveCheckpoint(SampleCheckpoint(), (dir.path() / "one").string());
  const Checkpoint loaded = LoadCheckpoint((dir.path() / "one").string());
  SaveCheckpoint(loaded, (dir.path() / "two").string());
  for (const char* f : {kManifestFile, kBlobFile}) {
    EXPECT_EQ(Slurp(dir.path() / "one" / f), Slurp(dir.path() / "two" / f)) << f;
  }
  EXPECT_EQ(loaded.scalars.at("third").get<double>(), 1.0 / 3.0);
  ASSERT_NE(loaded.Find("a"), nullptr);
  EXPECT_EQ(loaded.Find("a")->values, SampleCheckpoint().tensors[0].values);
  EXPECT_EQ(loaded.Find("a")->shape, (Shape{2, 3}));
}

TEST(Checkpoint, TruncatedBlobIsCorrupt) {
  TempDir dir("ckpt");
  SaveCheckpoint(SampleCheckpoint(), dir.str());
  fs::resize_file(dir.path() / kBlobFile, fs::file_size(dir.path() / kBlobFile) - 4);
  EXPECT_EQ(KindOf([&] { LoadCheckpoint(dir.str()); }), ErrorKind::kCorruptBlob);
}

TEST(Checkpoint, GarbledManifestIsCorrupt) {
  TempDir dir("ckpt");
  SaveCheckpoint(SampleCheckpoint(), dir.str());
  std::ofstream(dir.path() / kManifestFile) << "{ not json";
  EXPECT_EQ(KindOf([&] { LoadCheckpoint(dir.str()); }), ErrorKind::kCorruptBlob);
}

TEST(Checkpoint, FutureVersionIsRejected) {
  TempDir dir("ckpt");
  Checkpoint c = SampleCheckpoint();
  c.format_version = kCheckpointVersion + 1;
  SaveCheckpoint(c, dir.str());
  EXPECT_EQ(KindOf([&] { LoadCheckpoint(dir.str()); }), ErrorKind::kVersionMismatch);
}

TEST(Checkpoint, MissingDirectoryIsIoError) {
  EXPECT_EQ(KindOf([] { LoadCheckpoint("/nonexistent/ckpt"); }), ErrorKind::kIo);
}

TEST(Synth, WritesRequestedCountsDeterministically) {
  TempDir dir("synth");
  const Config c = TinyConfig(dir.str());
  CmdSynth(c, (dir.path() / "a").string());
  CmdSynth(c, (dir.path() / "b").string());
  EXPECT_EQ(DatasetLayout::ListIds((dir.path() / "a" / "train").string()).size(), 3u);
  EXPECT_EQ(DatasetLayout::ListIds((dir.path() / "a" / "val").string()).size(), 2u);
  EXPECT_TRUE(fs::exists(dir.path() / "a" / "palette.json"));
  for (const auto& id : DatasetLayout::ListIds((dir.path() / "a" / "train").string())) {
    for (const char* sub : {"Visible", "Infrared", "Label"}) {
      const fs::path rel = fs::path("train") / sub / (id + ".png");
      EXPECT_EQ(Slurp(dir.path() / "a" / rel), Slurp(dir.path() / "b" / rel)) << rel;
    }
  }
}

TEST(Synth, ZeroCountIsConfigError) {
  TempDir dir("synth");
  Config c = TinyConfig(dir.str());
  c.synth.train_count = 0;
  EXPECT_EQ(KindOf([&] { CmdSynth(c, dir.str()); }), ErrorKind::kConfig);
}

// One synthesized dataset and one trained run shared by the tests below.
class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("run");
    config_ = new Config(TinyConfig((dir_->path() / "data").string()));
    CmdSynth(*config_, config_->data.root);
    summary_ = new TrainSummary(CmdTrain(*config_, (dir_->path() / "a").string()));
  }
  static void TearDownTestSuite() {
    delete summary_;
    delete config_;
    delete dir_;
  }
  static fs::path Path(const std::string& rel) { return dir_->path() / rel; }

  static TempDir* dir_;
  static Config* config_;
  static TrainSummary* summary_;
};

TempDir* TrainedRun::dir_ = nullptr;
Config* TrainedRun::config_ = nullptr;
TrainSummary* TrainedRun::summary_ = nullptr;

TEST_F(TrainedRun, WritesRunDirectory) {
  EXPECT_EQ(summary_->rounds_done, 2);
  EXPECT_EQ(summary_->iterations, 10);
  for (const char* f : {"config.json", "train_log.csv", "weights.csv", "clip_events.csv",
                        "audit.csv", "round_1/manifest.json", "round_2/tensors.bin",
                        "final/manifest.json"}) {
    EXPECT_TRUE(fs::exists(Path("a") / f)) << f;
  }
  EXPECT_EQ(Lines(Path("a/train_log.csv")).size(), 11u);
  EXPECT_EQ(Lines(Path("a/audit.csv")).size(), 5u);
}

TEST_F(TrainedRun, RerunIsBitwiseIdentical) {
  CmdTrain(*config_, Path("b").string());
  for (const char* f : {"train_log.csv", "weights.csv", "audit.csv", "final/tensors.bin"}) {
    EXPECT_EQ(Slurp(Path("a") / f), Slurp(Path("b") / f)) << f;
  }
}

TEST_F(TrainedRun, ResumeReproducesTheTail) {
  const TrainSummary s =
      CmdTrain(*config_, Path("resumed").string(), Path("a/round_1").string());
  EXPECT_EQ(s.rounds_done, 2);
  EXPECT_EQ(s.iterations, 10);
  const auto full = Lines(Path("a/train_log.csv"));
  const auto tail = Lines(Path("resumed/train_log.csv"));
  ASSERT_EQ(tail.size(), 6u);
  EXPECT_EQ(tail[0], full[0]);
  for (size_t i = 1; i < tail.size(); ++i) EXPECT_EQ(tail[i], full[full.size() - 6 + i]);
  EXPECT_EQ(Slurp(Path("a/final/tensors.bin")), Slurp(Path("resumed/final/tensors.bin")));
  EXPECT_EQ(Slurp(Path("a/weights.csv")), Slurp(Path("resumed/weights.csv")));
}

TEST_F(TrainedRun, MissingDatasetIsIoError) {
  Config c = *config_;
  c.data.root = Path("nowhere").string();
  EXPECT_EQ(KindOf([&] { CmdTrain(c, Path("x").string()); }), ErrorKind::kIo);
}

TEST_F(TrainedRun, FuseWritesUnitRangeImagesDeterministically) {
  const std::string input = Path("data/val").string();
  EXPECT_EQ(CmdFuse(summary_->final_checkpoint, input, Path("f1").string()), 2);
  EXPECT_EQ(CmdFuse(summary_->final_checkpoint, input, Path("f2").string()), 2);
  for (const auto& id : DatasetLayout::ListPairIds(input)) {
    for (const std::string& f : {id + "_gray.png", id + "_color.png"}) {
      EXPECT_EQ(Slurp(Path("f1") / f), Slurp(Path("f2") / f)) << f;
    }
    const Raster8 gray = ReadPng((Path("f1") / (id + "_gray.png")).string());
    EXPECT_EQ(gray.channels, 1);
    EXPECT_EQ(gray.height, 32);
    EXPECT_EQ(gray.width, 32);
  }
}

TEST_F(TrainedRun, SegmentUsesOnlyPaletteColors) {
  const std::string input = Path("data/val").string();
  EXPECT_EQ(CmdSegment(summary_->final_checkpoint, input, Path("s").string()), 2);
  const Palette palette = Palette::Load(Path("data/palette.json").string());
  for (const auto& id : DatasetLayout::ListPairIds(input)) {
    const Raster8 r = ReadPng((Path("s") / (id + ".png")).string());
    ASSERT_EQ(r.channels, 3);
    for (size_t i = 0; i < r.bytes.size(); i += 3) {
      int cls = -1;
      ASSERT_TRUE(palette.Lookup({r.bytes[i], r.bytes[i + 1], r.bytes[i + 2]}, &cls));
      EXPECT_GE(cls, 0);
      EXPECT_LT(cls, config_->num_classes());
    }
  }
}

// Metrics recomputed from an independent forward pass and the reference
// formulas in the test oracles.
TEST_F(TrainedRun, EvalMatchesOracleRecomputation) {
  const std::string split = Path("data/val").string();
  const EvalSummary s = CmdEval(summary_->final_checkpoint, split, Path("ev").string());
  EXPECT_EQ(s.images, 2);

  const Checkpoint ckpt = LoadCheckpoint(summary_->final_checkpoint);
  const Config c = CheckpointConfig(ckpt);
  JointModel model(c.seg, c.fusion, c.seed);
  RestoreModel(ckpt, model);
  const Palette palette = ConfigPalette(c);

  const auto fusion_rows = Lines(Path("ev/fusion_metrics.csv"));
  ASSERT_EQ(fusion_rows.size(), 3u);
  EXPECT_EQ(fusion_rows[0], "id,en,sd,sf,scd");
  std::vector<int> all_pred, all_gt;
  double hot = 0.0;
  int hot_n = 0;
  const auto ids = DatasetLayout::ListIds(split);
  for (size_t k = 0; k < ids.size(); ++k) {
    const Sample smp = LoadSample(split, ids[k], c.num_classes(), c.data.ignore_index, palette);
    const Image vis = ToGray(smp.pair.visible), ir = ToGray(smp.pair.infrared);
    NoGradGuard no_grad;
    const Tensor x({1, 1, 32, 32}, ToBuffer(vis.pixels)), y({1, 1, 32, 32}, ToBuffer(ir.pixels));
    const Tensor u = model.fusion.Forward(x, y, model.seg).fused;
    const std::vector<float> fused(u.values().begin(), u.values().end());
    const Tensor logits = model.seg.Forward(ReplicateToRgb(u));
    const std::span<const float> l = logits.values();
    for (int i = 0; i < 32 * 32; ++i) {
      int best = 0;
      for (int cl = 1; cl < c.num_classes(); ++cl) {
        if (l[cl * 1024 + i] > l[best * 1024 + i]) best = cl;
      }
      all_pred.push_back(best);
      all_gt.push_back(smp.label.classes[i]);
      if (smp.label.classes[i] == 1) {
        hot += fused[i];
        ++hot_n;
      }
    }
    std::vector<float> scaled(fused);
    for (float& v : scaled) v *= 255.0f;
    const auto row = Split(fusion_rows[k + 1]);
    ASSERT_EQ(row.size(), 5u);
    EXPECT_EQ(row[0], ids[k]);
    EXPECT_NEAR(std::stod(row[1]), oracle::Entropy(fused), 1e-6);
    EXPECT_NEAR(std::stod(row[2]), oracle::StdDev(scaled), 1e-5 * oracle::StdDev(scaled) + 1e-6);
    const double sf = oracle::SpatialFrequency(scaled, 32, 32);
    EXPECT_NEAR(std::stod(row[3]), sf, 1e-5 * sf + 1e-6);
    const double scd = oracle::Scd(fused, vis.pixels, ir.pixels);
    EXPECT_NEAR(std::stod(row[4]), scd, 1e-5 * std::abs(scd) + 1e-6);
  }
  const auto expected =
      oracle::SegmentationScores(all_pred, all_gt, c.num_classes(), c.data.ignore_index);
  EXPECT_NEAR(s.miou, expected.miou, 1e-9);
  EXPECT_NEAR(s.macc, expected.macc, 1e-9);
  EXPECT_NEAR(s.thermal_mean, hot_n > 0 ? hot / hot_n : 0.0, 1e-6);
  const auto seg_rows = Lines(Path("ev/segmentation_metrics.csv"));
  ASSERT_EQ(seg_rows.size(), static_cast<size_t>(c.num_classes()) + 2);
  const auto mean = Split(seg_rows.back());
  EXPECT_EQ(mean[0], "mean");
  EXPECT_NEAR(std::stod(mean[2]), expected.miou, 1e-8);
}

TEST_F(TrainedRun, InspectWeightsWritesHistory) {
  CmdInspectWeights(summary_->final_checkpoint, Path("data/val").string(), Path("w").string());
  EXPECT_FALSE(fs::is_empty(Path("w")));
}

TEST_F(TrainedRun, BinaryExitCodes) {
  TempDir dir("cli");
  std::ofstream(dir.path() / "bad.json") << R"({"plan": {"roundz": 1}})";
  EXPECT_EQ(RunCli("--config " + (dir.path() / "bad.json").string() + " train --out " +
                   (dir.path() / "o").string()),
            2);
  EXPECT_EQ(RunCli("frobnicate"), 2);
  EXPECT_EQ(RunCli("eval --checkpoint " + (dir.path() / "missing").string() + " --dataset " +
                   (dir.path() / "missing").string()),
            3);
  EXPECT_EQ(RunCli("fuse --checkpoint " + summary_->final_checkpoint + " --input " +
                   Path("data/val").string() + " --out " + (dir.path() / "fused").string()),
            0);
  EXPECT_TRUE(fs::exists(dir.path() / "fused"));
}

}  // namespace
}  // namespace fseg
