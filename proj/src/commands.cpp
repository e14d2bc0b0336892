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
#include "fseg/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "fseg/image.hpp"
#include "fseg/metrics.hpp"

namespace fseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Training data order is drawn from a stream separate from weight init.
constexpr uint64_t kDataStreamSalt = 0x9e3779b97f4a7c15ull;

void MakeDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  FSEG_CHECK(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  FSEG_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

Tensor GrayTensor(const Image& img) {
  const Image gray = ToGray(img);
  return Tensor({1, 1, gray.height, gray.width}, ToBuffer(gray.pixels));
}

Image TensorToGray(const Tensor& t) { return UnstackGray(t).at(0); }

std::vector<int> Argmax(const Tensor& logits) {
  const int k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<int> out(hw, 0);
  const float* p = logits.data();
  for (int i = 0; i < hw; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if (p[static_cast<int64_t>(c) * hw + i] > p[static_cast<int64_t>(best) * hw + i]) best = c;
    }
    out[i] = best;
  }
  return out;
}

struct Prediction {
  Image fused;
  std::vector<int> labels;
};

Prediction Predict(const JointModel& model, const AlignedPair& pair) {
  NoGradGuard no_grad;
  const Tensor x = GrayTensor(pair.visible), y = GrayTensor(pair.infrared);
  const Tensor u = model.fusion.Forward(x, y, model.seg).fused;
  const Tensor logits = model.seg.Forward(ReplicateToRgb(u));
  return {TensorToGray(u), Argmax(logits)};
}

struct LoadedModel {
  Config config;
  std::unique_ptr<JointModel> model;
};

LoadedModel LoadModel(const std::string& checkpoint_dir) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint_dir);
  LoadedModel m;
  m.config = CheckpointConfig(ckpt);
  m.model = std::make_unique<JointModel>(m.config.seg, m.config.fusion, m.config.seed);
  RestoreModel(ckpt, *m.model);
  return m;
}

void CopyInto(const NamedTensor& src, Tensor dst) {
  FSEG_CHECK(src.shape == dst.shape(), ErrorKind::kShapeMismatch,
             "checkpoint tensor " + src.name + " has shape " + ShapeString(src.shape) +
                 ", model expects " + ShapeString(dst.shape()));
  std::copy(src.values.begin(), src.values.end(), dst.data());
}

const NamedTensor& Require(const Checkpoint& ckpt, const std::string& name) {
  const NamedTensor* t = ckpt.Find(name);
  FSEG_CHECK(t != nullptr, ErrorKind::kCorruptBlob, "checkpoint lacks tensor " + name);
  return *t;
}

json WeightsToJson(const std::vector<WeightRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({r.round, r.iteration, r.mean_fusion, r.mean_seg, r.rate_fusion, r.rate_seg,
                   r.lambda1, r.lambda2});
  }
  return out;
}

std::vector<WeightRecord> WeightsFromJson(const json& doc) {
  std::vector<WeightRecord> out;
  for (const auto& r : doc) {
    out.push_back({r.at(0).get<int>(), r.at(1).get<long>(), r.at(2).get<double>(),
                   r.at(3).get<double>(), r.at(4).get<double>(), r.at(5).get<double>(),
                   r.at(6).get<double>(), r.at(7).get<double>()});
  }
  return out;
}

void WriteWeights(const fs::path& path, const std::vector<WeightRecord>& records) {
  std::ofstream out = OpenOut(path);
  out << WeightHeader() << "\n";
  for (const auto& r : records) out << FormatWeightRecord(r) << "\n";
}

std::vector<Sample> LoadSplit(const Config& config, const std::string& root) {
  const Palette palette = ConfigPalette(config);
  std::vector<Sample> samples;
  for (const auto& id : DatasetLayout::ListIds(root)) {
    samples.push_back(
        LoadSample(root, id, config.num_classes(), config.data.ignore_index, palette));
  }
  FSEG_CHECK(!samples.empty(), ErrorKind::kIo, "no samples under " + root);
  return samples;
}

}  // namespace

void ConfigureAllocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kNumerical:
      return 4;
    default:
      return 3;
  }
}

Config ResolveConfig(const GlobalOptions& options) {
  Config c = options.config_path.empty() ? DeskProfile() : LoadConfig(options.config_path);
  if (options.seed) {
    c.seed = *options.seed;
    c.synth.spec.seed = *options.seed;
  }
  ValidateConfig(c);
  return c;
}

void CmdSynth(const Config& config, const std::string& out_dir) {
  FSEG_CHECK(config.synth.train_count > 0, ErrorKind::kConfig,
             "synth.train_count must be positive");
  const Palette palette = ConfigPalette(config);
  MakeDir(out_dir);
  Rng rng(config.synth.spec.seed);
  auto write_split = [&](const std::string& split, int count) {
    const fs::path root = fs::path(out_dir) / split;
    for (const char* sub : {"Visible", "Infrared", "Label"}) MakeDir(root / sub);
    for (int i = 0; i < count; ++i) {
      Sample s = SynthScene(config.synth.spec, rng);
      char id[16];
      std::snprintf(id, sizeof(id), "%05d", i);
      WritePng(DatasetLayout::VisiblePath(root.string(), id), ToRaster(s.pair.visible));
      WritePng(DatasetLayout::InfraredPath(root.string(), id), ToRaster(s.pair.infrared));
      SaveLabel(DatasetLayout::LabelPath(root.string(), id), s.label, palette);
    }
  };
  write_split("train", config.synth.train_count);
  write_split("val", config.synth.val_count);
  palette.Save((fs::path(out_dir) / "palette.json").string());
  SaveConfig((fs::path(out_dir) / "config.json").string(), config);
}

Config CheckpointConfig(const Checkpoint& ckpt) { return ConfigFromJson(ckpt.config); }

Checkpoint CaptureCheckpoint(const Config& config, const JointModel& model, Trainer* trainer,
                             int round) {
  Checkpoint ckpt;
  ckpt.config = ConfigToJson(config);
  ckpt.seed = config.seed;
  ckpt.round = round;
  const nn::ParamSet params = model.AllParams();
  for (const auto& [name, t] : params.items()) ckpt.Add(name, t);
  if (trainer) {
    auto add_moments = [&](const std::string& tag, const Adam& opt) {
      const auto& items = opt.params().items();
      for (size_t i = 0; i < items.size(); ++i) {
        const Shape& shape = items[i].second.shape();
        ckpt.tensors.push_back({"adam." + tag + ".m." + items[i].first, shape,
                                opt.first_moments()[i]});
        ckpt.tensors.push_back({"adam." + tag + ".v." + items[i].first, shape,
                                opt.second_moments()[i]});
      }
      ckpt.scalars["adam_" + tag + "_steps"] = opt.steps();
    };
    add_moments("seg", trainer->seg_optimizer());
    add_moments("fusion", trainer->fusion_optimizer());
    const TrainState& st = trainer->state();
    ckpt.scalars["rounds_done"] = st.rounds_done;
    ckpt.scalars["iteration"] = st.iteration;
    ckpt.scalars["rate_history"] = st.history.Serialize();
    ckpt.scalars["lambdas"] = st.lambdas;
    ckpt.scalars["rng"] = st.rng.SaveState();
    ckpt.scalars["weights"] = WeightsToJson(st.weights);
  }
  return ckpt;
}

void RestoreModel(const Checkpoint& ckpt, JointModel& model) {
  const nn::ParamSet params = model.AllParams();
  for (const auto& [name, t] : params.items()) CopyInto(Require(ckpt, name), t);
}

void RestoreTrainer(const Checkpoint& ckpt, Trainer& trainer) {
  try {
    auto load_moments = [&](const std::string& tag, Adam& opt) {
      const auto& items = opt.params().items();
      for (size_t i = 0; i < items.size(); ++i) {
        const NamedTensor& m = Require(ckpt, "adam." + tag + ".m." + items[i].first);
        const NamedTensor& v = Require(ckpt, "adam." + tag + ".v." + items[i].first);
        FSEG_CHECK(m.values.size() == opt.first_moments()[i].size() &&
                       v.values.size() == opt.second_moments()[i].size(),
                   ErrorKind::kShapeMismatch, "optimizer moments for " + items[i].first);
        opt.first_moments()[i] = m.values;
        opt.second_moments()[i] = v.values;
      }
      opt.set_steps(ckpt.scalars.at("adam_" + tag + "_steps").get<long>());
    };
    load_moments("seg", trainer.seg_optimizer());
    load_moments("fusion", trainer.fusion_optimizer());
    TrainState& st = trainer.state();
    st.rounds_done = ckpt.scalars.at("rounds_done").get<int>();
    st.iteration = ckpt.scalars.at("iteration").get<long>();
    st.history = RateHistory::Deserialize(
        ckpt.scalars.at("rate_history").get<std::vector<double>>());
    st.lambdas = ckpt.scalars.at("lambdas").get<std::vector<double>>();
    st.rng.LoadState(ckpt.scalars.at("rng").get<std::string>());
    st.weights = WeightsFromJson(ckpt.scalars.at("weights"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptBlob, std::string("checkpoint training state: ") + e.what());
  }
}

TrainSummary CmdTrain(const Config& requested, const std::string& out_dir,
                      const std::string& resume) {
  Config config = requested;
  Checkpoint resumed;
  if (!resume.empty()) {
    resumed = LoadCheckpoint(resume);
    config = CheckpointConfig(resumed);
  }
  const std::string train_root = (fs::path(config.data.root) / "train").string();
  std::vector<Sample> samples = LoadSplit(config, train_root);

  MakeDir(out_dir);
  const fs::path out(out_dir);
  SaveConfig((out / "config.json").string(), config);

  JointModel model(config.seg, config.fusion, config.seed);
  TrainState state;
  state.rng = Rng(config.seed ^ kDataStreamSalt);
  if (!resume.empty()) RestoreModel(resumed, model);
  Trainer trainer(MakeTrainOptions(config), model, std::move(samples), std::move(state));
  if (!resume.empty()) RestoreTrainer(resumed, trainer);

  std::ofstream log = OpenOut(out / "train_log.csv");
  log << LogHeader() << "\n";
  std::ofstream clips = OpenOut(out / "clip_events.csv");
  clips << "iteration,phase,grad_norm\n";
  trainer.on_log = [&log](const LogRow& row) { log << FormatLogRow(row) << "\n"; };
  trainer.on_clip = [&clips](const ClipEvent& e) {
    clips << e.iteration << "," << e.phase << "," << e.norm << "\n";
  };

  TrainSummary summary;
  try {
    while (!trainer.done()) {
      trainer.RunRound();
      const int round = trainer.state().rounds_done;
      log.flush();
      clips.flush();
      WriteWeights(out / "weights.csv", trainer.state().weights);
      SaveCheckpoint(CaptureCheckpoint(config, model, &trainer, round),
                     (out / ("round_" + std::to_string(round))).string());
    }
  } catch (const Error&) {
    log.flush();
    clips.flush();
    throw;
  }
  std::ofstream audit = OpenOut(out / "audit.csv");
  audit << "round,phase,frozen_before,frozen_after,trained_before,trained_after\n";
  for (const auto& a : trainer.audits()) {
    audit << a.round << "," << a.phase << "," << a.frozen_before << "," << a.frozen_after
          << "," << a.trained_before << "," << a.trained_after << "\n";
  }
  summary.rounds_done = trainer.state().rounds_done;
  summary.iterations = trainer.state().iteration;
  summary.audits = trainer.audits();
  summary.final_checkpoint = (out / "final").string();
  SaveCheckpoint(CaptureCheckpoint(config, model, &trainer, summary.rounds_done),
                 summary.final_checkpoint);
  return summary;
}

int CmdFuse(const std::string& checkpoint_dir, const std::string& pair_dir,
            const std::string& out_dir) {
  const LoadedModel m = LoadModel(checkpoint_dir);
  MakeDir(out_dir);
  const auto ids = DatasetLayout::ListPairIds(pair_dir);
  for (const auto& id : ids) {
    AlignedPair pair = LoadPair(DatasetLayout::VisiblePath(pair_dir, id),
                                DatasetLayout::InfraredPath(pair_dir, id));
    const Prediction p = Predict(*m.model, pair);
    WritePng((fs::path(out_dir) / (id + "_gray.png")).string(), ToRaster(p.fused));
    const Image color = pair.visible.channels == 3 ? RecombineChroma(p.fused, pair.visible)
                                                   : p.fused;
    WritePng((fs::path(out_dir) / (id + "_color.png")).string(), ToRaster(color));
  }
  return static_cast<int>(ids.size());
}

int CmdSegment(const std::string& checkpoint_dir, const std::string& image_dir,
               const std::string& out_dir) {
  const LoadedModel m = LoadModel(checkpoint_dir);
  const Palette palette = ConfigPalette(m.config);
  MakeDir(out_dir);
  const auto ids = DatasetLayout::ListPairIds(image_dir);
  for (const auto& id : ids) {
    AlignedPair pair = LoadPair(DatasetLayout::VisiblePath(image_dir, id),
                                DatasetLayout::InfraredPath(image_dir, id));
    Prediction p = Predict(*m.model, pair);
    LabelMap label;
    label.height = pair.visible.height;
    label.width = pair.visible.width;
    label.num_classes = m.config.num_classes();
    label.ignore_index = m.config.data.ignore_index;
    label.classes = std::move(p.labels);
    SaveLabel((fs::path(out_dir) / (id + ".png")).string(), label, palette);
  }
  return static_cast<int>(ids.size());
}

EvalSummary CmdEval(const std::string& checkpoint_dir, const std::string& dataset_dir,
                    const std::string& out_dir) {
  const LoadedModel m = LoadModel(checkpoint_dir);
  const Config& c = m.config;
  const std::vector<Sample> samples = LoadSplit(c, dataset_dir);
  ConfusionMatrix cm(c.num_classes());
  std::vector<FusionScores> rows;
  double hot_sum = 0.0;
  int64_t hot_n = 0;
  const auto& thermal = c.synth.spec.thermal_classes;
  for (const Sample& s : samples) {
    const Prediction p = Predict(*m.model, s.pair);
    cm.Add(p.labels, s.label.classes, s.label.ignore_index);
    rows.push_back(ScoreFusion(p.fused, ToGray(s.pair.visible), ToGray(s.pair.infrared),
                               s.pair.id));
    for (size_t i = 0; i < s.label.classes.size(); ++i) {
      const int cls = s.label.classes[i];
      if (std::find(thermal.begin(), thermal.end(), cls) != thermal.end()) {
        hot_sum += p.fused.pixels[i];
        ++hot_n;
      }
    }
  }
  const SegmentationScores scores = ScoreSegmentation(cm);
  MakeDir(out_dir);
  std::ofstream fusion_csv = OpenOut(fs::path(out_dir) / "fusion_metrics.csv");
  WriteFusionCsv(fusion_csv, rows);
  std::ofstream seg_csv = OpenOut(fs::path(out_dir) / "segmentation_metrics.csv");
  WriteSegmentationCsv(seg_csv, scores);
  EvalSummary summary;
  summary.images = static_cast<int>(samples.size());
  summary.miou = scores.miou;
  summary.macc = scores.macc;
  summary.thermal_mean = hot_n ? hot_sum / hot_n : 0.0;
  return summary;
}

void CmdInspectWeights(const std::string& checkpoint_dir, const std::string& dataset_dir,
                       const std::string& out_dir) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint_dir);
  MakeDir(out_dir);
  std::vector<WeightRecord> records;
  if (ckpt.scalars.contains("weights")) {
    try {
      records = WeightsFromJson(ckpt.scalars.at("weights"));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kCorruptBlob, std::string("weight history: ") + e.what());
    }
  }
  WriteWeights(fs::path(out_dir) / "weights.csv", records);
  if (dataset_dir.empty()) return;

  const Config config = CheckpointConfig(ckpt);
  JointModel model(config.seg, config.fusion, config.seed);
  RestoreModel(ckpt, model);
  const auto ids = DatasetLayout::ListPairIds(dataset_dir);
  FSEG_CHECK(!ids.empty(), ErrorKind::kIo, "no image pairs under " + dataset_dir);
  const AlignedPair pair = LoadPair(DatasetLayout::VisiblePath(dataset_dir, ids[0]),
                                    DatasetLayout::InfraredPath(dataset_dir, ids[0]));
  NoGradGuard no_grad;
  const FusionResult r = model.fusion.Forward(GrayTensor(pair.visible),
                                              GrayTensor(pair.infrared), model.seg, true);
  std::ofstream out = OpenOut(fs::path(out_dir) / "attention.csv");
  out << "block,kind,head,norm\n";
  auto dump = [&out](const char* block, const HiaDiagnostics& d) {
    const std::pair<const char*, const std::vector<float>*> kinds[] = {
        {"soam_ir", &d.soam_ir}, {"soam_vis", &d.soam_vis},
        {"moam_ir", &d.moam_ir}, {"moam_vis", &d.moam_vis}};
    for (const auto& [kind, values] : kinds) {
      for (size_t h = 0; h < values->size(); ++h) {
        out << block << "," << kind << "," << h << "," << (*values)[h] << "\n";
      }
    }
  };
  dump("hia1", r.hia1);
  dump("hia2", r.hia2);
}

}  // namespace fseg
