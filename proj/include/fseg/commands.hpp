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
#pragma once

// Command implementations behind the fseg CLI. Each returns normally on
// success and throws fseg::Error otherwise; ExitCodeFor maps the error to
// the process exit status.

#include <optional>
#include <string>
#include <vector>

#include "fseg/checkpoint.hpp"
#include "fseg/config.hpp"
#include "fseg/errors.hpp"
#include "fseg/trainer.hpp"

namespace fseg {

// Keeps large activation buffers on the heap instead of fresh mappings;
// call once at process start. No effect outside glibc.
void ConfigureAllocator();

// 0 success, 2 configuration, 3 data / IO, 4 numerical failure.
int ExitCodeFor(ErrorKind kind);

struct GlobalOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
  std::string resume;
};

// Profile defaults, then the --config file, then --seed (which also seeds
// the synthetic generator).
Config ResolveConfig(const GlobalOptions& options);

// Writes <out>/train and <out>/val in the dataset layout plus palette.json
// and the effective config.
void CmdSynth(const Config& config, const std::string& out_dir);

struct TrainSummary {
  int rounds_done = 0;
  long iterations = 0;
  std::vector<PhaseAudit> audits;
  std::string final_checkpoint;
};

// Trains on <data.root>/train. Run directory contents: config.json,
// train_log.csv, weights.csv, clip_events.csv, audit.csv, round_<n>/ and
// final/ checkpoints. With a resume path the checkpoint's config snapshot
// is used and logging continues after the checkpointed iteration.
TrainSummary CmdTrain(const Config& config, const std::string& out_dir,
                      const std::string& resume = "");

// Inputs: <pair_dir>/{Visible,Infrared}/<id>.png. Writes <id>_gray.png and
// <id>_color.png (chroma of the visible image recombined with the fused
// luma). Returns the number of pairs.
int CmdFuse(const std::string& checkpoint_dir, const std::string& pair_dir,
            const std::string& out_dir);

// Same inputs; writes <id>.png label maps rendered through the palette.
int CmdSegment(const std::string& checkpoint_dir, const std::string& image_dir,
               const std::string& out_dir);

struct EvalSummary {
  int images = 0;
  double miou = 0.0;
  double macc = 0.0;
  // Mean fused intensity over pixels of the synthetic thermal classes.
  double thermal_mean = 0.0;
};

// Evaluates <dataset_dir> (dataset layout). Writes fusion_metrics.csv and
// segmentation_metrics.csv.
EvalSummary CmdEval(const std::string& checkpoint_dir, const std::string& dataset_dir,
                    const std::string& out_dir);

// Writes the recorded lambda / rate history of a checkpoint as CSV and,
// when a dataset is given, per-head HIA attention norms for its first pair.
void CmdInspectWeights(const std::string& checkpoint_dir, const std::string& dataset_dir,
                       const std::string& out_dir);

// Model and training-state persistence.
Checkpoint CaptureCheckpoint(const Config& config, const JointModel& model,
                             Trainer* trainer, int round);
void RestoreModel(const Checkpoint& ckpt, JointModel& model);
void RestoreTrainer(const Checkpoint& ckpt, Trainer& trainer);
Config CheckpointConfig(const Checkpoint& ckpt);

}  // namespace fseg
