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
// fseg command-line entry point.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fseg/commands.hpp"
#include "fseg/errors.hpp"

namespace {

int Run(int argc, char** argv) {
  CLI::App app{"Joint infrared/visible image fusion and semantic segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  fseg::GlobalOptions global;
  uint64_t seed = 0;
  app.add_option("--config", global.config_path, "JSON config overlaid on its profile")
      ->check(CLI::ExistingFile);
  CLI::Option* seed_opt = app.add_option("--seed", seed, "RNG seed");
  app.add_option("--out", global.out, "Output directory");
  app.add_option("--resume", global.resume, "Checkpoint directory to resume training from");

  std::string checkpoint, input;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  CLI::App* train = app.add_subcommand("train", "Run the alternating training schedule");
  CLI::App* fuse = app.add_subcommand("fuse", "Fuse image pairs with a trained checkpoint");
  CLI::App* segment = app.add_subcommand("segment", "Predict label maps for image pairs");
  CLI::App* eval = app.add_subcommand("eval", "Write fusion and segmentation metric CSVs");
  CLI::App* inspect =
      app.add_subcommand("inspect-weights", "Dump the lambda / rate history of a checkpoint");
  for (CLI::App* sub : {fuse, segment, eval, inspect}) {
    sub->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  }
  for (CLI::App* sub : {fuse, segment}) {
    sub->add_option("--input", input, "Directory with Visible/ and Infrared/")->required();
  }
  eval->add_option("--dataset", input, "Dataset split directory")->required();
  inspect->add_option("--dataset", input, "Dataset for per-head attention norms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) global.seed = seed;

  const auto out_or = [&](const std::string& fallback) {
    return global.out.empty() ? fallback : global.out;
  };

  if (synth->parsed()) {
    const fseg::Config config = fseg::ResolveConfig(global);
    fseg::CmdSynth(config, out_or(config.data.root));
    std::printf("synthetic dataset written to %s\n", out_or(config.data.root).c_str());
  } else if (train->parsed()) {
    const fseg::Config config = fseg::ResolveConfig(global);
    const fseg::TrainSummary s = fseg::CmdTrain(config, out_or("runs/train"), global.resume);
    std::printf("rounds %d, iterations %ld, final checkpoint %s\n", s.rounds_done,
                s.iterations, s.final_checkpoint.c_str());
  } else if (fuse->parsed()) {
    const int n = fseg::CmdFuse(checkpoint, input, out_or("fused"));
    std::printf("fused %d pairs\n", n);
  } else if (segment->parsed()) {
    const int n = fseg::CmdSegment(checkpoint, input, out_or("segmented"));
    std::printf("segmented %d pairs\n", n);
  } else if (eval->parsed()) {
    const fseg::EvalSummary s = fseg::CmdEval(checkpoint, input, out_or("eval"));
    std::printf("images %d, mIoU %.4f, mAcc %.4f, thermal mean %.4f\n", s.images, s.miou,
                s.macc, s.thermal_mean);
  } else if (inspect->parsed()) {
    fseg::CmdInspectWeights(checkpoint, input, out_or("weights"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  fseg::ConfigureAllocator();
  try {
    return Run(argc, argv);
  } catch (const fseg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fseg::ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
