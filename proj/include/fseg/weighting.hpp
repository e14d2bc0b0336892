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

// Loss-weighting machinery for the alternating schedule: convergence-rate
// history, the temperature softmax with task preference, baseline
// strategies for ablation, and the poly learning-rate curve.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fseg {

// Last two recorded epoch-mean losses per task.
class RateHistory {
 public:
  explicit RateHistory(int tasks = 2);

  void Record(int task, double epoch_mean);
  int tasks() const { return static_cast<int>(recent_.size()); }
  int count(int task) const { return static_cast<int>(count_[task]); }
  // L(n-1) and L(n-2); valid once count(task) reaches 1 and 2.
  double last(int task) const { return recent_[task][1]; }
  double before_last(int task) const { return recent_[task][0]; }

  // Flat [L(n-2), L(n-1), count] per task, for checkpoints.
  std::vector<double> Serialize() const;
  static RateHistory Deserialize(std::span<const double> flat);

 private:
  std::vector<std::array<double, 2>> recent_;
  std::vector<long> count_;
};

constexpr double kRateEpsilon = 1e-12;

// r = L(n-1) / L(n-2); 1.0 until two values exist. Throws NumericalError
// when L(n-2) <= kRateEpsilon.
double ConvergenceRate(const RateHistory& history, int task);

// lambda_i = eta_i exp(r_i / T) / sum_k exp(r_k / T).
std::vector<double> DynamicWeights(std::span<const double> rates,
                                   std::span<const double> eta_pref, double temperature);

// lr_end + (lr_start - lr_end) (1 - step/total)^power.
double PolyLr(long step, long total_steps, double lr_start, double lr_end, double power = 0.9);

class WeightingStrategy {
 public:
  virtual ~WeightingStrategy() = default;
  virtual std::vector<double> Weights(const RateHistory& history) const = 0;
  virtual std::string name() const = 0;
};

struct WeightingConfig {
  std::string strategy = "dynamic";  // dynamic | uniform | manual | dwa
  double temperature = 2.0;
  std::vector<double> eta_pref{1.0, 1.0};
  std::vector<double> manual{1.0, 1.0};
};

// Accepts the names above; "manual(a, b)" also sets the constants.
// Throws ConfigError for anything else.
std::unique_ptr<WeightingStrategy> MakeWeightingStrategy(const WeightingConfig& config,
                                                         int tasks = 2);

}  // namespace fseg
