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
#include "fseg/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "fseg/errors.hpp"

namespace fseg {

RateHistory::RateHistory(int tasks) : recent_(tasks, {0.0, 0.0}), count_(tasks, 0) {}

void RateHistory::Record(int task, double epoch_mean) {
  FSEG_CHECK(task >= 0 && task < tasks(), ErrorKind::kConfig, "task index out of range");
  FSEG_CHECK(std::isfinite(epoch_mean), ErrorKind::kNumerical, "non-finite epoch loss");
  recent_[task][0] = recent_[task][1];
  recent_[task][1] = epoch_mean;
  ++count_[task];
}

std::vector<double> RateHistory::Serialize() const {
  std::vector<double> flat;
  for (int t = 0; t < tasks(); ++t) {
    flat.push_back(recent_[t][0]);
    flat.push_back(recent_[t][1]);
    flat.push_back(static_cast<double>(count_[t]));
  }
  return flat;
}

RateHistory RateHistory::Deserialize(std::span<const double> flat) {
  FSEG_CHECK(flat.size() % 3 == 0, ErrorKind::kCorruptBlob, "rate history length");
  RateHistory h(static_cast<int>(flat.size() / 3));
  for (int t = 0; t < h.tasks(); ++t) {
    h.recent_[t] = {flat[3 * t], flat[3 * t + 1]};
    h.count_[t] = static_cast<long>(flat[3 * t + 2]);
  }
  return h;
}

double ConvergenceRate(const RateHistory& history, int task) {
  if (history.count(task) < 2) return 1.0;
  const double older = history.before_last(task);
  FSEG_CHECK(older > kRateEpsilon, ErrorKind::kNumerical,
             "convergence rate undefined: L(n-2) = " + std::to_string(older));
  return history.last(task) / older;
}

std::vector<double> DynamicWeights(std::span<const double> rates,
                                   std::span<const double> eta_pref, double temperature) {
  FSEG_CHECK(rates.size() == eta_pref.size() && !rates.empty(), ErrorKind::kConfig,
             "rates and preferences differ in length");
  FSEG_CHECK(temperature > 0.0, ErrorKind::kConfig, "temperature must be positive");
  for (double r : rates) {
    FSEG_CHECK(std::isfinite(r), ErrorKind::kNumerical, "non-finite convergence rate");
  }
  const double mx = *std::max_element(rates.begin(), rates.end()) / temperature;
  std::vector<double> e(rates.size());
  double sum = 0.0;
  for (size_t i = 0; i < rates.size(); ++i) sum += (e[i] = std::exp(rates[i] / temperature - mx));
  std::vector<double> out(rates.size());
  for (size_t i = 0; i < rates.size(); ++i) out[i] = eta_pref[i] * e[i] / sum;
  return out;
}

double PolyLr(long step, long total_steps, double lr_start, double lr_end, double power) {
  FSEG_CHECK(total_steps > 0 && step >= 0 && step <= total_steps, ErrorKind::kConfig,
             "poly lr step " + std::to_string(step) + " outside [0, " +
                 std::to_string(total_steps) + "]");
  const double frac = 1.0 - static_cast<double>(step) / total_steps;
  return lr_end + (lr_start - lr_end) * std::pow(frac, power);
}

namespace {

std::vector<double> Rates(const RateHistory& h) {
  std::vector<double> r(h.tasks());
  for (int t = 0; t < h.tasks(); ++t) r[t] = ConvergenceRate(h, t);
  return r;
}

class DynamicStrategy : public WeightingStrategy {
 public:
  DynamicStrategy(std::vector<double> eta, double t) : eta_(std::move(eta)), t_(t) {}
  std::vector<double> Weights(const RateHistory& h) const override {
    return DynamicWeights(Rates(h), eta_, t_);
  }
  std::string name() const override { return "dynamic"; }

 private:
  std::vector<double> eta_;
  double t_;
};

class UniformStrategy : public WeightingStrategy {
 public:
  explicit UniformStrategy(int k) : k_(k) {}
  std::vector<double> Weights(const RateHistory&) const override {
    return std::vector<double>(k_, 1.0 / k_);
  }
  std::string name() const override { return "uniform"; }

 private:
  int k_;
};

class ManualStrategy : public WeightingStrategy {
 public:
  explicit ManualStrategy(std::vector<double> w) : w_(std::move(w)) {}
  std::vector<double> Weights(const RateHistory&) const override { return w_; }
  std::string name() const override { return "manual"; }

 private:
  std::vector<double> w_;
};

// K-scaled softmax of the rates.
class DwaStrategy : public WeightingStrategy {
 public:
  DwaStrategy(int k, double t) : k_(k), t_(t) {}
  std::vector<double> Weights(const RateHistory& h) const override {
    const std::vector<double> scale(k_, static_cast<double>(k_));
    return DynamicWeights(Rates(h), scale, t_);
  }
  std::string name() const override { return "dwa"; }

 private:
  int k_;
  double t_;
};

}  // namespace

std::unique_ptr<WeightingStrategy> MakeWeightingStrategy(const WeightingConfig& config,
                                                         int tasks) {
  FSEG_CHECK(config.temperature > 0.0, ErrorKind::kConfig, "temperature must be positive");
  std::string name = config.strategy;
  std::vector<double> manual = config.manual;
  static const std::regex kManual(R"(\s*manual\s*\(\s*([^,\s]+)\s*,\s*([^,\s\)]+)\s*\)\s*)");
  std::smatch m;
  if (std::regex_match(name, m, kManual)) {
    try {
      manual = {std::stod(m[1].str()), std::stod(m[2].str())};
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad manual weights in " + name);
    }
    name = "manual";
  }
  if (name == "dynamic") {
    FSEG_CHECK(static_cast<int>(config.eta_pref.size()) == tasks, ErrorKind::kConfig,
               "eta_pref needs one entry per task");
    for (double e : config.eta_pref) {
      FSEG_CHECK(e > 0.0, ErrorKind::kConfig, "eta_pref entries must be positive");
    }
    return std::make_unique<DynamicStrategy>(config.eta_pref, config.temperature);
  }
  if (name == "uniform") return std::make_unique<UniformStrategy>(tasks);
  if (name == "manual") {
    FSEG_CHECK(static_cast<int>(manual.size()) == tasks, ErrorKind::kConfig,
               "manual weights need one entry per task");
    return std::make_unique<ManualStrategy>(manual);
  }
  if (name == "dwa") return std::make_unique<DwaStrategy>(tasks, config.temperature);
  throw Error(ErrorKind::kConfig, "unknown weighting strategy '" + config.strategy + "'");
}

}  // namespace fseg
