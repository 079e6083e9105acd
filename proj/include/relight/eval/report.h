// Copyright 2026 The Relight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "relight/pipeline/pipeline.h"

namespace relight::eval {

struct PairResult {
  int pair_index = 0;
  int input_index = 0;
  double mse = 0.0;
  double dssim = 0.0;
  double baseline_mse = 0.0;    // masked MSE(input, ground truth)
  double baseline_dssim = 0.0;
};

struct Stats {
  double mean = 0.0;
  double se = 0.0;      // sample std / sqrt(n)
  double median = 0.0;
};

Stats compute_stats(const std::vector<double>& values);

struct EvalReport {
  std::vector<PairResult> pairs;
  Stats mse, dssim, baseline_mse, baseline_dssim;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Relights every pair's input toward its target light/c, scores masked MSE
// and DSSIM against the ground-truth renders (after an 8-bit PNG round trip),
// and writes report.json, report.csv and side-by-side grids under out_dir.
EvalReport eval_relight(pipeline::ModelBundle& model, const std::string& pairs_dir,
                        const std::string& out_dir, int steps);

struct AblationRow {
  std::string mode;
  uint64_t seed = 0;
  double mean_dssim = 0.0;
  double mean_mse = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<uint64_t> seeds;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Trains the three conditioning modes with identical budgets for each seed,
// evaluates each on the same pairs, and emits a three-row table per seed.
AblationTable run_ablation_suite(const pipeline::TrainConfig& base_config,
                                 const std::string& dataset_dir, const std::string& pairs_dir,
                                 const std::vector<uint64_t>& seeds, const std::string& out_dir,
                                 int eval_steps);

}  // namespace relight::eval
