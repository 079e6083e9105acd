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

#include "relight/eval/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "relight/core/error.h"
#include "relight/eval/metrics.h"

namespace relight::eval {

namespace fs = std::filesystem;

Stats compute_stats(const std::vector<double>& values) {
  check(!values.empty(), "stats: empty sample");
  Stats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    double var = sq / static_cast<double>(values.size() - 1);
    s.se = std::sqrt(var) / std::sqrt(static_cast<double>(values.size()));
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

namespace {

nlohmann::json stats_json(const Stats& s) {
  return {{"mean", s.mean}, {"se", s.se}, {"median", s.median}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8f", v);
  return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["note"] = "masks come from the synthetic rasterizer, not a face parser; "
              "metrics are masked MSE and DSSIM in [0,1] after PNG round trip";
  j["n_pairs"] = pairs.size();
  j["mse"] = stats_json(mse);
  j["dssim"] = stats_json(dssim);
  j["baseline_mse"] = stats_json(baseline_mse);
  j["baseline_dssim"] = stats_json(baseline_dssim);
  j["config"] = config_echo;
  return j;
}

std::string EvalReport::to_csv() const {
  std::string out = "pair,input_index,mse,dssim,baseline_mse,baseline_dssim\n";
  for (const auto& p : pairs) {
    out += std::to_string(p.pair_index) + "," + std::to_string(p.input_index) + "," + fmt(p.mse) +
           "," + fmt(p.dssim) + "," + fmt(p.baseline_mse) + "," + fmt(p.baseline_dssim) + "\n";
  }
  return out;
}

EvalReport eval_relight(pipeline::ModelBundle& model, const std::string& pairs_dir,
                        const std::string& out_dir, int steps) {
  std::string pairs_json = (fs::path(pairs_dir) / "pairs.json").string();
  std::vector<data::EvalPair> pairs = data::read_eval_pairs(pairs_json);
  check(!pairs.empty(), "eval: empty pairs manifest");

  std::ifstream in(pairs_json);
  nlohmann::json pairs_root;
  in >> pairs_root;
  std::string dataset_dir = pairs_root.at("dataset_dir").get<std::string>();

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "relit", ec);
  fs::create_directories(fs::path(out_dir) / "grids", ec);
  if (ec) throw IoError("cannot create eval output directory: " + out_dir);

  EvalReport report;
  report.config_echo = {{"steps", steps},
                        {"pairs", pairs_json},
                        {"mode", nn::to_string(model.config.mode)},
                        {"train_config", model.config.to_json()}};

  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    std::string stem = data::sample_stem(dataset_dir, "test", pair.input_index);
    Tensor32 input01 = read_png_rgb(stem + ".png");
    Mask mask = read_png_mask(stem + ".mask.png");
    enc::FeatureVector f = enc::import_sidecar(stem + ".json");
    Tensor32 gt01 = read_png_rgb((fs::path(pairs_dir) / pair.gt_path).string());

    sh::LightSH target_light = sh::LightSH::from_flat(pair.target_light);
    Tensor32 relit = pipeline::relight(model, to_signed_range(input01), f, target_light,
                                       pair.target_c, steps);
    Tensor32 relit01 = png_round_trip(to_unit_range(relit));

    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png_rgb((fs::path(out_dir) / "relit" / name).string(), relit01);
    write_png_rgb((fs::path(out_dir) / "grids" / name).string(),
                  pipeline::tile_horizontal({input01, relit01, gt01}));

    PairResult r;
    r.pair_index = static_cast<int>(i);
    r.input_index = pair.input_index;
    r.mse = masked_mse(relit01, gt01, mask);
    r.dssim = dssim(relit01, gt01, mask);
    r.baseline_mse = masked_mse(input01, gt01, mask);
    r.baseline_dssim = dssim(input01, gt01, mask);
    report.pairs.push_back(r);
  }

  std::vector<double> v_mse, v_dssim, v_bmse, v_bdssim;
  for (const auto& p : report.pairs) {
    v_mse.push_back(p.mse);
    v_dssim.push_back(p.dssim);
    v_bmse.push_back(p.baseline_mse);
    v_bdssim.push_back(p.baseline_dssim);
  }
  report.mse = compute_stats(v_mse);
  report.dssim = compute_stats(v_dssim);
  report.baseline_mse = compute_stats(v_bmse);
  report.baseline_dssim = compute_stats(v_bdssim);

  std::ofstream jf(fs::path(out_dir) / "report.json");
  jf << report.to_json().dump(1) << "\n";
  std::ofstream cf(fs::path(out_dir) / "report.csv");
  cf << report.to_csv();
  if (!jf || !cf) throw IoError("cannot write eval report under " + out_dir);
  return report;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"mode", r.mode},
                         {"seed", r.seed},
                         {"dssim", r.mean_dssim},
                         {"mse", r.mean_mse}});
  return j;
}

std::string AblationTable::to_csv() const {
  std::string out = "mode,seed,dssim,mse\n";
  for (const auto& r : rows)
    out += r.mode + "," + std::to_string(r.seed) + "," + fmt(r.mean_dssim) + "," +
           fmt(r.mean_mse) + "\n";
  return out;
}

AblationTable run_ablation_suite(const pipeline::TrainConfig& base_config,
                                 const std::string& dataset_dir, const std::string& pairs_dir,
                                 const std::vector<uint64_t>& seeds, const std::string& out_dir,
                                 int eval_steps) {
  check(!seeds.empty(), "ablation: need at least one seed");
  const nn::ConditioningMode kModes[3] = {nn::ConditioningMode::kFull,
                                          nn::ConditioningMode::kNoModulatorConcat,
                                          nn::ConditioningMode::kLightNonspatial};
  AblationTable table;
  table.seeds = seeds;
  for (uint64_t seed : seeds) {
    for (auto mode : kModes) {
      pipeline::TrainConfig cfg = base_config;
      cfg.mode = mode;
      cfg.seed = seed;
      std::string run_dir =
          (fs::path(out_dir) / (nn::to_string(mode) + "_seed" + std::to_string(seed))).string();
      pipeline::TrainResult tr = pipeline::train(cfg, dataset_dir, run_dir);
      pipeline::ModelBundle model = pipeline::ModelBundle::load(tr.final_checkpoint);
      EvalReport report =
          eval_relight(model, pairs_dir, (fs::path(run_dir) / "eval").string(), eval_steps);
      AblationRow row;
      row.mode = nn::to_string(mode);
      row.seed = seed;
      row.mean_dssim = report.dssim.mean;
      row.mean_mse = report.mse.mean;
      table.rows.push_back(row);
    }
  }
  std::ofstream jf(fs::path(out_dir) / "ablation.json");
  jf << table.to_json().dump(1) << "\n";
  std::ofstream cf(fs::path(out_dir) / "ablation.csv");
  cf << table.to_csv();
  if (!jf || !cf) throw IoError("cannot write ablation table under " + out_dir);
  return table;
}

}  // namespace relight::eval
