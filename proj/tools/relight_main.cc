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

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "relight/core/error.h"
#include "relight/data/dataset.h"
#include "relight/enc/encoders.h"
#include "relight/eval/report.h"
#include "relight/nn/ops.h"
#include "relight/pipeline/pipeline.h"

namespace fs = std::filesystem;
using namespace relight;

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

sh::LightSH load_target_light(const std::string& path) {
  nlohmann::json j = load_json(path);
  std::array<double, 27> flat{};
  if (j.is_array()) {
    check(j.size() == 27, "target light file: array must have 27 entries");
    for (size_t i = 0; i < 27; ++i) flat[i] = j[i].get<double>();
  } else if (j.contains("light_sh")) {
    auto v = j.at("light_sh").get<std::vector<double>>();
    check(v.size() == 27, "target light file: \"light_sh\" must have 27 entries");
    std::copy(v.begin(), v.end(), flat.begin());
  } else {
    throw ValidationError("target light file: expected a 27-array or {\"light_sh\": [...]}");
  }
  return sh::LightSH::from_flat(flat);
}

std::vector<double> parse_c_list(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stod(token));
  }
  check(!out.empty(), "sweep-shadow: empty c list");
  return out;
}

void dump_trajectory(const std::string& path, const diffusion::Trajectory<float>& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open trajectory dump: " + path);
  for (const auto& [t, x] : traj.latents) {
    int32_t ti = t;
    out.write(reinterpret_cast<const char*>(&ti), sizeof(ti));
    out.write(reinterpret_cast<const char*>(x.data()),
              static_cast<std::streamsize>(x.numel() * sizeof(float)));
  }
}

int run(int argc, char** argv) {
  CLI::App app{"diffusion face relighting on synthetic data"};
  app.require_subcommand(1);
  nn::configure_threads();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "dataset spec JSON")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // gen-pairs
  auto* pairs = app.add_subcommand("gen-pairs", "generate relighting eval pairs");
  std::string pairs_data, pairs_out;
  int pairs_n = 100;
  uint64_t pairs_seed = 0;
  pairs->add_option("--data", pairs_data, "dataset directory")->required();
  pairs->add_option("--n", pairs_n, "number of pairs")->required();
  pairs->add_option("--seed", pairs_seed, "seed")->required();
  pairs->add_option("--out", pairs_out, "output directory (default: DATA/pairs)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the denoiser and modulator");
  std::string train_config, train_data, train_out, train_mode, train_resume;
  train_cmd->add_option("--config", train_config, "train config JSON")->required();
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint directory")->required();
  train_cmd->add_option("--mode", train_mode, "full|no-modulator|light-nonspatial");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

  // invert
  auto* inv_cmd = app.add_subcommand("invert", "deterministically invert an image to x_T");
  std::string inv_ckpt, inv_image, inv_sidecar, inv_out, inv_traj;
  int inv_steps = 100;
  inv_cmd->add_option("--ckpt", inv_ckpt, "checkpoint")->required();
  inv_cmd->add_option("--image", inv_image, "input PNG")->required();
  inv_cmd->add_option("--sidecar", inv_sidecar, "sidecar JSON")->required();
  inv_cmd->add_option("--steps", inv_steps, "DDIM steps");
  inv_cmd->add_option("--out", inv_out, "output prefix (default: IMAGE.inv)");
  inv_cmd->add_option("--dump-trajectory", inv_traj, "binary trajectory dump path");

  // relight
  auto* rel_cmd = app.add_subcommand("relight", "relight an image to a target light");
  std::string rel_ckpt, rel_image, rel_sidecar, rel_light, rel_from_sidecar, rel_out;
  double rel_c = std::numeric_limits<double>::quiet_NaN();
  int rel_steps = 100;
  rel_cmd->add_option("--ckpt", rel_ckpt, "checkpoint")->required();
  rel_cmd->add_option("--image", rel_image, "input PNG")->required();
  rel_cmd->add_option("--sidecar", rel_sidecar, "sidecar JSON")->required();
  rel_cmd->add_option("--target-light", rel_light, "JSON file with 27 SH coefficients");
  rel_cmd->add_option("--target-from-sidecar", rel_from_sidecar,
                      "take the target light from another sidecar");
  rel_cmd->add_option("--target-c", rel_c, "target shadow logit (default: source value)");
  rel_cmd->add_option("--steps", rel_steps, "DDIM steps");
  rel_cmd->add_option("--out", rel_out, "output PNG")->required();

  // sweep-shadow
  auto* sweep_cmd = app.add_subcommand("sweep-shadow", "decode a row of shadow logits");
  std::string sw_ckpt, sw_image, sw_sidecar, sw_out, sw_list = "-4,-2,0,2,4";
  int sw_steps = 100;
  sweep_cmd->add_option("--ckpt", sw_ckpt, "checkpoint")->required();
  sweep_cmd->add_option("--image", sw_image, "input PNG")->required();
  sweep_cmd->add_option("--sidecar", sw_sidecar, "sidecar JSON")->required();
  sweep_cmd->add_option("--c-list", sw_list, "comma-separated shadow logits");
  sweep_cmd->add_option("--steps", sw_steps, "DDIM steps");
  sweep_cmd->add_option("--out", sw_out, "output PNG (tiled left-to-right)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate relighting on generated pairs");
  std::string ev_ckpt, ev_pairs, ev_out;
  int ev_steps = 100;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  eval_cmd->add_option("--pairs", ev_pairs, "pairs.json or the pairs directory")->required();
  eval_cmd->add_option("--out", ev_out, "report directory")->required();
  eval_cmd->add_option("--steps", ev_steps, "DDIM steps");

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "train and compare the three conditioning modes");
  std::string ab_config, ab_data, ab_out, ab_pairs, ab_seeds = "0";
  int ab_steps = 50;
  ab_cmd->add_option("--config", ab_config, "train config JSON")->required();
  ab_cmd->add_option("--data", ab_data, "dataset directory")->required();
  ab_cmd->add_option("--out", ab_out, "output directory")->required();
  ab_cmd->add_option("--pairs", ab_pairs, "pairs directory (default: DATA/pairs)");
  ab_cmd->add_option("--seeds", ab_seeds, "comma-separated seeds");
  ab_cmd->add_option("--steps", ab_steps, "DDIM steps for evaluation");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    data::DatasetSpec spec = data::DatasetSpec::from_json(load_json(gen_spec));
    data::generate(spec, gen_out);
    std::cout << "dataset written to " << gen_out << "\n";
    return 0;
  }

  if (pairs->parsed()) {
    std::string out = pairs_out.empty() ? (fs::path(pairs_data) / "pairs").string() : pairs_out;
    auto list = data::generate_eval_pairs(pairs_data, pairs_n, pairs_seed, out);
    std::cout << list.size() << " pairs written to " << out << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    pipeline::TrainConfig config = pipeline::TrainConfig::from_json(load_json(train_config));
    if (!train_mode.empty()) config.mode = nn::conditioning_mode_from_string(train_mode);
    pipeline::TrainResult result = pipeline::train(config, train_data, train_out, train_resume);
    std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    return 0;
  }

  if (inv_cmd->parsed()) {
    pipeline::ModelBundle model = pipeline::ModelBundle::load(inv_ckpt);
    Tensor32 image = to_signed_range(read_png_rgb(inv_image));
    enc::FeatureVector f = enc::import_sidecar(inv_sidecar);
    if (!inv_traj.empty()) {
      pipeline::CondContext ctx = pipeline::build_context(model, f);
      auto predictor = pipeline::make_predictor(model, ctx);
      auto grid = diffusion::make_step_grid(model.schedule.steps(), inv_steps);
      auto [x_T, traj] = diffusion::ddim_encode(image, predictor, model.schedule, grid);
      (void)x_T;
      dump_trajectory(inv_traj, traj);
    }
    pipeline::InversionResult inv = pipeline::invert(model, image, f, inv_steps);
    std::string prefix = inv_out.empty() ? inv_image + ".inv" : inv_out;
    std::ofstream xt(prefix + ".xt.bin", std::ios::binary);
    if (!xt) throw IoError("cannot write " + prefix + ".xt.bin");
    xt.write(reinterpret_cast<const char*>(inv.x_T.data()),
             static_cast<std::streamsize>(inv.x_T.numel() * sizeof(float)));
    nlohmann::json mu = nlohmann::json::array();
    for (const auto& m : inv.corrections.mus) mu.push_back({m[0], m[1], m[2]});
    nlohmann::json out;
    out["grid"] = inv.grid;
    out["mu"] = mu;
    std::ofstream mj(prefix + ".mu.json");
    if (!mj) throw IoError("cannot write " + prefix + ".mu.json");
    mj << out.dump(1) << "\n";
    std::cout << "x_T and corrections written to " << prefix << ".{xt.bin,mu.json}\n";
    return 0;
  }

  if (rel_cmd->parsed()) {
    pipeline::ModelBundle model = pipeline::ModelBundle::load(rel_ckpt);
    Tensor32 image = to_signed_range(read_png_rgb(rel_image));
    enc::FeatureVector f = enc::import_sidecar(rel_sidecar);
    check(rel_light.empty() != rel_from_sidecar.empty(),
          "relight: provide exactly one of --target-light / --target-from-sidecar");
    sh::LightSH target = rel_light.empty()
                             ? sh::LightSH::from_flat(enc::read_sidecar(rel_from_sidecar).light_sh)
                             : load_target_light(rel_light);
    double c = std::isnan(rel_c) ? f.shadow_logit : rel_c;
    Tensor32 out = pipeline::relight(model, image, f, target, c, rel_steps);
    write_png_rgb(rel_out, to_unit_range(out));
    std::cout << "relit image written to " << rel_out << "\n";
    return 0;
  }

  if (sweep_cmd->parsed()) {
    pipeline::ModelBundle model = pipeline::ModelBundle::load(sw_ckpt);
    Tensor32 image = to_signed_range(read_png_rgb(sw_image));
    enc::FeatureVector f = enc::import_sidecar(sw_sidecar);
    std::vector<double> cs = parse_c_list(sw_list);
    auto outputs = pipeline::shadow_sweep(model, image, f, cs, sw_steps);
    std::vector<Tensor32> unit;
    unit.reserve(outputs.size());
    for (auto& o : outputs) unit.push_back(to_unit_range(o));
    write_png_rgb(sw_out, pipeline::tile_horizontal(unit));
    std::cout << "sweep grid written to " << sw_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    pipeline::ModelBundle model = pipeline::ModelBundle::load(ev_ckpt);
    std::string pairs_dir = ev_pairs;
    if (fs::path(ev_pairs).filename() == "pairs.json")
      pairs_dir = fs::path(ev_pairs).parent_path().string();
    eval::EvalReport report = eval::eval_relight(model, pairs_dir, ev_out, ev_steps);
    std::cout << "mean masked MSE " << report.mse.mean << ", mean DSSIM " << report.dssim.mean
              << " over " << report.pairs.size() << " pairs; report in " << ev_out << "\n";
    return 0;
  }

  if (ab_cmd->parsed()) {
    pipeline::TrainConfig config = pipeline::TrainConfig::from_json(load_json(ab_config));
    std::string pairs_dir = ab_pairs.empty() ? (fs::path(ab_data) / "pairs").string() : ab_pairs;
    std::vector<uint64_t> seeds;
    for (double v : parse_c_list(ab_seeds)) seeds.push_back(static_cast<uint64_t>(v));
    eval::AblationTable table =
        eval::run_ablation_suite(config, ab_data, pairs_dir, seeds, ab_out, ab_steps);
    std::cout << table.to_csv();
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
