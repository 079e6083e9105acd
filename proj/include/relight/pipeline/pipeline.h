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
#include <memory>
#include <string>
#include <vector>

#include "relight/data/dataset.h"
#include "relight/diffusion/diffusion.h"
#include "relight/enc/encoders.h"
#include "relight/nn/unet.h"

namespace relight::pipeline {

struct ScheduleParams {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct TrainConfig {
  nn::UNetConfig unet;
  nn::ConditioningMode mode = nn::ConditioningMode::kFull;
  ScheduleParams schedule;
  double lr = 1e-4;
  double weight_decay = 0.0;
  int batch_size = 8;
  int64_t total_images = 160000;
  uint64_t seed = 0;
  int log_every = 20;
  int checkpoint_every = 5000;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// A trained (or fresh) model plus everything inference needs: schedule, the
// synthetic head used to render shading references, and the dataset geometry
// parameters echoed from training.
struct ModelBundle {
  TrainConfig config;
  data::DatasetSpec data_spec;
  diffusion::NoiseSchedule schedule;
  geom::BlendshapeModel head;
  std::unique_ptr<nn::UNet<float>> unet;
  std::unique_ptr<nn::Modulator<float>> modulator;  // only in full mode
  int64_t step = 0;

  static ModelBundle create(const TrainConfig& config, const data::DatasetSpec& data_spec);
  static ModelBundle load(const std::string& checkpoint_path);
  void save(const std::string& checkpoint_path, nn::AdamW<float>* optimizer) const;

  std::vector<nn::Parameter<float>*> all_params() const;
  int nonspatial_total() const { return config.unet.nonspatial_total(config.mode); }
};

// Conditioning with the (t-independent) parts precomputed: the shading
// reference render, the Modulator maps, and the non-spatial vector.
struct CondContext {
  Tensor32 nonspatial;            // [1, ns_total]
  std::vector<Tensor32> mods;     // per first-half block (full mode)
  Tensor32 spatial;               // [1,6,H,W] (kept for concat mode)
  bool has_spatial = false;
};

// Renders the shading reference from (f.light, f.shape, f.cam) with the
// constant gray albedo and assembles the mode-appropriate conditioning.
CondContext build_context(ModelBundle& model, const enc::FeatureVector& f);

// Shading reference render only (gray albedo 0.7, black background), in
// [0,1] after the clamp.
Tensor32 render_shading_reference(const ModelBundle& model, const sh::LightSH& light,
                                  const geom::ShapeParams& shape, const geom::Camera& cam);

// Non-spatial vector (s, cam, xi, c [, flattened l in light mode]).
Tensor32 build_nonspatial(const ModelBundle& model, const enc::FeatureVector& f);

diffusion::Predictor<float> make_predictor(ModelBundle& model, const CondContext& ctx);

struct TrainResult {
  std::string final_checkpoint;
  double first_logged_loss = 0.0;
  int64_t steps_run = 0;
};

// Standard diffusion training of the UNet (and Modulator, jointly) on a
// generated dataset directory; precomputes per-sample encodings once.
TrainResult train(const TrainConfig& config, const std::string& dataset_dir,
                  const std::string& out_dir, const std::string& resume_checkpoint = "");

struct InversionResult {
  Tensor32 x_T;
  diffusion::CorrectionSequence<float> corrections;
  std::vector<int> grid;
};

InversionResult invert(ModelBundle& model, const Tensor32& image_signed,
                       const enc::FeatureVector& f, int steps);

// Invert under f, then decode from x_T under f' = (l', s, cam, xi, c', bg)
// with the mean-matching corrections applied; output clamped to [-1,1].
Tensor32 relight(ModelBundle& model, const Tensor32& image_signed, const enc::FeatureVector& f,
                 const sh::LightSH& target_light, double target_c, int steps);

// One inversion, one decode per c value (shared x_T and corrections).
std::vector<Tensor32> shadow_sweep(ModelBundle& model, const Tensor32& image_signed,
                                   const enc::FeatureVector& f, const std::vector<double>& c_values,
                                   int steps);

Tensor32 tile_horizontal(const std::vector<Tensor32>& images);

}  // namespace relight::pipeline
