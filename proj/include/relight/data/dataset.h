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

#include "relight/enc/encoders.h"
#include "relight/geom/geometry.h"
#include "relight/sh/sh.h"

namespace relight::data {

struct DatasetSpec {
  int count = 2000;
  int resolution = 32;
  uint64_t seed = 0;

  sh::LightSampleConfig light;
  double shape_std = 1.0;
  double shadow_probability = 0.35;
  // Directional strength relative to the sampled band-0 level.
  double directional_strength = 0.9;

  std::vector<std::array<double, 3>> skin_palette = {
      {0.85, 0.66, 0.55}, {0.72, 0.53, 0.43}, {0.58, 0.42, 0.33}, {0.93, 0.76, 0.65},
      {0.47, 0.34, 0.27}};
  std::vector<std::array<double, 3>> background_palette = {
      {0.08, 0.08, 0.10}, {0.30, 0.32, 0.36}, {0.55, 0.53, 0.50}, {0.82, 0.84, 0.88},
      {0.18, 0.30, 0.42}, {0.45, 0.28, 0.22}};

  std::array<double, 3> split = {0.8, 0.1, 0.1};  // train/val/test

  // Synthetic head model.
  geom::ShapeDims dims;
  int tessellation = 3;
  uint64_t model_seed = 1;
  int identity_dim = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

inline const char* kSplitNames[3] = {"train", "val", "test"};

// Scene draw for global sample index i; deterministic in (spec.seed, i).
enc::SceneDescription draw_scene(const DatasetSpec& spec, int index);

// Full composed render of a scene: ambient SH shading plus, for shadowed
// scenes, a ray-cast-shadowed directional term; background filled with the
// scene color. The returned image is the final linear image in [0, ~1+].
geom::RenderOutput render_scene(const geom::BlendshapeModel& model,
                                const enc::SceneDescription& scene, int resolution);

// Writes {split}/{index:06}.png/.mask.png/.json plus a root manifest.json
// carrying counts, a spec echo, the format version, and the scene records.
void generate(const DatasetSpec& spec, const std::string& out_dir);

nlohmann::json scene_to_json(const enc::SceneDescription& scene);
enc::SceneDescription scene_from_json(const nlohmann::json& j);

struct Manifest {
  DatasetSpec spec;
  std::array<int, 3> counts{};
  // scenes[split][index]
  std::vector<std::vector<enc::SceneDescription>> scenes;
};

Manifest read_manifest(const std::string& dataset_dir);

// Evaluation pairs: a test sample relit to a freshly drawn light (and
// possibly flipped shadow state), with the identical scene re-rendered under
// the new light as ground truth.
struct EvalPair {
  int input_index = 0;  // index into the test split
  std::array<double, 27> target_light{};
  double target_c = 0.0;
  bool target_shadow = false;
  std::array<double, 3> target_direction{0, 0, 1};
  double target_strength = 0.0;
  std::string gt_path;  // relative to the pairs manifest
};

// Writes pairs.json and gt/{i:06}.png under out_dir; returns the pairs.
std::vector<EvalPair> generate_eval_pairs(const std::string& dataset_dir, int n_pairs,
                                          uint64_t seed, const std::string& out_dir);

std::vector<EvalPair> read_eval_pairs(const std::string& pairs_json);

// Path helpers.
std::string sample_stem(const std::string& dataset_dir, const std::string& split, int index);

}  // namespace relight::data
