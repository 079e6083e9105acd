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

#include <Eigen/Core>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "relight/core/image.h"
#include "relight/geom/geometry.h"
#include "relight/sh/sh.h"

namespace relight::enc {

// The conditioning tuple f = (l, s, cam, xi, c, bg).
struct FeatureVector {
  sh::LightSH light;
  geom::ShapeParams shape;
  geom::Camera cam;
  Eigen::VectorXd identity;  // L2-normalized
  double shadow_logit = 0.0;
  Tensor32 bg;  // {3,H,W} in [-1,1]; head pixels hold the fill value 0
};

// Everything the synthetic generator knows about one sample.
struct SceneDescription {
  int subject_id = 0;
  geom::ShapeParams shape;
  geom::Camera cam;
  sh::LightSH ambient_light;
  bool has_shadow = false;
  Eigen::Vector3d light_direction = Eigen::Vector3d(0, 0, 1);
  double directional_strength = 0.0;
  Eigen::Vector3d albedo = Eigen::Vector3d(0.7, 0.7, 0.7);
  Eigen::Vector3d background_color = Eigen::Vector3d(0.5, 0.5, 0.5);
};

// The light encoding a real estimator would see: the ambient SH plus, for
// shadowed scenes, the band-2 projection of the directional light.
sh::LightSH scene_light_encoding(const SceneDescription& scene);

// Ground-truth shadow logits saturate at +/-4.
inline constexpr double kShadowLogitOn = 4.0;
inline constexpr double kShadowLogitOff = -4.0;

// Exact ground-truth encodings for synthetic scenes. The identity embedding
// is a fixed seeded random projection of (beta ++ subject tag), normalized,
// so it depends on nothing but who the subject is.
FeatureVector oracle_encode(const SceneDescription& scene, const geom::RenderOutput& rendered,
                            int identity_dim);

Eigen::VectorXd identity_embedding(const Eigen::VectorXd& beta, int subject_id, int identity_dim);

// Head pixels -> fill value 0 (mid-gray in [-1,1]); the rest copied.
Tensor32 make_background(const Tensor32& image_signed, const Mask& mask);

// --- Sidecar files -----------------------------------------------------
//
// Versioned JSON schema:
// {"version":1, "light_sh":[27], "shape":{"beta":[],"theta":[],"psi":[]},
//  "cam":[scale,tx,ty], "identity":[D], "shadow_logit":x,
//  "bg_path":"relative.png", "mask_path":"relative.png"}
// bg_path names the image whose pixels supply the background; the head
// region given by mask_path is masked to the fill value on load.
struct SidecarData {
  std::array<double, 27> light_sh{};
  geom::ShapeParams shape;
  std::array<double, 3> cam{1.0, 0.0, 0.0};
  std::vector<double> identity;
  double shadow_logit = 0.0;
  std::string bg_path;
  std::string mask_path;
};

nlohmann::json sidecar_to_json(const SidecarData& data);
// Strict: unknown keys, missing keys, wrong lengths and non-finite values are
// rejected with errors naming the offending key.
SidecarData sidecar_from_json(const nlohmann::json& j);

void write_sidecar(const std::string& path, const SidecarData& data);
SidecarData read_sidecar(const std::string& path);

// Parse a sidecar and resolve bg/mask paths (relative to the sidecar file).
FeatureVector import_sidecar(const std::string& json_path);
SidecarData sidecar_from_feature(const FeatureVector& f, const std::string& bg_path,
                                 const std::string& mask_path);

// --- Shadow-logit classifier -------------------------------------------

struct ShadowClassifier {
  Eigen::VectorXd weight;
  double bias = 0.0;
};

// Logistic regression by gradient descent on mean cross-entropy with an L2
// penalty (lambda = 1e-3 on the weights), starting from zero, until the
// gradient norm drops below 1e-6 or 10^4 iterations.
ShadowClassifier fit_shadow_classifier(const std::vector<Eigen::VectorXd>& embeddings,
                                       const std::vector<int>& labels);

// Pre-sigmoid logit w.x + b.
double shadow_logit(const ShadowClassifier& classifier, const Eigen::VectorXd& embedding);

}  // namespace relight::enc
