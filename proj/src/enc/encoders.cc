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

#include "relight/enc/encoders.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "relight/core/error.h"
#include "relight/core/rng.h"

namespace relight::enc {

sh::LightSH scene_light_encoding(const SceneDescription& scene) {
  sh::LightSH l = scene.ambient_light;
  if (scene.has_shadow) {
    Eigen::Vector3d strength = Eigen::Vector3d::Constant(scene.directional_strength);
    l = l + sh::cosine_lobe(scene.light_direction, strength);
  }
  return l;
}

Eigen::VectorXd identity_embedding(const Eigen::VectorXd& beta, int subject_id, int identity_dim) {
  check(identity_dim >= 1, "identity embedding: dim must be >= 1");
  // Four tag coordinates derived from the subject id keep distinct subjects
  // with similar shape apart.
  constexpr int kTagDims = 4;
  Eigen::VectorXd input(beta.size() + kTagDims);
  input.head(beta.size()) = beta;
  uint64_t h = splitmix64(hash_combine(0x1d7a6ULL, static_cast<uint64_t>(subject_id)));
  for (int i = 0; i < kTagDims; ++i) {
    h = splitmix64(h);
    input[beta.size() + i] = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  // Fixed projection, independent of all dataset seeds.
  Rng rng(0x9d2c5680e6a4b1ULL + static_cast<uint64_t>(input.size()) * 131 +
          static_cast<uint64_t>(identity_dim));
  Eigen::MatrixXd proj(identity_dim, input.size());
  for (int r = 0; r < identity_dim; ++r)
    for (int c = 0; c < input.size(); ++c) proj(r, c) = rng.normal();
  Eigen::VectorXd out = proj * input;
  double norm = out.norm();
  check(norm > 0.0, "identity embedding: degenerate projection");
  return out / norm;
}

FeatureVector oracle_encode(const SceneDescription& scene, const geom::RenderOutput& rendered,
                            int identity_dim) {
  check(rendered.image.ndim() == 3 && rendered.image.dim(0) == 3,
        "oracle_encode: rendered image must be {3,H,W}");
  check(rendered.mask.width == rendered.image.dim(2) && rendered.mask.height == rendered.image.dim(1),
        "oracle_encode: render/mask size mismatch");
  FeatureVector f;
  f.light = scene_light_encoding(scene);
  f.shape = scene.shape;
  f.cam = scene.cam;
  f.identity = identity_embedding(scene.shape.beta, scene.subject_id, identity_dim);
  f.shadow_logit = scene.has_shadow ? kShadowLogitOn : kShadowLogitOff;
  f.bg = make_background(to_signed_range(png_round_trip(rendered.image)), rendered.mask);
  return f;
}

Tensor32 make_background(const Tensor32& image_signed, const Mask& mask) {
  check(image_signed.ndim() == 3 && image_signed.dim(0) == 3, "make_background: expected {3,H,W}");
  check(image_signed.dim(1) == mask.height && image_signed.dim(2) == mask.width,
        "make_background: image/mask shape mismatch");
  Tensor32 bg = image_signed;
  int64_t plane = static_cast<int64_t>(mask.width) * mask.height;
  for (int64_t p = 0; p < plane; ++p) {
    if (!mask.on[static_cast<size_t>(p)]) continue;
    for (int c = 0; c < 3; ++c) bg[c * plane + p] = 0.f;
  }
  return bg;
}

namespace {

void require_key(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw ValidationError("sidecar: missing key \"" + key + "\"");
}

std::vector<double> finite_array(const nlohmann::json& j, const std::string& key,
                                 int expected_len = -1) {
  require_key(j, key);
  const auto& a = j.at(key);
  if (!a.is_array()) throw ValidationError("sidecar: \"" + key + "\" must be an array");
  if (expected_len >= 0 && static_cast<int>(a.size()) != expected_len)
    throw ValidationError("sidecar: \"" + key + "\" must have length " +
                          std::to_string(expected_len) + ", got " + std::to_string(a.size()));
  std::vector<double> out;
  out.reserve(a.size());
  for (const auto& v : a) {
    if (!v.is_number()) throw ValidationError("sidecar: \"" + key + "\" must hold numbers");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError("sidecar: non-finite value in \"" + key + "\"");
    out.push_back(d);
  }
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace

nlohmann::json sidecar_to_json(const SidecarData& data) {
  nlohmann::json j;
  j["version"] = 1;
  j["light_sh"] = data.light_sh;
  j["shape"]["beta"] = std::vector<double>(data.shape.beta.begin(), data.shape.beta.end());
  j["shape"]["theta"] = std::vector<double>(data.shape.theta.begin(), data.shape.theta.end());
  j["shape"]["psi"] = std::vector<double>(data.shape.psi.begin(), data.shape.psi.end());
  j["cam"] = data.cam;
  j["identity"] = data.identity;
  j["shadow_logit"] = data.shadow_logit;
  j["bg_path"] = data.bg_path;
  j["mask_path"] = data.mask_path;
  return j;
}

SidecarData sidecar_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKnown = {"version",      "light_sh", "shape",
                                                  "cam",          "identity", "shadow_logit",
                                                  "bg_path",      "mask_path"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& k : kKnown) known = known || it.key() == k;
    if (!known) throw ValidationError("sidecar: unknown key \"" + it.key() + "\"");
  }
  require_key(j, "version");
  if (!j.at("version").is_number_integer() || j.at("version").get<int>() != 1)
    throw ValidationError("sidecar: unsupported version (expected 1)");

  SidecarData data;
  auto light = finite_array(j, "light_sh", 27);
  std::copy(light.begin(), light.end(), data.light_sh.begin());

  require_key(j, "shape");
  const auto& shape = j.at("shape");
  for (auto it = shape.begin(); it != shape.end(); ++it)
    if (it.key() != "beta" && it.key() != "theta" && it.key() != "psi")
      throw ValidationError("sidecar: unknown key \"shape." + it.key() + "\"");
  data.shape.beta = to_eigen(finite_array(shape, "beta"));
  data.shape.theta = to_eigen(finite_array(shape, "theta"));
  data.shape.psi = to_eigen(finite_array(shape, "psi"));

  auto cam = finite_array(j, "cam", 3);
  std::copy(cam.begin(), cam.end(), data.cam.begin());
  if (data.cam[0] <= 0.0) throw ValidationError("sidecar: \"cam\" scale must be positive");

  data.identity = finite_array(j, "identity");
  if (data.identity.empty()) throw ValidationError("sidecar: \"identity\" must be non-empty");

  require_key(j, "shadow_logit");
  if (!j.at("shadow_logit").is_number())
    throw ValidationError("sidecar: \"shadow_logit\" must be a number");
  data.shadow_logit = j.at("shadow_logit").get<double>();
  if (!std::isfinite(data.shadow_logit))
    throw ValidationError("sidecar: non-finite value in \"shadow_logit\"");

  require_key(j, "bg_path");
  require_key(j, "mask_path");
  if (!j.at("bg_path").is_string() || !j.at("mask_path").is_string())
    throw ValidationError("sidecar: \"bg_path\"/\"mask_path\" must be strings");
  data.bg_path = j.at("bg_path").get<std::string>();
  data.mask_path = j.at("mask_path").get<std::string>();
  return data;
}

void write_sidecar(const std::string& path, const SidecarData& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open sidecar for writing: " + path);
  out << sidecar_to_json(data).dump(1) << "\n";
  if (!out) throw IoError("sidecar write failed: " + path);
}

SidecarData read_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sidecar: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("sidecar: invalid JSON in " + path + ": " + e.what());
  }
  return sidecar_from_json(j);
}

FeatureVector import_sidecar(const std::string& json_path) {
  SidecarData data = read_sidecar(json_path);
  std::filesystem::path dir = std::filesystem::path(json_path).parent_path();
  Tensor32 bg_src = read_png_rgb((dir / data.bg_path).string());
  Mask mask = read_png_mask((dir / data.mask_path).string());

  FeatureVector f;
  f.light = sh::LightSH::from_flat(data.light_sh);
  f.shape = data.shape;
  f.cam = geom::Camera{data.cam[0], data.cam[1], data.cam[2]};
  f.identity = to_eigen(data.identity);
  f.shadow_logit = data.shadow_logit;
  f.bg = make_background(to_signed_range(bg_src), mask);
  return f;
}

SidecarData sidecar_from_feature(const FeatureVector& f, const std::string& bg_path,
                                 const std::string& mask_path) {
  SidecarData data;
  data.light_sh = f.light.flat();
  data.shape = f.shape;
  data.cam = {f.cam.scale, f.cam.tx, f.cam.ty};
  data.identity.assign(f.identity.begin(), f.identity.end());
  data.shadow_logit = f.shadow_logit;
  data.bg_path = bg_path;
  data.mask_path = mask_path;
  return data;
}

ShadowClassifier fit_shadow_classifier(const std::vector<Eigen::VectorXd>& embeddings,
                                       const std::vector<int>& labels) {
  check(embeddings.size() == labels.size(), "shadow classifier: embedding/label count mismatch");
  check(!embeddings.empty(), "shadow classifier: empty training set");
  int pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  check(pos >= 2 && neg >= 2, "shadow classifier: need at least two examples per class");

  const Eigen::Index dim = embeddings.front().size();
  const double n = static_cast<double>(embeddings.size());
  const double lambda = 1e-3;
  double mean_norm_sq = 0.0;
  for (const auto& e : embeddings) {
    check(e.size() == dim, "shadow classifier: inconsistent embedding dims");
    mean_norm_sq += e.squaredNorm();
  }
  mean_norm_sq /= n;
  // Safe step from the Lipschitz bound of the regularized mean cross-entropy.
  const double lr = 1.0 / (lambda + mean_norm_sq / 4.0 + 0.25);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  double b = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    Eigen::VectorXd gw = lambda * w;
    double gb = 0.0;
    for (size_t i = 0; i < embeddings.size(); ++i) {
      double z = w.dot(embeddings[i]) + b;
      double p = 1.0 / (1.0 + std::exp(-z));
      double r = (p - static_cast<double>(labels[i])) / n;
      gw += r * embeddings[i];
      gb += r;
    }
    double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
    if (gnorm < 1e-6) break;
    w -= lr * gw;
    b -= lr * gb;
  }
  return ShadowClassifier{std::move(w), b};
}

double shadow_logit(const ShadowClassifier& classifier, const Eigen::VectorXd& embedding) {
  check(classifier.weight.size() == embedding.size(), "shadow_logit: dimension mismatch");
  return classifier.weight.dot(embedding) + classifier.bias;
}

}  // namespace relight::enc
