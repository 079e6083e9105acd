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

#include "relight/data/dataset.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "relight/core/error.h"
#include "relight/core/rng.h"

namespace relight::data {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  check(count >= 1, "dataset spec: count must be >= 1");
  check(resolution >= 8, "dataset spec: resolution must be >= 8");
  light.validate();
  check(shape_std >= 0.0, "dataset spec: shape_std must be non-negative");
  check(shadow_probability >= 0.0 && shadow_probability <= 1.0,
        "dataset spec: shadow probability must be in [0,1]");
  check(!skin_palette.empty() && !background_palette.empty(),
        "dataset spec: palettes must be non-empty");
  double sum = split[0] + split[1] + split[2];
  check(std::abs(sum - 1.0) < 1e-9, "dataset spec: split fractions must sum to 1");
  check(identity_dim >= 1, "dataset spec: identity_dim must be >= 1");
}

namespace {

nlohmann::json palette_json(const std::vector<std::array<double, 3>>& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : p) out.push_back(c);
  return out;
}

std::vector<std::array<double, 3>> palette_from_json(const nlohmann::json& j) {
  std::vector<std::array<double, 3>> out;
  for (const auto& c : j) out.push_back(c.get<std::array<double, 3>>());
  return out;
}

}  // namespace

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["resolution"] = resolution;
  j["seed"] = seed;
  j["light"] = {{"band0_min", light.band0_min},
                {"band0_max", light.band0_max},
                {"tint", light.tint},
                {"higher_scale", light.higher_scale},
                {"dominance_ratio", light.dominance_ratio}};
  j["shape_std"] = shape_std;
  j["shadow_probability"] = shadow_probability;
  j["directional_strength"] = directional_strength;
  j["skin_palette"] = palette_json(skin_palette);
  j["background_palette"] = palette_json(background_palette);
  j["split"] = split;
  j["dims"] = {dims.identity, dims.pose, dims.expression};
  j["tessellation"] = tessellation;
  j["model_seed"] = model_seed;
  j["identity_dim"] = identity_dim;
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.count = j.value("count", s.count);
  s.resolution = j.value("resolution", s.resolution);
  s.seed = j.value("seed", s.seed);
  if (j.contains("light")) {
    const auto& l = j.at("light");
    s.light.band0_min = l.value("band0_min", s.light.band0_min);
    s.light.band0_max = l.value("band0_max", s.light.band0_max);
    s.light.tint = l.value("tint", s.light.tint);
    s.light.higher_scale = l.value("higher_scale", s.light.higher_scale);
    s.light.dominance_ratio = l.value("dominance_ratio", s.light.dominance_ratio);
  }
  s.shape_std = j.value("shape_std", s.shape_std);
  s.shadow_probability = j.value("shadow_probability", s.shadow_probability);
  s.directional_strength = j.value("directional_strength", s.directional_strength);
  if (j.contains("skin_palette")) s.skin_palette = palette_from_json(j.at("skin_palette"));
  if (j.contains("background_palette"))
    s.background_palette = palette_from_json(j.at("background_palette"));
  if (j.contains("split")) s.split = j.at("split").get<std::array<double, 3>>();
  if (j.contains("dims")) {
    auto d = j.at("dims").get<std::array<int, 3>>();
    s.dims = geom::ShapeDims{d[0], d[1], d[2]};
  }
  s.tessellation = j.value("tessellation", s.tessellation);
  s.model_seed = j.value("model_seed", s.model_seed);
  s.identity_dim = j.value("identity_dim", s.identity_dim);
  s.validate();
  return s;
}

enc::SceneDescription draw_scene(const DatasetSpec& spec, int index) {
  Rng rng(splitmix64(hash_combine(spec.seed, 0x5363656eULL + static_cast<uint64_t>(index))));
  enc::SceneDescription scene;
  scene.subject_id = index;

  scene.shape = geom::ShapeParams::zeros(spec.dims);
  for (int k = 0; k < spec.dims.identity; ++k) scene.shape.beta[k] = rng.normal() * spec.shape_std;
  for (int k = 0; k < spec.dims.pose; ++k) scene.shape.theta[k] = rng.normal() * spec.shape_std * 0.5;
  for (int k = 0; k < spec.dims.expression; ++k)
    scene.shape.psi[k] = rng.normal() * spec.shape_std * 0.5;

  scene.cam.scale = rng.uniform(0.80, 1.00);
  scene.cam.tx = rng.uniform(-0.05, 0.05);
  scene.cam.ty = rng.uniform(-0.05, 0.05);

  scene.ambient_light = sh::sample_plausible_light(rng.bits(), spec.light);

  scene.has_shadow = rng.uniform() < spec.shadow_probability;
  if (scene.has_shadow) {
    // Off-axis key light from the camera hemisphere so the nose and brow cast
    // visible shadows.
    double azimuth = rng.uniform(0.0, 2.0 * M_PI);
    double polar = rng.uniform(25.0, 55.0) * M_PI / 180.0;
    scene.light_direction =
        Eigen::Vector3d(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
                        std::cos(polar));
    double band0_mean = scene.ambient_light.coeffs.row(0).mean() * sh::kBand0;
    scene.directional_strength = spec.directional_strength * band0_mean;
  }

  auto skin = spec.skin_palette[rng.index(spec.skin_palette.size())];
  scene.albedo = Eigen::Vector3d(skin[0], skin[1], skin[2]);
  auto bgc = spec.background_palette[rng.index(spec.background_palette.size())];
  scene.background_color = Eigen::Vector3d(bgc[0], bgc[1], bgc[2]);
  return scene;
}

geom::RenderOutput render_scene(const geom::BlendshapeModel& model,
                                const enc::SceneDescription& scene, int resolution) {
  geom::Mesh mesh = geom::apply_blendshape(model, scene.shape);
  Tensor32 normals;
  geom::RenderOutput out = geom::rasterize(
      mesh, scene.cam, resolution, resolution,
      [&](const geom::Vec3& n) { return sh::shade_point(n, scene.albedo, scene.ambient_light); },
      scene.background_color, &normals);
  if (scene.has_shadow) {
    Tensor32 factors =
        geom::hard_shadow_mask(mesh, scene.light_direction, scene.cam, resolution, resolution);
    int64_t plane = static_cast<int64_t>(resolution) * resolution;
    for (int64_t p = 0; p < plane; ++p) {
      if (!out.mask.on[static_cast<size_t>(p)]) continue;
      geom::Vec3 n(normals[p], normals[plane + p], normals[2 * plane + p]);
      double lambert = std::max(0.0, n.dot(scene.light_direction));
      double term = scene.directional_strength * lambert * static_cast<double>(factors[p]);
      for (int c = 0; c < 3; ++c)
        out.image[c * plane + p] += static_cast<float>(scene.albedo[c] * term);
    }
  }
  return out;
}

nlohmann::json scene_to_json(const enc::SceneDescription& scene) {
  nlohmann::json j;
  j["subject_id"] = scene.subject_id;
  j["beta"] = std::vector<double>(scene.shape.beta.begin(), scene.shape.beta.end());
  j["theta"] = std::vector<double>(scene.shape.theta.begin(), scene.shape.theta.end());
  j["psi"] = std::vector<double>(scene.shape.psi.begin(), scene.shape.psi.end());
  j["cam"] = {scene.cam.scale, scene.cam.tx, scene.cam.ty};
  j["ambient_light"] = scene.ambient_light.flat();
  j["has_shadow"] = scene.has_shadow;
  j["light_direction"] = {scene.light_direction.x(), scene.light_direction.y(),
                          scene.light_direction.z()};
  j["directional_strength"] = scene.directional_strength;
  j["albedo"] = {scene.albedo.x(), scene.albedo.y(), scene.albedo.z()};
  j["background_color"] = {scene.background_color.x(), scene.background_color.y(),
                           scene.background_color.z()};
  return j;
}

enc::SceneDescription scene_from_json(const nlohmann::json& j) {
  enc::SceneDescription s;
  s.subject_id = j.at("subject_id").get<int>();
  auto vec = [](const nlohmann::json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = a[static_cast<size_t>(i)].get<double>();
    return v;
  };
  s.shape.beta = vec(j.at("beta"));
  s.shape.theta = vec(j.at("theta"));
  s.shape.psi = vec(j.at("psi"));
  auto cam = j.at("cam").get<std::array<double, 3>>();
  s.cam = geom::Camera{cam[0], cam[1], cam[2]};
  s.ambient_light = sh::LightSH::from_flat(j.at("ambient_light").get<std::array<double, 27>>());
  s.has_shadow = j.at("has_shadow").get<bool>();
  auto dir = j.at("light_direction").get<std::array<double, 3>>();
  s.light_direction = Eigen::Vector3d(dir[0], dir[1], dir[2]);
  s.directional_strength = j.at("directional_strength").get<double>();
  auto alb = j.at("albedo").get<std::array<double, 3>>();
  s.albedo = Eigen::Vector3d(alb[0], alb[1], alb[2]);
  auto bgc = j.at("background_color").get<std::array<double, 3>>();
  s.background_color = Eigen::Vector3d(bgc[0], bgc[1], bgc[2]);
  return s;
}

namespace {

std::string index_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

std::array<int, 3> split_counts(const DatasetSpec& spec) {
  int n_train = static_cast<int>(std::floor(spec.count * spec.split[0]));
  int n_val = static_cast<int>(std::floor(spec.count * spec.split[1]));
  int n_test = spec.count - n_train - n_val;
  return {n_train, n_val, n_test};
}

}  // namespace

std::string sample_stem(const std::string& dataset_dir, const std::string& split, int index) {
  return (fs::path(dataset_dir) / split / index_name(index)).string();
}

void generate(const DatasetSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory: " + out_dir);

  geom::BlendshapeModel model = geom::make_synthetic_model(spec.model_seed, spec.dims,
                                                           spec.tessellation);
  auto counts = split_counts(spec);
  nlohmann::json scenes_json = {{"train", nlohmann::json::array()},
                                {"val", nlohmann::json::array()},
                                {"test", nlohmann::json::array()}};
  int global = 0;
  for (int s = 0; s < 3; ++s) {
    fs::path split_dir = fs::path(out_dir) / kSplitNames[s];
    fs::create_directories(split_dir, ec);
    if (ec) throw IoError("cannot create split directory: " + split_dir.string());
    for (int i = 0; i < counts[static_cast<size_t>(s)]; ++i, ++global) {
      enc::SceneDescription scene = draw_scene(spec, global);
      geom::RenderOutput render = render_scene(model, scene, spec.resolution);
      std::string stem = index_name(i);
      write_png_rgb((split_dir / (stem + ".png")).string(), render.image);
      write_png_mask((split_dir / (stem + ".mask.png")).string(), render.mask);
      enc::FeatureVector f = enc::oracle_encode(scene, render, spec.identity_dim);
      enc::SidecarData sidecar =
          enc::sidecar_from_feature(f, stem + ".png", stem + ".mask.png");
      enc::write_sidecar((split_dir / (stem + ".json")).string(), sidecar);
      scenes_json[kSplitNames[s]].push_back(scene_to_json(scene));
    }
  }

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["spec"] = spec.to_json();
  manifest["counts"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  manifest["scenes"] = std::move(scenes_json);
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw IoError("cannot write dataset manifest");
  out << manifest.dump(1) << "\n";
}

Manifest read_manifest(const std::string& dataset_dir) {
  std::ifstream in(fs::path(dataset_dir) / "manifest.json");
  if (!in) throw IoError("cannot open dataset manifest in " + dataset_dir);
  nlohmann::json j;
  in >> j;
  Manifest m;
  m.spec = DatasetSpec::from_json(j.at("spec"));
  m.counts = {j.at("counts").at("train").get<int>(), j.at("counts").at("val").get<int>(),
              j.at("counts").at("test").get<int>()};
  m.scenes.resize(3);
  for (int s = 0; s < 3; ++s)
    for (const auto& sj : j.at("scenes").at(kSplitNames[s]))
      m.scenes[static_cast<size_t>(s)].push_back(scene_from_json(sj));
  return m;
}

std::vector<EvalPair> generate_eval_pairs(const std::string& dataset_dir, int n_pairs,
                                          uint64_t seed, const std::string& out_dir) {
  check(n_pairs >= 1, "eval pairs: n must be >= 1");
  Manifest manifest = read_manifest(dataset_dir);
  check(!manifest.scenes[2].empty(), "eval pairs: dataset has no test split");
  geom::BlendshapeModel model = geom::make_synthetic_model(
      manifest.spec.model_seed, manifest.spec.dims, manifest.spec.tessellation);

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "gt", ec);
  if (ec) throw IoError("cannot create pairs directory: " + out_dir);

  std::vector<EvalPair> pairs;
  nlohmann::json pj = nlohmann::json::array();
  for (int i = 0; i < n_pairs; ++i) {
    Rng rng(splitmix64(hash_combine(seed, 0x50616972ULL + static_cast<uint64_t>(i))));
    int input_index = static_cast<int>(rng.index(manifest.scenes[2].size()));
    enc::SceneDescription target = manifest.scenes[2][static_cast<size_t>(input_index)];

    target.ambient_light = sh::sample_plausible_light(rng.bits(), manifest.spec.light);
    target.has_shadow = rng.uniform() < manifest.spec.shadow_probability;
    if (target.has_shadow) {
      double azimuth = rng.uniform(0.0, 2.0 * M_PI);
      double polar = rng.uniform(25.0, 55.0) * M_PI / 180.0;
      target.light_direction =
          Eigen::Vector3d(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
                          std::cos(polar));
      double band0_mean = target.ambient_light.coeffs.row(0).mean() * sh::kBand0;
      target.directional_strength = manifest.spec.directional_strength * band0_mean;
    } else {
      target.directional_strength = 0.0;
    }

    geom::RenderOutput gt = render_scene(model, target, manifest.spec.resolution);
    std::string gt_rel = (fs::path("gt") / (index_name(i) + ".png")).string();
    write_png_rgb((fs::path(out_dir) / gt_rel).string(), gt.image);

    EvalPair pair;
    pair.input_index = input_index;
    pair.target_light = enc::scene_light_encoding(target).flat();
    pair.target_c = target.has_shadow ? enc::kShadowLogitOn : enc::kShadowLogitOff;
    pair.target_shadow = target.has_shadow;
    pair.target_direction = {target.light_direction.x(), target.light_direction.y(),
                             target.light_direction.z()};
    pair.target_strength = target.directional_strength;
    pair.gt_path = gt_rel;
    pairs.push_back(pair);

    nlohmann::json e;
    e["input_index"] = pair.input_index;
    e["target_light"] = pair.target_light;
    e["target_c"] = pair.target_c;
    e["target_shadow"] = pair.target_shadow;
    e["target_direction"] = pair.target_direction;
    e["target_strength"] = pair.target_strength;
    e["gt_path"] = pair.gt_path;
    pj.push_back(std::move(e));
  }

  nlohmann::json root;
  root["format_version"] = 1;
  root["dataset_dir"] = fs::absolute(dataset_dir).string();
  root["n_pairs"] = n_pairs;
  root["seed"] = seed;
  root["pairs"] = std::move(pj);
  std::ofstream out(fs::path(out_dir) / "pairs.json");
  if (!out) throw IoError("cannot write pairs manifest");
  out << root.dump(1) << "\n";
  return pairs;
}

std::vector<EvalPair> read_eval_pairs(const std::string& pairs_json) {
  std::ifstream in(pairs_json);
  if (!in) throw IoError("cannot open pairs manifest: " + pairs_json);
  nlohmann::json j;
  in >> j;
  std::vector<EvalPair> pairs;
  for (const auto& e : j.at("pairs")) {
    EvalPair p;
    p.input_index = e.at("input_index").get<int>();
    p.target_light = e.at("target_light").get<std::array<double, 27>>();
    p.target_c = e.at("target_c").get<double>();
    p.target_shadow = e.at("target_shadow").get<bool>();
    p.target_direction = e.at("target_direction").get<std::array<double, 3>>();
    p.target_strength = e.at("target_strength").get<double>();
    p.gt_path = e.at("gt_path").get<std::string>();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace relight::data
