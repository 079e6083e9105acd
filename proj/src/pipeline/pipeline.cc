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

#include "relight/pipeline/pipeline.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "relight/core/error.h"
#include "relight/core/rng.h"
#include "relight/nn/checkpoint.h"
#include "relight/nn/ops.h"

namespace relight::pipeline {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  unet.validate();
  check(schedule.steps >= 1, "train config: schedule steps must be >= 1");
  check(lr > 0.0, "train config: learning rate must be positive");
  check(weight_decay >= 0.0, "train config: weight decay must be non-negative");
  check(batch_size >= 1, "train config: batch size must be >= 1");
  check(total_images >= batch_size, "train config: total_images must cover one batch");
  check(log_every >= 1 && checkpoint_every >= 1, "train config: logging intervals must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["unet"] = {{"image_size", unet.image_size},
               {"base_channels", unet.base_channels},
               {"channel_multipliers", unet.channel_multipliers},
               {"attention_resolutions", unet.attention_resolutions},
               {"num_res_blocks", unet.num_res_blocks},
               {"attention_heads", unet.attention_heads},
               {"groups", unet.groups},
               {"nonspatial_dim", unet.nonspatial_dim},
               {"time_embed_dim", unet.time_embed_dim},
               {"cond_hidden", unet.cond_hidden}};
  j["mode"] = nn::to_string(mode);
  j["schedule"] = {{"steps", schedule.steps},
                   {"beta_start", schedule.beta_start},
                   {"beta_end", schedule.beta_end}};
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["total_images"] = total_images;
  j["seed"] = seed;
  j["log_every"] = log_every;
  j["checkpoint_every"] = checkpoint_every;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("unet")) {
    const auto& u = j.at("unet");
    c.unet.image_size = u.value("image_size", c.unet.image_size);
    c.unet.base_channels = u.value("base_channels", c.unet.base_channels);
    if (u.contains("channel_multipliers"))
      c.unet.channel_multipliers = u.at("channel_multipliers").get<std::vector<int>>();
    if (u.contains("attention_resolutions"))
      c.unet.attention_resolutions = u.at("attention_resolutions").get<std::vector<int>>();
    c.unet.num_res_blocks = u.value("num_res_blocks", c.unet.num_res_blocks);
    c.unet.attention_heads = u.value("attention_heads", c.unet.attention_heads);
    c.unet.groups = u.value("groups", c.unet.groups);
    c.unet.nonspatial_dim = u.value("nonspatial_dim", c.unet.nonspatial_dim);
    c.unet.time_embed_dim = u.value("time_embed_dim", c.unet.time_embed_dim);
    c.unet.cond_hidden = u.value("cond_hidden", c.unet.cond_hidden);
  }
  c.mode = nn::conditioning_mode_from_string(j.value("mode", std::string("full")));
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.steps = s.value("steps", c.schedule.steps);
    c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
    c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
  }
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_images = j.value("total_images", c.total_images);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

ModelBundle ModelBundle::create(const TrainConfig& config, const data::DatasetSpec& data_spec) {
  config.validate();
  int expected_ns = data_spec.dims.total() + 3 + data_spec.identity_dim + 1;
  check(config.unet.nonspatial_dim == expected_ns,
        "model: nonspatial_dim must equal |s|+3+|xi|+1 of the dataset (" +
            std::to_string(expected_ns) + ")");
  ModelBundle m;
  m.config = config;
  m.data_spec = data_spec;
  m.schedule = diffusion::NoiseSchedule::linear(config.schedule.steps, config.schedule.beta_start,
                                                config.schedule.beta_end);
  m.head = geom::make_synthetic_model(data_spec.model_seed, data_spec.dims, data_spec.tessellation);
  m.unet = std::make_unique<nn::UNet<float>>(config.unet, config.mode, config.seed);
  if (config.mode == nn::ConditioningMode::kFull)
    m.modulator = std::make_unique<nn::Modulator<float>>(config.unet, config.seed + 1);
  return m;
}

std::vector<nn::Parameter<float>*> ModelBundle::all_params() const {
  std::vector<nn::Parameter<float>*> params = unet->params().parameters();
  if (modulator) {
    auto mp = modulator->params().parameters();
    params.insert(params.end(), mp.begin(), mp.end());
  }
  return params;
}

void ModelBundle::save(const std::string& checkpoint_path, nn::AdamW<float>* optimizer) const {
  nn::Checkpoint ckpt;
  ckpt.meta["train_config"] = config.to_json();
  ckpt.meta["dataset_spec"] = data_spec.to_json();
  ckpt.meta["step"] = step;
  auto params = all_params();
  nn::collect_params(params, &ckpt);
  if (optimizer) nn::collect_optimizer(optimizer, params, &ckpt);
  nn::write_checkpoint(checkpoint_path, ckpt);
}

ModelBundle ModelBundle::load(const std::string& checkpoint_path) {
  nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint_path);
  TrainConfig config = TrainConfig::from_json(ckpt.meta.at("train_config"));
  data::DatasetSpec spec = data::DatasetSpec::from_json(ckpt.meta.at("dataset_spec"));
  ModelBundle m = create(config, spec);
  m.step = ckpt.meta.value("step", int64_t{0});
  nn::apply_params(ckpt, m.all_params());
  return m;
}

Tensor32 render_shading_reference(const ModelBundle& model, const sh::LightSH& light,
                                  const geom::ShapeParams& shape, const geom::Camera& cam) {
  const int size = model.config.unet.image_size;
  const Eigen::Vector3d gray(0.7, 0.7, 0.7);
  geom::Mesh mesh = geom::apply_blendshape(model.head, shape);
  geom::RenderOutput out = geom::rasterize(
      mesh, cam, size, size,
      [&](const geom::Vec3& n) { return sh::shade_point(n, gray, light); }, Eigen::Vector3d::Zero());
  Tensor32 ref = out.image;
  for (int64_t i = 0; i < ref.numel(); ++i) ref[i] = std::min(1.f, std::max(0.f, ref[i]));
  return ref;
}

Tensor32 build_nonspatial(const ModelBundle& model, const enc::FeatureVector& f) {
  const int ns = model.nonspatial_total();
  Tensor32 v({1, ns});
  int64_t k = 0;
  Eigen::VectorXd s = f.shape.concat();
  for (Eigen::Index i = 0; i < s.size(); ++i) v[k++] = static_cast<float>(s[i]);
  v[k++] = static_cast<float>(f.cam.scale);
  v[k++] = static_cast<float>(f.cam.tx);
  v[k++] = static_cast<float>(f.cam.ty);
  for (Eigen::Index i = 0; i < f.identity.size(); ++i) v[k++] = static_cast<float>(f.identity[i]);
  v[k++] = static_cast<float>(f.shadow_logit);
  if (model.config.mode == nn::ConditioningMode::kLightNonspatial) {
    auto flat = f.light.flat();
    for (double c : flat) v[k++] = static_cast<float>(c);
  }
  check(k == ns, "nonspatial vector: feature dims do not match the model configuration");
  return v;
}

CondContext build_context(ModelBundle& model, const enc::FeatureVector& f) {
  const int size = model.config.unet.image_size;
  check(f.bg.ndim() == 3 && f.bg.dim(0) == 3 && f.bg.dim(1) == size && f.bg.dim(2) == size,
        "conditioning: background resolution does not match the model");
  CondContext ctx;
  ctx.nonspatial = build_nonspatial(model, f);
  if (model.config.mode == nn::ConditioningMode::kLightNonspatial) return ctx;

  Tensor32 ref = render_shading_reference(model, f.light, f.shape, f.cam);
  Tensor32 spatial({1, 6, size, size});
  int64_t plane = static_cast<int64_t>(size) * size;
  for (int64_t i = 0; i < 3 * plane; ++i) {
    spatial[i] = ref[i] * 2.f - 1.f;
    spatial[3 * plane + i] = f.bg[i];
  }
  ctx.spatial = std::move(spatial);
  ctx.has_spatial = true;
  if (model.config.mode == nn::ConditioningMode::kFull)
    ctx.mods = model.modulator->forward(ctx.spatial);
  return ctx;
}

diffusion::Predictor<float> make_predictor(ModelBundle& model, const CondContext& ctx) {
  nn::UNet<float>* unet = model.unet.get();
  const CondContext* c = &ctx;
  const int size = model.config.unet.image_size;
  return [unet, c, size](const Tensor32& x, int t) {
    check(x.ndim() == 3 && x.dim(0) == 3 && x.dim(1) == size && x.dim(2) == size,
          "predictor: image resolution does not match the model");
    Tensor32 batched = x;
    batched.reshape({1, 3, size, size});
    const std::vector<Tensor32>* mods =
        unet->mode() == nn::ConditioningMode::kFull ? &c->mods : nullptr;
    const Tensor32* spatial =
        unet->mode() == nn::ConditioningMode::kNoModulatorConcat ? &c->spatial : nullptr;
    Tensor32 out = unet->forward(batched, {t}, c->nonspatial, mods, spatial);
    out.reshape({3, size, size});
    return out;
  };
}

namespace {

struct TrainingSet {
  Tensor32 images;      // [n,3,H,W] in [-1,1]
  Tensor32 spatial;     // [n,6,H,W]
  Tensor32 nonspatial;  // [n,ns]
};

TrainingSet load_training_set(ModelBundle& model, const std::string& dataset_dir) {
  data::Manifest manifest = data::read_manifest(dataset_dir);
  check(manifest.spec.resolution == model.config.unet.image_size,
        "train: dataset resolution does not match the model image_size");
  const int n = manifest.counts[0];
  check(n >= 1, "train: dataset has no training split");
  const int size = model.config.unet.image_size;
  const int64_t plane = static_cast<int64_t>(size) * size;
  const int ns = model.nonspatial_total();

  TrainingSet set;
  set.images = Tensor32({n, 3, size, size});
  set.spatial = Tensor32({n, 6, size, size});
  set.nonspatial = Tensor32({n, ns});
  for (int i = 0; i < n; ++i) {
    std::string stem = data::sample_stem(dataset_dir, "train", i);
    if (!fs::exists(stem + ".json"))
      throw ValidationError("train: missing sidecar " + stem + ".json");
    Tensor32 img01 = read_png_rgb(stem + ".png");
    check(img01.dim(1) == size && img01.dim(2) == size, "train: image resolution mismatch");
    enc::FeatureVector f = enc::import_sidecar(stem + ".json");
    Tensor32 signed_img = to_signed_range(img01);
    std::copy(signed_img.data(), signed_img.data() + 3 * plane,
              set.images.data() + static_cast<int64_t>(i) * 3 * plane);

    Tensor32 ref = render_shading_reference(model, f.light, f.shape, f.cam);
    float* sp = set.spatial.data() + static_cast<int64_t>(i) * 6 * plane;
    for (int64_t p = 0; p < 3 * plane; ++p) {
      sp[p] = ref[p] * 2.f - 1.f;
      sp[3 * plane + p] = f.bg[p];
    }
    Tensor32 nsv = build_nonspatial(model, f);
    std::copy(nsv.data(), nsv.data() + ns, set.nonspatial.data() + static_cast<int64_t>(i) * ns);
  }
  return set;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::string& dataset_dir,
                  const std::string& out_dir, const std::string& resume_checkpoint) {
  nn::configure_threads();
  config.validate();
  data::Manifest manifest = data::read_manifest(dataset_dir);

  ModelBundle model;
  std::unique_ptr<nn::AdamW<float>> opt;
  if (!resume_checkpoint.empty()) {
    model = ModelBundle::load(resume_checkpoint);
    nlohmann::json a = model.config.to_json();
    nlohmann::json b = config.to_json();
    a.erase("total_images");
    b.erase("total_images");
    check(a == b, "train: resume checkpoint was produced with a different config");
    model.config.total_images = config.total_images;
    opt = std::make_unique<nn::AdamW<float>>(model.all_params(), config.lr, config.weight_decay);
    nn::Checkpoint ckpt = nn::read_checkpoint(resume_checkpoint);
    nn::apply_optimizer(ckpt, model.all_params(), opt.get());
  } else {
    model = ModelBundle::create(config, manifest.spec);
    opt = std::make_unique<nn::AdamW<float>>(model.all_params(), config.lr, config.weight_decay);
  }

  TrainingSet set = load_training_set(model, dataset_dir);
  const int n_train = static_cast<int>(set.images.dim(0));
  const int size = config.unet.image_size;
  const int64_t plane = static_cast<int64_t>(size) * size;
  const int ns = model.nonspatial_total();
  const int B = config.batch_size;
  const int64_t steps_total = config.total_images / B;
  check(model.step <= steps_total, "train: checkpoint is already past total_images");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create training output directory: " + out_dir);
  std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream metrics(metrics_path, model.step > 0 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open metrics log: " + metrics_path);
  if (model.step == 0) metrics << "step,loss,lr,wallclock\n";

  TrainResult result;
  auto t_start = std::chrono::steady_clock::now();
  Tensor32 x0_batch({B, 3, size, size});
  Tensor32 spatial_batch({B, 6, size, size});
  Tensor32 ns_batch({B, ns});

  for (int64_t step = model.step; step < steps_total; ++step) {
    for (int j = 0; j < B; ++j) {
      int64_t idx = static_cast<int64_t>(
          splitmix64(hash_combine(hash_combine(config.seed, 0xda7aULL + static_cast<uint64_t>(step)),
                                  static_cast<uint64_t>(j))) %
          static_cast<uint64_t>(n_train));
      std::copy(set.images.data() + idx * 3 * plane, set.images.data() + (idx + 1) * 3 * plane,
                x0_batch.data() + static_cast<int64_t>(j) * 3 * plane);
      std::copy(set.spatial.data() + idx * 6 * plane, set.spatial.data() + (idx + 1) * 6 * plane,
                spatial_batch.data() + static_cast<int64_t>(j) * 6 * plane);
      std::copy(set.nonspatial.data() + idx * ns, set.nonspatial.data() + (idx + 1) * ns,
                ns_batch.data() + static_cast<int64_t>(j) * ns);
    }
    Rng step_rng(splitmix64(hash_combine(config.seed, 0x7261ULL + static_cast<uint64_t>(step))));
    diffusion::TrainingBatch<float> batch =
        diffusion::make_training_batch(x0_batch, model.schedule, &step_rng);

    std::vector<Tensor32> mods;
    const std::vector<Tensor32>* mods_ptr = nullptr;
    const Tensor32* spatial_ptr = nullptr;
    if (config.mode == nn::ConditioningMode::kFull) {
      mods = model.modulator->forward(spatial_batch);
      mods_ptr = &mods;
    } else if (config.mode == nn::ConditioningMode::kNoModulatorConcat) {
      spatial_ptr = &spatial_batch;
    }
    Tensor32 eps_hat = model.unet->forward(batch.x_t, batch.ts, ns_batch, mods_ptr, spatial_ptr);

    double loss = 0.0;
    Tensor32 d(eps_hat.shape());
    const double inv = 2.0 / static_cast<double>(eps_hat.numel());
    for (int64_t i = 0; i < eps_hat.numel(); ++i) {
      double diff = static_cast<double>(eps_hat[i]) - static_cast<double>(batch.eps[i]);
      loss += diff * diff;
      d[i] = static_cast<float>(diff * inv);
    }
    loss /= static_cast<double>(eps_hat.numel());

    model.unet->params().zero_grad();
    if (model.modulator) model.modulator->params().zero_grad();
    std::vector<Tensor32> d_mods;
    model.unet->backward(d, config.mode == nn::ConditioningMode::kFull ? &d_mods : nullptr);
    if (config.mode == nn::ConditioningMode::kFull) model.modulator->backward(d_mods);
    opt->step();
    model.step = step + 1;

    if (step % config.log_every == 0 || model.step == steps_total) {
      double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      char line[160];
      std::snprintf(line, sizeof(line), "%lld,%.8f,%.8g,%.3f\n",
                    static_cast<long long>(model.step), loss, config.lr, wall);
      metrics << line;
      metrics.flush();
      if (result.first_logged_loss == 0.0) result.first_logged_loss = loss;
    }
    if (model.step % config.checkpoint_every == 0 && model.step != steps_total) {
      std::string path =
          (fs::path(out_dir) / ("ckpt_" + std::to_string(model.step) + ".ckpt")).string();
      model.save(path, opt.get());
    }
  }

  result.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  model.save(result.final_checkpoint, opt.get());
  result.steps_run = model.step;
  return result;
}

InversionResult invert(ModelBundle& model, const Tensor32& image_signed,
                       const enc::FeatureVector& f, int steps) {
  nn::configure_threads();
  const int size = model.config.unet.image_size;
  check(image_signed.ndim() == 3 && image_signed.dim(0) == 3 && image_signed.dim(1) == size &&
            image_signed.dim(2) == size,
        "invert: image resolution does not match the model");
  InversionResult inv;
  inv.grid = diffusion::make_step_grid(model.schedule.steps(), steps);
  CondContext ctx = build_context(model, f);
  auto predictor = make_predictor(model, ctx);
  auto [x_T, traj] = diffusion::ddim_encode(image_signed, predictor, model.schedule, inv.grid);
  inv.corrections =
      diffusion::mean_match_from_trajectory(traj, predictor, model.schedule, inv.grid);
  inv.x_T = std::move(x_T);
  return inv;
}

Tensor32 relight(ModelBundle& model, const Tensor32& image_signed, const enc::FeatureVector& f,
                 const sh::LightSH& target_light, double target_c, int steps) {
  InversionResult inv = invert(model, image_signed, f, steps);
  enc::FeatureVector relit = f;
  relit.light = target_light;
  relit.shadow_logit = target_c;
  CondContext ctx = build_context(model, relit);
  auto predictor = make_predictor(model, ctx);
  Tensor32 out =
      diffusion::ddim_decode(inv.x_T, predictor, model.schedule, inv.grid, &inv.corrections);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(1.f, std::max(-1.f, out[i]));
  return out;
}

std::vector<Tensor32> shadow_sweep(ModelBundle& model, const Tensor32& image_signed,
                                   const enc::FeatureVector& f, const std::vector<double>& c_values,
                                   int steps) {
  check(!c_values.empty(), "shadow sweep: need at least one c value");
  InversionResult inv = invert(model, image_signed, f, steps);
  std::vector<Tensor32> outputs;
  for (double c : c_values) {
    enc::FeatureVector swept = f;
    swept.shadow_logit = c;
    CondContext ctx = build_context(model, swept);
    auto predictor = make_predictor(model, ctx);
    Tensor32 out =
        diffusion::ddim_decode(inv.x_T, predictor, model.schedule, inv.grid, &inv.corrections);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(1.f, std::max(-1.f, out[i]));
    outputs.push_back(std::move(out));
  }
  return outputs;
}

Tensor32 tile_horizontal(const std::vector<Tensor32>& images) {
  check(!images.empty(), "tile: no images");
  const int64_t h = images[0].dim(1), w = images[0].dim(2);
  for (const auto& im : images)
    check(im.ndim() == 3 && im.dim(0) == 3 && im.dim(1) == h && im.dim(2) == w,
          "tile: inconsistent image shapes");
  const int64_t n = static_cast<int64_t>(images.size());
  Tensor32 out({3, h, n * w});
  for (int64_t k = 0; k < n; ++k)
    for (int c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          out[(c * h + y) * (n * w) + k * w + x] = images[static_cast<size_t>(k)][(c * h + y) * w + x];
  return out;
}

}  // namespace relight::pipeline
