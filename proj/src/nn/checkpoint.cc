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

#include "relight/nn/checkpoint.h"

#include <cstring>
#include <fstream>

#include "relight/core/error.h"

namespace relight::nn {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'C', 'K', 'P', 'T', '0', '1'};

nlohmann::json tensor_manifest(const std::vector<std::pair<std::string, Tensor32>>& tensors,
                               int64_t* offset) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = *offset;
    list.push_back(std::move(e));
    *offset += t.numel() * static_cast<int64_t>(sizeof(float));
  }
  return list;
}

void write_payload(std::ofstream& out, const std::vector<std::pair<std::string, Tensor32>>& tensors) {
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

std::vector<std::pair<std::string, Tensor32>> read_group(std::ifstream& in,
                                                         const nlohmann::json& manifest,
                                                         std::streampos payload_start) {
  std::vector<std::pair<std::string, Tensor32>> out;
  for (const auto& e : manifest) {
    std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
    Tensor32 t(shape);
    in.seekg(payload_start + static_cast<std::streamoff>(e.at("offset").get<int64_t>()));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw IoError("checkpoint: truncated tensor payload");
    out.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["meta"] = ckpt.meta;
  int64_t offset = 0;
  header["tensors"] = tensor_manifest(ckpt.tensors, &offset);
  header["optimizer"]["step"] = ckpt.opt_step;
  header["optimizer"]["m"] = tensor_manifest(ckpt.opt_m, &offset);
  header["optimizer"]["v"] = tensor_manifest(ckpt.opt_v, &offset);

  std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  write_payload(out, ckpt.tensors);
  write_payload(out, ckpt.opt_m);
  write_payload(out, ckpt.opt_v);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::string& path, std::streampos* payload_start) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint header truncated: " + path);
  *payload_start = in.tellg();
  return nlohmann::json::parse(header_str);
}

}  // namespace

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::streampos payload_start;
  nlohmann::json header = read_header(in, path, &payload_start);
  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  ckpt.tensors = read_group(in, header.at("tensors"), payload_start);
  ckpt.opt_step = header.at("optimizer").at("step").get<int64_t>();
  ckpt.opt_m = read_group(in, header.at("optimizer").at("m"), payload_start);
  ckpt.opt_v = read_group(in, header.at("optimizer").at("v"), payload_start);
  return ckpt;
}

nlohmann::json read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::streampos payload_start;
  return read_header(in, path, &payload_start).at("meta");
}

void collect_params(const std::vector<Parameter<float>*>& params, Checkpoint* ckpt) {
  for (auto* p : params) ckpt->tensors.emplace_back(p->name, p->value);
}

void collect_optimizer(AdamW<float>* opt, const std::vector<Parameter<float>*>& params,
                       Checkpoint* ckpt) {
  check(opt->size() == params.size(), "checkpoint: optimizer/parameter count mismatch");
  ckpt->opt_step = opt->step_count();
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt->opt_m.emplace_back(params[i]->name, opt->moment1(i));
    ckpt->opt_v.emplace_back(params[i]->name, opt->moment2(i));
  }
}

void apply_params(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params) {
  check(ckpt.tensors.size() == params.size(), "checkpoint: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    check(name == params[i]->name, "checkpoint: parameter name mismatch at " + name);
    check(t.shape() == params[i]->value.shape(), "checkpoint: shape mismatch at " + name);
    params[i]->value = t;
  }
}

void apply_optimizer(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
                     AdamW<float>* opt) {
  check(ckpt.opt_m.size() == params.size() && ckpt.opt_v.size() == params.size(),
        "checkpoint: optimizer state count mismatch");
  opt->set_step_count(ckpt.opt_step);
  for (size_t i = 0; i < params.size(); ++i) {
    check(ckpt.opt_m[i].first == params[i]->name, "checkpoint: optimizer name mismatch");
    opt->moment1(i) = ckpt.opt_m[i].second;
    opt->moment2(i) = ckpt.opt_v[i].second;
  }
}

}  // namespace relight::nn
