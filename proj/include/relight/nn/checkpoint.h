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
#include <utility>
#include <vector>

#include "relight/core/tensor.h"
#include "relight/nn/module.h"

namespace relight::nn {

// Single-file archive: magic, length-prefixed JSON header (meta + tensor
// manifest with shapes and payload offsets), then raw little-endian float32
// tensors. Optimizer moments ride along for bit-reproducible resume.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor32>> tensors;
  std::vector<std::pair<std::string, Tensor32>> opt_m;
  std::vector<std::pair<std::string, Tensor32>> opt_v;
  int64_t opt_step = 0;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Header only (config inspection without loading tensors).
nlohmann::json read_checkpoint_meta(const std::string& path);

// Fill from / apply to a parameter list in registration order. Names must
// match exactly.
void collect_params(const std::vector<Parameter<float>*>& params, Checkpoint* ckpt);
void collect_optimizer(AdamW<float>* opt, const std::vector<Parameter<float>*>& params,
                       Checkpoint* ckpt);
void apply_params(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params);
void apply_optimizer(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
                     AdamW<float>* opt);

}  // namespace relight::nn
