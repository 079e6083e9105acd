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

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "relight/core/rng.h"
#include "relight/core/tensor.h"

namespace relight::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Owns parameters in registration order; the order and the hierarchical
// names define the checkpoint layout.
template <typename T>
class ParamStore {
 public:
  Parameter<T>* create(const std::string& name, std::vector<int64_t> shape) {
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return params_.back().get();
  }

  std::vector<Parameter<T>*> parameters() const {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.zero();
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

// Gaussian fan-in init with an optional gain; the near-output projections use
// gain 0.1 so fresh networks start close to identity without dead gradients.
template <typename T>
void init_gaussian(Parameter<T>* p, int64_t fan_in, double gain, Rng* rng) {
  double std = gain * std::sqrt(1.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = static_cast<T>(rng->normal() * std);
}

// AdamW with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, t_);
    double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>* p = params_[k];
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        double g = static_cast<double>(p->grad[i]);
        double mi = b1_ * static_cast<double>(m[i]) + (1.0 - b1_) * g;
        double vi = b2_ * static_cast<double>(v[i]) + (1.0 - b2_) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_) + wd_ * static_cast<double>(p->value[i]);
        p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - lr_ * update);
      }
    }
  }

  int64_t step_count() const { return t_; }
  double lr() const { return lr_; }

  // Checkpoint access, aligned with the parameter order.
  Tensor<T>& moment1(size_t k) { return m_[k]; }
  Tensor<T>& moment2(size_t k) { return v_[k]; }
  void set_step_count(int64_t t) { t_ = t; }
  size_t size() const { return params_.size(); }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace relight::nn
