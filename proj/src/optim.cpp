// src/optim.cpp

// Copyright 2026  The EKD Authors

// See ../LICENSE for clarification regarding multiple authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "ekd/optim.hpp"

#include <cmath>

namespace ekd {

AdamMoments AdamMoments::zeros_like(std::span<const Tensor> params) {
  AdamMoments out;
  for (const auto &p : params) {
    out.m.emplace_back(p.size(), 0.0);
    out.v.emplace_back(p.size(), 0.0);
  }
  return out;
}

void adam_update(std::span<Tensor> params, AdamMoments &moments, const AdamConfig &config,
                 double lr, std::size_t t) {
  if (moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw ContractError("Adam moments do not match the parameter list");
  }
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].mutable_data();
    const auto g = params[k].grad();
    auto &m = moments.m[k];
    auto &v = moments.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto &p : params)
    for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto &p : params)
      for (auto &g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

}  // namespace ekd
