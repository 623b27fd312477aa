// ekd/optim.hpp

// Copyright 2026  The EKD Authors

// See ../../LICENSE for clarification regarding multiple authors
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

#ifndef EKD_OPTIM_HPP_
#define EKD_OPTIM_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "ekd/tensor.hpp"

namespace ekd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one buffer per parameter tensor.
struct AdamMoments {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamMoments zeros_like(std::span<const Tensor> params);
};

/// One bias-corrected Adam update. `t` is the 1-based update count.
void adam_update(std::span<Tensor> params, AdamMoments &moments, const AdamConfig &config,
                 double lr, std::size_t t);

/// L2 norm over all gradient buffers.
double global_grad_norm(std::span<const Tensor> params);

/// Rescales all gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace ekd

#endif  // EKD_OPTIM_HPP_
