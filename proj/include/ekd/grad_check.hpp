// ekd/grad_check.hpp

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

#ifndef EKD_GRAD_CHECK_HPP_
#define EKD_GRAD_CHECK_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "ekd/tensor.hpp"

namespace ekd {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares analytic gradients of a scalar function against central
/// differences (f(p + eps) - f(p - eps)) / (2 eps), one coordinate at a time.
///
/// `loss_fn` must rebuild its graph from the current parameter values on
/// every call. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator. Parameter gradients are overwritten.
GradCheckResult grad_check(const std::function<Tensor()> &loss_fn,
                           std::span<Tensor> params, double eps = 1e-5);

}  // namespace ekd

#endif  // EKD_GRAD_CHECK_HPP_
