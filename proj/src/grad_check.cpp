// src/grad_check.cpp

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

#include "ekd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ekd {

namespace {

double eval_checked(const std::function<Tensor()> &loss_fn) {
  NoGradGuard no_grad;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: loss evaluated to a non-finite value");
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()> &loss_fn,
                           std::span<Tensor> params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw DomainError("grad_check eps must lie in (0, 1e-2]");
  }
  for (auto &p : params) {
    if (!p.requires_grad()) {
      throw ContractError("grad_check parameter does not require grad");
    }
    p.zero_grad();
  }
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: loss evaluated to a non-finite value");
  }
  backward(loss);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double> analytic(params[k].grad().begin(), params[k].grad().end());
    auto values = params[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = eval_checked(loss_fn);
      values[i] = saved - eps;
      const double down = eval_checked(loss_fn);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom =
          std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic[i] - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = k;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace ekd
