// tests/test_util.hpp

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

#ifndef EKD_TESTS_TEST_UTIL_HPP_
#define EKD_TESTS_TEST_UTIL_HPP_

#include <random>
#include <vector>

#include "ekd/tensor.hpp"

namespace ekd::testing {

inline std::vector<double> uniform_values(std::mt19937_64 &rng, std::size_t n,
                                          double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto &x : v) x = dist(rng);
  return v;
}

inline Tensor random_tensor(std::mt19937_64 &rng, const Shape &shape,
                            bool requires_grad = false, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::from(shape, uniform_values(rng, shape_numel(shape), lo, hi));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

inline std::vector<double> to_vector(const Tensor &t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace ekd::testing

#endif  // EKD_TESTS_TEST_UTIL_HPP_
