// ekd/objectives.hpp

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

#ifndef EKD_OBJECTIVES_HPP_
#define EKD_OBJECTIVES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "ekd/models.hpp"
#include "ekd/tensor.hpp"

namespace ekd {

/// How the L1 term of the layer loss is normalized.
///  per_timestep: ||hS - hT||_1 / (t * D), i.e. mean absolute error.
///  sequence_sum:  ||hS - hT||_1 / D, which grows with the sequence length.
enum class LossNormalization { per_timestep, sequence_sum };

const char *to_string(LossNormalization n);
LossNormalization loss_normalization_from_string(const std::string &name);

inline constexpr double kCosineEps = 1e-8;

/// Mean over timesteps of the row-wise cosine similarity.
Tensor cossim_timestep_avg(const Tensor &a, const Tensor &b);

/// L1 distance plus -log sigmoid(cosine similarity). The target is treated
/// as a constant; no gradient reaches it.
Tensor layer_loss(const Tensor &h_student, const Tensor &h_teacher,
                  LossNormalization norm = LossNormalization::per_timestep);

/// Targets for one utterance, shaped for one distillation mode.
struct DistillTargets {
  DistillMode mode = DistillMode::single;
  std::size_t n_teachers = 1;
  /// Per tap layer (single / avg / concat).
  std::vector<HiddenState> layers;
  /// Per teacher, per tap layer (multi_pred).
  std::vector<std::vector<HiddenState>> per_teacher;

  std::size_t n_taps() const;
  std::size_t width() const;
};

using TeacherStates = std::vector<std::vector<HiddenState>>;

/// Elementwise mean of each tap layer over teachers. The per-element sum
/// runs over the teacher values in ascending order, so the result does not
/// depend on teacher order.
DistillTargets aggregate_average(const TeacherStates &per_teacher);

/// Feature-axis concatenation of each tap layer in ensemble order.
DistillTargets aggregate_concat(const TeacherStates &per_teacher);

/// One teacher's tap layers, unchanged.
DistillTargets targets_single(const TeacherStates &per_teacher, std::size_t teacher);

/// Every teacher's tap layers, kept apart.
DistillTargets targets_multi(const TeacherStates &per_teacher);

/// Dispatches on mode. `teacher` is used by single mode only.
DistillTargets build_targets(DistillMode mode, const TeacherStates &per_teacher,
                             std::size_t teacher = 0);

Tensor loss_single(std::span<const Tensor> predictions, const DistillTargets &targets,
                   LossNormalization norm = LossNormalization::per_timestep);
Tensor loss_avg(std::span<const Tensor> predictions, const DistillTargets &targets,
                LossNormalization norm = LossNormalization::per_timestep);
Tensor loss_concat(std::span<const Tensor> predictions, const DistillTargets &targets,
                   LossNormalization norm = LossNormalization::per_timestep);
Tensor loss_multi_pred(const std::vector<std::vector<Tensor>> &predictions,
                       const DistillTargets &targets,
                       LossNormalization norm = LossNormalization::per_timestep);

/// Loss for whatever mode the targets carry. `predictions` is the output of
/// heads_forward: one set, or M sets in multi_pred mode.
Tensor distill_loss(const std::vector<std::vector<Tensor>> &predictions,
                    const DistillTargets &targets,
                    LossNormalization norm = LossNormalization::per_timestep);

}  // namespace ekd

#endif  // EKD_OBJECTIVES_HPP_
