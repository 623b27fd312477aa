// src/objectives.cpp

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

#include "ekd/objectives.hpp"

#include <algorithm>

namespace ekd {

const char *to_string(LossNormalization n) {
  return n == LossNormalization::per_timestep ? "per_timestep" : "sequence_sum";
}

LossNormalization loss_normalization_from_string(const std::string &name) {
  if (name == "per_timestep") return LossNormalization::per_timestep;
  if (name == "sequence_sum") return LossNormalization::sequence_sum;
  throw ConfigError("unknown loss normalization '" + name +
                    "' (valid: per_timestep, sequence_sum)");
}

Tensor cossim_timestep_avg(const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw DimensionError("cossim: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  return row_cosine_mean(a, b, kCosineEps);
}

Tensor layer_loss(const Tensor &h_student, const Tensor &h_teacher,
                  LossNormalization norm) {
  if (h_student.shape() != h_teacher.shape() || h_student.rank() != 2) {
    throw DimensionError("layer_loss: prediction " + shape_str(h_student.shape()) +
                         " vs target " + shape_str(h_teacher.shape()));
  }
  const Tensor target = h_teacher.detach();
  const Tensor diff = abs(sub(h_student, target));
  const Tensor l1 = norm == LossNormalization::per_timestep
                        ? mean(diff)
                        : scale(sum(diff), 1.0 / static_cast<double>(h_student.cols()));
  const Tensor cos_term = scale(log_sigmoid(cossim_timestep_avg(h_student, target)), -1.0);
  return add(l1, cos_term);
}

// ---- targets -----------------------------------------------------------------------

std::size_t DistillTargets::n_taps() const {
  return mode == DistillMode::multi_pred
             ? (per_teacher.empty() ? 0 : per_teacher.front().size())
             : layers.size();
}

std::size_t DistillTargets::width() const {
  if (mode == DistillMode::multi_pred) {
    return per_teacher.empty() || per_teacher[0].empty()
               ? 0
               : per_teacher[0][0].values.cols();
  }
  return layers.empty() ? 0 : layers[0].values.cols();
}

namespace {

void check_ensemble(const TeacherStates &per_teacher) {
  if (per_teacher.empty() || per_teacher[0].empty()) {
    throw EnsembleShapeError("no teacher outputs to aggregate");
  }
  const auto &ref = per_teacher[0];
  for (std::size_t m = 1; m < per_teacher.size(); ++m) {
    if (per_teacher[m].size() != ref.size()) {
      throw EnsembleShapeError("teacher " + std::to_string(m) + " has " +
                               std::to_string(per_teacher[m].size()) + " tap layers, teacher 0 has " +
                               std::to_string(ref.size()));
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const auto &a = ref[i], &b = per_teacher[m][i];
      if (a.values.shape() != b.values.shape()) {
        throw EnsembleShapeError("teacher " + std::to_string(m) + " tap " + std::to_string(i) +
                                 " has shape " + shape_str(b.values.shape()) + ", teacher 0 has " +
                                 shape_str(a.values.shape()));
      }
      if (a.layer_index != b.layer_index) {
        throw EnsembleShapeError("teachers disagree on tap layer " + std::to_string(i));
      }
    }
  }
}

}  // namespace

DistillTargets aggregate_average(const TeacherStates &per_teacher) {
  check_ensemble(per_teacher);
  const std::size_t M = per_teacher.size();
  DistillTargets out;
  out.mode = DistillMode::avg;
  out.n_teachers = M;
  std::vector<double> column(M);
  for (std::size_t i = 0; i < per_teacher[0].size(); ++i) {
    const Tensor &ref = per_teacher[0][i].values;
    std::vector<double> avg(ref.size());
    for (std::size_t k = 0; k < avg.size(); ++k) {
      for (std::size_t m = 0; m < M; ++m) column[m] = per_teacher[m][i].values.data()[k];
      std::sort(column.begin(), column.end());
      double s = 0.0;
      for (double v : column) s += v;
      avg[k] = s / static_cast<double>(M);
    }
    out.layers.push_back({Tensor::from(ref.shape(), std::move(avg)),
                          per_teacher[0][i].layer_index, -1});
  }
  return out;
}

DistillTargets aggregate_concat(const TeacherStates &per_teacher) {
  check_ensemble(per_teacher);
  const std::size_t M = per_teacher.size();
  DistillTargets out;
  out.mode = DistillMode::concat;
  out.n_teachers = M;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < per_teacher[0].size(); ++i) {
    std::vector<Tensor> parts;
    parts.reserve(M);
    for (std::size_t m = 0; m < M; ++m) parts.push_back(per_teacher[m][i].values);
    out.layers.push_back({concat_cols(parts).detach(), per_teacher[0][i].layer_index, -1});
  }
  return out;
}

DistillTargets targets_single(const TeacherStates &per_teacher, std::size_t teacher) {
  if (teacher >= per_teacher.size()) {
    throw ConfigError("single-teacher index " + std::to_string(teacher) + " but only " +
                      std::to_string(per_teacher.size()) + " teachers");
  }
  DistillTargets out;
  out.mode = DistillMode::single;
  out.n_teachers = 1;
  out.layers = per_teacher[teacher];
  return out;
}

DistillTargets targets_multi(const TeacherStates &per_teacher) {
  check_ensemble(per_teacher);
  DistillTargets out;
  out.mode = DistillMode::multi_pred;
  out.n_teachers = per_teacher.size();
  out.per_teacher = per_teacher;
  return out;
}

DistillTargets build_targets(DistillMode mode, const TeacherStates &per_teacher,
                             std::size_t teacher) {
  switch (mode) {
    case DistillMode::single: return targets_single(per_teacher, teacher);
    case DistillMode::avg: return aggregate_average(per_teacher);
    case DistillMode::concat: return aggregate_concat(per_teacher);
    case DistillMode::multi_pred: return targets_multi(per_teacher);
  }
  throw ContractError("unhandled distillation mode");
}

// ---- losses ------------------------------------------------------------------------

namespace {

void require_mode(const DistillTargets &targets, DistillMode want, const char *fn) {
  if (targets.mode != want) {
    throw ContractError(std::string(fn) + " called with " + to_string(targets.mode) +
                        " targets");
  }
}

// (1/|tap|) * sum_i layer_loss(pred_i, target_i)
Tensor tap_average(std::span<const Tensor> predictions,
                   const std::vector<HiddenState> &targets, LossNormalization norm) {
  if (predictions.size() != targets.size() || targets.empty()) {
    throw ContractError("got " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(targets.size()) + " tap layers");
  }
  Tensor total = layer_loss(predictions[0], targets[0].values, norm);
  for (std::size_t i = 1; i < targets.size(); ++i) {
    total = add(total, layer_loss(predictions[i], targets[i].values, norm));
  }
  return scale(total, 1.0 / static_cast<double>(targets.size()));
}

void require_width(std::span<const Tensor> predictions, std::size_t width,
                   const char *what) {
  for (const auto &p : predictions) {
    if (p.cols() != width) {
      throw DimensionError(std::string(what) + ": prediction width " +
                           std::to_string(p.cols()) + ", expected " + std::to_string(width));
    }
  }
}

}  // namespace

Tensor loss_single(std::span<const Tensor> predictions, const DistillTargets &targets,
                   LossNormalization norm) {
  require_mode(targets, DistillMode::single, "loss_single");
  return tap_average(predictions, targets.layers, norm);
}

Tensor loss_avg(std::span<const Tensor> predictions, const DistillTargets &targets,
                LossNormalization norm) {
  require_mode(targets, DistillMode::avg, "loss_avg");
  return tap_average(predictions, targets.layers, norm);
}

Tensor loss_concat(std::span<const Tensor> predictions, const DistillTargets &targets,
                   LossNormalization norm) {
  require_mode(targets, DistillMode::concat, "loss_concat");
  require_width(predictions, targets.width(),
                ("loss_concat (D_T*M = " + std::to_string(targets.width()) + ")").c_str());
  return tap_average(predictions, targets.layers, norm);
}

Tensor loss_multi_pred(const std::vector<std::vector<Tensor>> &predictions,
                       const DistillTargets &targets, LossNormalization norm) {
  require_mode(targets, DistillMode::multi_pred, "loss_multi_pred");
  const std::size_t M = targets.per_teacher.size();
  if (predictions.size() != M) {
    throw ContractError("loss_multi_pred: " + std::to_string(predictions.size()) +
                        " head sets for " + std::to_string(M) + " teachers");
  }
  Tensor total = tap_average(predictions[0], targets.per_teacher[0], norm);
  for (std::size_t m = 1; m < M; ++m) {
    total = add(total, tap_average(predictions[m], targets.per_teacher[m], norm));
  }
  return scale(total, 1.0 / static_cast<double>(M));
}

Tensor distill_loss(const std::vector<std::vector<Tensor>> &predictions,
                    const DistillTargets &targets, LossNormalization norm) {
  if (targets.mode == DistillMode::multi_pred) {
    return loss_multi_pred(predictions, targets, norm);
  }
  if (predictions.size() != 1) {
    throw ContractError(std::string(to_string(targets.mode)) + " mode expects one head set, got " +
                        std::to_string(predictions.size()));
  }
  switch (targets.mode) {
    case DistillMode::single: return loss_single(predictions[0], targets, norm);
    case DistillMode::avg: return loss_avg(predictions[0], targets, norm);
    case DistillMode::concat: return loss_concat(predictions[0], targets, norm);
    case DistillMode::multi_pred: break;
  }
  throw ContractError("unhandled distillation mode");
}

}  // namespace ekd
