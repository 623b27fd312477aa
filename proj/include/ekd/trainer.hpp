// ekd/trainer.hpp

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

#ifndef EKD_TRAINER_HPP_
#define EKD_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "ekd/models.hpp"
#include "ekd/objectives.hpp"
#include "ekd/optim.hpp"
#include "ekd/random.hpp"
#include "ekd/synth.hpp"

namespace ekd {

struct TrainConfig {
  DistillMode mode = DistillMode::single;
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  AdamConfig adam;
  double grad_clip_norm = 1.0;
  /// Linear warmup over this fraction of `steps` (at least one step).
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  LossNormalization loss_normalization = LossNormalization::per_timestep;
  /// Teacher distilled in single mode.
  std::size_t single_teacher = 0;
  bool shared_head_init = false;

  void validate() const;
  /// Learning rate for the 0-based update `step`.
  double lr_at(std::size_t step) const;
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
  StudentModel student;
  AdamMoments moments;
  std::size_t step = 0;
  std::vector<double> loss_history;
  std::vector<double> grad_norm_history;
  Rng rng;
  /// Current epoch's sample order and the position inside it.
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  static TrainState init(const TrainConfig &config, const EncoderConfig &student_config,
                         const TeacherEnsemble &ensemble);
  std::vector<Tensor> parameter_tensors() const;
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// One optimization step on a batch. Runs the frozen teachers, builds the
/// mode's targets, averages the loss over items, clips, and applies Adam.
StepResult distill_step(TrainState &state, std::span<const WaveSample> batch,
                        const TeacherEnsemble &ensemble, const TrainConfig &config);

/// Same, with teacher outputs already computed (one entry per batch item).
StepResult distill_step(TrainState &state, std::span<const WaveSample> batch,
                        std::span<const TeacherStates> teacher_outputs,
                        const TrainConfig &config);

/// Fresh student trained for config.steps steps. Writes one JSON object per
/// step ({"step", "loss", "grad_norm", "lr"}) to `log` when given.
TrainState train(const TrainConfig &config, const EncoderConfig &student_config,
                 std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                 std::ostream *log = nullptr);

/// Continues `state` until state.step == config.steps.
void resume_training(TrainState &state, const TrainConfig &config,
                     std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                     std::ostream *log = nullptr);

/// Teacher outputs for every sample, in dataset order.
std::vector<TeacherStates> teacher_outputs(const TeacherEnsemble &ensemble,
                                           std::span<const WaveSample> dataset);

/// Variants taking teacher outputs computed once by teacher_outputs().
TrainState train(const TrainConfig &config, const EncoderConfig &student_config,
                 std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                 std::span<const TeacherStates> targets, std::ostream *log = nullptr);
void resume_training(TrainState &state, const TrainConfig &config,
                     std::span<const WaveSample> dataset, std::span<const TeacherStates> targets,
                     std::ostream *log = nullptr);

/// Mean distillation loss of `student` over a whole dataset, without
/// recording gradients.
double dataset_loss(const StudentModel &student, std::span<const WaveSample> dataset,
                    std::span<const TeacherStates> targets, const TrainConfig &config);

// ---- checkpoints -------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

/// Layout: 8-byte magic "EKDCKPT1", little-endian u64 header length, JSON
/// header, then little-endian float64 payload (parameters, Adam m, Adam v,
/// loss history, grad-norm history). Written to a temp file then renamed.
void save_checkpoint(const TrainState &state, const TrainConfig &config,
                     const std::filesystem::path &path);

/// Throws ParseError (with byte offset) on malformed files, VersionError on
/// an unknown version, CompatibilityError when tensors disagree with the
/// stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path &path);

}  // namespace ekd

#endif  // EKD_TRAINER_HPP_
