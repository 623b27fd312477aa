// ekd/experiment.hpp

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

#ifndef EKD_EXPERIMENT_HPP_
#define EKD_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ekd/grad_check.hpp"
#include "ekd/probe.hpp"
#include "ekd/synth.hpp"
#include "ekd/trainer.hpp"
#include "json.hpp"

namespace ekd {

inline constexpr int kConfigVersion = 1;

/// Environment variable that replaces ExperimentConfig::output_dir.
inline constexpr const char *kOutputDirEnv = "EKD_OUTPUT_DIR";

/// Every mode run_experiment understands. "undistilled" probes a
/// random-init student and serves as the no-distillation baseline.
const std::vector<std::string> &experiment_modes();

struct ExperimentConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 1;
  EncoderConfig teacher;  // defaults: 32 wide, 6 layers, init_std 0.2
  EncoderConfig student;
  std::vector<std::uint64_t> teacher_seeds{11, 22};
  std::vector<std::size_t> tap_layers{2, 4, 6};
  std::vector<std::string> modes{"single", "avg", "concat", "multi_pred"};
  TrainConfig train;  // mode and seed are set per run
  DataConfig data;
  ProbeConfig probe;
  std::string output_dir = "ekd_out";

  ExperimentConfig();
  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys and wrongly typed values are ConfigErrors naming the field.
  static ExperimentConfig from_json(const nlohmann::json &j);
};

/// Reads a JSON document, or TOML when the extension is .toml. Syntax errors
/// raise ParseError with line and column in the message.
ExperimentConfig load_experiment_config(const std::filesystem::path &path);

struct ModeFailure {
  std::string mode;
  std::string message;
  bool numeric = false;
};

struct RunSummary {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> reports;
  std::vector<ModeFailure> failures;
  bool ok() const { return failures.empty(); }
};

/// Builds the ensemble and data, then for each mode: distill, probe,
/// evaluate and write report_<mode>.json (atomically) plus
/// train_<mode>.jsonl. Progress with wall-clock times goes to run.log only.
/// A failing mode is recorded and the remaining modes still run.
RunSummary run_experiment(const ExperimentConfig &config, std::ostream *progress = nullptr);

/// Output directory after the environment override.
std::filesystem::path resolve_output_dir(const ExperimentConfig &config);

struct ModeGradCheck {
  DistillMode mode;
  GradCheckResult result;
};

/// Finite-difference check of each mode's full loss with respect to every
/// student parameter, on a two-teacher, two-layer-student setup.
std::vector<ModeGradCheck> check_mode_gradients(std::uint64_t seed, double eps = 1e-5);

MetricsReport load_report(const std::filesystem::path &path);

struct ComparisonTable {
  std::string text;
  std::string csv;
  std::size_t flagged = 0;
};

/// One row per report, ordered by mode. Metric cells strictly greater than
/// the baseline row's are flagged with '*'. Without a baseline nothing is
/// flagged.
ComparisonTable compare(const std::vector<MetricsReport> &reports,
                        const std::optional<std::string> &baseline);

}  // namespace ekd

#endif  // EKD_EXPERIMENT_HPP_
