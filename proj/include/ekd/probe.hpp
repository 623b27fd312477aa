// ekd/probe.hpp

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

#ifndef EKD_PROBE_HPP_
#define EKD_PROBE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ekd/models.hpp"
#include "ekd/optim.hpp"
#include "ekd/synth.hpp"
#include "ekd/tensor.hpp"
#include "json.hpp"

namespace ekd {

/// sum_l softmax(logits)_l * states_l. States are detached first, so no
/// gradient ever reaches the model that produced them.
Tensor weighted_sum_features(std::span<const Tensor> states, const Tensor &logits);

/// Maps a waveform to a list of equally shaped hidden states [t x D].
using FeatureFn = std::function<std::vector<Tensor>(std::span<const double>)>;

/// Hidden states of a student's encoder only; heads are never touched.
FeatureFn backbone_features(const StudentModel &student);

/// Layer-wise feature concatenation of several students (which must share
/// depth): the probe-time source of a distilled ensemble.
FeatureFn concat_backbone_features(std::vector<StudentModel> students);

/// One state holding spectral_features(wave, n_bins) as a [1 x n_bins] row.
FeatureFn spectral_feature_source(std::size_t n_bins);

/// Time-pooled features: layers[l] is [n x D], row k from sample k.
struct PooledFeatures {
  std::vector<Tensor> layers;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

PooledFeatures pool_features(const FeatureFn &source, std::span<const WaveSample> samples);

struct ProbeConfig {
  std::size_t steps = 300;
  double lr = 1e-2;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Per-layer, per-dimension standardization with training statistics.
  bool standardize = true;

  void validate() const;
};

struct ProbeModel {
  Tensor layer_logits;  // [L]
  Tensor weight;        // [D x C]
  Tensor bias;          // [C]
  std::vector<std::vector<double>> shift, scale;  // per layer, per dim
  std::size_t n_classes = 0;

  /// Softmax-normalized layer weights.
  std::vector<double> layer_weights() const;
  Tensor logits(const PooledFeatures &features) const;
  std::vector<int> predict(const PooledFeatures &features) const;
};

/// Cross-entropy on the layer logits and classifier with full-batch Adam.
/// Throws ConfigError when the labels hold fewer than two classes.
ProbeModel train_probe(const PooledFeatures &train, const ProbeConfig &config);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

struct ConditionMetrics {
  double clean = 0.0;
  double seen_noise = 0.0;
  double unseen_noise = 0.0;
  bool operator==(const ConditionMetrics &) const = default;
};

/// Accuracy on the three paired eval sets.
ConditionMetrics evaluate(const FeatureFn &source, const ProbeModel &probe,
                          const DatasetSplit &split);
/// Same with an arbitrary per-sample classifier.
ConditionMetrics evaluate_with(const std::function<int(const WaveSample &)> &classify,
                               const DatasetSplit &split);

inline constexpr int kReportVersion = 1;

struct MetricsReport {
  int version = kReportVersion;
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> teacher_seeds;
  std::size_t backbone_params = 0;
  std::size_t head_params = 0;
  ConditionMetrics metrics;
  /// Initial and final distillation loss over the training set, for
  /// distilled modes.
  std::optional<std::pair<double, double>> distill_loss;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  /// Throws VersionError on a different schema version, ParseError on a
  /// malformed document.
  static MetricsReport from_json(const nlohmann::json &j);
};

}  // namespace ekd

#endif  // EKD_PROBE_HPP_
