// src/probe.cpp

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

#include "ekd/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ekd/errors.hpp"
#include "ekd/random.hpp"

namespace ekd {

Tensor weighted_sum_features(std::span<const Tensor> states, const Tensor &logits) {
  std::vector<Tensor> detached;
  detached.reserve(states.size());
  for (const auto &s : states) detached.push_back(s.detach());
  return weighted_sum(detached, softmax(logits));
}

// ---- feature sources ---------------------------------------------------------------

FeatureFn backbone_features(const StudentModel &student) {
  // Copy the encoder handle; parameters are shared, never modified here.
  Encoder encoder = student.encoder();
  return [encoder](std::span<const double> wave) {
    NoGradGuard guard;
    return encoder.forward(wave);
  };
}

FeatureFn concat_backbone_features(std::vector<StudentModel> students) {
  if (students.empty()) throw ConfigError("distilled ensemble needs at least one student");
  const std::size_t depth = students[0].encoder().config().n_layers;
  std::vector<Encoder> encoders;
  for (const auto &s : students) {
    if (s.encoder().config().n_layers != depth) {
      throw ConfigError("distilled ensemble members must share depth");
    }
    encoders.push_back(s.encoder());
  }
  return [encoders](std::span<const double> wave) {
    NoGradGuard guard;
    std::vector<std::vector<Tensor>> per_model;
    for (const auto &e : encoders) per_model.push_back(e.forward(wave));
    std::vector<Tensor> out;
    for (std::size_t l = 0; l < per_model[0].size(); ++l) {
      std::vector<Tensor> parts;
      for (const auto &m : per_model) parts.push_back(m[l]);
      out.push_back(concat_cols(parts));
    }
    return out;
  };
}

FeatureFn spectral_feature_source(std::size_t n_bins) {
  return [n_bins](std::span<const double> wave) {
    return std::vector<Tensor>{Tensor::from({1, n_bins}, spectral_features(wave, n_bins))};
  };
}

PooledFeatures pool_features(const FeatureFn &source, std::span<const WaveSample> samples) {
  if (samples.empty()) throw ConfigError("no samples to extract features from");
  PooledFeatures out;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    NoGradGuard guard;
    const auto states = source(samples[k].samples);
    if (k == 0) {
      width = states.at(0).cols();
      rows.assign(states.size(), {});
    } else if (states.size() != rows.size()) {
      throw DimensionError("feature source changed its layer count");
    }
    for (std::size_t l = 0; l < states.size(); ++l) {
      const Tensor pooled = mean_rows(states[l]);
      if (pooled.size() != width) throw DimensionError("feature source changed its width");
      rows[l].insert(rows[l].end(), pooled.data().begin(), pooled.data().end());
    }
    out.labels.push_back(samples[k].label);
  }
  for (auto &r : rows) out.layers.push_back(Tensor::from({samples.size(), width}, std::move(r)));
  return out;
}

// ---- probe ---------------------------------------------------------------------------

void ProbeConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("probe: lr must be positive");
}

std::vector<double> ProbeModel::layer_weights() const {
  NoGradGuard guard;
  const Tensor w = softmax(layer_logits);
  return {w.data().begin(), w.data().end()};
}

namespace {

std::vector<Tensor> standardized(const ProbeModel &probe, const PooledFeatures &features) {
  if (features.layers.size() != probe.shift.size()) {
    throw DimensionError("probe expects " + std::to_string(probe.shift.size()) +
                         " layers, features have " + std::to_string(features.layers.size()));
  }
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < features.layers.size(); ++l) {
    const Tensor &x = features.layers[l];
    if (x.cols() != probe.shift[l].size()) {
      throw DimensionError("probe expects width " + std::to_string(probe.shift[l].size()) +
                           ", features have " + std::to_string(x.cols()));
    }
    std::vector<double> v(x.data().begin(), x.data().end());
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = (v[i] - probe.shift[l][i % d]) * probe.scale[l][i % d];
    }
    out.push_back(Tensor::from(x.shape(), std::move(v)));
  }
  return out;
}

}  // namespace

Tensor ProbeModel::logits(const PooledFeatures &features) const {
  const auto layers = standardized(*this, features);
  const Tensor mixed = weighted_sum_features(layers, layer_logits);
  return add_bias(matmul(mixed, weight), bias);
}

std::vector<int> ProbeModel::predict(const PooledFeatures &features) const {
  NoGradGuard guard;
  const Tensor z = logits(features);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.cols(); ++c)
      if (z(i, c) > z(i, best)) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

ProbeModel train_probe(const PooledFeatures &train, const ProbeConfig &config) {
  config.validate();
  if (train.layers.empty() || train.size() == 0) throw ConfigError("probe: no training data");
  const std::set<int> classes(train.labels.begin(), train.labels.end());
  if (classes.size() < 2) throw ConfigError("probe: training labels contain a single class");
  if (*classes.begin() < 0) throw ConfigError("probe: negative class label");

  ProbeModel probe;
  probe.n_classes = static_cast<std::size_t>(*classes.rbegin()) + 1;
  const std::size_t L = train.layers.size();
  const std::size_t D = train.layers[0].cols();
  const std::size_t n = train.size();
  for (const auto &x : train.layers) {
    std::vector<double> mean(D, 0.0), scale(D, 1.0);
    if (config.standardize) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < D; ++j) mean[j] += x(i, j) / static_cast<double>(n);
      for (std::size_t j = 0; j < D; ++j) {
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
        var /= static_cast<double>(n);
        scale[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
      }
    }
    probe.shift.push_back(std::move(mean));
    probe.scale.push_back(std::move(scale));
  }

  Rng rng(derive_seed(config.seed, "probe"));
  probe.layer_logits = Tensor::parameter({L}, std::vector<double>(L, 0.0));
  probe.weight = Tensor::parameter(
      {D, probe.n_classes},
      gaussian_vector(rng, D * probe.n_classes, 1.0 / std::sqrt(static_cast<double>(D))));
  probe.bias = Tensor::parameter({probe.n_classes}, std::vector<double>(probe.n_classes, 0.0));

  const auto layers = standardized(probe, train);
  std::vector<Tensor> params{probe.layer_logits, probe.weight, probe.bias};
  AdamMoments moments = AdamMoments::zeros_like(params);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto &p : params) p.zero_grad();
    const Tensor mixed = weighted_sum_features(layers, probe.layer_logits);
    const Tensor z = add_bias(matmul(mixed, probe.weight), probe.bias);
    backward(cross_entropy(z, train.labels));
    adam_update(params, moments, config.adam, config.lr, step + 1);
  }
  for (auto &p : params) p.set_requires_grad(false);
  return probe;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
  if (labels.empty()) throw ConfigError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// ---- evaluation ----------------------------------------------------------------------

namespace {

void check_split(const DatasetSplit &split) {
  if (split.eval_clean.empty()) throw ConfigError("evaluation set is empty");
  if (split.eval_seen_noise.size() != split.eval_clean.size() ||
      split.eval_unseen_noise.size() != split.eval_clean.size()) {
    throw ConfigError("noisy evaluation sets are not paired with the clean set");
  }
}

}  // namespace

ConditionMetrics evaluate(const FeatureFn &source, const ProbeModel &probe,
                          const DatasetSplit &split) {
  check_split(split);
  auto score = [&](const std::vector<WaveSample> &set) {
    const auto features = pool_features(source, set);
    return accuracy(probe.predict(features), features.labels);
  };
  return {score(split.eval_clean), score(split.eval_seen_noise), score(split.eval_unseen_noise)};
}

ConditionMetrics evaluate_with(const std::function<int(const WaveSample &)> &classify,
                               const DatasetSplit &split) {
  check_split(split);
  auto score = [&](const std::vector<WaveSample> &set) {
    std::vector<int> predicted, labels;
    for (const auto &w : set) {
      predicted.push_back(classify(w));
      labels.push_back(w.label);
    }
    return accuracy(predicted, labels);
  };
  return {score(split.eval_clean), score(split.eval_seen_noise), score(split.eval_unseen_noise)};
}

// ---- reports -------------------------------------------------------------------------

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = {{"version", version},
                      {"mode", mode},
                      {"seeds", {{"run", seed}, {"teachers", teacher_seeds}}},
                      {"params", {{"backbone", backbone_params}, {"heads", head_params}}},
                      {"metrics",
                       {{"clean", metrics.clean},
                        {"seen_noise", metrics.seen_noise},
                        {"unseen_noise", metrics.unseen_noise}}},
                      {"config", config}};
  if (distill_loss) {
    j["distill_loss"] = {{"initial", distill_loss->first}, {"final", distill_loss->second}};
  }
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json &j) {
  MetricsReport r;
  try {
    r.version = j.at("version").get<int>();
    if (r.version != kReportVersion) {
      throw VersionError("report schema version " + std::to_string(r.version) +
                         ", expected " + std::to_string(kReportVersion));
    }
    r.mode = j.at("mode").get<std::string>();
    r.seed = j.at("seeds").at("run").get<std::uint64_t>();
    r.teacher_seeds = j.at("seeds").at("teachers").get<std::vector<std::uint64_t>>();
    r.backbone_params = j.at("params").at("backbone").get<std::size_t>();
    r.head_params = j.at("params").at("heads").get<std::size_t>();
    const auto &m = j.at("metrics");
    r.metrics = {m.at("clean").get<double>(), m.at("seen_noise").get<double>(),
                 m.at("unseen_noise").get<double>()};
    if (j.contains("distill_loss")) {
      r.distill_loss = {j.at("distill_loss").at("initial").get<double>(),
                        j.at("distill_loss").at("final").get<double>()};
    }
    if (j.contains("config")) r.config = j.at("config");
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return r;
}

}  // namespace ekd
