// src/models.cpp

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

#include "ekd/models.hpp"

#include <cmath>
#include <set>

#include "ekd/random.hpp"

namespace ekd {

// ---- EncoderConfig ---------------------------------------------------------

EncoderConfig EncoderConfig::teacher_default() {
  EncoderConfig c;
  c.d_model = 32;
  c.n_layers = 6;
  return c;
}

EncoderConfig EncoderConfig::student_default() { return EncoderConfig{}; }

void EncoderConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0) {
    throw ConfigError("encoder d_model, n_layers and n_heads must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("encoder n_heads (" + std::to_string(n_heads) +
                      ") must divide d_model (" + std::to_string(d_model) + ")");
  }
  if (d_model < 2) throw ConfigError("encoder d_model must be at least 2");
  if (hop < 1 || window < hop) {
    throw ConfigError("encoder framing needs window >= hop >= 1");
  }
  if (!(init_std > 0.0) || !std::isfinite(init_std)) {
    throw ConfigError("encoder init_std must be positive");
  }
}

std::size_t EncoderConfig::frames_for(std::size_t n_samples) const {
  if (n_samples < window) {
    throw InputTooShortError("input of " + std::to_string(n_samples) +
                             " samples is shorter than the " + std::to_string(window) +
                             "-sample window");
  }
  return (n_samples - window) / hop + 1;
}

// ---- Encoder -----------------------------------------------------------------

namespace {

Tensor positions(std::size_t t, std::size_t d) {
  std::vector<double> pe(t * d);
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(s) * rate;
      pe[s * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({t, d}, std::move(pe));
}

}  // namespace

Encoder::Encoder(const EncoderConfig &config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, "encoder"));
  const std::size_t d = config_.d_model, f = config_.ff_width();
  const double sd = config_.init_std;
  auto weight = [&](const std::string &name, std::size_t r, std::size_t c) {
    Tensor t = Tensor::parameter({r, c}, gaussian_vector(rng, r * c, sd));
    params_.push_back({name, t});
    return t;
  };
  auto constant = [&](const std::string &name, std::size_t n, double v) {
    Tensor t = Tensor::parameter({n}, std::vector<double>(n, v));
    params_.push_back({name, t});
    return t;
  };
  frame_w_ = weight("frame.w", config_.window, d);
  frame_b_ = constant("frame.b", d, 0.0);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    Layer L;
    L.ln1_g = constant(p + "ln1.g", d, 1.0);
    L.ln1_b = constant(p + "ln1.b", d, 0.0);
    L.wq = weight(p + "attn.wq", d, d);
    L.bq = constant(p + "attn.bq", d, 0.0);
    L.wk = weight(p + "attn.wk", d, d);
    L.wv = weight(p + "attn.wv", d, d);
    L.bv = constant(p + "attn.bv", d, 0.0);
    L.wo = weight(p + "attn.wo", d, d);
    L.bo = constant(p + "attn.bo", d, 0.0);
    L.ln2_g = constant(p + "ln2.g", d, 1.0);
    L.ln2_b = constant(p + "ln2.b", d, 0.0);
    L.w1 = weight(p + "ff.w1", d, f);
    L.b1 = constant(p + "ff.b1", f, 0.0);
    L.w2 = weight(p + "ff.w2", f, d);
    L.b2 = constant(p + "ff.b2", d, 0.0);
    layers_.push_back(std::move(L));
  }
}

Tensor Encoder::attention(const Layer &L, const Tensor &x) const {
  const std::size_t h = config_.n_heads, dh = config_.d_model / h;
  const Tensor q = add_bias(matmul(x, L.wq), L.bq);
  // No key bias: it shifts every score of a query row equally.
  const Tensor k = matmul(x, L.wk);
  const Tensor v = add_bias(matmul(x, L.wv), L.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t b = i * dh, e = b + dh;
    const Tensor scores = scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt);
    heads.push_back(matmul(softmax(scores), slice_cols(v, b, e)));
  }
  const Tensor merged = h == 1 ? heads[0] : concat_cols(heads);
  return add_bias(matmul(merged, L.wo), L.bo);
}

std::vector<Tensor> Encoder::forward(std::span<const double> wave) const {
  const std::size_t t = config_.frames_for(wave.size());
  const std::size_t w = config_.window;
  std::vector<double> frames(t * w);
  for (std::size_t s = 0; s < t; ++s)
    for (std::size_t j = 0; j < w; ++j) frames[s * w + j] = wave[s * config_.hop + j];
  Tensor x = add_bias(matmul(Tensor::from({t, w}, std::move(frames)), frame_w_), frame_b_);
  x = add(x, positions(t, config_.d_model));

  std::vector<Tensor> states;
  states.reserve(layers_.size() + 1);
  states.push_back(x);
  for (const auto &L : layers_) {
    const Tensor h = add(x, attention(L, layer_norm(x, L.ln1_g, L.ln1_b)));
    const Tensor ff = add_bias(
        matmul(gelu(add_bias(matmul(layer_norm(h, L.ln2_g, L.ln2_b), L.w1), L.b1)), L.w2),
        L.b2);
    x = add(h, ff);
    states.push_back(x);
  }
  return states;
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += p.value.size();
  return n;
}

std::uint64_t Encoder::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto &p : params_) h = hash_values(h, p.value.data());
  return h;
}

void Encoder::freeze() {
  for (auto &p : params_) p.value.freeze();
}

// ---- heads -----------------------------------------------------------------------

Tensor PredictionHead::forward(const Tensor &z) const {
  if (z.rank() != 2 || z.cols() != weight.rows()) {
    throw DimensionError("prediction head expects width " + std::to_string(weight.rows()) +
                         ", got input " + shape_str(z.shape()));
  }
  return add_bias(matmul(z, weight), bias);
}

std::vector<std::vector<Tensor>> heads_forward(const HiddenState &z,
                                               std::span<const HeadSet> sets) {
  std::vector<std::vector<Tensor>> out;
  out.reserve(sets.size());
  for (const auto &set : sets) {
    std::vector<Tensor> preds;
    preds.reserve(set.size());
    for (const auto &head : set) preds.push_back(head.forward(z.values));
    out.push_back(std::move(preds));
  }
  return out;
}

// ---- teachers --------------------------------------------------------------------

TeacherEnsemble TeacherEnsemble::build(const EncoderConfig &config,
                                       std::span<const std::uint64_t> seeds,
                                       std::span<const std::size_t> tap_layers,
                                       bool allow_identical) {
  config.validate();
  if (seeds.empty()) throw ConfigError("teacher ensemble needs at least one seed");
  if (!allow_identical) {
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) {
      throw ConfigError(
          "duplicate teacher seeds; identical teachers must be requested explicitly");
    }
  }
  if (tap_layers.empty()) throw ConfigError("tap layer set is empty");
  for (std::size_t i = 0; i < tap_layers.size(); ++i) {
    if (tap_layers[i] < 1 || tap_layers[i] > config.n_layers) {
      throw ConfigError("tap layer " + std::to_string(tap_layers[i]) +
                        " outside [1, " + std::to_string(config.n_layers) + "]");
    }
    if (i && tap_layers[i] <= tap_layers[i - 1]) {
      throw ConfigError("tap layers must be strictly increasing");
    }
  }
  TeacherEnsemble ens;
  ens.config_ = config;
  ens.taps_.assign(tap_layers.begin(), tap_layers.end());
  ens.seeds_.assign(seeds.begin(), seeds.end());
  for (auto seed : seeds) {
    Encoder e(config, seed);
    e.freeze();
    ens.teachers_.push_back(std::move(e));
  }
  return ens;
}

std::vector<std::vector<HiddenState>> TeacherEnsemble::forward(
    std::span<const double> wave) const {
  NoGradGuard no_grad;
  std::vector<std::vector<HiddenState>> out;
  out.reserve(teachers_.size());
  for (std::size_t m = 0; m < teachers_.size(); ++m) {
    const auto states = teachers_[m].forward(wave);
    std::vector<HiddenState> taps;
    taps.reserve(taps_.size());
    for (auto layer : taps_) {
      taps.push_back({states[layer], layer, static_cast<int>(m)});
    }
    out.push_back(std::move(taps));
  }
  return out;
}

std::uint64_t TeacherEnsemble::parameter_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto &t : teachers_)
    for (const auto &p : t.params()) h = hash_values(h, p.value.data());
  return h;
}

// ---- student -----------------------------------------------------------------------

const char *to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::single: return "single";
    case DistillMode::avg: return "avg";
    case DistillMode::concat: return "concat";
    case DistillMode::multi_pred: return "multi_pred";
  }
  return "?";
}

DistillMode distill_mode_from_string(const std::string &name) {
  if (name == "single") return DistillMode::single;
  if (name == "avg") return DistillMode::avg;
  if (name == "concat") return DistillMode::concat;
  if (name == "multi_pred") return DistillMode::multi_pred;
  throw ConfigError("unknown distillation mode '" + name +
                    "' (valid: single, avg, concat, multi_pred)");
}

std::size_t HeadLayout::target_width() const {
  return mode == DistillMode::concat ? teacher_width * n_teachers : teacher_width;
}

std::size_t HeadLayout::head_sets() const {
  return mode == DistillMode::multi_pred ? n_teachers : 1;
}

HeadLayout HeadLayout::for_ensemble(DistillMode mode, const TeacherEnsemble &ens) {
  HeadLayout l;
  l.mode = mode;
  l.n_taps = ens.tap_layers().size();
  l.teacher_width = ens.config().d_model;
  l.n_teachers = mode == DistillMode::single ? 1 : ens.size();
  return l;
}

std::vector<HeadSet> make_heads(const EncoderConfig &config, const HeadLayout &layout,
                                std::uint64_t seed, bool shared_head_init) {
  if (layout.n_taps == 0 || layout.teacher_width == 0 || layout.n_teachers == 0) {
    throw ConfigError("head layout needs taps, a teacher width and teachers");
  }
  const std::size_t in = config.d_model, out = layout.target_width();
  std::vector<HeadSet> sets;
  for (std::size_t m = 0; m < layout.head_sets(); ++m) {
    Rng rng(derive_seed(seed, "heads", shared_head_init ? 0 : m));
    HeadSet set;
    for (std::size_t i = 0; i < layout.n_taps; ++i) {
      PredictionHead h;
      h.weight = Tensor::parameter({in, out}, gaussian_vector(rng, in * out, config.init_std));
      h.bias = Tensor::parameter({out}, std::vector<double>(out, 0.0));
      set.push_back(std::move(h));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

StudentModel::StudentModel(const EncoderConfig &config, const HeadLayout &layout,
                           std::uint64_t seed, bool shared_head_init)
    : encoder_(config, seed),
      layout_(layout),
      heads_(make_heads(config, layout, seed, shared_head_init)) {}

StudentOutput StudentModel::forward(std::span<const double> wave) const {
  auto states = encoder_.forward(wave);
  StudentOutput out;
  out.layers.reserve(states.size());
  for (std::size_t l = 0; l < states.size(); ++l) {
    out.layers.push_back({states[l], l, kStudentSource});
  }
  out.z = out.layers.back();
  return out;
}

std::vector<NamedParam> StudentModel::params() const {
  std::vector<NamedParam> all = encoder_.params();
  for (std::size_t m = 0; m < heads_.size(); ++m) {
    for (std::size_t i = 0; i < heads_[m].size(); ++i) {
      const std::string p = "head" + std::to_string(m) + "." + std::to_string(i) + ".";
      all.push_back({p + "w", heads_[m][i].weight});
      all.push_back({p + "b", heads_[m][i].bias});
    }
  }
  return all;
}

std::size_t StudentModel::head_parameter_count() const {
  std::size_t n = 0;
  for (const auto &set : heads_)
    for (const auto &h : set) n += h.weight.size() + h.bias.size();
  return n;
}

}  // namespace ekd
