// ekd/models.hpp

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

#ifndef EKD_MODELS_HPP_
#define EKD_MODELS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ekd/tensor.hpp"

namespace ekd {

/// Shape of a framing front-end plus pre-norm transformer encoder.
struct EncoderConfig {
  std::size_t d_model = 16;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 0;  // 0 means 4 * d_model
  std::size_t window = 16;
  std::size_t hop = 8;
  double init_std = 0.02;

  static EncoderConfig teacher_default();
  static EncoderConfig student_default();

  std::size_t ff_width() const { return d_ff ? d_ff : 4 * d_model; }
  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
  /// floor((n - window) / hop) + 1. Throws InputTooShortError if n < window.
  std::size_t frames_for(std::size_t n_samples) const;

  bool operator==(const EncoderConfig &) const = default;
};

struct NamedParam {
  std::string name;
  Tensor value;
};

inline constexpr int kStudentSource = -1;

/// Activations of one layer of one model, (t x D).
struct HiddenState {
  Tensor values;
  std::size_t layer_index = 0;
  int source = kStudentSource;  // teacher index, or kStudentSource
};

/// Framing + linear projection + sinusoidal positions + transformer layers.
///
/// forward() returns n_layers + 1 states: index 0 is the projected input
/// (with positions added), index l is the output of encoder layer l.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig &config, std::uint64_t seed);

  std::vector<Tensor> forward(std::span<const double> wave) const;

  const EncoderConfig &config() const { return config_; }
  const std::vector<NamedParam> &params() const { return params_; }
  std::vector<NamedParam> &params() { return params_; }
  std::size_t parameter_count() const;
  std::uint64_t hash() const;
  void freeze();

 private:
  struct Layer {
    Tensor ln1_g, ln1_b, wq, bq, wk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Tensor attention(const Layer &layer, const Tensor &x) const;

  EncoderConfig config_;
  Tensor frame_w_, frame_b_;
  std::vector<Layer> layers_;
  std::vector<NamedParam> params_;
};

/// Affine map from the student's last layer to one teacher target width.
struct PredictionHead {
  Tensor weight;  // [D_S x D_target]
  Tensor bias;    // [D_target]

  Tensor forward(const Tensor &z) const;
  std::size_t in_width() const { return weight.rows(); }
  std::size_t out_width() const { return weight.cols(); }
};

using HeadSet = std::vector<PredictionHead>;

/// Applies every head of every set to z. Result[m][i] is set m's prediction
/// for tap layer i.
std::vector<std::vector<Tensor>> heads_forward(const HiddenState &z,
                                               std::span<const HeadSet> sets);

/// A set of frozen teachers sharing one configuration and tap layers.
class TeacherEnsemble {
 public:
  /// Tap indices are 1-based encoder layer numbers, strictly increasing.
  /// Duplicate seeds are rejected unless allow_identical is set.
  static TeacherEnsemble build(const EncoderConfig &config,
                               std::span<const std::uint64_t> seeds,
                               std::span<const std::size_t> tap_layers,
                               bool allow_identical = false);

  /// out[m][i] is teacher m's output at tap_layers()[i]. Never records
  /// gradients.
  std::vector<std::vector<HiddenState>> forward(std::span<const double> wave) const;

  std::size_t size() const { return teachers_.size(); }
  const EncoderConfig &config() const { return config_; }
  const std::vector<std::size_t> &tap_layers() const { return taps_; }
  const std::vector<std::uint64_t> &seeds() const { return seeds_; }
  const Encoder &teacher(std::size_t m) const { return teachers_.at(m); }
  std::uint64_t parameter_hash() const;

 private:
  EncoderConfig config_;
  std::vector<Encoder> teachers_;
  std::vector<std::size_t> taps_;
  std::vector<std::uint64_t> seeds_;
};

enum class DistillMode { single, avg, concat, multi_pred };

const char *to_string(DistillMode mode);
/// Throws ConfigError listing the valid names.
DistillMode distill_mode_from_string(const std::string &name);

/// Where the student's heads point: how many taps, how wide, how many teachers.
struct HeadLayout {
  DistillMode mode = DistillMode::single;
  std::size_t n_taps = 1;
  std::size_t teacher_width = 0;  // D_T
  std::size_t n_teachers = 1;     // M

  std::size_t target_width() const;
  std::size_t head_sets() const;
  static HeadLayout for_ensemble(DistillMode mode, const TeacherEnsemble &ens);
  bool operator==(const HeadLayout &) const = default;
};

struct StudentOutput {
  HiddenState z;
  std::vector<HiddenState> layers;  // n_layers + 1 states, see Encoder
};

/// Trainable encoder plus one (or M, in multi_pred mode) sets of heads.
class StudentModel {
 public:
  StudentModel() = default;
  /// With shared_head_init every multi_pred head set starts from the same
  /// draw; otherwise each set gets its own seed stream.
  StudentModel(const EncoderConfig &config, const HeadLayout &layout,
               std::uint64_t seed, bool shared_head_init = false);

  StudentOutput forward(std::span<const double> wave) const;
  std::vector<std::vector<Tensor>> predict(const HiddenState &z) const {
    return heads_forward(z, heads_);
  }

  const Encoder &encoder() const { return encoder_; }
  Encoder &encoder() { return encoder_; }
  const std::vector<HeadSet> &heads() const { return heads_; }
  const HeadLayout &layout() const { return layout_; }
  bool has_heads() const { return !heads_.empty(); }

  /// Encoder parameters followed by head parameters, in a stable order.
  std::vector<NamedParam> params() const;
  std::size_t backbone_parameter_count() const {
    return encoder_.parameter_count();
  }
  std::size_t head_parameter_count() const;
  std::uint64_t backbone_hash() const { return encoder_.hash(); }

  /// Prediction heads are only needed for distillation.
  void drop_heads() { heads_.clear(); }
  void set_heads(std::vector<HeadSet> heads) { heads_ = std::move(heads); }

 private:
  Encoder encoder_;
  HeadLayout layout_;
  std::vector<HeadSet> heads_;
};

/// Fresh heads, shaped for layout, initialized as the constructor would.
std::vector<HeadSet> make_heads(const EncoderConfig &config, const HeadLayout &layout,
                                std::uint64_t seed, bool shared_head_init);

}  // namespace ekd

#endif  // EKD_MODELS_HPP_
