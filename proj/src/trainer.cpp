// src/trainer.cpp

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

#include "ekd/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ekd {

using json = nlohmann::json;

// ---- config --------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train: grad_clip_norm must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("train: warmup_fraction must lie in [0, 1]");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.eps > 0.0)) {
    throw ConfigError("train: invalid Adam hyper-parameters");
  }
}

double TrainConfig::lr_at(std::size_t step) const {
  const auto warmup = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(steps))));
  const double ramp = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup));
  return lr * ramp;
}

// ---- state -------------------------------------------------------------------------

TrainState TrainState::init(const TrainConfig &config, const EncoderConfig &student_config,
                            const TeacherEnsemble &ensemble) {
  config.validate();
  if (config.mode == DistillMode::single && config.single_teacher >= ensemble.size()) {
    throw ConfigError("single_teacher index " + std::to_string(config.single_teacher) +
                      " but the ensemble has " + std::to_string(ensemble.size()) + " teachers");
  }
  TrainState s;
  s.student = StudentModel(student_config, HeadLayout::for_ensemble(config.mode, ensemble),
                           config.seed, config.shared_head_init);
  const auto params = s.parameter_tensors();
  s.moments = AdamMoments::zeros_like(params);
  s.rng.seed(derive_seed(config.seed, "shuffle"));
  return s;
}

std::vector<Tensor> TrainState::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto &p : student.params()) out.push_back(p.value);
  return out;
}

// ---- steps -------------------------------------------------------------------------

namespace {

void check_layout(const TrainState &state, const TrainConfig &config, std::size_t n_teachers) {
  const HeadLayout &layout = state.student.layout();
  if (layout.mode != config.mode) {
    throw ContractError(std::string("student heads are laid out for ") + to_string(layout.mode) +
                        " but the step runs " + to_string(config.mode));
  }
  if (config.mode != DistillMode::single && layout.n_teachers != n_teachers) {
    throw ContractError("student heads expect " + std::to_string(layout.n_teachers) +
                        " teachers, ensemble has " + std::to_string(n_teachers));
  }
  if (!state.student.has_heads()) {
    throw ContractError("cannot distill a student whose heads were discarded");
  }
}

}  // namespace

StepResult distill_step(TrainState &state, std::span<const WaveSample> batch,
                        const TeacherEnsemble &ensemble, const TrainConfig &config) {
  std::vector<TeacherStates> outputs;
  outputs.reserve(batch.size());
  for (const auto &w : batch) outputs.push_back(ensemble.forward(w.samples));
  return distill_step(state, batch, outputs, config);
}

StepResult distill_step(TrainState &state, std::span<const WaveSample> batch,
                        std::span<const TeacherStates> teacher_outputs,
                        const TrainConfig &config) {
  if (batch.empty()) throw ConfigError("distill_step: empty batch");
  if (teacher_outputs.size() != batch.size()) {
    throw ContractError("distill_step: teacher outputs do not match the batch");
  }
  check_layout(state, config, teacher_outputs[0].size());
  auto params = state.parameter_tensors();
  for (auto &p : params) p.zero_grad();

  Tensor total;
  try {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const StudentOutput out = state.student.forward(batch[b].samples);
      const auto predictions = state.student.predict(out.z);
      const DistillTargets targets =
          build_targets(config.mode, teacher_outputs[b], config.single_teacher);
      const Tensor item = distill_loss(predictions, targets, config.loss_normalization);
      total = b == 0 ? item : add(total, item);
    }
  } catch (const NumericError &e) {
    throw NumericError("step " + std::to_string(state.step) + ": " + e.what());
  }
  const Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
  backward(loss);

  const auto named = state.student.params();
  for (const auto &p : named) {
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("step " + std::to_string(state.step) +
                           ": non-finite gradient in " + p.name);
      }
    }
  }
  StepResult result;
  result.loss = loss.item();
  result.grad_norm = clip_grad_norm(params, config.grad_clip_norm);
  adam_update(params, state.moments, config.adam, config.lr_at(state.step), state.step + 1);
  state.loss_history.push_back(result.loss);
  state.grad_norm_history.push_back(result.grad_norm);
  ++state.step;
  return result;
}

// ---- loop ----------------------------------------------------------------------------

std::vector<TeacherStates> teacher_outputs(const TeacherEnsemble &ensemble,
                                           std::span<const WaveSample> dataset) {
  std::vector<TeacherStates> out;
  out.reserve(dataset.size());
  for (const auto &w : dataset) out.push_back(ensemble.forward(w.samples));
  return out;
}

void resume_training(TrainState &state, const TrainConfig &config,
                     std::span<const WaveSample> dataset, std::span<const TeacherStates> targets,
                     std::ostream *log) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  if (targets.size() != dataset.size()) {
    throw ContractError("train: teacher outputs do not match the dataset");
  }
  config.validate();
  std::vector<WaveSample> batch;
  std::vector<TeacherStates> outputs;
  while (state.step < config.steps) {
    batch.clear();
    outputs.clear();
    while (batch.size() < config.batch_size) {
      if (state.cursor >= state.order.size()) {
        state.order.resize(dataset.size());
        std::iota(state.order.begin(), state.order.end(), std::size_t{0});
        std::shuffle(state.order.begin(), state.order.end(), state.rng);
        state.cursor = 0;
      }
      const std::size_t idx = state.order[state.cursor++];
      if (idx >= dataset.size()) {
        throw ContractError("shuffle order refers to sample " + std::to_string(idx) +
                            " beyond the dataset");
      }
      batch.push_back(dataset[idx]);
      outputs.push_back(targets[idx]);
    }
    const double lr = config.lr_at(state.step);
    const StepResult r = distill_step(state, batch, outputs, config);
    if (log) {
      *log << json{{"step", state.step}, {"loss", r.loss}, {"grad_norm", r.grad_norm}, {"lr", lr}}
                  .dump()
           << "\n";
    }
  }
}

void resume_training(TrainState &state, const TrainConfig &config,
                     std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                     std::ostream *log) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const auto targets = teacher_outputs(ensemble, dataset);
  resume_training(state, config, dataset, targets, log);
}

TrainState train(const TrainConfig &config, const EncoderConfig &student_config,
                 std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                 std::span<const TeacherStates> targets, std::ostream *log) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  TrainState state = TrainState::init(config, student_config, ensemble);
  resume_training(state, config, dataset, targets, log);
  return state;
}

TrainState train(const TrainConfig &config, const EncoderConfig &student_config,
                 std::span<const WaveSample> dataset, const TeacherEnsemble &ensemble,
                 std::ostream *log) {
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const auto targets = teacher_outputs(ensemble, dataset);
  return train(config, student_config, dataset, ensemble, targets, log);
}

double dataset_loss(const StudentModel &student, std::span<const WaveSample> dataset,
                    std::span<const TeacherStates> targets, const TrainConfig &config) {
  if (dataset.empty()) throw ConfigError("dataset_loss: dataset is empty");
  if (targets.size() != dataset.size()) {
    throw ContractError("dataset_loss: teacher outputs do not match the dataset");
  }
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const StudentOutput out = student.forward(dataset[k].samples);
    const DistillTargets t = build_targets(config.mode, targets[k], config.single_teacher);
    total += distill_loss(student.predict(out.z), t, config.loss_normalization).item();
  }
  return total / static_cast<double>(dataset.size());
}

// ---- checkpoints -------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'E', 'K', 'D', 'C', 'K', 'P', 'T', '1'};

json encoder_json(const EncoderConfig &c) {
  return {{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},       {"window", c.window},     {"hop", c.hop},
          {"init_std", c.init_std}};
}

EncoderConfig encoder_from_json(const json &j) {
  EncoderConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.hop = j.at("hop").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  return c;
}

json train_json(const TrainConfig &c) {
  return {{"mode", to_string(c.mode)},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"grad_clip_norm", c.grad_clip_norm},
          {"warmup_fraction", c.warmup_fraction},
          {"seed", c.seed},
          {"loss_normalization", to_string(c.loss_normalization)},
          {"single_teacher", c.single_teacher},
          {"shared_head_init", c.shared_head_init}};
}

TrainConfig train_from_json(const json &j) {
  TrainConfig c;
  c.mode = distill_mode_from_string(j.at("mode").get<std::string>());
  c.steps = j.at("steps").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.warmup_fraction = j.at("warmup_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss_normalization =
      loss_normalization_from_string(j.at("loss_normalization").get<std::string>());
  c.single_teacher = j.at("single_teacher").get<std::size_t>();
  c.shared_head_init = j.at("shared_head_init").get<bool>();
  return c;
}

void put_u64(std::string &out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_doubles(std::string &out, std::span<const double> values) {
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(const std::string &in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return v;
}

}  // namespace

void save_checkpoint(const TrainState &state, const TrainConfig &config,
                     const std::filesystem::path &path) {
  const auto named = state.student.params();
  json header;
  header["format"] = "ekd-checkpoint";
  header["version"] = kCheckpointVersion;
  header["encoder"] = encoder_json(state.student.encoder().config());
  const HeadLayout &layout = state.student.layout();
  header["layout"] = {{"mode", to_string(layout.mode)},
                      {"n_taps", layout.n_taps},
                      {"teacher_width", layout.teacher_width},
                      {"n_teachers", layout.n_teachers}};
  header["heads_present"] = state.student.has_heads();
  header["train"] = train_json(config);
  header["seed"] = config.seed;
  header["step"] = state.step;
  std::ostringstream rng;
  rng << state.rng;
  header["rng"] = rng.str();
  header["order"] = state.order;
  header["cursor"] = state.cursor;
  json tensors = json::array();
  for (const auto &p : named) tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["tensors"] = std::move(tensors);
  header["loss_history"] = state.loss_history.size();
  header["grad_norm_history"] = state.grad_norm_history.size();

  const std::string head = header.dump();
  std::string blob(kMagic, kMagic + 8);
  put_u64(blob, head.size());
  blob += head;
  for (const auto &p : named) put_doubles(blob, p.value.data());
  if (state.moments.m.size() != named.size()) {
    throw ContractError("save_checkpoint: Adam moments do not match the parameters");
  }
  for (const auto &m : state.moments.m) put_doubles(blob, m);
  for (const auto &v : state.moments.v) put_doubles(blob, v);
  put_doubles(blob, state.loss_history);
  put_doubles(blob, state.grad_norm_history);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + tmp.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw ConfigError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, 8) != 0) {
    throw ParseError("not an ekd checkpoint (bad magic)", 0);
  }
  const std::uint64_t head_len = get_u64(raw, 8);
  if (head_len > raw.size() - 16) {
    throw ParseError("header length exceeds file size", 8);
  }
  json header;
  try {
    header = json::parse(raw.begin() + 16, raw.begin() + 16 + static_cast<std::ptrdiff_t>(head_len));
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 16 + e.byte);
  }

  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> stored;
  std::size_t n_loss = 0, n_gnorm = 0;
  bool heads_present = true;
  HeadLayout layout;
  EncoderConfig enc;
  try {
    if (header.at("format").get<std::string>() != "ekd-checkpoint") {
      throw ParseError("unknown checkpoint format", 16);
    }
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw VersionError("checkpoint version " + header.at("version").dump() +
                         " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    enc = encoder_from_json(header.at("encoder"));
    const auto &l = header.at("layout");
    layout.mode = distill_mode_from_string(l.at("mode").get<std::string>());
    layout.n_taps = l.at("n_taps").get<std::size_t>();
    layout.teacher_width = l.at("teacher_width").get<std::size_t>();
    layout.n_teachers = l.at("n_teachers").get<std::size_t>();
    heads_present = header.at("heads_present").get<bool>();
    ck.config = train_from_json(header.at("train"));
    ck.state.step = header.at("step").get<std::size_t>();
    ck.state.order = header.at("order").get<std::vector<std::size_t>>();
    ck.state.cursor = header.at("cursor").get<std::size_t>();
    std::istringstream rng(header.at("rng").get<std::string>());
    rng >> ck.state.rng;
    if (!rng) throw ParseError("checkpoint RNG state is malformed", 16);
    for (const auto &t : header.at("tensors")) {
      stored.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
    }
    n_loss = header.at("loss_history").get<std::size_t>();
    n_gnorm = header.at("grad_norm_history").get<std::size_t>();
  } catch (const json::exception &e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 16);
  }

  try {
    enc.validate();
    ck.state.student = StudentModel(enc, layout, ck.config.seed, ck.config.shared_head_init);
  } catch (const ConfigError &e) {
    throw CompatibilityError(std::string("checkpoint configuration is unusable: ") + e.what());
  }
  if (!heads_present) ck.state.student.drop_heads();
  const auto named = ck.state.student.params();
  if (named.size() != stored.size()) {
    throw CompatibilityError("checkpoint stores " + std::to_string(stored.size()) +
                             " tensors, configuration implies " + std::to_string(named.size()));
  }
  for (std::size_t k = 0; k < named.size(); ++k) {
    if (named[k].name != stored[k].first || named[k].value.shape() != stored[k].second) {
      throw CompatibilityError("tensor " + stored[k].first + " " + shape_str(stored[k].second) +
                               " does not match configuration (" + named[k].name + " " +
                               shape_str(named[k].value.shape()) + ")");
    }
  }

  std::size_t offset = 16 + head_len;
  auto read_into = [&](std::span<double> dst) {
    if (raw.size() < offset || (raw.size() - offset) / 8 < dst.size()) {
      throw ParseError("checkpoint payload is truncated", raw.size());
    }
    for (auto &v : dst) {
      v = std::bit_cast<double>(get_u64(raw, offset));
      if (!std::isfinite(v)) throw ParseError("non-finite value in checkpoint payload", offset);
      offset += 8;
    }
  };
  auto params = ck.state.parameter_tensors();
  for (auto &p : params) read_into(p.mutable_data());
  ck.state.moments = AdamMoments::zeros_like(params);
  for (auto &m : ck.state.moments.m) read_into(m);
  for (auto &v : ck.state.moments.v) read_into(v);
  ck.state.loss_history.resize(n_loss);
  read_into(ck.state.loss_history);
  ck.state.grad_norm_history.resize(n_gnorm);
  read_into(ck.state.grad_norm_history);
  if (offset != raw.size()) {
    throw ParseError("trailing bytes after checkpoint payload", offset);
  }
  return ck;
}

}  // namespace ekd
