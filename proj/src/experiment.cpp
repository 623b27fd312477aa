// src/experiment.cpp

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

#include "ekd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ekd/errors.hpp"
#include "ekd/random.hpp"
#include "toml.hpp"

namespace ekd {

using json = nlohmann::json;

const std::vector<std::string> &experiment_modes() {
  static const std::vector<std::string> modes{"undistilled", "single", "avg",
                                              "concat", "multi_pred", "distilled_ensemble"};
  return modes;
}

namespace {

std::string valid_modes() {
  std::string out;
  for (const auto &m : experiment_modes()) out += (out.empty() ? "" : ", ") + m;
  return out;
}

// ---- strict JSON field reading -----------------------------------------------------

class Fields {
 public:
  Fields(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected a table");
  }

  template <class T>
  void read(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), field(key));
  }

  bool has(const char *key) const { return j_.contains(key); }

  Fields sub(const char *key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Fields(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  void finish() const {
    for (const auto &item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(field(item.key()) + ": unknown field");
    }
  }

  std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  template <class T>
  static T convert(const json &v, const std::string &name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) throw ConfigError(name + ": must not be negative");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(name + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], name + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_encoder(Fields f, EncoderConfig &c) {
  f.read("d_model", c.d_model);
  f.read("n_layers", c.n_layers);
  f.read("n_heads", c.n_heads);
  f.read("d_ff", c.d_ff);
  f.read("window", c.window);
  f.read("hop", c.hop);
  f.read("init_std", c.init_std);
  f.finish();
}

json encoder_to_json(const EncoderConfig &c) {
  return {{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},       {"window", c.window},     {"hop", c.hop},
          {"init_std", c.init_std}};
}

template <class F>
auto wrap_field(const std::string &name, F &&parse) {
  try {
    return parse();
  } catch (const ConfigError &e) {
    throw ConfigError(name + ": " + e.what());
  }
}

std::vector<NoiseFamily> families_from(const std::vector<std::string> &names,
                                       const std::string &field) {
  std::vector<NoiseFamily> out;
  for (const auto &n : names) out.push_back(wrap_field(field, [&] { return noise_family_from_string(n); }));
  return out;
}

std::vector<std::string> family_names(const std::vector<NoiseFamily> &families) {
  std::vector<std::string> out;
  for (auto f : families) out.emplace_back(to_string(f));
  return out;
}

json toml_to_json(const toml::node &node) {
  if (const auto *t = node.as_table()) {
    json out = json::object();
    for (auto &&[k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto *a = node.as_array()) {
    json out = json::array();
    for (const auto &v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto *v = node.as_integer()) return v->get();
  if (const auto *v = node.as_floating_point()) return v->get();
  if (const auto *v = node.as_boolean()) return v->get();
  if (const auto *v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value at line " +
                    std::to_string(node.source().begin.line));
}

}  // namespace

// ---- ExperimentConfig ----------------------------------------------------------------

ExperimentConfig::ExperimentConfig() {
  teacher = EncoderConfig::teacher_default();
  teacher.init_std = 0.2;
  student = EncoderConfig::student_default();
  train.steps = 2000;
  train.batch_size = 4;
  data.gen.min_length = std::max(teacher.window, student.window);
}

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) {
    throw VersionError("config version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kConfigVersion) + ")");
  }
  wrap_field("teacher", [&] { teacher.validate(); return 0; });
  wrap_field("student", [&] { student.validate(); return 0; });
  wrap_field("train", [&] { train.validate(); return 0; });
  wrap_field("probe", [&] { probe.validate(); return 0; });
  data.validate();
  if (modes.empty()) throw ConfigError("modes: at least one mode is required");
  std::set<std::string> seen;
  for (const auto &m : modes) {
    const auto &valid = experiment_modes();
    if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
      throw ConfigError("modes: unknown mode '" + m + "' (valid: " + valid_modes() + ")");
    }
    if (!seen.insert(m).second) throw ConfigError("modes: '" + m + "' listed twice");
  }
  if (teacher_seeds.empty()) throw ConfigError("teacher_seeds: at least one teacher is required");
  if (std::set<std::uint64_t>(teacher_seeds.begin(), teacher_seeds.end()).size() !=
      teacher_seeds.size()) {
    throw ConfigError("teacher_seeds: seeds must be distinct");
  }
  if (tap_layers.empty()) throw ConfigError("tap_layers: at least one tap is required");
  for (std::size_t i = 0; i < tap_layers.size(); ++i) {
    if (tap_layers[i] < 1 || tap_layers[i] > teacher.n_layers ||
        (i > 0 && tap_layers[i] <= tap_layers[i - 1])) {
      throw ConfigError("tap_layers: must be strictly increasing within 1.." +
                        std::to_string(teacher.n_layers));
    }
  }
  if (train.single_teacher >= teacher_seeds.size()) {
    throw ConfigError("train.single_teacher: index beyond the " +
                      std::to_string(teacher_seeds.size()) + " teachers");
  }
  const std::size_t window = std::max(teacher.window, student.window);
  if (data.length < window) {
    throw ConfigError("data.length: " + std::to_string(data.length) +
                      " is shorter than the encoder window " + std::to_string(window));
  }
}

json ExperimentConfig::to_json() const {
  return {
      {"version", version},
      {"seed", seed},
      {"teacher", encoder_to_json(teacher)},
      {"student", encoder_to_json(student)},
      {"teacher_seeds", teacher_seeds},
      {"tap_layers", tap_layers},
      {"modes", modes},
      {"train",
       {{"steps", train.steps},
        {"batch_size", train.batch_size},
        {"lr", train.lr},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"adam_eps", train.adam.eps},
        {"grad_clip_norm", train.grad_clip_norm},
        {"warmup_fraction", train.warmup_fraction},
        {"loss_normalization", to_string(train.loss_normalization)},
        {"single_teacher", train.single_teacher},
        {"shared_head_init", train.shared_head_init}}},
      {"data",
       {{"seed", data.seed},
        {"train_count", data.train_count},
        {"eval_count", data.eval_count},
        {"length", data.length},
        {"n_classes", data.n_classes},
        {"noise_amplitude", data.gen.noise_amplitude},
        {"band_overlap", data.gen.band_overlap},
        {"seen_families", family_names(data.seen_families)},
        {"unseen_families", family_names(data.unseen_families)},
        {"eval_snr_db", data.eval_snr_db},
        {"distort_train", data.distort_train}}},
      {"probe",
       {{"steps", probe.steps},
        {"lr", probe.lr},
        {"seed", probe.seed},
        {"standardize", probe.standardize}}},
      {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json &j) {
  ExperimentConfig c;
  Fields f(j, "");
  if (!j.is_object() || !j.contains("version")) throw ConfigError("version: field is required");
  f.read("version", c.version);
  if (c.version != kConfigVersion) {
    throw VersionError("config version " + std::to_string(c.version) +
                       " is not supported (expected " + std::to_string(kConfigVersion) + ")");
  }
  f.read("seed", c.seed);
  read_encoder(f.sub("teacher"), c.teacher);
  read_encoder(f.sub("student"), c.student);
  f.read("teacher_seeds", c.teacher_seeds);
  f.read("tap_layers", c.tap_layers);
  f.read("modes", c.modes);
  f.read("output_dir", c.output_dir);

  Fields t = f.sub("train");
  t.read("steps", c.train.steps);
  t.read("batch_size", c.train.batch_size);
  t.read("lr", c.train.lr);
  t.read("beta1", c.train.adam.beta1);
  t.read("beta2", c.train.adam.beta2);
  t.read("adam_eps", c.train.adam.eps);
  t.read("grad_clip_norm", c.train.grad_clip_norm);
  t.read("warmup_fraction", c.train.warmup_fraction);
  std::string norm = to_string(c.train.loss_normalization);
  t.read("loss_normalization", norm);
  c.train.loss_normalization = wrap_field(t.field("loss_normalization"),
                                          [&] { return loss_normalization_from_string(norm); });
  t.read("single_teacher", c.train.single_teacher);
  t.read("shared_head_init", c.train.shared_head_init);
  t.finish();

  Fields d = f.sub("data");
  d.read("seed", c.data.seed);
  d.read("train_count", c.data.train_count);
  d.read("eval_count", c.data.eval_count);
  d.read("length", c.data.length);
  d.read("n_classes", c.data.n_classes);
  d.read("noise_amplitude", c.data.gen.noise_amplitude);
  d.read("band_overlap", c.data.gen.band_overlap);
  std::vector<std::string> seen = family_names(c.data.seen_families);
  std::vector<std::string> unseen = family_names(c.data.unseen_families);
  d.read("seen_families", seen);
  d.read("unseen_families", unseen);
  c.data.seen_families = families_from(seen, d.field("seen_families"));
  c.data.unseen_families = families_from(unseen, d.field("unseen_families"));
  d.read("eval_snr_db", c.data.eval_snr_db);
  d.read("distort_train", c.data.distort_train);
  d.finish();

  Fields p = f.sub("probe");
  p.read("steps", c.probe.steps);
  p.read("lr", c.probe.lr);
  p.read("seed", c.probe.seed);
  p.read("standardize", c.probe.standardize);
  p.finish();

  f.finish();
  c.data.gen.min_length = std::max(c.teacher.window, c.student.window);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json j;
  if (path.extension() == ".toml") {
    try {
      const toml::table table = toml::parse(text, path.string());
      j = toml_to_json(table);
    } catch (const toml::parse_error &e) {
      const auto &pos = e.source().begin;
      std::size_t offset = 0;
      for (std::size_t line = 1; line < pos.line && offset < text.size(); ++offset) {
        if (text[offset] == '\n') ++line;
      }
      throw ParseError(path.string() + " line " + std::to_string(pos.line) + ", column " +
                           std::to_string(pos.column) + ": " + std::string(e.description()),
                       offset + (pos.column > 0 ? pos.column - 1 : 0));
    }
  } else {
    try {
      j = json::parse(text);
    } catch (const json::parse_error &e) {
      throw ParseError(path.string() + ": " + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
  }
  return ExperimentConfig::from_json(j);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig &config) {
  if (const char *env = std::getenv(kOutputDirEnv); env && *env) return env;
  return config.output_dir;
}

// ---- run_experiment ------------------------------------------------------------------

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_atomically(const std::filesystem::path &path, const std::string &content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ConfigError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct Context {
  const ExperimentConfig &config;
  const DatasetSplit &split;
  const TeacherEnsemble &ensemble;
  const std::vector<TeacherStates> &targets;
  std::filesystem::path dir;
};

struct Distilled {
  StudentModel student;
  double initial = 0.0;
  double final = 0.0;
};

Distilled distill(const Context &ctx, TrainConfig train, const std::string &log_name) {
  std::ofstream log(ctx.dir / log_name, std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + (ctx.dir / log_name).string());
  TrainState state = TrainState::init(train, ctx.config.student, ctx.ensemble);
  Distilled out;
  out.initial = dataset_loss(state.student, ctx.split.train, ctx.targets, train);
  resume_training(state, train, ctx.split.train, ctx.targets, &log);
  out.final = dataset_loss(state.student, ctx.split.train, ctx.targets, train);
  out.student = std::move(state.student);
  return out;
}

MetricsReport run_mode(const Context &ctx, const std::string &mode) {
  const ExperimentConfig &cfg = ctx.config;
  MetricsReport report;
  report.mode = mode;
  report.seed = cfg.seed;
  report.teacher_seeds = cfg.teacher_seeds;

  FeatureFn source;
  if (mode == "undistilled") {
    StudentModel student(cfg.student, HeadLayout::for_ensemble(DistillMode::single, ctx.ensemble),
                         cfg.seed);
    report.backbone_params = student.backbone_parameter_count();
    student.drop_heads();
    source = backbone_features(student);
  } else if (mode == "distilled_ensemble") {
    std::vector<StudentModel> members;
    double initial = 0.0, final = 0.0;
    for (std::size_t m = 0; m < ctx.ensemble.size(); ++m) {
      TrainConfig train = cfg.train;
      train.mode = DistillMode::single;
      train.single_teacher = m;
      train.seed = derive_seed(cfg.seed, "member", m);
      Distilled d = distill(ctx, train, "train_distilled_ensemble_" + std::to_string(m) + ".jsonl");
      initial += d.initial / static_cast<double>(ctx.ensemble.size());
      final += d.final / static_cast<double>(ctx.ensemble.size());
      report.backbone_params += d.student.backbone_parameter_count();
      report.head_params += d.student.head_parameter_count();
      d.student.drop_heads();
      members.push_back(std::move(d.student));
    }
    report.distill_loss = {{initial, final}};
    source = concat_backbone_features(std::move(members));
  } else {
    TrainConfig train = cfg.train;
    train.mode = distill_mode_from_string(mode);
    train.seed = cfg.seed;
    Distilled d = distill(ctx, train, "train_" + mode + ".jsonl");
    report.distill_loss = {{d.initial, d.final}};
    report.backbone_params = d.student.backbone_parameter_count();
    report.head_params = d.student.head_parameter_count();
    // Downstream evaluation never sees the heads.
    d.student.drop_heads();
    source = backbone_features(d.student);
  }

  const ProbeModel probe = train_probe(pool_features(source, ctx.split.train), cfg.probe);
  report.metrics = evaluate(source, probe, ctx.split);
  json echo = cfg.to_json();
  echo.erase("output_dir");
  report.config = std::move(echo);
  return report;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig &config, std::ostream *progress) {
  config.validate();
  RunSummary summary;
  summary.output_dir = resolve_output_dir(config);
  std::filesystem::create_directories(summary.output_dir);
  std::ofstream run_log(summary.output_dir / "run.log", std::ios::trunc);
  auto note = [&](const std::string &msg) {
    run_log << utc_now() << " " << msg << "\n" << std::flush;
    if (progress) *progress << msg << "\n" << std::flush;
  };

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  note("config " + config.to_json().dump());

  const DatasetSplit split = make_split(config.data);
  const TeacherEnsemble ensemble =
      TeacherEnsemble::build(config.teacher, config.teacher_seeds, config.tap_layers);
  const bool distills = std::any_of(config.modes.begin(), config.modes.end(),
                                    [](const std::string &m) { return m != "undistilled"; });
  const std::vector<TeacherStates> targets =
      distills ? teacher_outputs(ensemble, split.train) : std::vector<TeacherStates>{};
  const Context ctx{config, split, ensemble, targets, summary.output_dir};
  note("teachers ready (" + std::to_string(ensemble.size()) + "), hash " +
       std::to_string(ensemble.parameter_hash()));

  for (const auto &mode : config.modes) {
    try {
      note("mode " + mode + ": start");
      const MetricsReport report = run_mode(ctx, mode);
      const auto path = summary.output_dir / ("report_" + mode + ".json");
      write_atomically(path, report.to_json().dump(2) + "\n");
      summary.reports.push_back(path);
      std::ostringstream msg;
      msg << std::fixed << std::setprecision(4) << "mode " << mode << ": clean "
          << report.metrics.clean << " seen " << report.metrics.seen_noise << " unseen "
          << report.metrics.unseen_noise << " (" << std::setprecision(1) << elapsed() << " s)";
      note(msg.str());
    } catch (const NumericError &e) {
      summary.failures.push_back({mode, e.what(), true});
      note("mode " + mode + ": numeric failure: " + e.what());
    } catch (const Error &e) {
      summary.failures.push_back({mode, e.what(), false});
      note("mode " + mode + ": failed: " + e.what());
    }
  }
  return summary;
}

// ---- gradient checks ---------------------------------------------------------------

std::vector<ModeGradCheck> check_mode_gradients(std::uint64_t seed, double eps) {
  EncoderConfig teacher;
  teacher.d_model = 16;
  teacher.n_layers = 2;
  teacher.n_heads = 4;
  teacher.window = 8;
  teacher.hop = 4;
  teacher.init_std = 0.3;
  EncoderConfig student = teacher;
  student.d_model = 8;
  student.n_heads = 2;
  const std::vector<std::uint64_t> seeds{derive_seed(seed, "t", 0), derive_seed(seed, "t", 1)};
  const std::vector<std::size_t> taps{1, 2};
  const auto ensemble = TeacherEnsemble::build(teacher, seeds, taps);
  GenOptions gen;
  gen.min_length = 8;
  const auto wave = gen_clean(seed, 1, 24, 2, gen)[0];
  const auto targets = ensemble.forward(wave.samples);

  std::vector<ModeGradCheck> out;
  for (auto mode : {DistillMode::single, DistillMode::avg, DistillMode::concat,
                    DistillMode::multi_pred}) {
    StudentModel model(student, HeadLayout::for_ensemble(mode, ensemble), seed);
    const DistillTargets t = build_targets(mode, targets, 1);
    auto loss = [&] {
      const StudentOutput o = model.forward(wave.samples);
      return distill_loss(model.predict(o.z), t, LossNormalization::per_timestep);
    };
    std::vector<Tensor> params;
    for (auto &p : model.params()) params.push_back(p.value);
    out.push_back({mode, grad_check(loss, params, eps)});
  }
  return out;
}

// ---- compare -------------------------------------------------------------------------

MetricsReport load_report(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read report " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  return MetricsReport::from_json(j);
}

namespace {

std::size_t mode_rank(const std::string &mode) {
  const auto &modes = experiment_modes();
  const auto it = std::find(modes.begin(), modes.end(), mode);
  return static_cast<std::size_t>(it - modes.begin());
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

ComparisonTable compare(const std::vector<MetricsReport> &reports,
                        const std::optional<std::string> &baseline) {
  if (reports.empty()) throw ConfigError("compare needs at least one report");
  std::vector<const MetricsReport *> rows;
  for (const auto &r : reports) {
    if (r.version != kReportVersion) {
      throw VersionError("report for mode '" + r.mode + "' has schema version " +
                         std::to_string(r.version) + ", expected " +
                         std::to_string(kReportVersion));
    }
    rows.push_back(&r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsReport *a, const MetricsReport *b) {
    const auto ra = mode_rank(a->mode), rb = mode_rank(b->mode);
    return ra != rb ? ra < rb : (ra == experiment_modes().size() && a->mode < b->mode);
  });

  const MetricsReport *base = nullptr;
  if (baseline) {
    for (const auto *r : rows) {
      if (r->mode == *baseline) {
        base = r;
        break;
      }
    }
    if (!base) throw ConfigError("baseline mode '" + *baseline + "' is not among the reports");
  }

  const char *headers[] = {"mode", "params", "clean", "seen_noise", "unseen_noise"};
  std::vector<std::vector<std::string>> cells;
  ComparisonTable table;
  std::ostringstream csv;
  csv << "mode,params,clean,seen_noise,unseen_noise,flags\n";
  for (const auto *r : rows) {
    const double values[3] = {r->metrics.clean, r->metrics.seen_noise, r->metrics.unseen_noise};
    const double base_values[3] = {base ? base->metrics.clean : 0.0,
                                   base ? base->metrics.seen_noise : 0.0,
                                   base ? base->metrics.unseen_noise : 0.0};
    std::vector<std::string> row{r->mode, std::to_string(r->backbone_params)};
    std::string flags;
    for (int k = 0; k < 3; ++k) {
      const bool better = base && values[k] > base_values[k];
      row.push_back(fixed4(values[k]) + (better ? "*" : ""));
      if (better) {
        ++table.flagged;
        flags += (flags.empty() ? "" : ";") + std::string(headers[k + 2]);
      }
    }
    csv << r->mode << "," << r->backbone_params << "," << fixed4(values[0]) << ","
        << fixed4(values[1]) << "," << fixed4(values[2]) << "," << flags << "\n";
    cells.push_back(std::move(row));
  }

  std::size_t width[5];
  for (int c = 0; c < 5; ++c) {
    width[c] = std::string(headers[c]).size();
    for (const auto &row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream text;
  auto emit = [&](const std::vector<std::string> &row) {
    for (int c = 0; c < 5; ++c) {
      if (c == 0) {
        text << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        text << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    text << "\n";
  };
  emit({headers[0], headers[1], headers[2], headers[3], headers[4]});
  std::size_t total = 0;
  for (int c = 0; c < 5; ++c) total += width[c] + (c ? 2 : 0);
  text << std::string(total, '-') << "\n";
  for (const auto &row : cells) emit(row);
  if (base) text << "* better than " << base->mode << "\n";
  table.text = text.str();
  table.csv = csv.str();
  return table;
}

}  // namespace ekd
