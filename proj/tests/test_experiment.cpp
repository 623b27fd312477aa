// tests/test_experiment.cpp

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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ekd/errors.hpp"
#include "ekd/experiment.hpp"

using namespace ekd;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / "ekd_experiment_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny(const fs::path &out) {
  ExperimentConfig c;
  c.teacher.d_model = 16;
  c.teacher.n_layers = 2;
  c.tap_layers = {1, 2};
  c.train.steps = 8;
  c.data.train_count = 12;
  c.data.eval_count = 8;
  c.data.length = 48;
  c.probe.steps = 20;
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

MetricsReport crafted(const std::string &mode, double clean, double seen, double unseen) {
  MetricsReport r;
  r.mode = mode;
  r.backbone_params = 100;
  r.metrics = {clean, seen, unseen};
  return r;
}

}  // namespace

TEST_CASE("config parsing: JSON and TOML agree") {
  const auto dir = scratch("parse");
  write(dir / "c.json", R"({"version": 1, "seed": 4, "modes": ["avg"],
    "teacher": {"d_model": 16, "n_layers": 2}, "tap_layers": [1, 2],
    "train": {"steps": 5, "loss_normalization": "sequence_sum"},
    "data": {"seen_families": ["gaussian"], "unseen_families": ["band_reject"]}})");
  write(dir / "c.toml", R"(version = 1
seed = 4
modes = ["avg"]
tap_layers = [1, 2]
[teacher]
d_model = 16
n_layers = 2
[train]
steps = 5
loss_normalization = "sequence_sum"
[data]
seen_families = ["gaussian"]
unseen_families = ["band_reject"]
)");
  const auto a = load_experiment_config(dir / "c.json");
  const auto b = load_experiment_config(dir / "c.toml");
  CHECK(a.to_json() == b.to_json());
  CHECK(a.train.loss_normalization == LossNormalization::sequence_sum);
  CHECK(a.teacher.init_std == 0.2);
  CHECK(a.student.init_std == 0.02);
  // round trip through the echo
  CHECK(ExperimentConfig::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("config errors name the line or field") {
  const auto dir = scratch("errors");
  auto error_of = [&](const std::string &name, const std::string &text) -> std::string {
    write(dir / name, text);
    try {
      load_experiment_config(dir / name);
    } catch (const ParseError &e) {
      return std::string("parse: ") + e.what();
    } catch (const VersionError &e) {
      return std::string("version: ") + e.what();
    } catch (const ConfigError &e) {
      return std::string("config: ") + e.what();
    }
    return "none";
  };
  auto contains = [](const std::string &s, const std::string &part) {
    return s.find(part) != std::string::npos;
  };

  const auto bad_json = error_of("a.json", "{\"version\": 1,\n  \"seed\": }");
  CHECK(contains(bad_json, "parse: "));
  CHECK(contains(bad_json, "line 2"));

  const auto bad_toml = error_of("a.toml", "version = 1\nseed = = 3\n");
  CHECK(contains(bad_toml, "parse: "));
  CHECK(contains(bad_toml, "line 2"));

  CHECK(contains(error_of("b.json", R"({"version": 1, "train": {"steps": "many"}})"),
                 "train.steps: expected an integer"));
  CHECK(contains(error_of("c.json", R"({"version": 1, "train": {"stpes": 3}})"),
                 "train.stpes: unknown field"));
  const auto bad_mode = error_of("d.json", R"({"version": 1, "modes": ["sum"]})");
  CHECK(contains(bad_mode, "config: "));
  CHECK(contains(bad_mode, "distilled_ensemble"));
  CHECK(contains(error_of("e.json", R"({"version": 3})"), "version: "));
  CHECK(contains(error_of("f.json", R"({"seed": 1})"), "version"));
  CHECK(contains(error_of("g.json", R"({"version": 1, "data": {"seen_families": ["gaussian"],
      "unseen_families": ["gaussian"]}})"), "config: "));
  CHECK(contains(error_of("h.json", R"({"version": 1, "tap_layers": [2, 9]})"), "tap_layers"));
  CHECK(contains(error_of("i.json", R"({"version": 1, "train": {"steps": -4}})"),
                 "must not be negative"));
}

TEST_CASE("a single mode produces exactly one report") {
  const auto dir = scratch("one");
  auto cfg = tiny(dir);
  cfg.modes = {"single"};
  const auto summary = run_experiment(cfg);
  CHECK(summary.ok());
  std::size_t reports = 0;
  for (const auto &e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    reports += name.rfind("report_", 0) == 0;
    CHECK(name.find(".tmp") == std::string::npos);
  }
  CHECK(reports == 1);
  CHECK(fs::exists(dir / "run.log"));
  CHECK(fs::exists(dir / "train_single.jsonl"));
  const auto report = load_report(dir / "report_single.json");
  CHECK(report.mode == "single");
  REQUIRE(report.distill_loss.has_value());
  const auto j = json::parse(slurp(dir / "report_single.json"));
  CHECK(j.at("metrics").size() == 3);
  CHECK_FALSE(j.at("config").contains("output_dir"));
}

TEST_CASE("reports differ only in mode-dependent fields") {
  const auto dir = scratch("diff");
  auto cfg = tiny(dir);
  cfg.modes = {"avg", "multi_pred"};
  REQUIRE(run_experiment(cfg).ok());
  auto a = json::parse(slurp(dir / "report_avg.json"));
  auto b = json::parse(slurp(dir / "report_multi_pred.json"));
  for (auto *j : {&a, &b}) {
    j->erase("mode");
    j->erase("metrics");
    j->erase("distill_loss");
    (*j)["params"].erase("heads");
  }
  CHECK(a == b);
}

TEST_CASE("runs are deterministic and honour the output override") {
  const auto dir = scratch("det");
  auto cfg = tiny(dir / "ignored");
  cfg.modes = {"undistilled", "concat", "distilled_ensemble"};
  ::setenv(kOutputDirEnv, (dir / "first").c_str(), 1);
  const auto first = run_experiment(cfg);
  ::setenv(kOutputDirEnv, (dir / "second").c_str(), 1);
  const auto second = run_experiment(cfg);
  ::unsetenv(kOutputDirEnv);
  CHECK_FALSE(fs::exists(dir / "ignored"));
  REQUIRE(first.reports.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(first.reports[k].parent_path() == dir / "first");
    CHECK(slurp(first.reports[k]) == slurp(second.reports[k]));
  }
  CHECK(slurp(dir / "first" / "train_concat.jsonl") == slurp(dir / "second" / "train_concat.jsonl"));
}

TEST_CASE("parameter accounting across modes") {
  const auto dir = scratch("params");
  auto cfg = tiny(dir);
  cfg.modes = {"single", "multi_pred", "distilled_ensemble", "undistilled"};
  cfg.teacher_seeds = {1, 2, 3};
  REQUIRE(run_experiment(cfg).ok());
  const auto single = load_report(dir / "report_single.json");
  const auto multi = load_report(dir / "report_multi_pred.json");
  const auto ens = load_report(dir / "report_distilled_ensemble.json");
  const auto none = load_report(dir / "report_undistilled.json");
  CHECK(multi.backbone_params == single.backbone_params);
  CHECK(ens.backbone_params == 3 * multi.backbone_params);
  CHECK(none.backbone_params == single.backbone_params);
  CHECK(multi.head_params == 3 * single.head_params);
  CHECK(none.head_params == 0);
}

TEST_CASE("a failing mode keeps the completed reports") {
  const auto dir = scratch("partial");
  auto cfg = tiny(dir);
  cfg.modes = {"undistilled", "single"};
  cfg.train.lr = 1e300;
  cfg.train.grad_clip_norm = 1e300;
  const auto summary = run_experiment(cfg);
  CHECK_FALSE(summary.ok());
  REQUIRE(summary.failures.size() == 1);
  CHECK(summary.failures[0].mode == "single");
  CHECK(summary.failures[0].numeric);
  CHECK(fs::exists(dir / "report_undistilled.json"));
  CHECK_FALSE(fs::exists(dir / "report_single.json"));
}

TEST_CASE("compare tables") {
  SUBCASE("single report") {
    const auto t = compare({crafted("avg", 0.5, 0.4, 0.3)}, std::nullopt);
    CHECK(t.flagged == 0);
    CHECK(t.csv == "mode,params,clean,seen_noise,unseen_noise,flags\navg,100,0.5000,0.4000,0.3000,\n");
  }
  SUBCASE("identical reports flag nothing") {
    const auto a = crafted("single", 0.5, 0.4, 0.3);
    auto b = a;
    b.mode = "avg";
    CHECK(compare({a, b}, std::string("single")).flagged == 0);
  }
  SUBCASE("flags follow a hand comparison") {
    const std::vector<MetricsReport> reports{
        crafted("multi_pred", 0.70, 0.40, 0.36), crafted("single", 0.60, 0.45, 0.35),
        crafted("avg", 0.60, 0.50, 0.30)};
    const auto t = compare(reports, std::string("single"));
    // multi_pred: clean and unseen better; avg: seen better
    CHECK(t.flagged == 3);
    CHECK(t.csv ==
          "mode,params,clean,seen_noise,unseen_noise,flags\n"
          "single,100,0.6000,0.4500,0.3500,\n"
          "avg,100,0.6000,0.5000,0.3000,seen_noise\n"
          "multi_pred,100,0.7000,0.4000,0.3600,clean;unseen_noise\n");
    CHECK(t.text.find("0.7000*") != std::string::npos);
    // input order does not matter
    const std::vector<MetricsReport> shuffled{reports[2], reports[0], reports[1]};
    CHECK(compare(shuffled, std::string("single")).text == t.text);
  }
  SUBCASE("errors") {
    auto old = crafted("avg", 0.5, 0.5, 0.5);
    old.version = 0;
    CHECK_THROWS_AS(compare({old}, std::nullopt), VersionError);
    CHECK_THROWS_AS(compare({crafted("avg", 1, 1, 1)}, std::string("single")), ConfigError);
    CHECK_THROWS_AS(compare({}, std::nullopt), ConfigError);
  }
}

TEST_CASE("every mode passes the gradient check") {
  for (const auto &r : check_mode_gradients(1)) {
    CAPTURE(to_string(r.mode));
    CHECK(r.result.max_rel_error < 1e-4);
    CHECK(r.result.coordinates > 1000);
  }
}
