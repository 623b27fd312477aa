// tools/ekd_cli.cpp

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

// Command-line driver: run experiments, compare reports, check gradients and
// export synthetic corpora.
//
// Exit status: 0 success, 2 configuration or input error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ekd/errors.hpp"
#include "ekd/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int cmd_run(const std::string &config_path) {
  const auto config = ekd::load_experiment_config(config_path);
  const auto summary = ekd::run_experiment(config, &std::cerr);
  for (const auto &p : summary.reports) std::cout << p.string() << "\n";
  if (summary.ok()) return 0;
  bool numeric = false;
  for (const auto &f : summary.failures) {
    std::cerr << "mode " << f.mode << " failed: " << f.message << "\n";
    numeric |= f.numeric;
  }
  return numeric ? kExitNumeric : kExitConfig;
}

int cmd_compare(const std::vector<std::string> &paths, const std::string &baseline,
                const std::string &csv_path) {
  std::vector<ekd::MetricsReport> reports;
  for (const auto &p : paths) reports.push_back(ekd::load_report(p));
  std::optional<std::string> base;
  if (!baseline.empty()) base = baseline;
  const auto table = ekd::compare(reports, base);
  std::cout << table.text;
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw ekd::ConfigError("cannot write " + csv_path);
    out << table.csv;
  }
  return 0;
}

int cmd_grad_check(std::uint64_t seed, double eps, double tolerance) {
  bool ok = true;
  for (const auto &r : ekd::check_mode_gradients(seed, eps)) {
    const bool pass = r.result.max_rel_error < tolerance;
    ok &= pass;
    std::printf("%-11s max rel error %.3e over %zu coordinates  %s\n", ekd::to_string(r.mode),
                r.result.max_rel_error, r.result.coordinates, pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitNumeric;
}

int cmd_gen_data(const std::string &config_path, std::string out_dir) {
  const auto config = ekd::load_experiment_config(config_path);
  if (out_dir.empty()) out_dir = (ekd::resolve_output_dir(config) / "corpus").string();
  const auto split = ekd::make_split(config.data);
  ekd::export_corpus(split, config.data, out_dir);
  std::cout << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Ensemble knowledge distillation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  auto *run = app.add_subcommand("run", "Distill, probe and evaluate every configured mode");
  run->add_option("config", config_path, "Experiment config (.json or .toml)")->required();

  std::vector<std::string> report_paths;
  std::string baseline, csv_path;
  auto *cmp = app.add_subcommand("compare", "Tabulate metric reports");
  cmp->add_option("reports", report_paths, "report_<mode>.json files")->required();
  cmp->add_option("--baseline", baseline, "Mode whose row the others are compared against");
  cmp->add_option("--csv", csv_path, "Also write the table as CSV");

  std::uint64_t seed = 1;
  double eps = 1e-5, tolerance = 1e-4;
  auto *grad = app.add_subcommand("grad-check", "Finite-difference check of every mode's loss");
  grad->add_option("--seed", seed);
  grad->add_option("--eps", eps);
  grad->add_option("--tolerance", tolerance);

  std::string data_config, data_out;
  auto *gen = app.add_subcommand("gen-data", "Export the configured synthetic corpus");
  gen->add_option("config", data_config, "Experiment config (.json or .toml)")->required();
  gen->add_option("--out", data_out, "Target directory (default <output_dir>/corpus)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*cmp) return cmd_compare(report_paths, baseline, csv_path);
    if (*grad) return cmd_grad_check(seed, eps, tolerance);
    if (*gen) return cmd_gen_data(data_config, data_out);
  } catch (const ekd::NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ekd::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
