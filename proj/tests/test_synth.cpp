// tests/test_synth.cpp

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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ekd/errors.hpp"
#include "ekd/synth.hpp"

using namespace ekd;

namespace {

// Power-ratio oracle, written out independently of the library.
double oracle_snr_db(const std::vector<double> &clean, const std::vector<double> &noisy,
                     double gain) {
  long double ps = 0, pn = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const long double s = gain * clean[i];
    ps += s * s;
    pn += (noisy[i] - s) * (noisy[i] - s);
  }
  return static_cast<double>(10.0L * std::log10(ps / pn));
}

double rel_l2(const std::vector<double> &a, const std::vector<double> &b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num / den);
}

std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("ekd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const NoiseFamily kAdditive[] = {NoiseFamily::gaussian, NoiseFamily::tonal_hum,
                                 NoiseFamily::impulse_burst};

}  // namespace

TEST_CASE("gen_clean is deterministic and round-robin") {
  const auto a = gen_clean(7, 8, 64, 4);
  const auto b = gen_clean(7, 8, 64, 4);
  REQUIRE(a.size() == 8);
  std::map<int, int> per_class;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].samples == b[k].samples);
    CHECK(a[k].label == static_cast<int>(k % 4));
    CHECK(a[k].samples.size() == 64);
    ++per_class[a[k].label];
  }
  for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 2);

  const auto c = gen_clean(8, 8, 64, 4);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) differs |= a[k].samples != c[k].samples;
  CHECK(differs);

  // sample k depends only on (seed, k)
  const auto longer = gen_clean(7, 20, 64, 4);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(longer[k].samples == a[k].samples);
}

TEST_CASE("gen_clean rejects invalid counts") {
  CHECK_THROWS_AS(gen_clean(1, 0, 64, 4), ConfigError);
  CHECK_THROWS_AS(gen_clean(1, 4, 8, 4), ConfigError);
  CHECK_THROWS_AS(gen_clean(1, 4, 64, 1), ConfigError);
}

TEST_CASE("distortion at 60 dB is nearly transparent") {
  const auto clean = gen_clean(3, 10, 128, 4);
  for (auto family : kAdditive) {
    for (const auto &w : clean) {
      const auto out = apply_distortion(w, {family, 60.0, 11});
      CHECK(rel_l2(w.samples, out.samples) <= 1e-3 + 1e-12);
      CHECK(out.label == w.label);
    }
  }
}

TEST_CASE("distortion hits the requested SNR") {
  const auto clean = gen_clean(5, 100, 128, 4);
  for (auto family : kAdditive) {
    for (double snr : {0.0, 10.0, 20.0}) {
      for (std::size_t k = 0; k < clean.size(); ++k) {
        const auto r = distort(clean[k], {family, snr, 1000 + k});
        CHECK(std::fabs(oracle_snr_db(clean[k].samples, r.wave.samples, r.gain) - snr) <= 0.1);
      }
    }
  }
  const auto r = distort(clean[0], {NoiseFamily::gaussian, 10.0, 3});
  CHECK(measure_snr_db(clean[0].samples, r.wave.samples) == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("distortion is deterministic and respects the headroom") {
  const auto clean = gen_clean(9, 20, 128, 4);
  for (auto family : {NoiseFamily::gaussian, NoiseFamily::tonal_hum,
                      NoiseFamily::impulse_burst, NoiseFamily::band_reject}) {
    for (const auto &w : clean) {
      const auto a = apply_distortion(w, {family, -10.0, 42});
      const auto b = apply_distortion(w, {family, -10.0, 42});
      CHECK(a.samples == b.samples);
      for (double v : a.samples) CHECK(std::fabs(v) <= kHeadroom);
    }
  }
  // different seeds give different noise
  const auto a = apply_distortion(clean[0], {NoiseFamily::gaussian, 0.0, 1});
  const auto b = apply_distortion(clean[0], {NoiseFamily::gaussian, 0.0, 2});
  CHECK(a.samples != b.samples);
}

TEST_CASE("band_reject removes energy and ignores snr") {
  const auto clean = gen_clean(13, 10, 128, 4);
  for (const auto &w : clean) {
    const auto a = apply_distortion(w, {NoiseFamily::band_reject, 0.0, 5});
    const auto b = apply_distortion(w, {NoiseFamily::band_reject, 30.0, 5});
    CHECK(a.samples == b.samples);
    CHECK(signal_power(a.samples) <= signal_power(w.samples) + 1e-12);
  }
  // a pure tone at the rejected band vanishes
  std::vector<double> tone(128);
  for (double f = 0.03; f <= 0.2; f += 1.0 / 128) {
    for (std::size_t i = 0; i < tone.size(); ++i) {
      tone[i] = std::sin(2 * 3.141592653589793 * std::round(f * 128) / 128 * i);
    }
    WaveSample w;
    w.samples = tone;
    const auto out = apply_distortion(w, {NoiseFamily::band_reject, 0.0, 5});
    if (signal_power(out.samples) < 1e-20) return;  // found the band
  }
  FAIL("no tone in [0.03, 0.2] was removed");
}

TEST_CASE("distortion errors") {
  WaveSample silent;
  silent.samples.assign(64, 0.0);
  CHECK_THROWS_AS(apply_distortion(silent, {NoiseFamily::gaussian, 10.0, 1}),
                  DegenerateInputError);
  const auto w = gen_clean(1, 1, 64, 2)[0];
  CHECK_THROWS_AS(apply_distortion(w, {NoiseFamily::gaussian, 61.0, 1}), ConfigError);
  CHECK_THROWS_AS(apply_distortion(w, {NoiseFamily::gaussian, -11.0, 1}), ConfigError);
  CHECK_THROWS_AS(noise_family_from_string("pink"), ConfigError);
  CHECK(noise_family_from_string("tonal_hum") == NoiseFamily::tonal_hum);
}

TEST_CASE("make_split pairs eval sets and keeps train clean") {
  DataConfig cfg;
  cfg.train_count = 16;
  cfg.eval_count = 12;
  const auto split = make_split(cfg);
  REQUIRE(split.eval_clean.size() == 12);
  REQUIRE(split.eval_seen_noise.size() == 12);
  REQUIRE(split.eval_unseen_noise.size() == 12);
  for (const auto &w : split.train) CHECK_FALSE(w.distortion.has_value());
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(split.eval_clean[k].label == split.eval_seen_noise[k].label);
    CHECK(split.eval_clean[k].label == split.eval_unseen_noise[k].label);
    CHECK(split.eval_clean[k].generator_seed == split.eval_seen_noise[k].generator_seed);
    const auto seen = split.eval_seen_noise[k].distortion->family;
    const auto unseen = split.eval_unseen_noise[k].distortion->family;
    CHECK(std::count(cfg.seen_families.begin(), cfg.seen_families.end(), seen) == 1);
    CHECK(std::count(cfg.unseen_families.begin(), cfg.unseen_families.end(), unseen) == 1);
  }
  // train and eval draw from different generator seeds
  CHECK(split.train[0].samples != split.eval_clean[0].samples);

  cfg.distort_train = true;
  for (const auto &w : make_split(cfg).train) CHECK(w.distortion.has_value());
}

TEST_CASE("make_split rejects overlapping families") {
  DataConfig cfg;
  cfg.seen_families = {NoiseFamily::gaussian};
  cfg.unseen_families = {NoiseFamily::gaussian};
  CHECK_THROWS_AS(make_split(cfg), ConfigError);
  cfg.unseen_families = {};
  CHECK_THROWS_AS(make_split(cfg), ConfigError);
}

TEST_CASE("spectral features separate the classes") {
  // nearest class centroid on log band energies
  const auto train = gen_clean(21, 200, 128, 4);
  const auto test = gen_clean(22, 200, 128, 4);
  const std::size_t bins = 64;
  std::vector<std::vector<double>> centroid(4, std::vector<double>(bins, 0.0));
  for (const auto &w : train) {
    const auto f = spectral_features(w.samples, bins);
    for (std::size_t b = 0; b < bins; ++b) centroid[w.label][b] += f[b] / 50.0;
  }
  int correct = 0;
  for (const auto &w : test) {
    const auto f = spectral_features(w.samples, bins);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < 4; ++c) {
      double d = 0;
      for (std::size_t b = 0; b < bins; ++b) d += (f[b] - centroid[c][b]) * (f[b] - centroid[c][b]);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == w.label;
  }
  CHECK(correct / 200.0 > 0.95);
}

TEST_CASE("corpus export and import round trip") {
  DataConfig cfg;
  cfg.train_count = 5;
  cfg.eval_count = 4;
  cfg.length = 40;
  const auto split = make_split(cfg);
  const auto dir = scratch_dir("corpus");
  export_corpus(split, cfg, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto back = import_corpus(dir);
  REQUIRE(back.train.size() == 5);
  REQUIRE(back.eval_unseen_noise.size() == 4);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(back.train[k].samples == split.train[k].samples);
    CHECK(back.train[k].label == split.train[k].label);
    CHECK(back.train[k].generator_seed == split.train[k].generator_seed);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(back.eval_seen_noise[k].samples == split.eval_seen_noise[k].samples);
    CHECK(back.eval_seen_noise[k].distortion == split.eval_seen_noise[k].distortion);
  }
  CHECK(back.seen_families == split.seen_families);

  // corrupt manifest
  { std::ofstream(dir / "manifest.json") << "{\"version\": 1, \"train\": ["; }
  CHECK_THROWS_AS(import_corpus(dir), ParseError);
  { std::ofstream(dir / "manifest.json") << "{\"version\": 99}"; }
  CHECK_THROWS_AS(import_corpus(dir), VersionError);
  std::filesystem::remove_all(dir);
}
