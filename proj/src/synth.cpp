// src/synth.cpp

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

#include "ekd/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <set>

#include "ekd/errors.hpp"
#include "ekd/random.hpp"
#include "json.hpp"

namespace ekd {

using json = nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(Rng &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Naive DFT; inputs are a few hundred samples at most.
std::vector<std::complex<double>> dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = -kTwoPi * static_cast<double>(k * j % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<double> inverse_dft_real(const std::vector<std::complex<double>> &X) {
  const std::size_t n = X.size();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = kTwoPi * static_cast<double>(k * j % n) / static_cast<double>(n);
      acc += X[k].real() * std::cos(a) - X[k].imag() * std::sin(a);
    }
    out[j] = acc / static_cast<double>(n);
  }
  return out;
}

std::vector<double> make_noise(NoiseFamily family, std::size_t n, Rng &rng) {
  std::vector<double> noise(n, 0.0);
  switch (family) {
    case NoiseFamily::gaussian: {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (auto &v : noise) v = dist(rng);
      break;
    }
    case NoiseFamily::tonal_hum: {
      // Low fundamental with two decaying harmonics.
      const double f = uniform(rng, 0.005, 0.04);
      const double p1 = uniform(rng, 0.0, kTwoPi), p2 = uniform(rng, 0.0, kTwoPi),
                   p3 = uniform(rng, 0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        noise[i] = std::sin(kTwoPi * f * t + p1) + 0.5 * std::sin(kTwoPi * 2 * f * t + p2) +
                   0.25 * std::sin(kTwoPi * 3 * f * t + p3);
      }
      break;
    }
    case NoiseFamily::impulse_burst: {
      const std::size_t bursts = 1 + n / 64;
      std::uniform_int_distribution<std::size_t> where(0, n - 1);
      for (std::size_t b = 0; b < bursts; ++b) {
        const std::size_t start = where(rng);
        const std::size_t len = 3 + rng() % 4;
        const double sign = (rng() & 1) ? 1.0 : -1.0;
        for (std::size_t k = 0; k < len && start + k < n; ++k) {
          noise[start + k] += sign * std::pow(0.6, static_cast<double>(k)) * ((k % 2) ? -1.0 : 1.0);
        }
      }
      break;
    }
    case NoiseFamily::band_reject:
      break;
  }
  return noise;
}

}  // namespace

const char *to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::tonal_hum: return "tonal_hum";
    case NoiseFamily::band_reject: return "band_reject";
    case NoiseFamily::impulse_burst: return "impulse_burst";
  }
  return "?";
}

NoiseFamily noise_family_from_string(const std::string &name) {
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "tonal_hum") return NoiseFamily::tonal_hum;
  if (name == "band_reject") return NoiseFamily::band_reject;
  if (name == "impulse_burst") return NoiseFamily::impulse_burst;
  throw ConfigError("unknown distortion family '" + name +
                    "' (valid: gaussian, tonal_hum, band_reject, impulse_burst)");
}

bool is_additive(NoiseFamily f) { return f != NoiseFamily::band_reject; }

void DistortionSpec::validate() const {
  if (!(snr_db >= -10.0 && snr_db <= 60.0)) {
    throw ConfigError("snr_db " + std::to_string(snr_db) + " outside [-10, 60]");
  }
}

std::vector<WaveSample> gen_clean(std::uint64_t seed, std::size_t count, std::size_t length,
                                  std::size_t n_classes, const GenOptions &options) {
  if (count < 1) throw ConfigError("gen_clean: count must be at least 1");
  if (length < options.min_length) {
    throw ConfigError("gen_clean: length " + std::to_string(length) +
                      " shorter than the analysis window " + std::to_string(options.min_length));
  }
  if (n_classes < 2) throw ConfigError("gen_clean: need at least 2 classes");
  if (!(options.f_min > 0.0 && options.f_max > options.f_min && 3.0 * options.f_max < 0.5)) {
    throw ConfigError("gen_clean: base frequency band must satisfy 0 < f_min < f_max < 1/6");
  }
  const double width = (options.f_max - options.f_min) / static_cast<double>(n_classes);
  std::vector<WaveSample> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    WaveSample &w = out[k];
    w.label = static_cast<int>(k % n_classes);
    w.generator_seed = derive_seed(seed, "clean", k);
    Rng rng(w.generator_seed);
    const double lo = options.f_min + static_cast<double>(w.label) * width;
    const double f0 = uniform(rng, lo, lo + width * (1.0 + options.band_overlap));
    const double amps[3] = {uniform(rng, 0.5, 1.0), uniform(rng, 0.2, 0.5), uniform(rng, 0.1, 0.3)};
    double phases[3];
    for (auto &p : phases) p = uniform(rng, 0.0, kTwoPi);
    std::normal_distribution<double> noise(0.0, options.noise_amplitude);
    w.samples.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i);
      double v = 0.0;
      for (int h = 0; h < 3; ++h) v += amps[h] * std::sin(kTwoPi * f0 * (h + 1) * t + phases[h]);
      w.samples[i] = v + noise(rng);
    }
  }
  return out;
}

double signal_power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

double measure_snr_db(std::span<const double> reference, std::span<const double> observed) {
  if (reference.size() != observed.size()) {
    throw DimensionError("measure_snr_db: lengths differ");
  }
  std::vector<double> residual(reference.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = observed[i] - reference[i];
  return 10.0 * std::log10(signal_power(reference) / signal_power(residual));
}

DistortionResult distort(const WaveSample &w, const DistortionSpec &spec) {
  spec.validate();
  DistortionResult result;
  result.wave = w;
  result.wave.distortion = spec;
  Rng rng(derive_seed(spec.seed, "distortion", static_cast<std::uint64_t>(spec.family)));
  auto &y = result.wave.samples;

  if (spec.family == NoiseFamily::band_reject) {
    const double centre = uniform(rng, 0.03, 0.2);
    const double half = 0.02;
    auto X = dft(w.samples);
    const std::size_t n = X.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double f = static_cast<double>(std::min(k, n - k)) / static_cast<double>(n);
      if (std::fabs(f - centre) <= half) X[k] = 0.0;
    }
    y = inverse_dft_real(X);
  } else {
    const double ps = signal_power(w.samples);
    if (!(ps > 0.0)) {
      throw DegenerateInputError("cannot mix additive noise into a zero-power signal");
    }
    const auto noise = make_noise(spec.family, w.samples.size(), rng);
    const double pn = signal_power(noise);
    if (!(pn > 0.0)) throw DegenerateInputError("distortion produced zero-power noise");
    const double g = std::sqrt(ps / (pn * std::pow(10.0, spec.snr_db / 10.0)));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = w.samples[i] + g * noise[i];
  }

  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::fabs(v));
  if (peak > kHeadroom) {
    result.gain = kHeadroom / peak;
    for (auto &v : y) v *= result.gain;
  }
  return result;
}

WaveSample apply_distortion(const WaveSample &w, const DistortionSpec &spec) {
  return distort(w, spec).wave;
}

std::vector<double> spectral_features(std::span<const double> x, std::size_t n_bins) {
  if (n_bins == 0) throw ConfigError("spectral_features needs at least one bin");
  const auto X = dft(x);
  const std::size_t n = X.size();
  std::vector<double> bins(n_bins, 0.0);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n);
    const std::size_t b = std::min(n_bins - 1, static_cast<std::size_t>(f / 0.5 * n_bins));
    bins[b] += std::norm(X[k]) / static_cast<double>(n);
  }
  for (auto &v : bins) v = std::log1p(v);
  return bins;
}

// ---- splits ------------------------------------------------------------------------

void DataConfig::validate() const {
  if (train_count < 1 || eval_count < 1) {
    throw ConfigError("data: train_count and eval_count must be at least 1");
  }
  if (seen_families.empty() || unseen_families.empty()) {
    throw ConfigError("data: seen and unseen family lists must be non-empty");
  }
  for (auto f : seen_families) {
    if (std::find(unseen_families.begin(), unseen_families.end(), f) != unseen_families.end()) {
      throw ConfigError(std::string("data: family '") + to_string(f) +
                        "' is listed as both seen and unseen");
    }
  }
  DistortionSpec{NoiseFamily::gaussian, eval_snr_db, 0}.validate();
}

namespace {

std::vector<WaveSample> distort_all(const std::vector<WaveSample> &clean,
                                    const std::vector<NoiseFamily> &families, double snr_db,
                                    std::uint64_t seed, std::string_view tag) {
  std::vector<WaveSample> out;
  out.reserve(clean.size());
  for (std::size_t k = 0; k < clean.size(); ++k) {
    const std::uint64_t s = derive_seed(seed, tag, k);
    DistortionSpec spec{families[mix64(s) % families.size()], snr_db, s};
    out.push_back(apply_distortion(clean[k], spec));
  }
  return out;
}

}  // namespace

DatasetSplit make_split(const DataConfig &config) {
  config.validate();
  DatasetSplit split;
  split.seen_families = config.seen_families;
  split.unseen_families = config.unseen_families;
  split.train = gen_clean(derive_seed(config.seed, "train"), config.train_count, config.length,
                          config.n_classes, config.gen);
  if (config.distort_train) {
    split.train = distort_all(split.train, config.seen_families, config.eval_snr_db,
                              config.seed, "train-noise");
  }
  split.eval_clean = gen_clean(derive_seed(config.seed, "eval"), config.eval_count,
                               config.length, config.n_classes, config.gen);
  split.eval_seen_noise = distort_all(split.eval_clean, config.seen_families,
                                      config.eval_snr_db, config.seed, "seen");
  split.eval_unseen_noise = distort_all(split.eval_clean, config.unseen_families,
                                        config.eval_snr_db, config.seed, "unseen");
  return split;
}

// ---- corpus files ------------------------------------------------------------------

namespace {

void write_f64(const std::filesystem::path &path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char *>(bytes), 8);
  }
}

std::vector<double> read_f64(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % 8 != 0) {
    throw ParseError(path.string() + ": size is not a multiple of 8", raw.size() - raw.size() % 8);
  }
  std::vector<double> out(raw.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json sample_entry(const WaveSample &w, const std::string &file) {
  json e = {{"file", file},
            {"label", w.label},
            {"sample_rate", w.sample_rate},
            {"generator_seed", w.generator_seed},
            {"length", w.samples.size()}};
  if (w.distortion) {
    e["distortion"] = {{"family", to_string(w.distortion->family)},
                       {"snr_db", w.distortion->snr_db},
                       {"seed", w.distortion->seed}};
  } else {
    e["distortion"] = nullptr;
  }
  return e;
}

}  // namespace

void export_corpus(const DatasetSplit &split, const DataConfig &config,
                   const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["format"] = "float64-le";
  manifest["seed"] = config.seed;
  manifest["n_classes"] = config.n_classes;
  manifest["length"] = config.length;
  manifest["eval_snr_db"] = config.eval_snr_db;
  for (auto f : split.seen_families) manifest["seen_families"].push_back(to_string(f));
  for (auto f : split.unseen_families) manifest["unseen_families"].push_back(to_string(f));
  const std::pair<const char *, const std::vector<WaveSample> *> sets[] = {
      {"train", &split.train},
      {"eval_clean", &split.eval_clean},
      {"eval_seen_noise", &split.eval_seen_noise},
      {"eval_unseen_noise", &split.eval_unseen_noise}};
  for (const auto &[name, samples] : sets) {
    json list = json::array();
    for (std::size_t k = 0; k < samples->size(); ++k) {
      char file[64];
      std::snprintf(file, sizeof file, "%s_%05zu.f64", name, k);
      write_f64(dir / file, (*samples)[k].samples);
      list.push_back(sample_entry((*samples)[k], file));
    }
    manifest["splits"][name] = std::move(list);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

DatasetSplit import_corpus(const std::filesystem::path &dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("manifest.json: ") + e.what(), e.byte);
  }
  if (manifest.value("version", 0) != 1) {
    throw VersionError("unsupported corpus manifest version");
  }
  DatasetSplit split;
  try {
  for (const auto &f : manifest.at("seen_families"))
    split.seen_families.push_back(noise_family_from_string(f.get<std::string>()));
  for (const auto &f : manifest.at("unseen_families"))
    split.unseen_families.push_back(noise_family_from_string(f.get<std::string>()));
  const std::pair<const char *, std::vector<WaveSample> *> sets[] = {
      {"train", &split.train},
      {"eval_clean", &split.eval_clean},
      {"eval_seen_noise", &split.eval_seen_noise},
      {"eval_unseen_noise", &split.eval_unseen_noise}};
  for (const auto &[name, samples] : sets) {
    for (const auto &e : manifest.at("splits").at(name)) {
      WaveSample w;
      w.samples = read_f64(dir / e.at("file").get<std::string>());
      w.label = e.at("label").get<int>();
      w.sample_rate = e.at("sample_rate").get<int>();
      w.generator_seed = e.at("generator_seed").get<std::uint64_t>();
      if (!e.at("distortion").is_null()) {
        const auto &d = e.at("distortion");
        w.distortion = DistortionSpec{noise_family_from_string(d.at("family").get<std::string>()),
                                      d.at("snr_db").get<double>(),
                                      d.at("seed").get<std::uint64_t>()};
      }
      if (w.samples.size() != e.at("length").get<std::size_t>()) {
        throw ParseError(e.at("file").get<std::string>() + ": length disagrees with manifest", 0);
      }
      samples->push_back(std::move(w));
    }
  }
  } catch (const json::exception &e) {
    throw ParseError(std::string("manifest.json: ") + e.what(), 0);
  }
  return split;
}

}  // namespace ekd
