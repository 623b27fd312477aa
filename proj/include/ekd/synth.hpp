// ekd/synth.hpp

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

#ifndef EKD_SYNTH_HPP_
#define EKD_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ekd {

/// Peak magnitude every distorted waveform is held under.
inline constexpr double kHeadroom = 4.0;

enum class NoiseFamily { gaussian, tonal_hum, band_reject, impulse_burst };

const char *to_string(NoiseFamily f);
NoiseFamily noise_family_from_string(const std::string &name);
bool is_additive(NoiseFamily f);

struct DistortionSpec {
  NoiseFamily family = NoiseFamily::gaussian;
  double snr_db = 10.0;  // ignored by band_reject
  std::uint64_t seed = 0;

  void validate() const;  // snr_db in [-10, 60]
  bool operator==(const DistortionSpec &) const = default;
};

struct WaveSample {
  std::vector<double> samples;
  int sample_rate = 16000;
  int label = 0;
  std::uint64_t generator_seed = 0;
  std::optional<DistortionSpec> distortion;
};

struct GenOptions {
  double noise_amplitude = 0.05;
  std::size_t min_length = 16;
  /// Class c draws its base frequency (cycles/sample) from
  /// [f_min + c * w, f_min + (c + 1) * w + overlap * w], w = (f_max - f_min) / n.
  double f_min = 0.02;
  double f_max = 0.15;
  double band_overlap = 0.0;
};

/// Class-conditioned sums of three harmonics plus low-level white noise.
/// Sample k has label k mod n_classes and depends only on (seed, k).
std::vector<WaveSample> gen_clean(std::uint64_t seed, std::size_t count, std::size_t length,
                                  std::size_t n_classes, const GenOptions &options = {});

struct DistortionResult {
  WaveSample wave;
  /// Common factor applied to signal and noise to respect kHeadroom; 1 if
  /// no rescaling was needed.
  double gain = 1.0;
};

/// Additive families are mixed at exactly spec.snr_db (measured on the
/// realized noise). band_reject removes a seeded frequency band instead.
DistortionResult distort(const WaveSample &w, const DistortionSpec &spec);
WaveSample apply_distortion(const WaveSample &w, const DistortionSpec &spec);

/// 10 log10(P(reference) / P(observed - reference)).
double measure_snr_db(std::span<const double> reference, std::span<const double> observed);
double signal_power(std::span<const double> x);

/// Log band energies of the full-length power spectrum, n_bins equal bands
/// over [0, 0.5] cycles/sample. Hand-crafted features for sanity probes.
std::vector<double> spectral_features(std::span<const double> x, std::size_t n_bins);

struct DataConfig {
  std::uint64_t seed = 1;
  std::size_t train_count = 256;
  std::size_t eval_count = 128;
  std::size_t length = 128;
  std::size_t n_classes = 4;
  GenOptions gen;
  std::vector<NoiseFamily> seen_families{NoiseFamily::gaussian, NoiseFamily::tonal_hum};
  std::vector<NoiseFamily> unseen_families{NoiseFamily::impulse_burst,
                                           NoiseFamily::band_reject};
  double eval_snr_db = 5.0;
  /// Training audio is clean unless this is set; then each training sample
  /// gets a seen-family distortion.
  bool distort_train = false;

  void validate() const;
};

struct DatasetSplit {
  std::vector<WaveSample> train;
  std::vector<WaveSample> eval_clean;
  std::vector<WaveSample> eval_seen_noise;
  std::vector<WaveSample> eval_unseen_noise;
  std::vector<NoiseFamily> seen_families;
  std::vector<NoiseFamily> unseen_families;
};

/// Paired evaluation: the three eval sets hold the same clean utterances.
DatasetSplit make_split(const DataConfig &config);

/// Writes one raw little-endian float64 file per sample plus manifest.json.
void export_corpus(const DatasetSplit &split, const DataConfig &config,
                   const std::filesystem::path &dir);
DatasetSplit import_corpus(const std::filesystem::path &dir);

}  // namespace ekd

#endif  // EKD_SYNTH_HPP_
