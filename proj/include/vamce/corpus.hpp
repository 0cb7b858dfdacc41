// vamce/corpus.hpp
//
// Copyright 2026 The vamce authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vamce/common.hpp"
#include "vamce/rng.hpp"
#include "vamce/stft.hpp"
#include "vamce/vae_train.hpp"
#include "vamce/wav.hpp"

namespace vamce {

// Stream-id bases for corpus synthesis; one stream per generated file.
constexpr std::uint64_t kCleanStreamBase = 0xC000;
constexpr std::uint64_t kMixtureStreamBase = 0xD000;

struct CorpusConfig {
  std::string out_dir;
  std::size_t n_clean = 14;
  std::size_t n_mixtures = 20;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double clean_seconds = 1.2;
  double mix_seconds = 1.2;

  void validate() const {
    if (out_dir.empty()) throw DomainError("corpus: output dir required");
    if (n_clean == 0) throw DomainError("corpus: need at least one clean file");
    if (n_clean > 0x1000 || n_mixtures > 0x1000) {
      throw DomainError("corpus: file counts above 4096 are not supported");
    }
    if (sample_rate <= 0) throw DomainError("corpus: sample rate must be > 0");
    if (!(clean_seconds > 0.0) || !(mix_seconds > 0.0)) {
      throw DomainError("corpus: durations must be > 0");
    }
  }
};

namespace detail {

constexpr std::size_t kHarmonics = 10;

// Harmonic tone with drifting pitch, per-syllable brightness and raised-cosine
// amplitude envelopes, separated by short silences. Phase accumulates across
// syllables so there are no boundary clicks.
inline std::vector<double> synth_speech(std::size_t n_samples, int rate,
                                        RngStream& stream) {
  std::vector<double> out(n_samples, 0.0);
  std::vector<double> phase(kHarmonics, 0.0);
  double f0_prev = 100.0 + 200.0 * stream.uniform();
  std::size_t t = 0;
  while (t < n_samples) {
    const double syl_seconds = 0.12 + 0.13 * stream.uniform();
    const double f0_next = 100.0 + 200.0 * stream.uniform();
    const double rolloff = 0.5 + 1.0 * stream.uniform();
    const double amp = 0.4 + 0.6 * stream.uniform();
    const std::size_t syl_len =
        static_cast<std::size_t>(syl_seconds * rate) + 1;
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < kHarmonics; ++k) {
      weight_sum += std::pow(static_cast<double>(k + 1), -rolloff);
    }
    for (std::size_t i = 0; i < syl_len && t < n_samples; ++i, ++t) {
      const double frac = static_cast<double>(i) / static_cast<double>(syl_len);
      const double f0 = f0_prev + (f0_next - f0_prev) * frac;
      const double env = std::sin(std::numbers::pi * frac);
      double sample = 0.0;
      for (std::size_t k = 0; k < kHarmonics; ++k) {
        phase[k] += 2.0 * std::numbers::pi * (k + 1) * f0 / rate;
        sample += std::pow(static_cast<double>(k + 1), -rolloff) *
                  std::sin(phase[k]);
      }
      out[t] = amp * env * env * sample / weight_sum;
    }
    f0_prev = f0_next;
    if (stream.uniform() < 0.3) {
      t += static_cast<std::size_t>((0.03 + 0.07 * stream.uniform()) * rate);
    }
  }
  return out;
}

// Colored noise: one-pole low-passed white noise with a per-file random tilt
// plus a small broadband component, RMS-normalized.
inline std::vector<double> synth_noise(std::size_t n_samples,
                                       RngStream& stream) {
  const double pole = 0.8 + 0.18 * stream.uniform();
  const double broadband = 0.05 + 0.15 * stream.uniform();
  std::vector<double> out(n_samples);
  double state = 0.0;
  double energy = 0.0;
  for (std::size_t t = 0; t < n_samples; ++t) {
    state = pole * state + (1.0 - pole) * stream.normal();
    out[t] = state + broadband * stream.normal();
    energy += out[t] * out[t];
  }
  const double rms = std::sqrt(energy / static_cast<double>(n_samples));
  if (rms > 0.0) {
    for (double& v : out) v /= rms;
  }
  return out;
}

inline double rms(const std::vector<double>& x) {
  double energy = 0.0;
  for (double v : x) energy += v * v;
  return std::sqrt(energy / static_cast<double>(x.size()));
}

inline void scale_to_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
}

inline std::string index_name(const char* prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << "_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

}  // namespace detail

struct ManifestEntry {
  std::string kind;          // "clean" or "mixture"
  std::string id;
  std::string clean_path;    // relative to the corpus dir
  std::string noise_path;    // empty for clean entries
  std::string mixture_path;  // empty for clean entries
  double snr_db = 0.0;
};

/// Generates the synthetic corpus: clean/ holds training speech, mix/ holds
/// aligned (speech, noise, mixture) triplets at the requested SNR, and
/// manifest.csv indexes everything. Byte-identical for identical configs.
inline std::vector<ManifestEntry> make_corpus(const CorpusConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(config.out_dir) / "clean", ec);
  fs::create_directories(fs::path(config.out_dir) / "mix", ec);
  if (ec) {
    throw IoError("cannot create corpus directories under " + config.out_dir);
  }

  std::vector<ManifestEntry> entries;
  const std::size_t clean_len =
      static_cast<std::size_t>(config.clean_seconds * config.sample_rate);
  const std::size_t mix_len =
      static_cast<std::size_t>(config.mix_seconds * config.sample_rate);

  for (std::size_t i = 0; i < config.n_clean; ++i) {
    RngStream stream(config.seed, kCleanStreamBase + i);
    std::vector<double> speech =
        detail::synth_speech(clean_len, config.sample_rate, stream);
    detail::scale_to_peak(speech, 0.9);
    const std::string id = detail::index_name("clean", i);
    const std::string rel = "clean/" + id + ".wav";
    write_wav((fs::path(config.out_dir) / rel).string(),
              Waveform{std::move(speech), config.sample_rate});
    entries.push_back({"clean", id, rel, "", "", 0.0});
  }

  for (std::size_t j = 0; j < config.n_mixtures; ++j) {
    RngStream stream(config.seed, kMixtureStreamBase + j);
    std::vector<double> speech =
        detail::synth_speech(mix_len, config.sample_rate, stream);
    std::vector<double> noise = detail::synth_noise(mix_len, stream);
    const double speech_rms = detail::rms(speech);
    if (!(speech_rms > 0.0)) throw NumericError("corpus: silent speech draw");
    const double noise_scale =
        speech_rms / detail::rms(noise) * std::pow(10.0, -config.snr_db / 20.0);
    for (double& v : noise) v *= noise_scale;

    std::vector<double> mixture(mix_len);
    double peak = 0.0;
    for (std::size_t t = 0; t < mix_len; ++t) {
      mixture[t] = speech[t] + noise[t];
      peak = std::max({peak, std::abs(mixture[t]), std::abs(speech[t]),
                       std::abs(noise[t])});
    }
    // One joint scale keeps the SNR exact and the WAVs clip-free.
    const double scale = peak > 0.0 ? 0.9 / peak : 1.0;
    for (std::size_t t = 0; t < mix_len; ++t) {
      speech[t] *= scale;
      noise[t] *= scale;
      mixture[t] *= scale;
    }

    const std::string id = detail::index_name("mix", j);
    const std::string speech_rel = "mix/speech_" + id.substr(4) + ".wav";
    const std::string noise_rel = "mix/noise_" + id.substr(4) + ".wav";
    const std::string mixture_rel = "mix/mixture_" + id.substr(4) + ".wav";
    write_wav((fs::path(config.out_dir) / speech_rel).string(),
              Waveform{std::move(speech), config.sample_rate});
    write_wav((fs::path(config.out_dir) / noise_rel).string(),
              Waveform{std::move(noise), config.sample_rate});
    write_wav((fs::path(config.out_dir) / mixture_rel).string(),
              Waveform{std::move(mixture), config.sample_rate});
    entries.push_back(
        {"mixture", id, speech_rel, noise_rel, mixture_rel, config.snr_db});
  }

  std::ofstream manifest(fs::path(config.out_dir) / "manifest.csv",
                         std::ios::trunc);
  if (!manifest) {
    throw IoError("cannot write manifest under " + config.out_dir);
  }
  manifest << "kind,id,clean_path,noise_path,mixture_path,snr_db\n";
  manifest << std::fixed << std::setprecision(6);
  for (const ManifestEntry& e : entries) {
    manifest << e.kind << "," << e.id << "," << e.clean_path << ","
             << e.noise_path << "," << e.mixture_path << ",";
    if (e.kind == "mixture") manifest << e.snr_db;
    manifest << "\n";
  }
  if (!manifest) throw IoError("short write to manifest");
  return entries;
}

/// Parses manifest.csv from a corpus directory.
inline std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  const std::string path =
      (std::filesystem::path(dir) / "manifest.csv").string();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty manifest: " + path);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 6) {
      throw IoError("malformed manifest row: " + line);
    }
    ManifestEntry e;
    e.kind = fields[0];
    e.id = fields[1];
    e.clean_path = fields[2];
    e.noise_path = fields[3];
    e.mixture_path = fields[4];
    e.snr_db = fields[5].empty() ? 0.0 : std::stod(fields[5]);
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Loads every clean entry, takes its STFT, and stacks the power spectra of
/// all frames into one training set (rows = frames).
inline CleanFrameSet load_clean_frames(const std::string& dir,
                                       std::size_t window_length,
                                       std::size_t hop) {
  const std::vector<ManifestEntry> entries = read_manifest(dir);
  std::vector<Matrix> blocks;
  std::size_t total = 0, f_bins = 0;
  for (const ManifestEntry& e : entries) {
    if (e.kind != "clean") continue;
    const Waveform w =
        read_wav((std::filesystem::path(dir) / e.clean_path).string());
    const ComplexSpectrogram s = stft(w, window_length, hop);
    blocks.push_back(power_frames(s));
    f_bins = blocks.back().cols();
    total += blocks.back().rows();
  }
  if (total == 0) throw IoError("no clean entries in manifest under " + dir);
  CleanFrameSet set;
  set.frames = Matrix(total, f_bins);
  std::size_t row = 0;
  for (const Matrix& b : blocks) {
    for (std::size_t i = 0; i < b.rows(); ++i, ++row) {
      std::copy(b.row(i), b.row(i) + f_bins, set.frames.row(row));
    }
  }
  return set;
}

}  // namespace vamce
