// vamce/isnmf.hpp
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
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vamce/common.hpp"
#include "vamce/matrix.hpp"
#include "vamce/mcem.hpp"
#include "vamce/rng.hpp"
#include "vamce/stft.hpp"
#include "vamce/vae.hpp"

namespace vamce {

constexpr std::uint64_t kDictInitStreamId = 0xB001;
constexpr std::uint64_t kBaselineInitStreamId = 0xB002;

/// Speech spectral dictionary learned offline on clean power spectra.
struct SpeechDictionary {
  Matrix w_s;  // F x K_s, entries >= kNmfFloor, columns unit-sum up to floors

  std::size_t freq_bins() const { return w_s.rows(); }
  std::size_t rank() const { return w_s.cols(); }
};

struct BaselineConfig {
  std::size_t speech_rank = 64;  // K_s
  std::size_t noise_rank = 10;   // K_b
  std::size_t max_iters = 500;
  double stop_tol = 1e-4;        // relative cost-improvement threshold
  std::uint64_t seed = 0;

  void validate() const {
    if (speech_rank == 0 || noise_rank == 0) {
      throw DomainError("isnmf: ranks must be >= 1");
    }
    if (max_iters == 0) throw DomainError("isnmf: max_iters must be > 0");
    if (!(stop_tol > 0.0)) throw DomainError("isnmf: tolerance must be > 0");
  }
};

/// Total Itakura-Saito cost sum_fn d_IS(P_fn; V_fn), both sides floored.
inline double is_nmf_cost(const Matrix& power, const Matrix& model_var) {
  if (!power.same_shape(model_var)) throw ShapeError("is_nmf_cost: shapes");
  double acc = 0.0;
  for (std::size_t i = 0; i < power.size(); ++i) {
    acc += is_divergence(power.data()[i], model_var.data()[i]);
  }
  if (!std::isfinite(acc)) throw NumericError("is_nmf_cost: non-finite cost");
  return acc;
}

namespace detail {

// Classical IS-NMF multiplicative updates for one factor block of the model
// V = sum_j W_j H_j; see docs/is-nmf-updates.md for the derivation. V is the
// full model variance at the caller's freshest parameters.
inline void mu_update_h(const Matrix& w, Matrix& h, const Matrix& power,
                        const Matrix& v) {
  Matrix ratio2(power.rows(), power.cols());
  Matrix inv(power.rows(), power.cols());
  for (std::size_t i = 0; i < power.size(); ++i) {
    const double vf = floored(v.data()[i]);
    ratio2.data()[i] = power.data()[i] / (vf * vf);
    inv.data()[i] = 1.0 / vf;
  }
  const Matrix num = matmul_tn(w, ratio2);
  const Matrix den = matmul_tn(w, inv);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double d = den.data()[i];
    if (!(d > 0.0)) throw NumericError("isnmf: nonpositive denominator");
    h.data()[i] = floored(h.data()[i] * num.data()[i] / d);
  }
}

inline void mu_update_w(Matrix& w, const Matrix& h, const Matrix& power,
                        const Matrix& v) {
  Matrix ratio2(power.rows(), power.cols());
  Matrix inv(power.rows(), power.cols());
  for (std::size_t i = 0; i < power.size(); ++i) {
    const double vf = floored(v.data()[i]);
    ratio2.data()[i] = power.data()[i] / (vf * vf);
    inv.data()[i] = 1.0 / vf;
  }
  const Matrix num = matmul_nt(ratio2, h);
  const Matrix den = matmul_nt(inv, h);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = den.data()[i];
    if (!(d > 0.0)) throw NumericError("isnmf: nonpositive denominator");
    w.data()[i] = floored(w.data()[i] * num.data()[i] / d);
  }
}

// Rescales every column of W to unit sum and moves the scale into the
// matching row of H; leaves the product W H unchanged up to flooring.
inline void normalize_columns(Matrix& w, Matrix& h) {
  for (std::size_t k = 0; k < w.cols(); ++k) {
    double col_sum = 0.0;
    for (std::size_t f = 0; f < w.rows(); ++f) col_sum += w(f, k);
    if (!(col_sum > 0.0)) throw NumericError("isnmf: zero dictionary column");
    for (std::size_t f = 0; f < w.rows(); ++f) {
      w(f, k) = floored(w(f, k) / col_sum);
    }
    for (std::size_t n = 0; n < h.cols(); ++n) {
      h(k, n) = floored(h(k, n) * col_sum);
    }
  }
}

// Uniform(0,1] init rescaled so mean(W H) hits target_mean.
inline void scaled_uniform_init(Matrix& w, Matrix& h, double target_mean,
                                RngStream& stream) {
  for (double& v : w.data()) v = stream.uniform();
  for (double& v : h.data()) v = stream.uniform();
  const double scale =
      std::sqrt(std::max(target_mean, kNmfFloor) / mean(matmul(w, h)));
  for (double& v : w.data()) v = floored(v * scale);
  for (double& v : h.data()) v = floored(v * scale);
}

}  // namespace detail

struct DictTrainResult {
  SpeechDictionary dictionary;
  Matrix h_train;                  // final training activations
  std::vector<double> cost_trace;  // IS cost after each full iteration
  std::size_t iterations = 0;
  bool converged = false;
};

/// Learns W_s by alternating multiplicative updates of (H, W_s) on clean
/// power spectra, renormalizing dictionary columns to unit sum after every
/// iteration. Stops on relative cost improvement < config.stop_tol.
inline DictTrainResult train_dictionary(const Matrix& power,
                                        const BaselineConfig& config) {
  config.validate();
  if (power.empty()) throw ShapeError("train_dictionary: empty input");
  for (double v : power.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("train_dictionary: power spectra must be >= 0");
    }
  }
  const std::size_t f_bins = power.rows();
  const std::size_t n_frames = power.cols();

  DictTrainResult res;
  Matrix w(f_bins, config.speech_rank);
  Matrix h(config.speech_rank, n_frames);
  {
    RngStream init(config.seed, kDictInitStreamId);
    detail::scaled_uniform_init(w, h, mean(power), init);
  }

  double prev_cost = 0.0;
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    detail::mu_update_h(w, h, power, matmul(w, h));
    detail::mu_update_w(w, h, power, matmul(w, h));
    detail::normalize_columns(w, h);
    const double cost = is_nmf_cost(power, matmul(w, h));
    res.cost_trace.push_back(cost);
    res.iterations = it + 1;
    if (it > 0 &&
        std::abs(prev_cost - cost) / std::max(std::abs(prev_cost), 1e-300) <
            config.stop_tol) {
      res.converged = true;
      break;
    }
    prev_cost = cost;
  }
  res.dictionary.w_s = std::move(w);
  res.h_train = std::move(h);
  return res;
}

struct EnhanceNmfResult {
  ComplexSpectrogram clean;        // Wiener-masked mixture
  Matrix mask;                     // speech mask (W_s H_s) / (V), in [0, 1]
  Matrix h_s;                      // K_s x N speech activations
  Matrix w_b;                      // F x K_b noise dictionary
  Matrix h_b;                      // K_b x N noise activations
  std::vector<double> cost_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Semi-supervised IS-NMF enhancement: fits |X|^2 with W_s H_s + W_b H_b,
/// W_s frozen, by block multiplicative updates of H_s, W_b, H_b (freshest
/// model variance before each block), then applies the speech Wiener mask to
/// the mixture coefficients.
inline EnhanceNmfResult enhance_nmf(const ComplexSpectrogram& mixture,
                                    const SpeechDictionary& dict,
                                    const BaselineConfig& config) {
  config.validate();
  if (dict.freq_bins() != mixture.freq_bins) {
    throw ShapeError(detail::str("enhance_nmf: mixture has F=",
                                 mixture.freq_bins, " but dictionary has F=",
                                 dict.freq_bins()));
  }
  const Matrix power = power_matrix(mixture);
  const std::size_t f_bins = power.rows();
  const std::size_t n_frames = power.cols();

  EnhanceNmfResult res;
  res.h_s = Matrix(dict.rank(), n_frames);
  res.w_b = Matrix(f_bins, config.noise_rank);
  res.h_b = Matrix(config.noise_rank, n_frames);
  {
    RngStream init(config.seed, kBaselineInitStreamId);
    for (double& v : res.h_s.data()) v = init.uniform();
    const double speech_mean = mean(matmul(dict.w_s, res.h_s));
    const double target = std::max(mean(power), kNmfFloor);
    const double h_scale = 0.5 * target / speech_mean;
    for (double& v : res.h_s.data()) v = detail::floored(v * h_scale);
    detail::scaled_uniform_init(res.w_b, res.h_b, 0.5 * target, init);
  }

  auto model_var = [&]() {
    return add(matmul(dict.w_s, res.h_s), matmul(res.w_b, res.h_b));
  };

  double prev_cost = 0.0;
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    detail::mu_update_h(dict.w_s, res.h_s, power, model_var());
    detail::mu_update_w(res.w_b, res.h_b, power, model_var());
    detail::mu_update_h(res.w_b, res.h_b, power, model_var());
    const double cost = is_nmf_cost(power, model_var());
    res.cost_trace.push_back(cost);
    res.iterations = it + 1;
    if (it > 0 &&
        std::abs(prev_cost - cost) / std::max(std::abs(prev_cost), 1e-300) <
            config.stop_tol) {
      res.converged = true;
      break;
    }
    prev_cost = cost;
  }

  const Matrix speech_var = matmul(dict.w_s, res.h_s);
  const Matrix noise_var = matmul(res.w_b, res.h_b);
  res.mask = Matrix(f_bins, n_frames);
  for (std::size_t i = 0; i < res.mask.size(); ++i) {
    res.mask.data()[i] =
        speech_var.data()[i] / (speech_var.data()[i] + noise_var.data()[i]);
  }
  res.clean = mixture;
  for (std::size_t n = 0; n < n_frames; ++n) {
    for (std::size_t f = 0; f < f_bins; ++f) {
      res.clean.at(f, n) = mixture.at(f, n) * res.mask(f, n);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON container, schema "vamce-dict-1".
// ---------------------------------------------------------------------------

inline void save_dictionary(const std::string& path,
                            const SpeechDictionary& dict) {
  nlohmann::json j;
  j["schema"] = "vamce-dict-1";
  j["F"] = dict.freq_bins();
  j["K_s"] = dict.rank();
  j["w_s"] = dict.w_s.data();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open dictionary file for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("short write to dictionary file: " + path);
}

inline SpeechDictionary load_dictionary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dictionary file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(detail::str("dictionary parse error in ", path, ": ",
                              e.what()));
  }
  if (!j.contains("schema") || j["schema"] != "vamce-dict-1") {
    throw IoError("dictionary schema mismatch (expected vamce-dict-1): " +
                  path);
  }
  try {
    const std::size_t f_bins = j.at("F").get<std::size_t>();
    const std::size_t rank = j.at("K_s").get<std::size_t>();
    std::vector<double> data = j.at("w_s").get<std::vector<double>>();
    SpeechDictionary dict;
    dict.w_s = Matrix(f_bins, rank, std::move(data));
    for (double v : dict.w_s.data()) {
      if (!std::isfinite(v) || v < 0.0) {
        throw NumericError("dictionary contains invalid entries: " + path);
      }
    }
    return dict;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(detail::str("dictionary parse error in ", path, ": ",
                              e.what()));
  }
}

}  // namespace vamce
