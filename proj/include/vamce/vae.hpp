// vamce/vae.hpp
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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vamce/common.hpp"
#include "vamce/matrix.hpp"
#include "vamce/rng.hpp"

namespace vamce {

// Floor applied to power spectra and model variances before any
// Itakura-Saito / likelihood evaluation; the divergence is singular at 0.
constexpr double kVarianceFloor = 1e-10;

// Log-variance network outputs are clamped to +-30 before exponentiation.
constexpr double kLogVarClamp = 30.0;

/// Gaussian variance model over power spectra. The encoder maps a power frame
/// (F) through one tanh hidden layer (H) to two linear heads giving the
/// latent mean and log-variance (L each). The decoder maps a latent vector
/// (L) through one tanh hidden layer (H) to a linear log-variance output (F).
/// Weight matrices are stored (output x input), biases per output unit.
struct VaeParameters {
  std::size_t freq_bins = 0;   // F
  std::size_t latent_dim = 0;  // L
  std::size_t hidden = 0;      // H

  Matrix enc_w;                 // H x F
  std::vector<double> enc_b;    // H
  Matrix mu_w;                  // L x H
  std::vector<double> mu_b;     // L
  Matrix logvar_w;              // L x H
  std::vector<double> logvar_b; // L
  Matrix dec_w;                 // H x L
  std::vector<double> dec_b;    // H
  Matrix out_w;                 // F x H
  std::vector<double> out_b;    // F

  VaeParameters() = default;

  VaeParameters(std::size_t f, std::size_t l, std::size_t h)
      : freq_bins(f),
        latent_dim(l),
        hidden(h),
        enc_w(h, f),
        enc_b(h, 0.0),
        mu_w(l, h),
        mu_b(l, 0.0),
        logvar_w(l, h),
        logvar_b(l, 0.0),
        dec_w(h, l),
        dec_b(h, 0.0),
        out_w(f, h),
        out_b(f, 0.0) {
    if (f == 0 || l == 0 || h == 0) {
      throw DomainError("vae: dimensions must be positive");
    }
    if (l >= f) throw DomainError("vae: latent dimension must be < F");
  }

  std::size_t param_count() const {
    return enc_w.size() + enc_b.size() + mu_w.size() + mu_b.size() +
           logvar_w.size() + logvar_b.size() + dec_w.size() + dec_b.size() +
           out_w.size() + out_b.size();
  }

  /// Glorot-uniform weight init, zero biases. Draw order is fixed
  /// (enc, mu head, logvar head, dec, out; row-major within each matrix).
  void glorot_init(RngStream& stream) {
    auto init_matrix = [&stream](Matrix& w, std::size_t fan_out,
                                 std::size_t fan_in) {
      const double limit =
          std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& v : w.data()) v = (2.0 * stream.uniform() - 1.0) * limit;
    };
    init_matrix(enc_w, hidden, freq_bins);
    init_matrix(mu_w, latent_dim, hidden);
    init_matrix(logvar_w, latent_dim, hidden);
    init_matrix(dec_w, hidden, latent_dim);
    init_matrix(out_w, freq_bins, hidden);
    std::fill(enc_b.begin(), enc_b.end(), 0.0);
    std::fill(mu_b.begin(), mu_b.end(), 0.0);
    std::fill(logvar_b.begin(), logvar_b.end(), 0.0);
    std::fill(dec_b.begin(), dec_b.end(), 0.0);
    std::fill(out_b.begin(), out_b.end(), 0.0);
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    auto push = [&flat](const std::vector<double>& v) {
      flat.insert(flat.end(), v.begin(), v.end());
    };
    push(enc_w.data());
    push(enc_b);
    push(mu_w.data());
    push(mu_b);
    push(logvar_w.data());
    push(logvar_b);
    push(dec_w.data());
    push(dec_b);
    push(out_w.data());
    push(out_b);
    return flat;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count()) {
      throw ShapeError(detail::str("vae: flat vector has ", flat.size(),
                                   " entries, expected ", param_count()));
    }
    std::size_t pos = 0;
    auto pull = [&flat, &pos](std::vector<double>& v) {
      std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
      pos += v.size();
    };
    pull(enc_w.data());
    pull(enc_b);
    pull(mu_w.data());
    pull(mu_b);
    pull(logvar_w.data());
    pull(logvar_b);
    pull(dec_w.data());
    pull(dec_b);
    pull(out_w.data());
    pull(out_b);
  }
};

namespace detail {

inline double clamp_logvar(double x) {
  if (x > kLogVarClamp) return kLogVarClamp;
  if (x < -kLogVarClamp) return -kLogVarClamp;
  return x;
}

// out[i] = tanh(W row_i . x + b[i])
inline void affine_tanh(const Matrix& w, const std::vector<double>& b,
                        const double* x, std::vector<double>& out) {
  out.resize(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
    out[i] = std::tanh(acc);
  }
}

inline void affine(const Matrix& w, const std::vector<double>& b,
                   const double* x, std::vector<double>& out) {
  out.resize(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

}  // namespace detail

/// Encoder forward pass with intermediates kept for backprop.
struct EncoderActivations {
  std::vector<double> hidden;   // tanh layer output
  std::vector<double> mu;       // latent mean
  std::vector<double> logvar;   // clamped latent log-variance
  std::vector<double> sigma2;   // exp(logvar)
};

inline EncoderActivations encode_full(const VaeParameters& p,
                                      const std::vector<double>& power_frame) {
  if (power_frame.size() != p.freq_bins) {
    throw ShapeError(detail::str("encode: frame length ", power_frame.size(),
                                 " does not match F=", p.freq_bins));
  }
  for (double v : power_frame) {
    if (!std::isfinite(v)) throw NumericError("encode: non-finite input");
  }
  EncoderActivations act;
  detail::affine_tanh(p.enc_w, p.enc_b, power_frame.data(), act.hidden);
  detail::affine(p.mu_w, p.mu_b, act.hidden.data(), act.mu);
  detail::affine(p.logvar_w, p.logvar_b, act.hidden.data(), act.logvar);
  act.sigma2.resize(p.latent_dim);
  for (std::size_t l = 0; l < p.latent_dim; ++l) {
    act.logvar[l] = detail::clamp_logvar(act.logvar[l]);
    act.sigma2[l] = std::exp(act.logvar[l]);
  }
  return act;
}

/// Latent posterior parameters (mu, sigma^2) for one power frame.
inline std::pair<std::vector<double>, std::vector<double>> encode(
    const VaeParameters& p, const std::vector<double>& power_frame) {
  EncoderActivations act = encode_full(p, power_frame);
  return {std::move(act.mu), std::move(act.sigma2)};
}

struct DecoderActivations {
  std::vector<double> hidden;   // tanh layer output
  std::vector<double> logvar;   // clamped per-bin log-variance
  std::vector<double> sigma2;   // exp(logvar), in [exp(-30), exp(30)]
};

inline DecoderActivations decode_full(const VaeParameters& p,
                                      const std::vector<double>& z) {
  if (z.size() != p.latent_dim) {
    throw ShapeError(detail::str("decode: latent length ", z.size(),
                                 " does not match L=", p.latent_dim));
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw NumericError("decode: non-finite input");
  }
  DecoderActivations act;
  detail::affine_tanh(p.dec_w, p.dec_b, z.data(), act.hidden);
  detail::affine(p.out_w, p.out_b, act.hidden.data(), act.logvar);
  act.sigma2.resize(p.freq_bins);
  for (std::size_t f = 0; f < p.freq_bins; ++f) {
    act.logvar[f] = detail::clamp_logvar(act.logvar[f]);
    act.sigma2[f] = std::exp(act.logvar[f]);
  }
  return act;
}

/// Per-bin speech variance sigma_f^2(z).
inline std::vector<double> decode(const VaeParameters& p,
                                  const std::vector<double>& z) {
  return decode_full(p, z).sigma2;
}

/// z = mu + sigma * eps with eps ~ N(0, I); draws latent_dim normals from the
/// stream in index order.
inline std::vector<double> reparam_sample(const std::vector<double>& mu,
                                          const std::vector<double>& sigma2,
                                          RngStream& stream) {
  if (mu.size() != sigma2.size()) {
    throw ShapeError("reparam_sample: mu/sigma2 length mismatch");
  }
  std::vector<double> z(mu.size());
  for (std::size_t l = 0; l < mu.size(); ++l) {
    z[l] = mu[l] + std::sqrt(sigma2[l]) * stream.normal();
  }
  return z;
}

/// Itakura-Saito divergence d(x; y) = x/y - ln(x/y) - 1. Inputs are floored
/// at kVarianceFloor, so the result is always finite and >= 0.
inline double is_divergence(double x, double y) {
  const double xf = x < kVarianceFloor ? kVarianceFloor : x;
  const double yf = y < kVarianceFloor ? kVarianceFloor : y;
  const double ratio = xf / yf;
  return ratio - std::log(ratio) - 1.0;
}

/// ELBO regularizer 1/2 sum_l (ln sigma2_l - mu_l^2 - sigma2_l). The full KL
/// divergence to N(0, I) equals -(this) - L/2.
inline double kl_term(const std::vector<double>& mu,
                      const std::vector<double>& sigma2) {
  if (mu.size() != sigma2.size()) {
    throw ShapeError("kl_term: mu/sigma2 length mismatch");
  }
  double acc = 0.0;
  for (std::size_t l = 0; l < mu.size(); ++l) {
    if (!(sigma2[l] > 0.0)) throw DomainError("kl_term: sigma2 must be > 0");
    acc += std::log(sigma2[l]) - mu[l] * mu[l] - sigma2[l];
  }
  return 0.5 * acc;
}

/// Everything one forward pass produces; reused by the gradient pass and by
/// tests that inspect intermediates.
struct ElboEvaluation {
  double loss = 0.0;  // minimizing this maximizes the ELBO
  EncoderActivations encoder;
  std::vector<std::vector<double>> eps;     // R draws of N(0, I)
  std::vector<std::vector<double>> z;       // R latent samples
  std::vector<DecoderActivations> decoder;  // per sample
  std::vector<double> per_sample_is;        // IS term per sample (sum over f)
};

/// Monte Carlo negative-ELBO for one power frame:
/// (1/R) sum_r sum_f d_IS(|s_f|^2; sigma_f^2(z_r)) - kl_term(mu, sigma2).
inline ElboEvaluation elbo_estimate(const VaeParameters& p,
                                    const std::vector<double>& power_frame,
                                    std::size_t num_samples,
                                    RngStream& stream) {
  if (num_samples == 0) throw DomainError("elbo: need at least one sample");
  ElboEvaluation ev;
  ev.encoder = encode_full(p, power_frame);

  double is_total = 0.0;
  ev.eps.resize(num_samples);
  ev.z.resize(num_samples);
  ev.decoder.resize(num_samples);
  ev.per_sample_is.resize(num_samples);
  for (std::size_t r = 0; r < num_samples; ++r) {
    ev.eps[r].resize(p.latent_dim);
    ev.z[r].resize(p.latent_dim);
    for (std::size_t l = 0; l < p.latent_dim; ++l) {
      ev.eps[r][l] = stream.normal();
      ev.z[r][l] =
          ev.encoder.mu[l] + std::sqrt(ev.encoder.sigma2[l]) * ev.eps[r][l];
    }
    ev.decoder[r] = decode_full(p, ev.z[r]);
    double frame_is = 0.0;
    for (std::size_t f = 0; f < p.freq_bins; ++f) {
      frame_is += is_divergence(power_frame[f], ev.decoder[r].sigma2[f]);
    }
    ev.per_sample_is[r] = frame_is;
    is_total += frame_is;
  }
  ev.loss = is_total / static_cast<double>(num_samples) -
            kl_term(ev.encoder.mu, ev.encoder.sigma2);
  if (!std::isfinite(ev.loss)) {
    throw NumericError(detail::str("elbo: non-finite loss (is_total=", is_total,
                                   ")"));
  }
  return ev;
}

/// Loss plus its exact pathwise gradient for the sampled eps (noise held
/// fixed). The gradient is laid out like VaeParameters::flatten().
struct ElboGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Backpropagates the negative ELBO through decoder and encoder. Clamped
/// log-variances and floored variances propagate zero gradient, matching the
/// forward pass exactly.
inline ElboGradient elbo_gradient(const VaeParameters& p,
                                  const std::vector<double>& power_frame,
                                  std::size_t num_samples, RngStream& stream) {
  const ElboEvaluation ev =
      elbo_estimate(p, power_frame, num_samples, stream);
  const std::size_t F = p.freq_bins;
  const std::size_t L = p.latent_dim;
  const std::size_t H = p.hidden;
  const double inv_r = 1.0 / static_cast<double>(num_samples);

  VaeParameters g(F, L, H);  // zero-initialized gradient holder

  std::vector<double> d_mu(L, 0.0);
  std::vector<double> d_sigma(L, 0.0);  // w.r.t. sigma (not sigma^2)
  std::vector<double> d_psi(F), d_h2(H), d_a2(H), d_z(L);

  for (std::size_t r = 0; r < num_samples; ++r) {
    const DecoderActivations& dec = ev.decoder[r];
    // d loss / d psi_f, psi the clamped decoder log-variance
    for (std::size_t f = 0; f < F; ++f) {
      const double pf =
          power_frame[f] < kVarianceFloor ? kVarianceFloor : power_frame[f];
      const double v = dec.sigma2[f];
      const bool clamped = dec.logvar[f] >= kLogVarClamp ||
                           dec.logvar[f] <= -kLogVarClamp ||
                           v < kVarianceFloor;
      d_psi[f] = clamped ? 0.0 : inv_r * (1.0 - pf / v);
    }
    // through the linear output layer
    for (std::size_t f = 0; f < F; ++f) {
      const double d = d_psi[f];
      if (d != 0.0) {
        double* grow = g.out_w.row(f);
        const std::vector<double>& h2 = dec.hidden;
        for (std::size_t h = 0; h < H; ++h) grow[h] += d * h2[h];
        g.out_b[f] += d;
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) acc += p.out_w(f, h) * d_psi[f];
      d_h2[h] = acc;
      d_a2[h] = acc * (1.0 - dec.hidden[h] * dec.hidden[h]);
    }
    // through the decoder hidden layer
    for (std::size_t h = 0; h < H; ++h) {
      const double d = d_a2[h];
      double* grow = g.dec_w.row(h);
      for (std::size_t l = 0; l < L; ++l) grow[l] += d * ev.z[r][l];
      g.dec_b[h] += d;
    }
    for (std::size_t l = 0; l < L; ++l) {
      double acc = 0.0;
      for (std::size_t h = 0; h < H; ++h) acc += p.dec_w(h, l) * d_a2[h];
      d_z[l] = acc;
      d_mu[l] += acc;
      d_sigma[l] += acc * ev.eps[r][l];
    }
  }

  // KL contributions and the sigma->logvar chain.
  std::vector<double> d_lam(L);
  for (std::size_t l = 0; l < L; ++l) {
    d_mu[l] += ev.encoder.mu[l];
    const double lam = ev.encoder.logvar[l];
    const bool clamped = lam >= kLogVarClamp || lam <= -kLogVarClamp;
    const double sigma = std::sqrt(ev.encoder.sigma2[l]);
    d_lam[l] = clamped
                   ? 0.0
                   : 0.5 * d_sigma[l] * sigma +
                         0.5 * (ev.encoder.sigma2[l] - 1.0);
  }

  // Heads back to the shared hidden layer.
  std::vector<double> d_h1(H, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const double dm = d_mu[l];
    const double dl = d_lam[l];
    double* mrow = g.mu_w.row(l);
    double* lrow = g.logvar_w.row(l);
    const std::vector<double>& h1 = ev.encoder.hidden;
    for (std::size_t h = 0; h < H; ++h) {
      mrow[h] += dm * h1[h];
      lrow[h] += dl * h1[h];
      d_h1[h] += p.mu_w(l, h) * dm + p.logvar_w(l, h) * dl;
    }
    g.mu_b[l] += dm;
    g.logvar_b[l] += dl;
  }
  for (std::size_t h = 0; h < H; ++h) {
    const double da1 =
        d_h1[h] * (1.0 - ev.encoder.hidden[h] * ev.encoder.hidden[h]);
    double* erow = g.enc_w.row(h);
    for (std::size_t f = 0; f < F; ++f) erow[f] += da1 * power_frame[f];
    g.enc_b[h] += da1;
  }

  ElboGradient out;
  out.loss = ev.loss;
  out.grad = g.flatten();
  for (double v : out.grad) {
    if (!std::isfinite(v)) throw NumericError("elbo_gradient: non-finite gradient");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON container, schema "vamce-vae-1".
// ---------------------------------------------------------------------------

inline void save_model(const std::string& path, const VaeParameters& p) {
  nlohmann::json j;
  j["schema"] = "vamce-vae-1";
  j["F"] = p.freq_bins;
  j["L"] = p.latent_dim;
  j["hidden"] = p.hidden;
  j["activations"] = {{"hidden", "tanh"}, {"output", "identity"}};
  j["enc_w"] = p.enc_w.data();
  j["enc_b"] = p.enc_b;
  j["mu_w"] = p.mu_w.data();
  j["mu_b"] = p.mu_b;
  j["logvar_w"] = p.logvar_w.data();
  j["logvar_b"] = p.logvar_b;
  j["dec_w"] = p.dec_w.data();
  j["dec_b"] = p.dec_b;
  j["out_w"] = p.out_w.data();
  j["out_b"] = p.out_b;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open model file for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("short write to model file: " + path);
}

inline VaeParameters load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(detail::str("model parse error in ", path, ": ", e.what()));
  }
  if (!j.contains("schema") || j["schema"] != "vamce-vae-1") {
    throw IoError("model schema mismatch (expected vamce-vae-1): " + path);
  }
  try {
    const std::size_t F = j.at("F").get<std::size_t>();
    const std::size_t L = j.at("L").get<std::size_t>();
    const std::size_t H = j.at("hidden").get<std::size_t>();
    VaeParameters p(F, L, H);
    auto load_matrix = [&j](Matrix& m, const char* key) {
      std::vector<double> data = j.at(key).get<std::vector<double>>();
      if (data.size() != m.size()) {
        throw ShapeError(detail::str("model field ", key, " has ", data.size(),
                                     " entries, expected ", m.size()));
      }
      m.data() = std::move(data);
    };
    auto load_vector = [&j](std::vector<double>& v, const char* key) {
      std::vector<double> data = j.at(key).get<std::vector<double>>();
      if (data.size() != v.size()) {
        throw ShapeError(detail::str("model field ", key, " has ", data.size(),
                                     " entries, expected ", v.size()));
      }
      v = std::move(data);
    };
    load_matrix(p.enc_w, "enc_w");
    load_vector(p.enc_b, "enc_b");
    load_matrix(p.mu_w, "mu_w");
    load_vector(p.mu_b, "mu_b");
    load_matrix(p.logvar_w, "logvar_w");
    load_vector(p.logvar_b, "logvar_b");
    load_matrix(p.dec_w, "dec_w");
    load_vector(p.dec_b, "dec_b");
    load_matrix(p.out_w, "out_w");
    load_vector(p.out_b, "out_b");
    for (double v : p.flatten()) {
      if (!std::isfinite(v)) {
        throw NumericError("model contains non-finite weights: " + path);
      }
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(detail::str("model parse error in ", path, ": ", e.what()));
  }
}

}  // namespace vamce
