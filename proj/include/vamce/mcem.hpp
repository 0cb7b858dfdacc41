// vamce/mcem.hpp
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
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "vamce/common.hpp"
#include "vamce/matrix.hpp"
#include "vamce/parallel.hpp"
#include "vamce/rng.hpp"
#include "vamce/stft.hpp"
#include "vamce/vae.hpp"

namespace vamce {

// Floor re-applied to NMF factors and gains after every multiplicative
// update; the updates preserve positivity only for strictly positive inputs.
constexpr double kNmfFloor = 1e-10;

// Stream id for the noise-model initializer. Frame chains use stream-id =
// frame index, so ids at 0xB000 and above are reserved for non-chain draws.
constexpr std::uint64_t kNmfInitStreamId = 0xB000;

/// Low-rank noise variance model: Var(b_fn) = (W_b H_b)_{f,n}.
struct NoiseNmf {
  Matrix w_b;  // F x K_b, entries >= kNmfFloor
  Matrix h_b;  // K_b x N, entries >= kNmfFloor

  NoiseNmf() = default;
  NoiseNmf(Matrix w, Matrix h) : w_b(std::move(w)), h_b(std::move(h)) {
    if (w_b.cols() != h_b.rows()) {
      throw ShapeError(detail::str("NoiseNmf: W_b is ", w_b.rows(), "x",
                                   w_b.cols(), " but H_b is ", h_b.rows(), "x",
                                   h_b.cols()));
    }
  }

  std::size_t freq_bins() const { return w_b.rows(); }
  std::size_t rank() const { return w_b.cols(); }
  std::size_t frames() const { return h_b.cols(); }

  Matrix noise_variance() const { return matmul(w_b, h_b); }
};

/// Frame-dependent, frequency-independent speech gains.
struct GainVector {
  std::vector<double> values;  // N entries, each >= kNmfFloor

  GainVector() = default;
  explicit GainVector(std::size_t n, double fill = 1.0) : values(n, fill) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t n) const { return values[n]; }
  double& operator[](std::size_t n) { return values[n]; }
};

/// Markov-chain state for one frame's latent posterior.
struct LatentChain {
  std::vector<double> z;        // current state, length L
  double log_target = -std::numeric_limits<double>::infinity();
  RngStream stream;             // stream-id = frame index
  std::vector<std::vector<double>> retained;  // R samples of length L
  std::size_t accepted = 0;     // over the most recent sampling run
  std::size_t proposed = 0;
};

struct EnhancerConfig {
  std::size_t mh_iters = 40;         // E-step chain length
  std::size_t burn_in = 30;          // E-step discarded prefix
  std::size_t recon_iters = 100;     // reconstruction chain length
  std::size_t recon_burn_in = 75;    // reconstruction discarded prefix
  double eps2 = 0.01;                // random-walk proposal variance
  std::size_t noise_rank = 10;       // K_b
  double stop_tol = 1e-4;            // relative Q-improvement threshold
  std::size_t max_em_iters = 200;
  std::uint64_t seed = 0;
  bool freeze_gains = false;         // pin g to all-ones

  void validate() const {
    if (mh_iters == 0 || recon_iters == 0) {
      throw DomainError("enhancer: iteration counts must be positive");
    }
    if (burn_in >= mh_iters || recon_burn_in >= recon_iters) {
      throw DomainError("enhancer: burn-in must be smaller than iterations");
    }
    if (!(eps2 > 0.0)) throw DomainError("enhancer: eps2 must be > 0");
    if (noise_rank == 0) throw DomainError("enhancer: noise rank must be > 0");
    if (!(stop_tol > 0.0)) throw DomainError("enhancer: tolerance must be > 0");
    if (max_em_iters == 0) throw DomainError("enhancer: max iterations must be > 0");
  }
};

namespace detail {

inline double floored(double v) { return v < kNmfFloor ? kNmfFloor : v; }

}  // namespace detail

/// ln p(x_n | z_n) for one frame under the mixture model
/// x_fn ~ N_c(0, v_fn), v_fn = g_n sigma_f^2 + noise_var_f:
/// sum_f [-ln(pi v_fn) - |x_fn|^2 / v_fn]. Takes the power spectrum |x_n|^2
/// and the pre-decoded speech variances.
inline double mixture_loglik_given_var(const std::vector<double>& x_power,
                                       const std::vector<double>& speech_var,
                                       const std::vector<double>& noise_var,
                                       double gain) {
  const std::size_t f_bins = x_power.size();
  if (speech_var.size() != f_bins || noise_var.size() != f_bins) {
    throw ShapeError("mixture_loglik: variance length mismatch");
  }
  double acc = 0.0;
  for (std::size_t f = 0; f < f_bins; ++f) {
    const double v = detail::floored(gain * speech_var[f] + noise_var[f]);
    acc += -std::log(std::numbers::pi * v) - x_power[f] / v;
  }
  if (!std::isfinite(acc)) throw NumericError("mixture_loglik: non-finite");
  return acc;
}

/// Decoding form: runs z through the vae decoder first.
inline double mixture_loglik_frame(const std::vector<double>& x_power,
                                   const std::vector<double>& z,
                                   const VaeParameters& vae,
                                   const std::vector<double>& noise_var,
                                   double gain) {
  return mixture_loglik_given_var(x_power, decode(vae, z), noise_var, gain);
}

/// One Metropolis-Hastings move with a N(z, eps2 I) random-walk proposal.
/// `target` maps a latent vector to its log target density (up to an additive
/// constant). Consumes exactly z.size() normals plus one uniform from the
/// stream whether or not the move is accepted, so replay never depends on the
/// accept pattern. Returns true on acceptance.
template <typename LogTarget>
bool mh_step(std::vector<double>& z, double& log_target_value, double eps2,
             RngStream& stream, LogTarget&& target) {
  const double step = std::sqrt(eps2);
  std::vector<double> proposal(z.size());
  for (std::size_t l = 0; l < z.size(); ++l) {
    proposal[l] = z[l] + step * stream.normal();
  }
  const double proposal_log_target = target(proposal);
  const double u = stream.uniform();
  if (std::log(u) < proposal_log_target - log_target_value) {
    z = std::move(proposal);
    log_target_value = proposal_log_target;
    return true;
  }
  return false;
}

/// Log posterior target for one frame: ln p(x_n | z) + ln p(z) with the
/// standard-normal prior contributing -||z||^2 / 2 (constants dropped).
inline double chain_log_target(const std::vector<double>& x_power,
                               const std::vector<double>& z,
                               const VaeParameters& vae,
                               const std::vector<double>& noise_var,
                               double gain) {
  double prior = 0.0;
  for (double v : z) prior -= 0.5 * v * v;
  return mixture_loglik_frame(x_power, z, vae, noise_var, gain) + prior;
}

/// Runs `iters` MH steps on every chain against the current parameters and
/// stores the last `iters - burn_in` states as the retained sample set.
/// Cached log targets are recomputed on entry since parameters moved since
/// the previous E-step. Frames run in parallel; each owns its chain and
/// stream, so results are bit-identical under any schedule.
inline void e_step(std::vector<LatentChain>& chains, const Matrix& power,
                   const VaeParameters& vae, const NoiseNmf& nmf,
                   const GainVector& g, double eps2, std::size_t iters,
                   std::size_t burn_in) {
  const std::size_t n_frames = chains.size();
  if (power.cols() != n_frames || g.size() != n_frames ||
      nmf.frames() != n_frames) {
    throw ShapeError("e_step: frame count mismatch");
  }
  if (burn_in >= iters) throw DomainError("e_step: burn-in must be < iters");
  const Matrix noise_var = nmf.noise_variance();
  const std::size_t retain = iters - burn_in;
  const std::size_t f_bins = power.rows();

  parallel_for(n_frames, [&](std::size_t n) {
    LatentChain& chain = chains[n];
    std::vector<double> x_power(f_bins), noise_col(f_bins);
    for (std::size_t f = 0; f < f_bins; ++f) {
      x_power[f] = power(f, n);
      noise_col[f] = noise_var(f, n);
    }
    auto target = [&](const std::vector<double>& z) {
      return chain_log_target(x_power, z, vae, noise_col, g[n]);
    };
    chain.log_target = target(chain.z);
    chain.retained.assign(retain, std::vector<double>());
    chain.accepted = 0;
    chain.proposed = iters;
    for (std::size_t m = 0; m < iters; ++m) {
      if (mh_step(chain.z, chain.log_target, eps2, chain.stream, target)) {
        ++chain.accepted;
      }
      if (m >= burn_in) chain.retained[m - burn_in] = chain.z;
    }
  });
}

inline double mean_acceptance(const std::vector<LatentChain>& chains) {
  std::size_t accepted = 0, proposed = 0;
  for (const LatentChain& c : chains) {
    accepted += c.accepted;
    proposed += c.proposed;
  }
  return proposed == 0 ? 0.0
                       : static_cast<double>(accepted) /
                             static_cast<double>(proposed);
}

/// Decodes every retained sample into per-sample speech-variance grids:
/// result[r](f, n) = sigma_f^2(z_n^(r)).
inline std::vector<Matrix> decode_retained(
    const std::vector<LatentChain>& chains, const VaeParameters& vae) {
  if (chains.empty()) throw ShapeError("decode_retained: no chains");
  const std::size_t n_frames = chains.size();
  const std::size_t n_samples = chains[0].retained.size();
  if (n_samples == 0) throw ShapeError("decode_retained: no retained samples");
  const std::size_t f_bins = vae.freq_bins;
  std::vector<Matrix> v_s(n_samples, Matrix(f_bins, n_frames));
  parallel_for(n_frames, [&](std::size_t n) {
    if (chains[n].retained.size() != n_samples) {
      throw ShapeError("decode_retained: ragged retained sets");
    }
    for (std::size_t r = 0; r < n_samples; ++r) {
      const std::vector<double> var = decode(vae, chains[n].retained[r]);
      for (std::size_t f = 0; f < f_bins; ++f) v_s[r](f, n) = var[f];
    }
  });
  return v_s;
}

/// Monte Carlo EM objective
/// -(1/R) sum_r sum_{f,n} [ln v_fn^(r) + |x_fn|^2 / v_fn^(r)],
/// with v^(r) = g_n V_s^(r) + W_b H_b, floored.
inline double q_tilde(const Matrix& power, const std::vector<Matrix>& v_s,
                      const NoiseNmf& nmf, const GainVector& g) {
  if (v_s.empty()) throw ShapeError("q_tilde: no samples");
  const Matrix noise_var = nmf.noise_variance();
  if (!power.same_shape(noise_var)) throw ShapeError("q_tilde: shape mismatch");
  double acc = 0.0;
  for (const Matrix& vs : v_s) {
    if (!vs.same_shape(power)) throw ShapeError("q_tilde: sample shape");
    for (std::size_t f = 0; f < power.rows(); ++f) {
      for (std::size_t n = 0; n < power.cols(); ++n) {
        const double v = detail::floored(g[n] * vs(f, n) + noise_var(f, n));
        acc += std::log(v) + power(f, n) / v;
      }
    }
  }
  const double q = -acc / static_cast<double>(v_s.size());
  if (!std::isfinite(q)) throw NumericError("q_tilde: non-finite objective");
  return q;
}

namespace detail {

// Accumulates S1 = sum_r V_x^(r)^-1 and S2P = |X|^2 (.) sum_r V_x^(r)^-2
// against the freshest parameters.
inline void vx_power_sums(const Matrix& power, const std::vector<Matrix>& v_s,
                          const NoiseNmf& nmf, const GainVector& g, Matrix& s1,
                          Matrix& s2p) {
  const Matrix noise_var = nmf.noise_variance();
  s1 = Matrix(power.rows(), power.cols());
  s2p = Matrix(power.rows(), power.cols());
  for (const Matrix& vs : v_s) {
    for (std::size_t f = 0; f < power.rows(); ++f) {
      for (std::size_t n = 0; n < power.cols(); ++n) {
        const double v = floored(g[n] * vs(f, n) + noise_var(f, n));
        s1(f, n) += 1.0 / v;
        s2p(f, n) += 1.0 / (v * v);
      }
    }
  }
  for (std::size_t i = 0; i < s2p.size(); ++i) {
    s2p.data()[i] *= power.data()[i];
  }
}

}  // namespace detail

/// H_b <- H_b (.) [ W_b^T(|X|^2 (.) sum_r V_x^-2) / W_b^T sum_r V_x^-1 ]^1/2,
/// then re-floored. V_x uses the parameters as passed in.
inline void update_Hb(NoiseNmf& nmf, const Matrix& power,
                      const std::vector<Matrix>& v_s, const GainVector& g) {
  Matrix s1, s2p;
  detail::vx_power_sums(power, v_s, nmf, g, s1, s2p);
  const Matrix num = matmul_tn(nmf.w_b, s2p);  // K_b x N
  const Matrix den = matmul_tn(nmf.w_b, s1);   // K_b x N
  for (std::size_t i = 0; i < nmf.h_b.size(); ++i) {
    const double d = den.data()[i];
    if (!(d > 0.0)) throw NumericError("update_Hb: nonpositive denominator");
    double h = nmf.h_b.data()[i] * std::sqrt(num.data()[i] / d);
    nmf.h_b.data()[i] = detail::floored(h);
  }
}

/// W_b <- W_b (.) [ (|X|^2 (.) sum V_x^-2) H_b^T / (sum V_x^-1) H_b^T ]^1/2,
/// then re-floored.
inline void update_Wb(NoiseNmf& nmf, const Matrix& power,
                      const std::vector<Matrix>& v_s, const GainVector& g) {
  Matrix s1, s2p;
  detail::vx_power_sums(power, v_s, nmf, g, s1, s2p);
  const Matrix num = matmul_nt(s2p, nmf.h_b);  // F x K_b
  const Matrix den = matmul_nt(s1, nmf.h_b);   // F x K_b
  for (std::size_t i = 0; i < nmf.w_b.size(); ++i) {
    const double d = den.data()[i];
    if (!(d > 0.0)) throw NumericError("update_Wb: nonpositive denominator");
    double w = nmf.w_b.data()[i] * std::sqrt(num.data()[i] / d);
    nmf.w_b.data()[i] = detail::floored(w);
  }
}

/// g_n <- g_n sqrt( sum_f |x|^2 sum_r V_s V_x^-2 / sum_f sum_r V_s V_x^-1 ),
/// then re-floored.
inline void update_g(GainVector& g, const Matrix& power,
                     const std::vector<Matrix>& v_s, const NoiseNmf& nmf) {
  const Matrix noise_var = nmf.noise_variance();
  for (std::size_t n = 0; n < g.size(); ++n) {
    double num = 0.0, den = 0.0;
    for (const Matrix& vs : v_s) {
      for (std::size_t f = 0; f < power.rows(); ++f) {
        const double v = detail::floored(g[n] * vs(f, n) + noise_var(f, n));
        num += power(f, n) * vs(f, n) / (v * v);
        den += vs(f, n) / v;
      }
    }
    if (!(den > 0.0)) throw NumericError("update_g: nonpositive denominator");
    g[n] = detail::floored(g[n] * std::sqrt(num / den));
  }
}

/// Evaluates the exact M-step objective C(H_b) = -q_tilde restricted to H_b
/// and its majorizer G(H_b, H_tilde) at fixed (W_b, g, samples). Returns
/// (C, G). Test-only instrumentation for the bound C <= G and the tightness
/// G(H, H) = C(H).
inline std::pair<double, double> verify_auxiliary(
    const Matrix& power, const std::vector<Matrix>& v_s, const Matrix& w_b,
    const Matrix& h_b, const Matrix& h_tilde, const GainVector& g) {
  if (v_s.empty()) throw ShapeError("verify_auxiliary: no samples");
  if (!h_b.same_shape(h_tilde)) {
    throw ShapeError("verify_auxiliary: H shapes differ");
  }
  const Matrix wh = matmul(w_b, h_b);
  const Matrix wht = matmul(w_b, h_tilde);
  const double inv_r = 1.0 / static_cast<double>(v_s.size());
  double c_value = 0.0, g_value = 0.0;
  for (const Matrix& vs : v_s) {
    for (std::size_t f = 0; f < power.rows(); ++f) {
      for (std::size_t n = 0; n < power.cols(); ++n) {
        const double sv = g[n] * vs(f, n);
        const double p = power(f, n);
        const double vx = detail::floored(sv + wh(f, n));
        c_value += std::log(vx) + p / vx;

        const double vxt = detail::floored(sv + wht(f, n));
        double quad = sv / (vxt * vxt);
        for (std::size_t k = 0; k < w_b.cols(); ++k) {
          quad += w_b(f, k) * h_tilde(k, n) * h_tilde(k, n) /
                  (h_b(k, n) * vxt * vxt);
        }
        g_value += std::log(vxt) + (wh(f, n) - wht(f, n)) / vxt + p * quad;
      }
    }
  }
  return {c_value * inv_r, g_value * inv_r};
}

/// Full state returned by run_mcem; chains carry forward into reconstruct.
struct McemResult {
  NoiseNmf nmf;
  GainVector gains;
  std::vector<LatentChain> chains;
  std::vector<double> q_trace;        // one entry per EM iteration
  std::vector<double> accept_trace;   // mean MH acceptance per iteration
  std::size_t iterations = 0;
  bool converged = false;
};

/// Monte Carlo EM: alternates the MH E-step with one pass of the H_b, W_b, g
/// multiplicative updates until the relative Q improvement drops below
/// config.stop_tol or config.max_em_iters is reached. W_b, H_b start from
/// scaled Uniform(0,1] noise, g from all-ones, chains from the encoder mean
/// of the mixture frame.
inline McemResult run_mcem(const ComplexSpectrogram& mixture,
                           const VaeParameters& vae,
                           const EnhancerConfig& config) {
  config.validate();
  if (mixture.freq_bins != vae.freq_bins) {
    throw ShapeError(detail::str("run_mcem: mixture has F=", mixture.freq_bins,
                                 " but model expects ", vae.freq_bins));
  }
  const Matrix power = power_matrix(mixture);
  const std::size_t f_bins = power.rows();
  const std::size_t n_frames = power.cols();

  McemResult res;

  // Random nonnegative factors rescaled so the initial model matches the
  // mixture's mean power.
  {
    RngStream init(config.seed, kNmfInitStreamId);
    Matrix w(f_bins, config.noise_rank);
    Matrix h(config.noise_rank, n_frames);
    for (double& v : w.data()) v = init.uniform();
    for (double& v : h.data()) v = init.uniform();
    const double model_mean = mean(matmul(w, h));
    const double target_mean = std::max(mean(power), kNmfFloor);
    const double scale = std::sqrt(target_mean / model_mean);
    for (double& v : w.data()) v = detail::floored(v * scale);
    for (double& v : h.data()) v = detail::floored(v * scale);
    res.nmf = NoiseNmf(std::move(w), std::move(h));
  }
  res.gains = GainVector(n_frames, 1.0);

  // Chains start at the encoder mean of the observed mixture frame.
  res.chains.resize(n_frames);
  std::vector<double> x_power(f_bins);
  for (std::size_t n = 0; n < n_frames; ++n) {
    for (std::size_t f = 0; f < f_bins; ++f) x_power[f] = power(f, n);
    res.chains[n].z = encode(vae, x_power).first;
    res.chains[n].stream = RngStream(config.seed, n);
  }

  double prev_q = 0.0;
  for (std::size_t it = 0; it < config.max_em_iters; ++it) {
    e_step(res.chains, power, vae, res.nmf, res.gains, config.eps2,
           config.mh_iters, config.burn_in);
    const std::vector<Matrix> v_s = decode_retained(res.chains, vae);
    update_Hb(res.nmf, power, v_s, res.gains);
    update_Wb(res.nmf, power, v_s, res.gains);
    if (!config.freeze_gains) update_g(res.gains, power, v_s, res.nmf);
    const double q = q_tilde(power, v_s, res.nmf, res.gains);
    res.q_trace.push_back(q);
    res.accept_trace.push_back(mean_acceptance(res.chains));
    res.iterations = it + 1;
    if (it > 0) {
      const double denom = std::max(std::abs(prev_q), 1e-300);
      if (std::abs(q - prev_q) / denom < config.stop_tol) {
        res.converged = true;
        break;
      }
    }
    prev_q = q;
  }
  return res;
}

struct ReconstructResult {
  ComplexSpectrogram clean;  // estimate of the scaled speech sqrt(g) s
  Matrix mask;               // F x N posterior-mean Wiener gains in [0, 1]
  double mean_accept = 0.0;
};

/// Posterior-mean soft masking: continues the chains for config.recon_iters
/// steps, keeps R = recon_iters - recon_burn_in samples, and averages
/// g sigma^2 / (g sigma^2 + W_b H_b) over them. The estimate targets the
/// gain-scaled speech coefficients, which are synthesized as-is.
inline ReconstructResult reconstruct(const ComplexSpectrogram& mixture,
                                     const VaeParameters& vae,
                                     const McemResult& fitted,
                                     const EnhancerConfig& config) {
  config.validate();
  const Matrix power = power_matrix(mixture);
  if (fitted.chains.size() != mixture.frames) {
    throw ShapeError("reconstruct: chain count does not match mixture");
  }
  std::vector<LatentChain> chains = fitted.chains;
  e_step(chains, power, vae, fitted.nmf, fitted.gains, config.eps2,
         config.recon_iters, config.recon_burn_in);
  const std::vector<Matrix> v_s = decode_retained(chains, vae);
  const Matrix noise_var = fitted.nmf.noise_variance();

  ReconstructResult out;
  out.mean_accept = mean_acceptance(chains);
  out.mask = Matrix(power.rows(), power.cols());
  const double inv_r = 1.0 / static_cast<double>(v_s.size());
  for (const Matrix& vs : v_s) {
    for (std::size_t f = 0; f < power.rows(); ++f) {
      for (std::size_t n = 0; n < power.cols(); ++n) {
        const double sv = fitted.gains[n] * vs(f, n);
        out.mask(f, n) += inv_r * sv / detail::floored(sv + noise_var(f, n));
      }
    }
  }
  out.clean = mixture;
  for (std::size_t n = 0; n < mixture.frames; ++n) {
    for (std::size_t f = 0; f < mixture.freq_bins; ++f) {
      out.clean.at(f, n) = mixture.at(f, n) * out.mask(f, n);
    }
  }
  return out;
}

}  // namespace vamce
