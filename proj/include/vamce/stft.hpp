// vamce/stft.hpp
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

#include <complex>
#include <vector>

#include "vamce/common.hpp"
#include "vamce/matrix.hpp"
#include "vamce/wav.hpp"

namespace vamce {

/// One-sided complex STFT grid. F = window_length/2 + 1 frequency bins by N
/// frames. Frames are stored contiguously (bin f of frame n is
/// coefficients[n * F + f]) because almost all downstream work is per frame.
struct ComplexSpectrogram {
  std::size_t freq_bins = 0;      // F
  std::size_t frames = 0;         // N
  std::size_t window_length = 0;  // samples
  std::size_t hop = 0;            // samples

  std::vector<std::complex<double>> coefficients;

  std::complex<double>& at(std::size_t f, std::size_t n) {
    return coefficients[n * freq_bins + f];
  }
  std::complex<double> at(std::size_t f, std::size_t n) const {
    return coefficients[n * freq_bins + f];
  }
  std::complex<double>* frame(std::size_t n) {
    return coefficients.data() + n * freq_bins;
  }
  const std::complex<double>* frame(std::size_t n) const {
    return coefficients.data() + n * freq_bins;
  }
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT; inverse includes the 1/n scale.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= scale;
  }
}

// Direct O(n^2) transform for non power-of-two sizes; correct for any length.
inline void dft_naive(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = (inverse ? 2.0 : -2.0) * kPi *
                           static_cast<double>(k) * static_cast<double>(t) /
                           static_cast<double>(n);
      acc += a[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  a = std::move(out);
}

inline void transform(std::vector<std::complex<double>>& a, bool inverse) {
  if (is_pow2(a.size())) {
    fft_pow2(a, inverse);
  } else {
    dft_naive(a, inverse);
  }
}

}  // namespace detail

/// Half-wave sine analysis/synthesis window, w[t] = sin(pi (t + 0.5) / T).
inline std::vector<double> sine_window(std::size_t window_length) {
  std::vector<double> w(window_length);
  for (std::size_t t = 0; t < window_length; ++t) {
    w[t] = std::sin(detail::kPi * (static_cast<double>(t) + 0.5) /
                    static_cast<double>(window_length));
  }
  return w;
}

/// Frame count covering `length` samples: N = ceil((length - overlap) / hop)
/// with overlap = window_length - hop, at least one frame. The tail of the
/// signal is zero-padded to fill the last frame.
inline std::size_t stft_frame_count(std::size_t length,
                                    std::size_t window_length,
                                    std::size_t hop) {
  const std::size_t overlap = window_length - hop;
  if (length <= window_length) return 1;
  return (length - overlap + hop - 1) / hop;
}

/// Sine-windowed one-sided STFT. The hop defaults to window_length / 4
/// (75% overlap).
inline ComplexSpectrogram stft(const Waveform& w, std::size_t window_length,
                               std::size_t hop = 0) {
  if (hop == 0) hop = window_length / 4;
  if (window_length < 2 || window_length % 2 != 0) {
    throw DomainError("stft: window length must be even and >= 2");
  }
  if (hop == 0 || hop > window_length) {
    throw DomainError("stft: hop must be in [1, window_length]");
  }
  if (w.samples.empty()) throw DomainError("stft: empty signal");

  const std::size_t T = window_length;
  const std::size_t F = T / 2 + 1;
  const std::size_t N = stft_frame_count(w.samples.size(), T, hop);

  ComplexSpectrogram s;
  s.freq_bins = F;
  s.frames = N;
  s.window_length = T;
  s.hop = hop;
  s.coefficients.resize(F * N);

  const std::vector<double> window = sine_window(T);
  std::vector<std::complex<double>> buf(T);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t start = n * hop;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t idx = start + t;
      const double x = idx < w.samples.size() ? w.samples[idx] : 0.0;
      buf[t] = std::complex<double>(window[t] * x, 0.0);
    }
    detail::transform(buf, /*inverse=*/false);
    std::complex<double>* out = s.frame(n);
    for (std::size_t f = 0; f < F; ++f) out[f] = buf[f];
  }
  return s;
}

/// Inverse STFT: sine synthesis window, overlap-add, normalization by the
/// per-sample window-square sum. DC and Nyquist bins are forced real and
/// conjugate symmetry is imposed, so the output is exactly real. Returns the
/// padded length (N-1)*hop + window_length; callers trim if they tracked the
/// original length.
inline Waveform istft(const ComplexSpectrogram& s, int sample_rate = 16000) {
  const std::size_t T = s.window_length;
  const std::size_t F = s.freq_bins;
  if (T < 2 || F != T / 2 + 1 || s.hop == 0 || s.hop > T ||
      s.coefficients.size() != F * s.frames || s.frames == 0) {
    throw ShapeError("istft: inconsistent spectrogram metadata");
  }

  const std::size_t out_len = (s.frames - 1) * s.hop + T;
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  const std::vector<double> window = sine_window(T);

  std::vector<std::complex<double>> buf(T);
  for (std::size_t n = 0; n < s.frames; ++n) {
    const std::complex<double>* in = s.frame(n);
    buf[0] = std::complex<double>(in[0].real(), 0.0);
    buf[T / 2] = std::complex<double>(in[T / 2].real(), 0.0);
    for (std::size_t f = 1; f < T / 2; ++f) {
      buf[f] = in[f];
      buf[T - f] = std::conj(in[f]);
    }
    detail::transform(buf, /*inverse=*/true);
    const std::size_t start = n * s.hop;
    for (std::size_t t = 0; t < T; ++t) {
      acc[start + t] += window[t] * buf[t].real();
      wsum[start + t] += window[t] * window[t];
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    out.samples[t] = wsum[t] > 1e-12 ? acc[t] / wsum[t] : 0.0;
  }
  return out;
}

/// |X|^2 as an F x N matrix.
inline Matrix power_matrix(const ComplexSpectrogram& s) {
  Matrix p(s.freq_bins, s.frames);
  for (std::size_t n = 0; n < s.frames; ++n) {
    const std::complex<double>* col = s.frame(n);
    for (std::size_t f = 0; f < s.freq_bins; ++f) p(f, n) = std::norm(col[f]);
  }
  return p;
}

/// |X|^2 with one frame per row (N x F), the layout used for training sets.
inline Matrix power_frames(const ComplexSpectrogram& s) {
  Matrix p(s.frames, s.freq_bins);
  for (std::size_t n = 0; n < s.frames; ++n) {
    const std::complex<double>* col = s.frame(n);
    double* row = p.row(n);
    for (std::size_t f = 0; f < s.freq_bins; ++f) row[f] = std::norm(col[f]);
  }
  return p;
}

}  // namespace vamce
