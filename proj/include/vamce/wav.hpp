// vamce/wav.hpp
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
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vamce/common.hpp"

namespace vamce {

/// Mono time-domain signal, amplitudes nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

inline void put_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

}  // namespace detail

/// Reads a RIFF/WAVE file. Only 16-bit PCM mono is accepted; anything else is
/// an IoError with a reason.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw IoError("wav parse error (truncated): " + path);
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("wav parse error (not a RIFF/WAVE file): " + path);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_len = detail::read_u32le(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) {
      throw IoError("wav parse error (chunk past end of file): " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError("wav parse error (short fmt): " + path);
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word aligned
  }

  if (!have_fmt || data_ptr == nullptr) {
    throw IoError("wav parse error (missing fmt or data chunk): " + path);
  }
  if (format != 1) throw IoError("unsupported wav format (PCM required): " + path);
  if (channels != 1) throw IoError("mono required: " + path);
  if (bits != 16) throw IoError("unsupported bit depth (16-bit required): " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  const std::size_t count = data_len / 2;
  w.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        detail::read_u16le(data_ptr + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1]; the round trip
/// error is at most 2^-15 per sample.
inline void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw DomainError("write_wav: sample rate must be > 0");
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * w.samples.size());
  const std::uint32_t data_len = static_cast<std::uint32_t>(2 * w.samples.size());

  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16le(out, 2);   // block align
  detail::put_u16le(out, 16);  // bits
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(out, data_len);

  for (double x : w.samples) {
    if (!std::isfinite(x)) throw NumericError("write_wav: non-finite sample");
    long q = std::lround(x * 32768.0);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open wav file for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to wav file: " + path);
}

}  // namespace vamce
