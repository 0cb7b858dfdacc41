// vamce/eval.hpp
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
#include <ostream>
#include <string>
#include <vector>

#include "vamce/common.hpp"
#include "vamce/wav.hpp"

namespace vamce {

// SI-SDR is reported within [-60, +60] dB; the cap keeps exact matches (and
// degenerate zero-projection estimates) finite.
constexpr double kSdrCapDb = 60.0;

/// Scale-invariant signal-to-distortion ratio in dB. The estimate is
/// projected onto the reference, s_t = (<est, ref>/||ref||^2) ref, and the
/// ratio ||s_t||^2 / ||est - s_t||^2 is returned on a log scale.
inline double si_sdr(const Waveform& reference, const Waveform& estimate) {
  const std::vector<double>& s = reference.samples;
  const std::vector<double>& e = estimate.samples;
  if (s.size() != e.size()) {
    throw ShapeError(detail::str("si_sdr: length mismatch (", s.size(), " vs ",
                                 e.size(), ")"));
  }
  if (s.empty()) throw ShapeError("si_sdr: empty signals");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ref_energy += s[i] * s[i];
    dot += e[i] * s[i];
  }
  if (!(ref_energy > 0.0)) throw DomainError("si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double residual_energy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = e[i] - alpha * s[i];
    residual_energy += r * r;
  }
  if (!(target_energy > 0.0)) return -kSdrCapDb;
  if (!(residual_energy > 0.0)) return kSdrCapDb;
  const double db = 10.0 * std::log10(target_energy / residual_energy);
  return std::min(std::max(db, -kSdrCapDb), kSdrCapDb);
}

struct EvalItem {
  std::string id;
  std::string method;
  Waveform reference;  // clean speech
  Waveform estimate;   // enhanced output
  Waveform noisy;      // unprocessed mixture
};

struct EvalRecord {
  std::string id;
  std::string method;
  double sdr_noisy_db = 0.0;
  double sdr_enhanced_db = 0.0;
  double improvement_db = 0.0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  double median_noisy_db = 0.0;
  double median_enhanced_db = 0.0;
  double median_improvement_db = 0.0;
};

namespace detail {

// Median by partial sort; even counts average the two middle values.
inline double median(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Scores every (reference, estimate, noisy) triplet and aggregates medians.
inline EvalReport evaluate_batch(const std::vector<EvalItem>& items) {
  if (items.empty()) throw DomainError("evaluate_batch: no pairs");
  EvalReport report;
  std::vector<double> noisy, enhanced, improvement;
  for (const EvalItem& item : items) {
    EvalRecord rec;
    rec.id = item.id;
    rec.method = item.method;
    rec.sdr_noisy_db = si_sdr(item.reference, item.noisy);
    rec.sdr_enhanced_db = si_sdr(item.reference, item.estimate);
    rec.improvement_db = rec.sdr_enhanced_db - rec.sdr_noisy_db;
    noisy.push_back(rec.sdr_noisy_db);
    enhanced.push_back(rec.sdr_enhanced_db);
    improvement.push_back(rec.improvement_db);
    report.records.push_back(std::move(rec));
  }
  report.median_noisy_db = detail::median(std::move(noisy));
  report.median_enhanced_db = detail::median(std::move(enhanced));
  report.median_improvement_db = detail::median(std::move(improvement));
  return report;
}

inline void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "id,method,sdr_noisy_db,sdr_enhanced_db,improvement_db\n";
  out.precision(6);
  out << std::fixed;
  for (const EvalRecord& rec : report.records) {
    out << rec.id << "," << rec.method << "," << rec.sdr_noisy_db << ","
        << rec.sdr_enhanced_db << "," << rec.improvement_db << "\n";
  }
}

inline void write_report_csv(const std::string& path,
                             const EvalReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open report file for writing: " + path);
  write_report_csv(f, report);
  if (!f) throw IoError("short write to report file: " + path);
}

}  // namespace vamce
