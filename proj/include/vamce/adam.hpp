// vamce/adam.hpp
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
#include <vector>

#include "vamce/common.hpp"

namespace vamce {

/// Adam optimizer state over one flat parameter vector. Defaults: step size
/// 1e-3, decay rates 0.9 / 0.999, epsilon 1e-7.
struct AdamState {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  std::vector<double> m;  // first moment accumulator
  std::vector<double> v;  // second moment accumulator
  std::uint64_t step_count = 0;

  explicit AdamState(std::size_t param_count = 0)
      : m(param_count, 0.0), v(param_count, 0.0) {}

  void validate() const {
    if (!(step_size > 0.0)) throw DomainError("adam: step size must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw DomainError("adam: decay rates must lie in [0, 1)");
    }
    if (m.size() != v.size()) throw ShapeError("adam: moment size mismatch");
  }
};

/// One Adam update with bias correction, in place.
inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads) {
  state.validate();
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError(detail::str("adam: size mismatch, params=", params.size(),
                                 " grads=", grads.size(),
                                 " state=", state.m.size()));
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.step_size * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace vamce
