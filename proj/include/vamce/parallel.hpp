// vamce/parallel.hpp
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

#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace vamce {

// Worker cap for parallel_for. Controlled by the VAMCE_THREADS environment
// variable; 0 or unset means one worker per hardware thread.
inline unsigned thread_limit() {
  const char* env = std::getenv("VAMCE_THREADS");
  long value = 0;
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    value = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || value < 0) value = 0;
  }
  if (value == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
  }
  return static_cast<unsigned>(value);
}

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks, one
// per worker, so each index always runs exactly once on exactly one thread.
// fn must only write to state owned by its own index; under that contract the
// result is independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = thread_limit();
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = begin + chunk < n ? begin + chunk : n;
    threads.emplace_back([begin, end, w, &fn, &errors]() {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace vamce
