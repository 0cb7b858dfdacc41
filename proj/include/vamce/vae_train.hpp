// vamce/vae_train.hpp
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
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "vamce/adam.hpp"
#include "vamce/common.hpp"
#include "vamce/matrix.hpp"
#include "vamce/rng.hpp"
#include "vamce/vae.hpp"

namespace vamce {

// Stream ids reserved by the trainer so reseeded runs replay exactly.
constexpr std::uint64_t kSplitStreamId = 0xA000;
constexpr std::uint64_t kShuffleStreamId = 0xA001;
constexpr std::uint64_t kTrainNoiseStreamId = 0xA002;
constexpr std::uint64_t kValNoiseStreamId = 0xA003;
constexpr std::uint64_t kInitStreamId = 0xA004;

/// Power-spectrum frames of clean speech, one frame per row (N x F).
struct CleanFrameSet {
  Matrix frames;

  std::size_t count() const { return frames.rows(); }
  std::size_t freq_bins() const { return frames.cols(); }
};

struct TrainingConfig {
  std::size_t latent_dim = 16;
  std::size_t hidden = 128;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;       // epochs without improvement before stop
  double val_fraction = 0.2;
  std::size_t num_samples = 1;     // Monte Carlo samples per frame
  std::uint64_t seed = 0;
  double step_size = 1e-3;

  void validate() const {
    if (latent_dim == 0 || hidden == 0) {
      throw DomainError("train: latent_dim and hidden must be positive");
    }
    if (batch_size == 0) throw DomainError("train: batch_size must be > 0");
    if (max_epochs == 0) throw DomainError("train: max_epochs must be > 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
      throw DomainError("train: val_fraction must be in [0, 1)");
    }
    if (num_samples == 0) throw DomainError("train: num_samples must be > 0");
    if (!(step_size > 0.0)) throw DomainError("train: step_size must be > 0");
  }
};

struct TrainLog {
  std::vector<double> train_loss;  // mean per-frame loss, one entry per epoch
  std::vector<double> val_loss;    // empty when no validation split
  std::size_t best_epoch = 0;      // 0-based index into the loss vectors
  double best_loss = 0.0;          // stopping-metric value at best_epoch
  std::size_t epochs_run = 0;
  bool diverged = false;
};

namespace detail {

// Mean loss over the given frames with a freshly recreated noise stream, so
// successive epochs see identical validation noise and losses stay comparable.
inline double mean_loss(const VaeParameters& params, const Matrix& frames,
                        const std::vector<std::size_t>& indices,
                        std::size_t num_samples, RngStream stream) {
  double total = 0.0;
  std::vector<double> frame(frames.cols());
  for (std::size_t idx : indices) {
    const double* row = frames.row(idx);
    std::copy(row, row + frames.cols(), frame.begin());
    total += elbo_estimate(params, frame, num_samples, stream).loss;
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace detail

/// Fits a fresh Glorot-initialized model to the frame set by minibatch Adam
/// on the negative ELBO, with a held-out validation split and patience-based
/// early stopping. Returns the parameters of the best epoch. A non-finite
/// loss or gradient aborts training and returns the last finite checkpoint
/// with log.diverged set. Deterministic for a fixed (frames, config).
inline VaeParameters train(const CleanFrameSet& data,
                           const TrainingConfig& config, TrainLog* log_out) {
  config.validate();
  if (data.count() == 0) throw ShapeError("train: empty frame set");
  if (data.freq_bins() <= config.latent_dim) {
    throw DomainError("train: latent_dim must be < F");
  }
  const std::size_t n = data.count();
  const std::size_t F = data.freq_bins();

  VaeParameters params(F, config.latent_dim, config.hidden);
  {
    RngStream init_stream(config.seed, kInitStreamId);
    params.glorot_init(init_stream);
  }

  // Deterministic split: shuffle indices once, validation takes the tail.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  {
    RngStream split_stream(config.seed, kSplitStreamId);
    shuffle(order, split_stream);
  }
  std::size_t val_count = static_cast<std::size_t>(
      std::llround(config.val_fraction * static_cast<double>(n)));
  if (val_count >= n) val_count = n - 1;
  std::vector<std::size_t> train_idx(order.begin(), order.end() - val_count);
  std::vector<std::size_t> val_idx(order.end() - val_count, order.end());

  RngStream shuffle_stream(config.seed, kShuffleStreamId);
  RngStream noise_stream(config.seed, kTrainNoiseStreamId);

  AdamState adam(params.param_count());
  adam.step_size = config.step_size;

  TrainLog log;
  std::vector<double> best_flat = params.flatten();
  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;

  std::vector<double> flat = params.flatten();
  std::vector<double> batch_grad(params.param_count());
  std::vector<double> frame(F);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle(train_idx, shuffle_stream);
    double epoch_loss = 0.0;
    bool finite = true;
    try {
      for (std::size_t start = 0; start < train_idx.size();
           start += config.batch_size) {
        const std::size_t stop =
            std::min(start + config.batch_size, train_idx.size());
        std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
        for (std::size_t i = start; i < stop; ++i) {
          const double* row = data.frames.row(train_idx[i]);
          std::copy(row, row + F, frame.begin());
          ElboGradient eg =
              elbo_gradient(params, frame, config.num_samples, noise_stream);
          epoch_loss += eg.loss;
          for (std::size_t k = 0; k < batch_grad.size(); ++k) {
            batch_grad[k] += eg.grad[k];
          }
        }
        const double scale = 1.0 / static_cast<double>(stop - start);
        for (double& v : batch_grad) v *= scale;
        adam_step(adam, flat, batch_grad);
        params.unflatten(flat);
      }
    } catch (const NumericError&) {
      finite = false;
    }
    if (!finite) {
      log.diverged = true;
      break;
    }
    epoch_loss /= static_cast<double>(train_idx.size());
    log.train_loss.push_back(epoch_loss);

    double metric = epoch_loss;
    if (!val_idx.empty()) {
      const double vloss =
          detail::mean_loss(params, data.frames, val_idx, config.num_samples,
                            RngStream(config.seed, kValNoiseStreamId));
      log.val_loss.push_back(vloss);
      metric = vloss;
    }
    log.epochs_run = epoch + 1;

    if (metric < best_metric) {
      best_metric = metric;
      best_flat = flat;
      log.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }

  params.unflatten(best_flat);
  log.best_loss = best_metric;
  if (log_out != nullptr) *log_out = log;
  return params;
}

}  // namespace vamce
