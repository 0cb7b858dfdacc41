// vamce/tools/vamce.cpp
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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vamce/vamce.hpp"

namespace {

namespace fs = std::filesystem;

// Flat JSON config file mirroring the long flag names (without the leading
// "--"). Explicit command-line flags always win over file values.
nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream f(path);
  if (!f) throw vamce::IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw vamce::IoError(vamce::detail::str("config parse error in ", path,
                                            ": ", e.what()));
  }
  if (!j.is_object()) {
    throw vamce::IoError("config file must hold a flat JSON object: " + path);
  }
  return j;
}

using OptionMap = std::map<std::string, CLI::Option*>;

template <typename T>
void merge_key(const nlohmann::json& j, const OptionMap& opts,
               const std::string& key, T& value) {
  auto it = opts.find(key);
  if (it != opts.end() && it->second->count() > 0) return;
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw vamce::IoError("config key '" + key + "' has the wrong type");
  }
}

struct WindowOpts {
  double win_ms = 64.0;
  double overlap = 0.75;
};

void add_window_flags(CLI::App* cmd, WindowOpts& w, OptionMap& opts) {
  opts["win-ms"] = cmd->add_option("--win-ms", w.win_ms,
                                   "Analysis window length in ms")
                       ->capture_default_str();
  opts["overlap"] = cmd->add_option("--overlap", w.overlap,
                                    "Window overlap fraction in [0,1)")
                        ->capture_default_str();
}

// 64 ms at 16 kHz gives a 1024-sample window and 256-sample hop.
std::pair<std::size_t, std::size_t> window_params(const WindowOpts& w,
                                                  int sample_rate) {
  if (!(w.overlap >= 0.0 && w.overlap < 1.0)) {
    throw vamce::DomainError("overlap must be in [0, 1)");
  }
  if (!(w.win_ms > 0.0)) throw vamce::DomainError("win-ms must be > 0");
  auto window = static_cast<std::size_t>(
      std::llround(w.win_ms * sample_rate / 1000.0));
  if (window < 2) window = 2;
  if (window % 2 == 1) ++window;
  auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(window) * (1.0 - w.overlap)));
  if (hop == 0) hop = 1;
  return {window, hop};
}

vamce::Waveform enhanced_to_waveform(const vamce::ComplexSpectrogram& s,
                                     const vamce::Waveform& original) {
  vamce::Waveform out = vamce::istft(s, original.sample_rate);
  out.samples.resize(original.samples.size());
  for (double& v : out.samples) {
    v = std::min(1.0, std::max(-1.0, v));
  }
  return out;
}

std::string resolve_near(const std::string& base_file,
                         const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_file).parent_path() / p).string();
}

// ---------------------------------------------------------------------------
// make-corpus
// ---------------------------------------------------------------------------

struct MakeCorpusOpts {
  std::string config;
  vamce::CorpusConfig corpus;
  OptionMap opts;
};

void setup_make_corpus(CLI::App& app) {
  auto o = std::make_shared<MakeCorpusOpts>();
  CLI::App* cmd = app.add_subcommand(
      "make-corpus", "Generate the synthetic speech/noise corpus");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["out"] =
      cmd->add_option("--out", o->corpus.out_dir, "Output directory")
          ->required();
  o->opts["n-clean"] = cmd->add_option("--n-clean", o->corpus.n_clean,
                                       "Clean training files")
                           ->capture_default_str();
  o->opts["n-mixtures"] = cmd->add_option("--n-mixtures", o->corpus.n_mixtures,
                                          "Noisy test mixtures")
                              ->capture_default_str();
  o->opts["snr-db"] =
      cmd->add_option("--snr-db", o->corpus.snr_db, "Mixture SNR in dB")
          ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->corpus.seed, "Master seed")
                        ->capture_default_str();
  o->opts["rate"] =
      cmd->add_option("--rate", o->corpus.sample_rate, "Sample rate in Hz")
          ->capture_default_str();
  o->opts["clean-seconds"] = cmd->add_option("--clean-seconds",
                                             o->corpus.clean_seconds,
                                             "Clean file duration")
                                 ->capture_default_str();
  o->opts["mix-seconds"] =
      cmd->add_option("--mix-seconds", o->corpus.mix_seconds,
                      "Mixture duration")
          ->capture_default_str();
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "out", o->corpus.out_dir);
    merge_key(j, o->opts, "n-clean", o->corpus.n_clean);
    merge_key(j, o->opts, "n-mixtures", o->corpus.n_mixtures);
    merge_key(j, o->opts, "snr-db", o->corpus.snr_db);
    merge_key(j, o->opts, "seed", o->corpus.seed);
    merge_key(j, o->opts, "rate", o->corpus.sample_rate);
    merge_key(j, o->opts, "clean-seconds", o->corpus.clean_seconds);
    merge_key(j, o->opts, "mix-seconds", o->corpus.mix_seconds);
    const auto entries = vamce::make_corpus(o->corpus);
    std::size_t clean = 0, mixtures = 0;
    for (const auto& e : entries) {
      (e.kind == "clean" ? clean : mixtures) += 1;
    }
    std::cout << "wrote " << clean << " clean files and " << mixtures
              << " mixtures to " << o->corpus.out_dir << "\n";
  });
}

// ---------------------------------------------------------------------------
// train-vae
// ---------------------------------------------------------------------------

struct TrainVaeOpts {
  std::string config, corpus_dir, out_path;
  vamce::TrainingConfig train;
  WindowOpts window;
  OptionMap opts;
};

void setup_train_vae(CLI::App& app) {
  auto o = std::make_shared<TrainVaeOpts>();
  CLI::App* cmd = app.add_subcommand(
      "train-vae", "Train the speech variance model on clean corpus frames");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["corpus"] =
      cmd->add_option("--corpus", o->corpus_dir, "Corpus directory")
          ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Model JSON path")
                       ->required();
  o->opts["latent-dim"] = cmd->add_option("--latent-dim",
                                          o->train.latent_dim, "Latent size L")
                              ->capture_default_str();
  o->opts["hidden"] =
      cmd->add_option("--hidden", o->train.hidden, "Hidden layer width")
          ->capture_default_str();
  o->opts["batch"] = cmd->add_option("--batch", o->train.batch_size,
                                     "Minibatch size")
                         ->capture_default_str();
  o->opts["epochs"] = cmd->add_option("--epochs", o->train.max_epochs,
                                      "Maximum epochs")
                          ->capture_default_str();
  o->opts["patience"] = cmd->add_option("--patience", o->train.patience,
                                        "Early-stopping patience in epochs")
                            ->capture_default_str();
  o->opts["val-frac"] = cmd->add_option("--val-frac", o->train.val_fraction,
                                        "Validation fraction")
                            ->capture_default_str();
  o->opts["samples"] = cmd->add_option("--samples", o->train.num_samples,
                                       "Monte Carlo samples per frame")
                           ->capture_default_str();
  o->opts["step-size"] = cmd->add_option("--step-size", o->train.step_size,
                                         "Adam step size")
                             ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->train.seed, "Master seed")
                        ->capture_default_str();
  add_window_flags(cmd, o->window, o->opts);
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "corpus", o->corpus_dir);
    merge_key(j, o->opts, "out", o->out_path);
    merge_key(j, o->opts, "latent-dim", o->train.latent_dim);
    merge_key(j, o->opts, "hidden", o->train.hidden);
    merge_key(j, o->opts, "batch", o->train.batch_size);
    merge_key(j, o->opts, "epochs", o->train.max_epochs);
    merge_key(j, o->opts, "patience", o->train.patience);
    merge_key(j, o->opts, "val-frac", o->train.val_fraction);
    merge_key(j, o->opts, "samples", o->train.num_samples);
    merge_key(j, o->opts, "step-size", o->train.step_size);
    merge_key(j, o->opts, "seed", o->train.seed);
    merge_key(j, o->opts, "win-ms", o->window.win_ms);
    merge_key(j, o->opts, "overlap", o->window.overlap);

    const auto [window, hop] = window_params(o->window, 16000);
    const vamce::CleanFrameSet frames =
        vamce::load_clean_frames(o->corpus_dir, window, hop);
    std::cout << "training on " << frames.count() << " frames (F="
              << frames.freq_bins() << ")\n";
    vamce::TrainLog log;
    const vamce::VaeParameters model = vamce::train(frames, o->train, &log);
    for (std::size_t e = 0; e < log.train_loss.size(); ++e) {
      std::cout << "epoch " << e << " train " << std::setprecision(6)
                << std::fixed << log.train_loss[e];
      if (e < log.val_loss.size()) std::cout << " val " << log.val_loss[e];
      std::cout << "\n";
    }
    if (log.diverged) std::cout << "training diverged; kept best checkpoint\n";
    std::cout << "best epoch " << log.best_epoch << " loss " << log.best_loss
              << "\n";
    vamce::save_model(o->out_path, model);
    std::cout << "saved model to " << o->out_path << "\n";
  });
}

// ---------------------------------------------------------------------------
// train-dict
// ---------------------------------------------------------------------------

struct TrainDictOpts {
  std::string config, corpus_dir, out_path;
  vamce::BaselineConfig baseline;
  WindowOpts window;
  OptionMap opts;
};

void setup_train_dict(CLI::App& app) {
  auto o = std::make_shared<TrainDictOpts>();
  CLI::App* cmd = app.add_subcommand(
      "train-dict", "Train the IS-NMF speech dictionary on clean frames");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["corpus"] =
      cmd->add_option("--corpus", o->corpus_dir, "Corpus directory")
          ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Dictionary JSON")
                       ->required();
  o->opts["rank"] = cmd->add_option("--rank", o->baseline.speech_rank,
                                    "Dictionary rank K_s")
                        ->capture_default_str();
  o->opts["iters"] = cmd->add_option("--iters", o->baseline.max_iters,
                                     "Maximum update iterations")
                         ->capture_default_str();
  o->opts["tol"] = cmd->add_option("--tol", o->baseline.stop_tol,
                                   "Relative cost-improvement stop")
                       ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->baseline.seed, "Master seed")
                        ->capture_default_str();
  add_window_flags(cmd, o->window, o->opts);
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "corpus", o->corpus_dir);
    merge_key(j, o->opts, "out", o->out_path);
    merge_key(j, o->opts, "rank", o->baseline.speech_rank);
    merge_key(j, o->opts, "iters", o->baseline.max_iters);
    merge_key(j, o->opts, "tol", o->baseline.stop_tol);
    merge_key(j, o->opts, "seed", o->baseline.seed);
    merge_key(j, o->opts, "win-ms", o->window.win_ms);
    merge_key(j, o->opts, "overlap", o->window.overlap);

    const auto [window, hop] = window_params(o->window, 16000);
    const vamce::CleanFrameSet frames =
        vamce::load_clean_frames(o->corpus_dir, window, hop);
    const vamce::Matrix power = vamce::transpose(frames.frames);
    const vamce::DictTrainResult res =
        vamce::train_dictionary(power, o->baseline);
    std::cout << "dictionary rank " << res.dictionary.rank() << ", "
              << res.iterations << " iterations, final cost "
              << res.cost_trace.back() << "\n";
    vamce::save_dictionary(o->out_path, res.dictionary);
    std::cout << "saved dictionary to " << o->out_path << "\n";
  });
}

// ---------------------------------------------------------------------------
// enhance (MCEM)
// ---------------------------------------------------------------------------

struct EnhanceOpts {
  std::string config, model_path, in_path, out_path, trace_path;
  vamce::EnhancerConfig enhancer;
  WindowOpts window;
  OptionMap opts;
};

void run_enhance(const EnhanceOpts& o) {
  const vamce::VaeParameters model = vamce::load_model(o.model_path);
  const vamce::Waveform noisy = vamce::read_wav(o.in_path);
  const auto [window, hop] = window_params(o.window, noisy.sample_rate);
  const vamce::ComplexSpectrogram mixture = vamce::stft(noisy, window, hop);
  if (mixture.freq_bins != model.freq_bins) {
    throw vamce::ShapeError(vamce::detail::str(
        "window gives F=", mixture.freq_bins, " but model ", o.model_path,
        " expects F=", model.freq_bins));
  }
  const vamce::McemResult fitted =
      vamce::run_mcem(mixture, model, o.enhancer);
  const vamce::ReconstructResult recon =
      vamce::reconstruct(mixture, model, fitted, o.enhancer);
  vamce::write_wav(o.out_path, enhanced_to_waveform(recon.clean, noisy));
  std::cout << "mcem: " << fitted.iterations << " iterations, final Q "
            << std::setprecision(6) << std::fixed << fitted.q_trace.back()
            << ", mean acceptance " << fitted.accept_trace.back() << "\n";
  std::cout << "wrote " << o.out_path << "\n";
  if (!o.trace_path.empty()) {
    std::ofstream trace(o.trace_path, std::ios::trunc);
    if (!trace) {
      throw vamce::IoError("cannot open trace file: " + o.trace_path);
    }
    trace << "iter,q_tilde,mean_accept\n" << std::setprecision(9);
    for (std::size_t i = 0; i < fitted.q_trace.size(); ++i) {
      trace << i << "," << fitted.q_trace[i] << ","
            << fitted.accept_trace[i] << "\n";
    }
  }
}

void setup_enhance(CLI::App& app) {
  auto o = std::make_shared<EnhanceOpts>();
  CLI::App* cmd = app.add_subcommand(
      "enhance", "Enhance a noisy WAV with the MCEM speech/noise model");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["model"] =
      cmd->add_option("--model", o->model_path, "Trained model JSON")
          ->required();
  o->opts["in"] = cmd->add_option("--in", o->in_path, "Noisy input WAV")
                      ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Enhanced output WAV")
                       ->required();
  o->opts["kb"] = cmd->add_option("--kb", o->enhancer.noise_rank,
                                  "Noise model rank K_b")
                      ->capture_default_str();
  o->opts["eps2"] = cmd->add_option("--eps2", o->enhancer.eps2,
                                    "MH proposal variance")
                        ->capture_default_str();
  o->opts["mh-iters"] = cmd->add_option("--mh-iters", o->enhancer.mh_iters,
                                        "E-step MH iterations")
                            ->capture_default_str();
  o->opts["burn-in"] = cmd->add_option("--burn-in", o->enhancer.burn_in,
                                       "E-step burn-in")
                           ->capture_default_str();
  o->opts["recon-iters"] =
      cmd->add_option("--recon-iters", o->enhancer.recon_iters,
                      "Reconstruction MH iterations")
          ->capture_default_str();
  o->opts["recon-burn-in"] =
      cmd->add_option("--recon-burn-in", o->enhancer.recon_burn_in,
                      "Reconstruction burn-in")
          ->capture_default_str();
  o->opts["tol"] = cmd->add_option("--tol", o->enhancer.stop_tol,
                                   "Relative Q-improvement stop")
                       ->capture_default_str();
  o->opts["max-iters"] = cmd->add_option("--max-iters",
                                         o->enhancer.max_em_iters,
                                         "Maximum EM iterations")
                             ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->enhancer.seed, "Master seed")
                        ->capture_default_str();
  o->opts["freeze-gains"] = cmd->add_flag("--freeze-gains",
                                          o->enhancer.freeze_gains,
                                          "Pin the gain vector to all-ones");
  cmd->add_option("--dump-trace", o->trace_path,
                  "Write per-iteration Q and acceptance CSV");
  add_window_flags(cmd, o->window, o->opts);
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "model", o->model_path);
    merge_key(j, o->opts, "in", o->in_path);
    merge_key(j, o->opts, "out", o->out_path);
    merge_key(j, o->opts, "kb", o->enhancer.noise_rank);
    merge_key(j, o->opts, "eps2", o->enhancer.eps2);
    merge_key(j, o->opts, "mh-iters", o->enhancer.mh_iters);
    merge_key(j, o->opts, "burn-in", o->enhancer.burn_in);
    merge_key(j, o->opts, "recon-iters", o->enhancer.recon_iters);
    merge_key(j, o->opts, "recon-burn-in", o->enhancer.recon_burn_in);
    merge_key(j, o->opts, "tol", o->enhancer.stop_tol);
    merge_key(j, o->opts, "max-iters", o->enhancer.max_em_iters);
    merge_key(j, o->opts, "seed", o->enhancer.seed);
    merge_key(j, o->opts, "freeze-gains", o->enhancer.freeze_gains);
    merge_key(j, o->opts, "win-ms", o->window.win_ms);
    merge_key(j, o->opts, "overlap", o->window.overlap);
    run_enhance(*o);
  });
}

// ---------------------------------------------------------------------------
// enhance-nmf (baseline)
// ---------------------------------------------------------------------------

struct EnhanceNmfOpts {
  std::string config, dict_path, in_path, out_path;
  vamce::BaselineConfig baseline;
  WindowOpts window;
  OptionMap opts;
};

void setup_enhance_nmf(CLI::App& app) {
  auto o = std::make_shared<EnhanceNmfOpts>();
  CLI::App* cmd = app.add_subcommand(
      "enhance-nmf", "Enhance a noisy WAV with the IS-NMF baseline");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["dict"] =
      cmd->add_option("--dict", o->dict_path, "Trained dictionary JSON")
          ->required();
  o->opts["in"] = cmd->add_option("--in", o->in_path, "Noisy input WAV")
                      ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Enhanced output WAV")
                       ->required();
  o->opts["kb"] = cmd->add_option("--kb", o->baseline.noise_rank,
                                  "Noise model rank K_b")
                      ->capture_default_str();
  o->opts["iters"] = cmd->add_option("--iters", o->baseline.max_iters,
                                     "Maximum update iterations")
                         ->capture_default_str();
  o->opts["tol"] = cmd->add_option("--tol", o->baseline.stop_tol,
                                   "Relative cost-improvement stop")
                       ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->baseline.seed, "Master seed")
                        ->capture_default_str();
  add_window_flags(cmd, o->window, o->opts);
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "dict", o->dict_path);
    merge_key(j, o->opts, "in", o->in_path);
    merge_key(j, o->opts, "out", o->out_path);
    merge_key(j, o->opts, "kb", o->baseline.noise_rank);
    merge_key(j, o->opts, "iters", o->baseline.max_iters);
    merge_key(j, o->opts, "tol", o->baseline.stop_tol);
    merge_key(j, o->opts, "seed", o->baseline.seed);
    merge_key(j, o->opts, "win-ms", o->window.win_ms);
    merge_key(j, o->opts, "overlap", o->window.overlap);

    const vamce::SpeechDictionary dict =
        vamce::load_dictionary(o->dict_path);
    const vamce::Waveform noisy = vamce::read_wav(o->in_path);
    const auto [window, hop] = window_params(o->window, noisy.sample_rate);
    const vamce::ComplexSpectrogram mixture =
        vamce::stft(noisy, window, hop);
    const vamce::EnhanceNmfResult res =
        vamce::enhance_nmf(mixture, dict, o->baseline);
    vamce::write_wav(o->out_path, enhanced_to_waveform(res.clean, noisy));
    std::cout << "isnmf: " << res.iterations << " iterations, final cost "
              << std::setprecision(6) << std::fixed << res.cost_trace.back()
              << "\n";
    std::cout << "wrote " << o->out_path << "\n";
  });
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string config, list_path, out_path;
  OptionMap opts;
};

void setup_evaluate(CLI::App& app) {
  auto o = std::make_shared<EvaluateOpts>();
  CLI::App* cmd = app.add_subcommand(
      "evaluate",
      "Score (reference, estimate, noisy) triplets listed in a CSV");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["list"] =
      cmd->add_option("--list", o->list_path,
                      "CSV with header id,method,reference_path,"
                      "estimate_path,noisy_path; relative paths resolve "
                      "against the CSV's directory")
          ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Report CSV path")
                       ->required();
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "list", o->list_path);
    merge_key(j, o->opts, "out", o->out_path);

    std::ifstream f(o->list_path);
    if (!f) throw vamce::IoError("cannot open list file: " + o->list_path);
    std::string line;
    if (!std::getline(f, line)) {
      throw vamce::IoError("empty list file: " + o->list_path);
    }
    std::vector<vamce::EvalItem> items;
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
      if (fields.size() != 5) {
        throw vamce::IoError("malformed list row: " + line);
      }
      vamce::EvalItem item;
      item.id = fields[0];
      item.method = fields[1];
      item.reference = vamce::read_wav(resolve_near(o->list_path, fields[2]));
      item.estimate = vamce::read_wav(resolve_near(o->list_path, fields[3]));
      item.noisy = vamce::read_wav(resolve_near(o->list_path, fields[4]));
      items.push_back(std::move(item));
    }
    const vamce::EvalReport report = vamce::evaluate_batch(items);
    vamce::write_report_csv(o->out_path, report);
    std::cout << std::setprecision(3) << std::fixed << "median noisy "
              << report.median_noisy_db << " dB, median enhanced "
              << report.median_enhanced_db << " dB, median improvement "
              << report.median_improvement_db << " dB\n";
    std::cout << "wrote " << o->out_path << "\n";
  });
}

// ---------------------------------------------------------------------------
// gain-robustness
// ---------------------------------------------------------------------------

struct GainRobustnessOpts {
  std::string config, model_path, in_path, ref_path, out_path;
  std::string scalings = "-12,-6,0,6,12,18";
  vamce::EnhancerConfig enhancer;
  WindowOpts window;
  OptionMap opts;
};

std::vector<double> parse_scalings(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw vamce::DomainError("bad scaling value: " + tok);
    }
  }
  if (out.empty()) throw vamce::DomainError("no scalings given");
  return out;
}

void setup_gain_robustness(CLI::App& app) {
  auto o = std::make_shared<GainRobustnessOpts>();
  CLI::App* cmd = app.add_subcommand(
      "gain-robustness",
      "Enhance one mixture under input scalings, gains free vs frozen");
  cmd->add_option("--config", o->config, "Flat JSON config file (flags win)");
  o->opts["model"] =
      cmd->add_option("--model", o->model_path, "Trained model JSON")
          ->required();
  o->opts["in"] = cmd->add_option("--in", o->in_path, "Mixture WAV")
                      ->required();
  o->opts["ref"] =
      cmd->add_option("--ref", o->ref_path, "Clean reference WAV")
          ->required();
  o->opts["out"] = cmd->add_option("--out", o->out_path, "Result CSV path")
                       ->required();
  o->opts["scalings"] = cmd->add_option("--scalings", o->scalings,
                                        "Comma-separated input scalings in dB")
                            ->capture_default_str();
  o->opts["kb"] = cmd->add_option("--kb", o->enhancer.noise_rank,
                                  "Noise model rank K_b")
                      ->capture_default_str();
  o->opts["eps2"] = cmd->add_option("--eps2", o->enhancer.eps2,
                                    "MH proposal variance")
                        ->capture_default_str();
  o->opts["mh-iters"] = cmd->add_option("--mh-iters", o->enhancer.mh_iters,
                                        "E-step MH iterations")
                            ->capture_default_str();
  o->opts["burn-in"] = cmd->add_option("--burn-in", o->enhancer.burn_in,
                                       "E-step burn-in")
                           ->capture_default_str();
  o->opts["recon-iters"] =
      cmd->add_option("--recon-iters", o->enhancer.recon_iters,
                      "Reconstruction MH iterations")
          ->capture_default_str();
  o->opts["recon-burn-in"] =
      cmd->add_option("--recon-burn-in", o->enhancer.recon_burn_in,
                      "Reconstruction burn-in")
          ->capture_default_str();
  o->opts["tol"] = cmd->add_option("--tol", o->enhancer.stop_tol,
                                   "Relative Q-improvement stop")
                       ->capture_default_str();
  o->opts["max-iters"] = cmd->add_option("--max-iters",
                                         o->enhancer.max_em_iters,
                                         "Maximum EM iterations")
                             ->capture_default_str();
  o->opts["seed"] = cmd->add_option("--seed", o->enhancer.seed, "Master seed")
                        ->capture_default_str();
  add_window_flags(cmd, o->window, o->opts);
  cmd->callback([o]() {
    const nlohmann::json j = load_config(o->config);
    merge_key(j, o->opts, "model", o->model_path);
    merge_key(j, o->opts, "in", o->in_path);
    merge_key(j, o->opts, "ref", o->ref_path);
    merge_key(j, o->opts, "out", o->out_path);
    merge_key(j, o->opts, "scalings", o->scalings);
    merge_key(j, o->opts, "kb", o->enhancer.noise_rank);
    merge_key(j, o->opts, "eps2", o->enhancer.eps2);
    merge_key(j, o->opts, "mh-iters", o->enhancer.mh_iters);
    merge_key(j, o->opts, "burn-in", o->enhancer.burn_in);
    merge_key(j, o->opts, "recon-iters", o->enhancer.recon_iters);
    merge_key(j, o->opts, "recon-burn-in", o->enhancer.recon_burn_in);
    merge_key(j, o->opts, "tol", o->enhancer.stop_tol);
    merge_key(j, o->opts, "max-iters", o->enhancer.max_em_iters);
    merge_key(j, o->opts, "seed", o->enhancer.seed);
    merge_key(j, o->opts, "win-ms", o->window.win_ms);
    merge_key(j, o->opts, "overlap", o->window.overlap);

    const std::vector<double> scalings = parse_scalings(o->scalings);
    const vamce::VaeParameters model = vamce::load_model(o->model_path);
    const vamce::Waveform mixture_wav = vamce::read_wav(o->in_path);
    const vamce::Waveform reference = vamce::read_wav(o->ref_path);
    const auto [window, hop] =
        window_params(o->window, mixture_wav.sample_rate);

    std::ofstream out(o->out_path, std::ios::trunc);
    if (!out) throw vamce::IoError("cannot open output CSV: " + o->out_path);
    out << "scaling_db,sdr_free_db,sdr_frozen_db\n"
        << std::setprecision(6) << std::fixed;

    for (double db : scalings) {
      vamce::Waveform scaled = mixture_wav;
      const double factor = std::pow(10.0, db / 20.0);
      for (double& v : scaled.samples) v *= factor;
      const vamce::ComplexSpectrogram spec =
          vamce::stft(scaled, window, hop);

      double sdr[2] = {0.0, 0.0};
      for (int frozen = 0; frozen < 2; ++frozen) {
        vamce::EnhancerConfig cfg = o->enhancer;
        cfg.freeze_gains = frozen == 1;
        const vamce::McemResult fitted = vamce::run_mcem(spec, model, cfg);
        const vamce::ReconstructResult recon =
            vamce::reconstruct(spec, model, fitted, cfg);
        vamce::Waveform enhanced = vamce::istft(recon.clean, scaled.sample_rate);
        enhanced.samples.resize(reference.samples.size());
        sdr[frozen] = vamce::si_sdr(reference, enhanced);
      }
      out << db << "," << sdr[0] << "," << sdr[1] << "\n";
      std::cout << std::setprecision(2) << std::fixed << "scaling " << db
                << " dB: free " << sdr[0] << " dB, frozen " << sdr[1]
                << " dB\n";
    }
    if (!out) throw vamce::IoError("short write to " + o->out_path);
    std::cout << "wrote " << o->out_path << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "vamce: variance-model speech enhancement (VAE speech model, NMF noise "
      "model, Monte Carlo EM inference). Set VAMCE_THREADS to cap internal "
      "parallelism (0 = auto)."};
  app.require_subcommand(1);
  setup_make_corpus(app);
  setup_train_vae(app);
  setup_train_dict(app);
  setup_enhance(app);
  setup_enhance_nmf(app);
  setup_evaluate(app);
  setup_gain_robustness(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the error message
    return code == 0 ? 0 : 2;
  } catch (const vamce::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const vamce::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
