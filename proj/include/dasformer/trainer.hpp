// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dasformer/checkpoint.hpp"
#include "dasformer/config_io.hpp"
#include "dasformer/model.hpp"
#include "dasformer/objective.hpp"
#include "dasformer/synth.hpp"

namespace dasformer {

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t plateau_patience = 7;   // epochs without improvement before halving
  std::size_t stop_patience = 15;     // epochs without improvement before stopping
  double lr_factor = 0.5;
  double clip_norm = 5.0;
  std::size_t batch_size = 4;
  std::size_t grad_accum = 1;  // optimizer step every batch_size*grad_accum samples
  std::size_t max_epochs = 40;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double target_si_sdri = 0.0;  // early exit once val SI-SDRi reaches this; 0 disables

  void validate() const {
    if (lr <= 0.0 || clip_norm <= 0.0 || lr_factor <= 0.0 || lr_factor >= 1.0)
      throw std::invalid_argument("train config: lr/clip_norm/lr_factor out of range");
    if (batch_size == 0 || grad_accum == 0 || max_epochs == 0)
      throw std::invalid_argument("train config: batch_size/grad_accum/max_epochs must be >= 1");
    if (plateau_patience == 0 || stop_patience < plateau_patience)
      throw std::invalid_argument("train config: need stop_patience >= plateau_patience >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"plateau_patience", c.plateau_patience},
       {"stop_patience", c.stop_patience},
       {"lr_factor", c.lr_factor},
       {"clip_norm", c.clip_norm},
       {"batch_size", c.batch_size},
       {"grad_accum", c.grad_accum},
       {"max_epochs", c.max_epochs},
       {"seed", c.seed},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"adam_eps", c.adam.eps},
       {"target_si_sdri", c.target_si_sdri}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.plateau_patience = j.value("plateau_patience", d.plateau_patience);
  c.stop_patience = j.value("stop_patience", d.stop_patience);
  c.lr_factor = j.value("lr_factor", d.lr_factor);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.grad_accum = j.value("grad_accum", d.grad_accum);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.seed = j.value("seed", d.seed);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.eps = j.value("adam_eps", d.adam.eps);
  c.target_si_sdri = j.value("target_si_sdri", d.target_si_sdri);
}

// ---------------------------------------------------------------------------
// Gradient clipping and Adam

/// Global-norm clipping over all trainable gradients. Returns the applied
/// scale (1.0 when the norm is already within max_norm, boundary inclusive).
template <typename T>
double clip_gradients(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    const Tensor<T>& g = store.grad(i);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double v = double(g[k]);
      if (!std::isfinite(v))
        throw std::runtime_error("clip_gradients: non-finite gradient in " + store.name(i));
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    Tensor<T>& g = store.grad(i);
    scale_inplace(g.size(), T(scale), g.data());
  }
  return scale;
}

/// First/second moment slots aligned with the store; persisted in
/// checkpoints so optimization resumes exactly.
template <typename T>
struct AdamState {
  std::uint64_t t = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState like(const ParamStore<T>& store) {
    AdamState st;
    st.m.reserve(store.count());
    st.v.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
      st.m.push_back(zeros_like(store.value(i)));
      st.v.push_back(zeros_like(store.value(i)));
    }
    return st;
  }
};

/// Bias-corrected Adam update on every trainable entry.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, double lr, const AdamConfig& cfg) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T one_m_b1 = T(1.0 - cfg.beta1), one_m_b2 = T(1.0 - cfg.beta2);
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    Tensor<T>& w = store.value(i);
    const Tensor<T>& g = store.grad(i);
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + one_m_b1 * g[k];
      v[k] = b2 * v[k] + one_m_b2 * g[k] * g[k];
      const double mhat = double(m[k]) / bc1;
      const double vhat = double(v[k]) / bc2;
      w[k] = T(double(w[k]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Plateau schedule: halve after `plateau` consecutive non-improving epochs,
// stop after `stop`. Ties count as non-improvement; both counters reset on
// any strict improvement.

class PlateauSchedule {
 public:
  PlateauSchedule() = default;
  PlateauSchedule(double lr0, std::size_t plateau, std::size_t stop, double factor)
      : lr_(lr0), plateau_(plateau), stop_(stop), factor_(factor) {}

  struct Decision {
    double lr = 0.0;
    bool improved = false;
    bool lr_halved = false;
    bool stop = false;
  };

  Decision observe(double val_loss) {
    Decision d;
    d.improved = val_loss < best_;
    if (d.improved) {
      best_ = val_loss;
      plateau_counter_ = 0;
      stop_counter_ = 0;
    } else {
      ++plateau_counter_;
      ++stop_counter_;
      if (plateau_counter_ >= plateau_) {
        lr_ *= factor_;
        plateau_counter_ = 0;
        d.lr_halved = true;
      }
      if (stop_counter_ >= stop_) d.stop = true;
    }
    d.lr = lr_;
    return d;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t plateau_counter() const { return plateau_counter_; }
  std::size_t stop_counter() const { return stop_counter_; }

  void restore(double lr, double best, std::size_t plateau_counter, std::size_t stop_counter) {
    lr_ = lr;
    best_ = best;
    plateau_counter_ = plateau_counter;
    stop_counter_ = stop_counter;
  }

 private:
  double lr_ = 1e-3;
  std::size_t plateau_ = 7, stop_ = 15;
  double factor_ = 0.5;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t plateau_counter_ = 0, stop_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Dataset in memory

template <typename T>
struct Utterance {
  std::string id;
  MultichannelWaveform<T> mixture;
  std::vector<std::vector<T>> references;
};

template <typename T>
std::vector<Utterance<T>> load_dataset(const DatasetManifest& manifest) {
  namespace fs = std::filesystem;
  std::vector<Utterance<T>> utts;
  utts.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Utterance<T> u;
    u.id = e.id;
    u.mixture = read_wav<T>((fs::path(manifest.root_dir) / e.mixture_path).string());
    for (const auto& rp : e.reference_paths) {
      MultichannelWaveform<T> r = read_wav<T>((fs::path(manifest.root_dir) / rp).string());
      if (r.num_channels != 1)
        throw std::runtime_error("dataset: reference " + rp + " is not single-channel");
      if (r.num_samples != u.mixture.num_samples)
        throw std::runtime_error("dataset: reference " + rp + " length mismatch");
      u.references.emplace_back(r.channel(0), r.channel(0) + r.num_samples);
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

// ---------------------------------------------------------------------------
// Run state and checkpoints

struct RunState {
  std::uint64_t epoch = 0;  // completed epochs
  double lr = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::uint64_t plateau_counter = 0, stop_counter = 0;
  std::uint64_t seed = 0;
};

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store,
                     const AdamState<T>* adam, const RunState* run,
                     const nlohmann::json& meta = nlohmann::json::object()) {
  std::vector<ArchiveEntry> entries;
  append_store(entries, store, "model");
  if (adam) {
    for (std::size_t i = 0; i < store.count(); ++i) {
      if (!store.trainable(i)) continue;
      entries.push_back(ArchiveEntry::make<T>(store.name(i), "adam_m", adam->m[i].data(),
                                              adam->m[i].shape(), false));
      entries.push_back(ArchiveEntry::make<T>(store.name(i), "adam_v", adam->v[i].data(),
                                              adam->v[i].shape(), false));
    }
    entries.push_back(ArchiveEntry::scalar<std::uint64_t>("adam.t", "run", adam->t));
  }
  if (run) {
    entries.push_back(ArchiveEntry::scalar<std::uint64_t>("run.epoch", "run", run->epoch));
    entries.push_back(ArchiveEntry::scalar<double>("run.lr", "run", run->lr));
    entries.push_back(ArchiveEntry::scalar<double>("run.best_val_loss", "run", run->best_val_loss));
    entries.push_back(
        ArchiveEntry::scalar<std::uint64_t>("run.plateau_counter", "run", run->plateau_counter));
    entries.push_back(
        ArchiveEntry::scalar<std::uint64_t>("run.stop_counter", "run", run->stop_counter));
    entries.push_back(ArchiveEntry::scalar<std::uint64_t>("run.seed", "run", run->seed));
  }
  write_archive(path, entries, meta);
}

template <typename T>
Archive load_checkpoint(const std::string& path, ParamStore<T>& store, AdamState<T>* adam,
                        RunState* run) {
  Archive archive = read_archive(path);
  load_store(archive, store, "model");
  if (adam) {
    for (std::size_t i = 0; i < store.count(); ++i) {
      if (!store.trainable(i)) continue;
      bool got_m = false, got_v = false;
      for (const auto& e : archive.entries) {
        if (e.name != store.name(i)) continue;
        if (e.section == "adam_m") {
          e.copy_to(adam->m[i].data(), adam->m[i].size());
          got_m = true;
        } else if (e.section == "adam_v") {
          e.copy_to(adam->v[i].data(), adam->v[i].size());
          got_v = true;
        }
      }
      if (!got_m || !got_v)
        throw std::runtime_error("checkpoint: missing optimizer state for " + store.name(i));
    }
    adam->t = archive.at("adam.t").scalar_value<std::uint64_t>();
  }
  if (run) {
    run->epoch = archive.at("run.epoch").scalar_value<std::uint64_t>();
    run->lr = archive.at("run.lr").scalar_value<double>();
    run->best_val_loss = archive.at("run.best_val_loss").scalar_value<double>();
    run->plateau_counter = archive.at("run.plateau_counter").scalar_value<std::uint64_t>();
    run->stop_counter = archive.at("run.stop_counter").scalar_value<std::uint64_t>();
    run->seed = archive.at("run.seed").scalar_value<std::uint64_t>();
  }
  return archive;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_si_sdri = 0.0;
  double wall_seconds = 0.0;
};

inline nlohmann::json to_metrics_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},         {"lr", m.lr},
          {"train_loss", m.train_loss}, {"val_loss", m.val_loss},
          {"val_si_sdri", m.val_si_sdri}, {"wall_seconds", m.wall_seconds}};
}

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_si_sdri = -std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
  bool stopped_early = false;    // plateau stop rule
  bool reached_target = false;   // target_si_sdri early exit
  bool diverged = false;
  std::string best_checkpoint, last_checkpoint;
};

template <typename T>
constexpr const char* scalar_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

namespace detail {

constexpr std::uint64_t kShuffleStream = 0x5A5A0001;
constexpr std::uint64_t kDropoutStream = 0x5A5A0002;

// deterministic Fisher-Yates
inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngState rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

}  // namespace detail

/// Validation pass: eval mode, dropout off, BN running stats. Returns
/// (mean pit loss, mean SI-SDRi).
template <typename T>
std::pair<double, double> validate_model(const DasFormer<T>& model, ParamStore<T>& store,
                                         const std::vector<Utterance<T>>& utts,
                                         const StftConfig<T>& stft_cfg) {
  double loss_sum = 0.0, sdri_sum = 0.0;
  for (const auto& u : utts) {
    MultichannelWaveform<T> est = separate(model, store, u.mixture, stft_cfg);
    SeparationBatch<T> batch;
    for (std::size_t i = 0; i < u.references.size(); ++i) {
      batch.estimates.push_back(est.channel_span(i));
      batch.references.emplace_back(u.references[i].data(), u.references[i].size());
    }
    batch.mixture = u.mixture.channel_span(0);
    const SeparationScores scores = score_separation(batch);
    double mean_si_sdr = 0.0;
    for (double v : scores.si_sdr_per_speaker) mean_si_sdr += v;
    loss_sum += -mean_si_sdr / double(scores.si_sdr_per_speaker.size());
    sdri_sum += scores.si_sdri;
  }
  return {loss_sum / double(utts.size()), sdri_sum / double(utts.size())};
}

/// Full training protocol: shuffled mini-batches, waveform uPIT loss through
/// the iSTFT, gradient clipping, Adam, plateau-halving lr with early stop,
/// best/last checkpoints and a JSONL metrics log under out_dir. Set
/// resume_from to a checkpoint_last path to continue a run bit-exactly.
template <typename T>
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const StftConfig<T>& stft_cfg, const std::vector<Utterance<T>>& train_set,
                        const std::vector<Utterance<T>>& val_set, const std::string& out_dir,
                        const std::string& resume_from = "", std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  model_cfg.validate();
  train_cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation set");
  fs::create_directories(out_dir);

  BuiltModel<T> built = build_model<T>(model_cfg, RngState(train_cfg.seed));
  ParamStore<T>& store = built.store;
  const DasFormer<T>& model = built.model;
  AdamState<T> adam = AdamState<T>::like(store);
  PlateauSchedule schedule(train_cfg.lr, train_cfg.plateau_patience, train_cfg.stop_patience,
                           train_cfg.lr_factor);

  nlohmann::json meta = {{"model", model_cfg},
                         {"train", train_cfg},
                         {"stft", stft_to_json(stft_cfg)},
                         {"scalar", scalar_name<T>()}};

  std::size_t start_epoch = 0;
  if (!resume_from.empty()) {
    RunState run;
    Archive archive = load_checkpoint(resume_from, store, &adam, &run);
    if (archive.meta.value("model", nlohmann::json::object()) != meta["model"])
      throw std::runtime_error("resume: model config mismatch with checkpoint");
    schedule.restore(run.lr, run.best_val_loss, run.plateau_counter, run.stop_counter);
    start_epoch = run.epoch;
  }

  const std::string best_path = (fs::path(out_dir) / "checkpoint_best.dfck").string();
  const std::string last_path = (fs::path(out_dir) / "checkpoint_last.dfck").string();
  std::ofstream metrics_log((fs::path(out_dir) / "metrics.jsonl").string(),
                            start_epoch == 0 ? std::ios::trunc : std::ios::app);

  const RngState base_rng(train_cfg.seed);
  const std::size_t I = model_cfg.num_speakers;
  const std::size_t n_clip = train_set.front().mixture.num_samples;
  const std::size_t step_samples = train_cfg.batch_size * train_cfg.grad_accum;

  TrainResult result;
  result.best_val_loss = schedule.best();
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;

  typename DasFormer<T>::State state;
  for (std::size_t epoch = start_epoch + 1; epoch <= train_cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_now = schedule.lr();
    const std::vector<std::size_t> order = detail::shuffled_indices(
        train_set.size(), base_rng.derive({detail::kShuffleStream, epoch}));

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool nan_seen = false;
    for (std::size_t start = 0; start < order.size() && !nan_seen; start += step_samples) {
      const std::size_t count = std::min(step_samples, order.size() - start);
      const std::size_t step_idx = start / step_samples;
      store.zero_grad();
      for (std::size_t k = 0; k < count; ++k) {
        const Utterance<T>& u = train_set[order[start + k]];
        RngState sample_rng = base_rng.derive({detail::kDropoutStream, epoch, step_idx, k});

        ComplexSpectrogram<T> spec = stft(u.mixture, stft_cfg);
        Tensor<T> grid = pack_input(spec);
        ForwardOptions<T> opts;
        opts.mode = Mode::kTrain;
        opts.rng = &sample_rng;
        Tensor<T> out = model.forward(store, grid, opts, &state);
        ComplexSpectrogram<T> est_spec = unpack_output(out, spec);
        MultichannelWaveform<T> est = istft(est_spec);

        std::vector<std::span<const T>> est_spans, ref_spans;
        for (std::size_t i = 0; i < I; ++i) {
          est_spans.emplace_back(est.channel(i), n_clip);
          ref_spans.emplace_back(u.references[i].data(), n_clip);
        }
        PitResult pit = pit_loss(est_spans, ref_spans);
        if (!std::isfinite(pit.loss)) {
          nan_seen = true;
          break;
        }
        loss_sum += pit.loss;
        ++loss_count;

        // dL/d(estimate) for the selected assignment only, zero-padded over
        // the istft tail beyond the clip
        MultichannelWaveform<T> grad_wave(I, est.num_samples, est.sample_rate);
        std::vector<T> g(n_clip);
        for (std::size_t i = 0; i < I; ++i) {
          si_sdr_grad(est_spans[i], ref_spans[pit.permutation[i]], std::span<T>(g));
          T* dst = grad_wave.channel(i);
          const T s = T(-1.0 / double(I));
          for (std::size_t t = 0; t < n_clip; ++t) dst[t] = s * g[t];
        }
        ComplexSpectrogram<T> dspec = istft_adjoint(grad_wave, est_spec);
        Tensor<T> dgrid = unpack_output_adjoint(dspec);
        model.backward(store, state, dgrid);
      }
      if (nan_seen) break;
      // mean-over-batch gradient
      for (std::size_t i = 0; i < store.count(); ++i)
        if (store.trainable(i))
          scale_inplace(store.grad(i).size(), T(1.0 / double(count)), store.grad(i).data());
      clip_gradients(store, train_cfg.clip_norm);
      adam_step(store, adam, lr_now, train_cfg.adam);
    }

    if (nan_seen) {
      result.diverged = true;
      if (log) *log << "epoch " << epoch << ": loss diverged, keeping last good checkpoint\n";
      break;
    }

    const auto [val_loss, val_si_sdri] = validate_model(model, store, val_set, stft_cfg);
    if (!std::isfinite(val_loss)) {
      result.diverged = true;
      break;
    }
    const PlateauSchedule::Decision decision = schedule.observe(val_loss);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr_now;
    m.train_loss = loss_count ? loss_sum / double(loss_count) : 0.0;
    m.val_loss = val_loss;
    m.val_si_sdri = val_si_sdri;
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(m);
    metrics_log << to_metrics_json(m).dump() << "\n" << std::flush;
    if (log)
      *log << "epoch " << epoch << " lr " << lr_now << " train " << m.train_loss << " val "
           << val_loss << " si-sdri " << val_si_sdri << " (" << m.wall_seconds << "s)\n";

    RunState run;
    run.epoch = epoch;
    run.lr = schedule.lr();
    run.best_val_loss = schedule.best();
    run.plateau_counter = schedule.plateau_counter();
    run.stop_counter = schedule.stop_counter();
    run.seed = train_cfg.seed;
    save_checkpoint(last_path, store, &adam, &run, meta);
    if (decision.improved) {
      save_checkpoint(best_path, store, &adam, &run, meta);
      result.best_val_si_sdri = val_si_sdri;
    }
    result.best_val_loss = schedule.best();
    result.epochs_run = epoch;

    if (train_cfg.target_si_sdri > 0.0 && val_si_sdri >= train_cfg.target_si_sdri) {
      result.reached_target = true;
      break;
    }
    if (decision.stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct EvalRow {
  std::string id;
  SeparationScores scores;
};

template <typename T>
std::vector<EvalRow> evaluate_model(const DasFormer<T>& model, ParamStore<T>& store,
                                    const std::vector<Utterance<T>>& utts,
                                    const StftConfig<T>& stft_cfg) {
  std::vector<EvalRow> rows;
  for (const auto& u : utts) {
    MultichannelWaveform<T> est = separate(model, store, u.mixture, stft_cfg);
    SeparationBatch<T> batch;
    for (std::size_t i = 0; i < u.references.size(); ++i) {
      batch.estimates.push_back(est.channel_span(i));
      batch.references.emplace_back(u.references[i].data(), u.references[i].size());
    }
    batch.mixture = u.mixture.channel_span(0);
    rows.push_back({u.id, score_separation(batch)});
  }
  return rows;
}

/// One line per utterance: id, best permutation, per-speaker SI-SDR/SDR,
/// improvements. Permutation renders as dash-joined reference indices.
inline std::string eval_report_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  if (rows.empty()) return "";
  const std::size_t I = rows.front().scores.si_sdr_per_speaker.size();
  os << "id,best_perm";
  for (std::size_t i = 0; i < I; ++i) os << ",si_sdr_" << i;
  for (std::size_t i = 0; i < I; ++i) os << ",sdr_" << i;
  os << ",si_sdri,sdri\n";
  for (const auto& row : rows) {
    os << row.id << ",";
    for (std::size_t i = 0; i < row.scores.permutation.size(); ++i)
      os << (i ? "-" : "") << row.scores.permutation[i];
    os.setf(std::ios::fixed);
    os.precision(4);
    for (double v : row.scores.si_sdr_per_speaker) os << "," << v;
    for (double v : row.scores.sdr_per_speaker) os << "," << v;
    os << "," << row.scores.si_sdri << "," << row.scores.sdri << "\n";
  }
  return os.str();
}

}  // namespace dasformer
