// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dasformer/rng.hpp"
#include "dasformer/signal.hpp"
#include "dasformer/wav.hpp"

namespace dasformer {

enum class SourceKind { kBandNoise, kMultitone, kAmChirp };

inline const char* source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::kBandNoise: return "band-noise";
    case SourceKind::kMultitone: return "multitone";
    default: return "am-chirp";
  }
}

inline SourceKind source_kind_from(const std::string& s) {
  if (s == "band-noise") return SourceKind::kBandNoise;
  if (s == "multitone") return SourceKind::kMultitone;
  if (s == "am-chirp") return SourceKind::kAmChirp;
  throw std::invalid_argument("unknown source kind: " + s);
}

/// Everything that determines one synthetic scene. The seed fixes sources,
/// filters and mixing completely.
struct SceneConfig {
  std::size_t num_speakers = 2;  // I
  std::size_t num_mics = 2;      // M
  std::size_t sample_rate = 8000;
  double clip_seconds = 2.0;
  std::size_t rir_len = 512;
  double decay_min = 0.008, decay_max = 0.02;      // per-sample exponential decay range
  std::size_t mic_delay_min = 0, mic_delay_max = 8;  // inter-mic direct-path delay, samples
  SourceKind source_kind = SourceKind::kBandNoise;
  std::uint64_t seed = 0;
  bool dry_targets = false;   // WHAMR!-style: clean sources as targets
  double noise_snr_db = 0.0;  // additive mixture noise when dry_targets and > 0

  std::size_t clip_samples() const {
    return std::size_t(std::llround(clip_seconds * double(sample_rate)));
  }

  void validate() const {
    if (num_speakers < 2) throw std::invalid_argument("scene: num_speakers must be >= 2");
    if (num_mics < 1) throw std::invalid_argument("scene: num_mics must be >= 1");
    if (sample_rate == 0) throw std::invalid_argument("scene: sample_rate must be positive");
    if (rir_len < 1) throw std::invalid_argument("scene: rir_len must be >= 1");
    if (clip_samples() < std::max<std::size_t>(512, rir_len))
      throw std::invalid_argument("scene: clip too short for the filter length");
    if (decay_min <= 0.0 || decay_max < decay_min)
      throw std::invalid_argument("scene: bad decay range");
    if (mic_delay_max < mic_delay_min || mic_delay_max + 16 >= rir_len)
      throw std::invalid_argument("scene: bad mic delay range");
  }
};

inline void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"speakers", c.num_speakers},
       {"mics", c.num_mics},
       {"sample_rate", c.sample_rate},
       {"clip_seconds", c.clip_seconds},
       {"rir_len", c.rir_len},
       {"decay_min", c.decay_min},
       {"decay_max", c.decay_max},
       {"mic_delay_min", c.mic_delay_min},
       {"mic_delay_max", c.mic_delay_max},
       {"source_kind", source_kind_name(c.source_kind)},
       {"seed", c.seed},
       {"dry_targets", c.dry_targets},
       {"noise_snr_db", c.noise_snr_db}};
}

inline void from_json(const nlohmann::json& j, SceneConfig& c) {
  SceneConfig d;
  c.num_speakers = j.value("speakers", d.num_speakers);
  c.num_mics = j.value("mics", d.num_mics);
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.clip_seconds = j.value("clip_seconds", d.clip_seconds);
  c.rir_len = j.value("rir_len", d.rir_len);
  c.decay_min = j.value("decay_min", d.decay_min);
  c.decay_max = j.value("decay_max", d.decay_max);
  c.mic_delay_min = j.value("mic_delay_min", d.mic_delay_min);
  c.mic_delay_max = j.value("mic_delay_max", d.mic_delay_max);
  c.source_kind = source_kind_from(j.value("source_kind", std::string("band-noise")));
  c.seed = j.value("seed", d.seed);
  c.dry_targets = j.value("dry_targets", d.dry_targets);
  c.noise_snr_db = j.value("noise_snr_db", d.noise_snr_db);
}

// ---------------------------------------------------------------------------
// Sources

/// Fixed per-speaker frequency bands: the usable range [0.05, 0.9] * nyquist
/// split into I chunks with 10% guard on each side. Band-noise and am-chirp
/// sources are confined to these.
inline std::vector<std::pair<double, double>> band_ranges(const SceneConfig& cfg) {
  const double nyq = double(cfg.sample_rate) / 2.0;
  const double lo = 0.05 * nyq, hi = 0.9 * nyq;
  const double chunk = (hi - lo) / double(cfg.num_speakers);
  const double guard = 0.1 * chunk;
  std::vector<std::pair<double, double>> bands(cfg.num_speakers);
  for (std::size_t i = 0; i < cfg.num_speakers; ++i)
    bands[i] = {lo + double(i) * chunk + guard, lo + double(i + 1) * chunk - guard};
  return bands;
}

namespace detail {

// Windowed-sinc (Hamming) linear-phase bandpass, "same" convolution.
inline std::vector<double> bandpass(const std::vector<double>& x, double lo_hz, double hi_hz,
                                    double fs, std::size_t taps = 255) {
  const auto M = std::ptrdiff_t(taps / 2);
  const double fl = lo_hz / fs, fh = hi_hz / fs;
  std::vector<double> h(taps);
  for (std::size_t n = 0; n < taps; ++n) {
    const double m = double(std::ptrdiff_t(n) - M);
    double v;
    if (m == 0.0) {
      v = 2.0 * (fh - fl);
    } else {
      v = (std::sin(2.0 * kPi * fh * m) - std::sin(2.0 * kPi * fl * m)) / (kPi * m);
    }
    v *= 0.54 - 0.46 * std::cos(2.0 * kPi * double(n) / double(taps - 1));
    h[n] = v;
  }
  std::vector<double> y(x.size(), 0.0);
  const auto n_sig = std::ptrdiff_t(x.size());
  for (std::ptrdiff_t n = 0; n < n_sig; ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t idx = n - std::ptrdiff_t(k) + M;
      if (idx >= 0 && idx < n_sig) acc += h[k] * x[std::size_t(idx)];
    }
    y[std::size_t(n)] = acc;
  }
  return y;
}

// Alternating on/off gating with 10 ms raised-cosine ramps; starts "on".
inline std::vector<double> on_off_envelope(std::size_t n, double fs, RngState& rng) {
  std::vector<double> env(n, 0.0);
  const auto ramp = std::size_t(0.010 * fs);
  std::size_t pos = 0;
  bool on = true;
  while (pos < n) {
    const double dur = on ? rng.uniform(0.15, 0.45) : rng.uniform(0.05, 0.20);
    const std::size_t len = std::min(n - pos, std::size_t(dur * fs));
    if (on) {
      for (std::size_t i = 0; i < len; ++i) {
        double g = 1.0;
        if (i < ramp) g = 0.5 * (1.0 - std::cos(kPi * double(i) / double(ramp)));
        if (len - 1 - i < ramp) g = std::min(g, 0.5 * (1.0 - std::cos(kPi * double(len - 1 - i) / double(ramp))));
        env[pos + i] = g;
      }
    }
    pos += len;
    on = !on;
  }
  return env;
}

inline void peak_normalize(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx > 0.0) {
    const double s = peak / mx;
    for (double& v : x) v *= s;
  }
}

}  // namespace detail

/// I single-channel sources, peak-normalized to 0.9, pairwise spectrally
/// disjoint by construction (band-confined noise, interleaved tone stacks, or
/// band-confined AM chirps).
inline std::vector<std::vector<double>> gen_sources(const SceneConfig& cfg, RngState& rng) {
  cfg.validate();
  const std::size_t n = cfg.clip_samples();
  const double fs = double(cfg.sample_rate);
  const auto bands = band_ranges(cfg);
  std::vector<std::vector<double>> sources(cfg.num_speakers);

  switch (cfg.source_kind) {
    case SourceKind::kBandNoise: {
      for (std::size_t i = 0; i < cfg.num_speakers; ++i) {
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal();
        const std::vector<double> env = detail::on_off_envelope(n, fs, rng);
        for (std::size_t t = 0; t < n; ++t) x[t] *= env[t];
        sources[i] = detail::bandpass(x, bands[i].first, bands[i].second, fs);
      }
      break;
    }
    case SourceKind::kMultitone: {
      // interleaved harmonic stacks; later speakers drop partials that land
      // within 100 Hz of an earlier speaker's partial
      std::vector<double> used;
      for (std::size_t i = 0; i < cfg.num_speakers; ++i) {
        const double f0 = rng.uniform(90.0 + 70.0 * double(i), 150.0 + 70.0 * double(i));
        std::vector<double> x(n, 0.0);
        for (std::size_t k = 1; k * std::size_t(f0) < std::size_t(0.9 * fs / 2.0); ++k) {
          const double f = f0 * double(k);
          bool clash = false;
          for (double u : used)
            if (std::abs(u - f) < 100.0) clash = true;
          if (clash) continue;
          used.push_back(f);
          const double phase = rng.uniform(0.0, 2.0 * kPi);
          const double amp = 1.0 / double(k);
          for (std::size_t t = 0; t < n; ++t)
            x[t] += amp * std::sin(2.0 * kPi * f * double(t) / fs + phase);
        }
        const double am_rate = rng.uniform(0.5, 2.0);
        for (std::size_t t = 0; t < n; ++t)
          x[t] *= 0.6 + 0.4 * std::sin(2.0 * kPi * am_rate * double(t) / fs);
        sources[i] = std::move(x);
      }
      break;
    }
    case SourceKind::kAmChirp: {
      for (std::size_t i = 0; i < cfg.num_speakers; ++i) {
        const double f_lo = bands[i].first, f_hi = bands[i].second;
        const double am_rate = rng.uniform(1.0, 4.0);
        const double am_phase = rng.uniform(0.0, 2.0 * kPi);
        const double phase0 = rng.uniform(0.0, 2.0 * kPi);
        std::vector<double> x(n);
        double phase = phase0;
        for (std::size_t t = 0; t < n; ++t) {
          const double u = double(t) / double(n);                 // triangle sweep lo->hi->lo
          const double frac = u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u);
          const double f = f_lo + (f_hi - f_lo) * frac;
          phase += 2.0 * kPi * f / fs;
          x[t] = (0.6 + 0.4 * std::sin(2.0 * kPi * am_rate * double(t) / fs + am_phase)) *
                 std::sin(phase);
        }
        sources[i] = std::move(x);
      }
      break;
    }
  }

  for (auto& s : sources) detail::peak_normalize(s, 0.9);
  return sources;
}

// ---------------------------------------------------------------------------
// Room filters

/// FIR realization of the speaker-to-mic convolution paths: a unit direct tap
/// at direct_delay[i][m] plus sparse reflections bounded by the envelope
/// |tap[l]| <= exp(-decay_rate * (l - direct_delay)) for l >= direct_delay.
struct RoomFilterSet {
  std::size_t num_speakers = 0, num_mics = 0, rir_len = 0;
  double decay_rate = 0.0;
  std::vector<std::vector<double>> taps;             // [i * M + m]
  std::vector<std::vector<std::size_t>> direct_delay;  // [i][m]

  const std::vector<double>& filter(std::size_t i, std::size_t m) const {
    return taps[i * num_mics + m];
  }
};

inline RoomFilterSet gen_filters(const SceneConfig& cfg, RngState& rng) {
  cfg.validate();
  RoomFilterSet set;
  set.num_speakers = cfg.num_speakers;
  set.num_mics = cfg.num_mics;
  set.rir_len = cfg.rir_len;
  set.decay_rate = rng.uniform(cfg.decay_min, cfg.decay_max);
  set.taps.assign(cfg.num_speakers * cfg.num_mics, std::vector<double>(cfg.rir_len, 0.0));
  set.direct_delay.assign(cfg.num_speakers, std::vector<std::size_t>(cfg.num_mics, 0));

  for (std::size_t i = 0; i < cfg.num_speakers; ++i) {
    const auto base = std::size_t(rng.uniform_index(8));
    std::vector<std::size_t> offsets;
    for (std::size_t m = 0; m < cfg.num_mics; ++m) {
      // distinct per-mic direct delays
      std::size_t off = 0;
      for (int attempt = 0; attempt < 16; ++attempt) {
        off = cfg.mic_delay_min +
              std::size_t(rng.uniform_index(cfg.mic_delay_max - cfg.mic_delay_min + 1));
        if (std::find(offsets.begin(), offsets.end(), off) == offsets.end()) break;
        off = (off + m) % (cfg.mic_delay_max + 1);
      }
      offsets.push_back(off);
      const std::size_t d = base + off;
      set.direct_delay[i][m] = d;

      std::vector<double>& h = set.taps[i * cfg.num_mics + m];
      h[d] = 1.0;
      const std::size_t reflections = 4 + rng.uniform_index(1 + cfg.rir_len / 48);
      for (std::size_t r = 0; r < reflections; ++r) {
        const std::size_t l = d + 1 + rng.uniform_index(cfg.rir_len - d - 1);
        const double mag = rng.uniform(0.2, 0.95) * std::exp(-set.decay_rate * double(l - d));
        h[l] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Mixing

template <typename T>
struct MixResult {
  MultichannelWaveform<T> mixture;      // M x N
  std::vector<std::vector<T>> targets;  // I x N: images at mic 0, or dry sources
  double scale = 1.0;
};

namespace detail {

inline std::vector<double> fir_convolve_truncated(const std::vector<double>& x,
                                                  const std::vector<double>& h, std::size_t n) {
  std::vector<double> y(n, 0.0);
  for (std::size_t l = 0; l < h.size(); ++l) {
    const double w = h[l];
    if (w == 0.0) continue;
    for (std::size_t t = l; t < n; ++t) y[t] += w * x[t - l];
  }
  return y;
}

}  // namespace detail

/// Convolves each source with its per-mic filter, sums speaker images into
/// the mixture, and keeps the reference-mic (m = 0) images as targets. A
/// single rescale keeps |mixture| under 0.99 and is applied to the targets
/// too, so sum_i targets_i == mixture channel 0 holds bit-exactly.
template <typename T>
MixResult<T> mix(const std::vector<std::vector<double>>& sources, const RoomFilterSet& filters,
                 const SceneConfig& cfg, RngState* noise_rng = nullptr) {
  cfg.validate();
  const std::size_t I = cfg.num_speakers, M = cfg.num_mics, n = cfg.clip_samples();
  if (sources.size() != I) throw std::invalid_argument("mix: source count mismatch");
  for (const auto& s : sources)
    if (s.size() != n) throw std::invalid_argument("mix: source length mismatch");
  if (filters.num_speakers != I || filters.num_mics != M)
    throw std::invalid_argument("mix: filter set shape mismatch");

  std::vector<std::vector<double>> images(I * M);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t m = 0; m < M; ++m)
      images[i * M + m] = detail::fir_convolve_truncated(sources[i], filters.filter(i, m), n);

  double peak = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < I; ++i) acc += images[i * M + m][t];
      peak = std::max(peak, std::abs(acc));
    }
  if (!std::isfinite(peak)) throw std::runtime_error("mix: non-finite mixture");
  const double scale = peak > 0.99 ? 0.99 / peak : 1.0;

  for (auto& img : images)
    for (double& v : img) v *= scale;

  MixResult<T> out;
  out.scale = scale;
  out.mixture = MultichannelWaveform<T>(M, n, cfg.sample_rate);
  for (std::size_t m = 0; m < M; ++m) {
    T* y = out.mixture.channel(m);
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < I; ++i) acc += double(T(images[i * M + m][t]));
      y[t] = T(acc);
    }
  }

  out.targets.assign(I, std::vector<T>(n));
  for (std::size_t i = 0; i < I; ++i) {
    if (cfg.dry_targets) {
      for (std::size_t t = 0; t < n; ++t) out.targets[i][t] = T(scale * sources[i][t]);
    } else {
      for (std::size_t t = 0; t < n; ++t) out.targets[i][t] = T(images[i * M][t]);
    }
  }

  if (cfg.dry_targets && cfg.noise_snr_db > 0.0) {
    if (!noise_rng) throw std::invalid_argument("mix: additive noise requested without rng");
    double sig_energy = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      sig_energy += dot_d(n, out.mixture.channel(m), out.mixture.channel(m));
    const double noise_std =
        std::sqrt((sig_energy / double(M * n)) * std::pow(10.0, -cfg.noise_snr_db / 10.0));
    for (std::size_t m = 0; m < M; ++m) {
      T* y = out.mixture.channel(m);
      for (std::size_t t = 0; t < n; ++t) y[t] += T(noise_std * noise_rng->normal());
    }
  }

  out.mixture.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Dataset on disk: float32 WAVs plus a JSON-lines manifest per split.

struct ManifestEntry {
  std::string id;
  std::string mixture_path;                   // relative to the manifest directory
  std::vector<std::string> reference_paths;
  nlohmann::json scene;
};

struct DatasetManifest {
  std::string root_dir;
  std::vector<ManifestEntry> entries;
};

struct DatasetCounts {
  std::size_t train = 0, val = 0, test = 0;
};

namespace detail {

inline std::uint64_t split_tag(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw std::invalid_argument("unknown split: " + split);
}

}  // namespace detail

/// Generates one utterance of a split deterministically from
/// (cfg.seed, split, index).
inline MixResult<double> make_utterance(const SceneConfig& cfg, const std::string& split,
                                        std::size_t index) {
  RngState rng = RngState(cfg.seed).derive({detail::split_tag(split), index});
  const auto sources = gen_sources(cfg, rng);
  const auto filters = gen_filters(cfg, rng);
  return mix<double>(sources, filters, cfg, &rng);
}

inline DatasetManifest build_split(const SceneConfig& cfg, const std::string& split,
                                   std::size_t count, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.root_dir = out_dir;

  std::ofstream jsonl(fs::path(out_dir) / (split + ".jsonl"), std::ios::trunc);
  if (!jsonl) throw std::runtime_error("build_dataset: cannot write manifest in " + out_dir);

  for (std::size_t u = 0; u < count; ++u) {
    MixResult<double> res = make_utterance(cfg, split, u);
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%05zu", split.c_str(), u);

    ManifestEntry entry;
    entry.id = idbuf;
    entry.mixture_path = entry.id + "_mix.wav";
    write_wav(( fs::path(out_dir) / entry.mixture_path).string(), res.mixture, WavFormat::kFloat32);
    for (std::size_t i = 0; i < cfg.num_speakers; ++i) {
      MultichannelWaveform<double> ref(1, res.targets[i].size(), cfg.sample_rate);
      std::copy(res.targets[i].begin(), res.targets[i].end(), ref.channel(0));
      entry.reference_paths.push_back(entry.id + "_src" + std::to_string(i) + ".wav");
      write_wav((fs::path(out_dir) / entry.reference_paths.back()).string(), ref,
                WavFormat::kFloat32);
    }
    entry.scene = cfg;
    entry.scene["split"] = split;
    entry.scene["index"] = u;

    nlohmann::json line = {{"id", entry.id},
                           {"mixture", entry.mixture_path},
                           {"references", entry.reference_paths},
                           {"scene", entry.scene}};
    jsonl << line.dump() << "\n";
    manifest.entries.push_back(std::move(entry));
  }
  if (!jsonl) throw std::runtime_error("build_dataset: manifest write failed in " + out_dir);
  return manifest;
}

/// Writes train/val/test splits (WAVs + one manifest each) under out_dir and
/// returns the combined manifest. Per-split seeds are disjoint substreams.
inline DatasetManifest build_dataset(const SceneConfig& cfg, const DatasetCounts& counts,
                                     const std::string& out_dir) {
  cfg.validate();
  DatasetManifest all;
  all.root_dir = out_dir;
  for (const auto& [split, count] : {std::pair<std::string, std::size_t>{"train", counts.train},
                                     {"val", counts.val},
                                     {"test", counts.test}}) {
    if (count == 0) continue;
    DatasetManifest part = build_split(cfg, split, count, out_dir);
    for (auto& e : part.entries) all.entries.push_back(std::move(e));
  }
  return all;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  DatasetManifest manifest;
  manifest.root_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry entry;
    entry.id = j.at("id").get<std::string>();
    entry.mixture_path = j.at("mixture").get<std::string>();
    entry.reference_paths = j.at("references").get<std::vector<std::string>>();
    entry.scene = j.value("scene", nlohmann::json::object());
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Separability oracle: ideal binary mask from ground-truth spectrograms.

/// Masks the reference-channel mixture by per-bin magnitude argmax over the
/// true target spectrograms, then resynthesizes. Establishes that a dataset
/// is solvable independent of any model.
template <typename T>
std::vector<std::vector<T>> ideal_mask_estimates(const MultichannelWaveform<T>& mixture,
                                                 const std::vector<std::vector<T>>& targets,
                                                 const StftConfig<T>& stft_cfg) {
  const std::size_t n = mixture.num_samples;
  MultichannelWaveform<T> ref_wave(1, n, mixture.sample_rate);
  std::copy(mixture.channel(0), mixture.channel(0) + n, ref_wave.channel(0));
  ComplexSpectrogram<T> mix_spec = stft(ref_wave, stft_cfg);

  std::vector<ComplexSpectrogram<T>> target_specs;
  for (const auto& t : targets) {
    MultichannelWaveform<T> w(1, n, mixture.sample_rate);
    std::copy(t.begin(), t.end(), w.channel(0));
    target_specs.push_back(stft(w, stft_cfg));
  }

  std::vector<std::vector<T>> estimates;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ComplexSpectrogram<T> masked = mix_spec;
    for (std::size_t p = 0; p < masked.data.size(); ++p) {
      const double mine = std::abs(std::complex<double>(target_specs[i].data[p]));
      bool winner = true;
      for (std::size_t j = 0; j < targets.size() && winner; ++j)
        if (j != i && std::abs(std::complex<double>(target_specs[j].data[p])) > mine) winner = false;
      if (!winner) masked.data[p] = std::complex<T>(T(0), T(0));
    }
    MultichannelWaveform<T> est = istft(masked);
    std::vector<T> trimmed(n);
    std::copy(est.channel(0), est.channel(0) + n, trimmed.begin());
    estimates.push_back(std::move(trimmed));
  }
  return estimates;
}

}  // namespace dasformer
