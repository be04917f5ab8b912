// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dasformer/fft.hpp"
#include "dasformer/tensor.hpp"

namespace dasformer {

/// M x N sample grid, channel-major. Amplitudes are dimensionless with
/// nominal range [-1, 1].
template <typename T>
struct MultichannelWaveform {
  std::size_t num_channels = 0;
  std::size_t num_samples = 0;
  std::size_t sample_rate = 0;
  std::vector<T> samples;  // [channel][sample]

  MultichannelWaveform() = default;
  MultichannelWaveform(std::size_t channels, std::size_t n, std::size_t rate)
      : num_channels(channels), num_samples(n), sample_rate(rate), samples(channels * n, T(0)) {}

  T* channel(std::size_t m) { return samples.data() + m * num_samples; }
  const T* channel(std::size_t m) const { return samples.data() + m * num_samples; }
  std::span<const T> channel_span(std::size_t m) const { return {channel(m), num_samples}; }

  void validate() const {
    if (num_channels < 1 || num_samples < 1)
      throw std::invalid_argument("waveform: need at least 1 channel and 1 sample");
    if (sample_rate == 0) throw std::invalid_argument("waveform: sample_rate must be positive");
    if (samples.size() != num_channels * num_samples)
      throw std::invalid_argument("waveform: sample buffer size mismatch");
    for (const T& v : samples)
      if (!std::isfinite(double(v))) throw std::invalid_argument("waveform: non-finite sample");
  }
};

enum class WindowKind { kHann, kRectangular, kCustom };

inline const char* window_kind_name(WindowKind k) {
  switch (k) {
    case WindowKind::kHann: return "hann";
    case WindowKind::kRectangular: return "rect";
    default: return "custom";
  }
}

/// Analysis frame length / hop / window. Synthesis uses the canonical
/// weighted-overlap-add dual window w~ = w / sum_k w^2(n - kH), so the
/// analysis-synthesis overlap sum is exactly 1 wherever the window has
/// nonzero overlap coverage.
template <typename T>
struct StftConfig {
  std::size_t frame_len = 0;
  std::size_t hop_len = 0;
  std::vector<T> window;
  WindowKind kind = WindowKind::kCustom;

  static StftConfig hann(std::size_t frame_len, std::size_t hop_len) {
    StftConfig cfg;
    cfg.frame_len = frame_len;
    cfg.hop_len = hop_len;
    cfg.kind = WindowKind::kHann;
    cfg.window.resize(frame_len);
    for (std::size_t i = 0; i < frame_len; ++i)
      cfg.window[i] = T(0.5 * (1.0 - std::cos(2.0 * kPi * double(i) / double(frame_len))));
    cfg.validate();
    return cfg;
  }

  static StftConfig rectangular(std::size_t frame_len, std::size_t hop_len) {
    StftConfig cfg;
    cfg.frame_len = frame_len;
    cfg.hop_len = hop_len;
    cfg.kind = WindowKind::kRectangular;
    cfg.window.assign(frame_len, T(1));
    cfg.validate();
    return cfg;
  }

  /// 32 ms frames with 16 ms shift at the given rate, periodic Hann.
  static StftConfig for_sample_rate(std::size_t rate, double frame_ms = 32.0, double hop_ms = 16.0) {
    const auto frame = std::size_t(std::lround(frame_ms * double(rate) / 1000.0));
    const auto hop = std::size_t(std::lround(hop_ms * double(rate) / 1000.0));
    return hann(frame, hop);
  }

  std::size_t num_bins() const { return frame_len / 2 + 1; }

  std::size_t num_frames(std::size_t n) const {
    if (n < frame_len) throw std::invalid_argument("stft: signal shorter than one frame");
    return 1 + (n - frame_len + hop_len - 1) / hop_len;
  }

  void validate() const {
    if (frame_len == 0 || hop_len == 0) throw std::invalid_argument("stft config: zero frame or hop");
    if (hop_len > frame_len) throw std::invalid_argument("stft config: hop_len > frame_len");
    if (frame_len % 2 != 0) throw std::invalid_argument("stft config: frame_len must be even");
    if (window.size() != frame_len)
      throw std::invalid_argument("stft config: window length != frame_len");
    overlap_power();  // throws when the hop leaves coverage gaps
  }

  /// sum_k w^2(n - kH), one hop period. Must stay away from zero for the
  /// dual window to exist.
  std::vector<double> overlap_power() const {
    std::vector<double> d(hop_len, 0.0);
    for (std::size_t m = 0; m < frame_len; ++m) d[m % hop_len] += double(window[m]) * double(window[m]);
    for (double v : d)
      if (v < 1e-12)
        throw std::invalid_argument("stft config: window/hop has zero overlap coverage");
    return d;
  }

  std::vector<double> synthesis_window() const {
    const std::vector<double> d = overlap_power();
    std::vector<double> syn(frame_len);
    for (std::size_t m = 0; m < frame_len; ++m) syn[m] = double(window[m]) / d[m % hop_len];
    return syn;
  }

  /// max |sum_k w(n-kH) * w~(n-kH) - 1| over one hop period.
  double overlap_unity_error() const {
    const std::vector<double> syn = synthesis_window();
    std::vector<double> acc(hop_len, 0.0);
    for (std::size_t m = 0; m < frame_len; ++m) acc[m % hop_len] += double(window[m]) * syn[m];
    double err = 0.0;
    for (double v : acc) err = std::max(err, std::abs(v - 1.0));
    return err;
  }
};

/// C x T x F complex grid; C is microphones or speakers depending on which
/// side of the model it sits. Carries everything needed for inversion.
template <typename T>
struct ComplexSpectrogram {
  std::size_t num_channels = 0;
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  std::size_t frame_len = 0;
  std::size_t hop_len = 0;
  std::size_t sample_rate = 0;
  std::vector<T> window;
  std::vector<std::complex<T>> data;  // [channel][frame][bin]

  std::complex<T>& at(std::size_t c, std::size_t t, std::size_t f) {
    return data[(c * num_frames + t) * num_bins + f];
  }
  const std::complex<T>& at(std::size_t c, std::size_t t, std::size_t f) const {
    return data[(c * num_frames + t) * num_bins + f];
  }
};

template <typename T>
ComplexSpectrogram<T> stft(const MultichannelWaveform<T>& wave, const StftConfig<T>& cfg) {
  wave.validate();
  cfg.validate();
  const std::size_t frames = cfg.num_frames(wave.num_samples);
  const std::size_t bins = cfg.num_bins();

  ComplexSpectrogram<T> spec;
  spec.num_channels = wave.num_channels;
  spec.num_frames = frames;
  spec.num_bins = bins;
  spec.frame_len = cfg.frame_len;
  spec.hop_len = cfg.hop_len;
  spec.sample_rate = wave.sample_rate;
  spec.window = cfg.window;
  spec.data.resize(wave.num_channels * frames * bins);

  std::vector<double> frame(cfg.frame_len);
  std::vector<std::complex<double>> out(bins);
  for (std::size_t m = 0; m < wave.num_channels; ++m) {
    const T* x = wave.channel(m);
    for (std::size_t k = 0; k < frames; ++k) {
      const std::size_t start = k * cfg.hop_len;
      for (std::size_t n = 0; n < cfg.frame_len; ++n) {
        const std::size_t idx = start + n;
        const double v = idx < wave.num_samples ? double(x[idx]) : 0.0;  // tail zero-pad
        frame[n] = v * double(cfg.window[n]);
      }
      rfft(frame.data(), cfg.frame_len, out.data());
      std::complex<T>* dst = &spec.at(m, k, 0);
      for (std::size_t f = 0; f < bins; ++f) dst[f] = std::complex<T>(T(out[f].real()), T(out[f].imag()));
    }
  }
  return spec;
}

namespace detail {

template <typename T>
StftConfig<T> config_of(const ComplexSpectrogram<T>& spec) {
  if (spec.num_bins != spec.frame_len / 2 + 1)
    throw std::invalid_argument("istft: num_bins inconsistent with frame_len");
  StftConfig<T> cfg;
  cfg.frame_len = spec.frame_len;
  cfg.hop_len = spec.hop_len;
  cfg.window = spec.window;
  cfg.validate();
  return cfg;
}

}  // namespace detail

/// Output length of istft before any trimming.
inline std::size_t istft_length(std::size_t frames, std::size_t frame_len, std::size_t hop_len) {
  return (frames - 1) * hop_len + frame_len;
}

/// Weighted overlap-add synthesis with the dual window. Reconstruction of the
/// interior of an unmodified spectrogram is exact; the first and last
/// frame_len-hop samples have partial overlap coverage and come back
/// attenuated.
template <typename T>
MultichannelWaveform<T> istft(const ComplexSpectrogram<T>& spec) {
  const StftConfig<T> cfg = detail::config_of(spec);
  const std::vector<double> syn = cfg.synthesis_window();
  const std::size_t out_len = istft_length(spec.num_frames, spec.frame_len, spec.hop_len);

  MultichannelWaveform<T> wave(spec.num_channels, out_len, spec.sample_rate);
  std::vector<double> acc(out_len);
  std::vector<std::complex<double>> X(spec.num_bins);
  std::vector<double> frame(spec.frame_len);
  for (std::size_t c = 0; c < spec.num_channels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < spec.num_frames; ++k) {
      const std::complex<T>* src = &spec.at(c, k, 0);
      for (std::size_t f = 0; f < spec.num_bins; ++f)
        X[f] = std::complex<double>(double(src[f].real()), double(src[f].imag()));
      irfft(X.data(), spec.frame_len, frame.data());
      double* dst = acc.data() + k * spec.hop_len;
      for (std::size_t n = 0; n < spec.frame_len; ++n) dst[n] += syn[n] * frame[n];
    }
    T* out = wave.channel(c);
    for (std::size_t n = 0; n < out_len; ++n) out[n] = T(acc[n]);
  }
  return wave;
}

/// Adjoint of istft: maps dL/d(waveform) (at the untrimmed istft length) back
/// to dL/d(spectrogram). Metadata is copied from `like`.
template <typename T>
ComplexSpectrogram<T> istft_adjoint(const MultichannelWaveform<T>& grad_wave,
                                    const ComplexSpectrogram<T>& like) {
  const StftConfig<T> cfg = detail::config_of(like);
  const std::size_t out_len = istft_length(like.num_frames, like.frame_len, like.hop_len);
  if (grad_wave.num_channels != like.num_channels || grad_wave.num_samples != out_len)
    throw std::invalid_argument("istft_adjoint: gradient shape mismatch");
  const std::vector<double> syn = cfg.synthesis_window();

  ComplexSpectrogram<T> grad = like;
  std::vector<double> dframe(like.frame_len);
  std::vector<std::complex<double>> dX(like.num_bins);
  for (std::size_t c = 0; c < like.num_channels; ++c) {
    const T* g = grad_wave.channel(c);
    for (std::size_t k = 0; k < like.num_frames; ++k) {
      const T* gk = g + k * like.hop_len;
      for (std::size_t n = 0; n < like.frame_len; ++n) dframe[n] = syn[n] * double(gk[n]);
      irfft_adjoint(dframe.data(), like.frame_len, dX.data());
      std::complex<T>* dst = &grad.at(c, k, 0);
      for (std::size_t f = 0; f < like.num_bins; ++f)
        dst[f] = std::complex<T>(T(dX[f].real()), T(dX[f].imag()));
    }
  }
  return grad;
}

/// Interleave an M-channel spectrogram into a 2M-channel real grid:
/// channel 2m holds Re(Y_m), channel 2m+1 holds Im(Y_m).
template <typename T>
Tensor<T> pack_input(const ComplexSpectrogram<T>& spec) {
  Tensor<T> grid({2 * spec.num_channels, spec.num_frames, spec.num_bins});
  const std::size_t plane = spec.num_frames * spec.num_bins;
  for (std::size_t m = 0; m < spec.num_channels; ++m) {
    T* re = grid.data() + (2 * m) * plane;
    T* im = grid.data() + (2 * m + 1) * plane;
    const std::complex<T>* src = spec.data.data() + m * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      re[i] = src[i].real();
      im[i] = src[i].imag();
    }
  }
  return grid;
}

/// Inverse of pack_input; `like` supplies frame/hop/window metadata. Used on
/// the decoder side, where channel pairs (2i, 2i+1) are speaker i's
/// (Re, Im) coefficients.
template <typename T>
ComplexSpectrogram<T> unpack_output(const Tensor<T>& grid, const ComplexSpectrogram<T>& like) {
  if (grid.rank() != 3) throw std::invalid_argument("unpack_output: grid must be rank 3");
  if (grid.dim(0) % 2 != 0)
    throw std::invalid_argument("unpack_output: channel count must be even, got " +
                                std::to_string(grid.dim(0)));
  if (grid.dim(1) != like.num_frames || grid.dim(2) != like.num_bins)
    throw std::invalid_argument("unpack_output: T/F mismatch with reference spectrogram");

  ComplexSpectrogram<T> spec;
  spec.num_channels = grid.dim(0) / 2;
  spec.num_frames = like.num_frames;
  spec.num_bins = like.num_bins;
  spec.frame_len = like.frame_len;
  spec.hop_len = like.hop_len;
  spec.sample_rate = like.sample_rate;
  spec.window = like.window;
  spec.data.resize(spec.num_channels * spec.num_frames * spec.num_bins);

  const std::size_t plane = spec.num_frames * spec.num_bins;
  for (std::size_t i = 0; i < spec.num_channels; ++i) {
    const T* re = grid.data() + (2 * i) * plane;
    const T* im = grid.data() + (2 * i + 1) * plane;
    std::complex<T>* dst = spec.data.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = std::complex<T>(re[p], im[p]);
  }
  return spec;
}

/// Adjoint of unpack_output (trivial: split complex gradients back into the
/// interleaved channel grid).
template <typename T>
Tensor<T> unpack_output_adjoint(const ComplexSpectrogram<T>& grad_spec) {
  Tensor<T> grid({2 * grad_spec.num_channels, grad_spec.num_frames, grad_spec.num_bins});
  const std::size_t plane = grad_spec.num_frames * grad_spec.num_bins;
  for (std::size_t i = 0; i < grad_spec.num_channels; ++i) {
    T* re = grid.data() + (2 * i) * plane;
    T* im = grid.data() + (2 * i + 1) * plane;
    const std::complex<T>* src = grad_spec.data.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      re[p] = src[p].real();
      im[p] = src[p].imag();
    }
  }
  return grid;
}

}  // namespace dasformer
