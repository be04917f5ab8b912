// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasformer/signal.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "test_util.hpp"

using namespace dasformer;

namespace {

MultichannelWaveform<double> random_wave(std::size_t channels, std::size_t n, std::size_t rate,
                                         RngState& rng) {
  MultichannelWaveform<double> w(channels, n, rate);
  for (auto& v : w.samples) v = rng.uniform(-0.9, 0.9);
  return w;
}

double snr_db(const double* ref, const double* est, std::size_t lo, std::size_t hi) {
  double sig = 0.0, err = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    sig += ref[i] * ref[i];
    const double d = ref[i] - est[i];
    err += d * d;
  }
  return 10.0 * std::log10(sig / std::max(err, 1e-300));
}

}  // namespace

TEST(StftConfig, FrameGeometryAt8kHz) {
  const auto cfg = StftConfig<double>::for_sample_rate(8000);
  EXPECT_EQ(cfg.frame_len, 256u);
  EXPECT_EQ(cfg.hop_len, 128u);
  EXPECT_EQ(cfg.num_bins(), 129u);
  EXPECT_EQ(cfg.num_frames(16000), 124u);  // ceil((16000-256)/128)+1
  EXPECT_EQ(cfg.num_frames(256), 1u);
  EXPECT_EQ(cfg.num_frames(257), 2u);
}

TEST(StftConfig, OverlapUnityHoldsForValidConfigs) {
  EXPECT_LT(StftConfig<double>::hann(256, 128).overlap_unity_error(), 1e-12);
  EXPECT_LT(StftConfig<double>::hann(256, 64).overlap_unity_error(), 1e-12);
  EXPECT_LT(StftConfig<double>::rectangular(256, 256).overlap_unity_error(), 1e-12);
  EXPECT_LT(StftConfig<double>::rectangular(128, 64).overlap_unity_error(), 1e-12);
}

TEST(StftConfig, RejectsBadConfigs) {
  EXPECT_THROW(StftConfig<double>::hann(255, 128), std::invalid_argument);  // odd frame
  EXPECT_THROW(StftConfig<double>::hann(128, 256), std::invalid_argument);  // hop > frame
  // periodic Hann at hop == frame has zero-coverage points
  EXPECT_THROW(StftConfig<double>::hann(256, 256), std::invalid_argument);
}

TEST(Stft, ZeroWaveGivesZeroSpectrogram) {
  const auto cfg = StftConfig<double>::hann(256, 128);
  MultichannelWaveform<double> w(2, 1000, 8000);
  const auto spec = stft(w, cfg);
  EXPECT_EQ(spec.num_channels, 2u);
  EXPECT_EQ(spec.num_bins, 129u);
  for (const auto& v : spec.data) {
    EXPECT_EQ(v.real(), 0.0);
    EXPECT_EQ(v.imag(), 0.0);
  }
}

TEST(Stft, PureCosineConcentratesInItsBin) {
  const std::size_t frame = 256, bin = 16;
  const auto cfg = StftConfig<double>::rectangular(frame, 128);
  MultichannelWaveform<double> w(1, 1024, 8000);
  for (std::size_t n = 0; n < w.num_samples; ++n)
    w.channel(0)[n] = std::cos(2.0 * kPi * double(bin) * double(n) / double(frame));
  const auto spec = stft(w, cfg);

  // against the direct DFT-summation oracle, every frame
  std::vector<double> window(frame, 1.0);
  for (std::size_t k = 0; k < spec.num_frames; ++k) {
    std::vector<double> seg(frame, 0.0);
    for (std::size_t n = 0; n < frame && k * 128 + n < w.num_samples; ++n)
      seg[n] = w.channel(0)[k * 128 + n];
    const auto oracle = testutil::dft_frame(seg, window);
    for (std::size_t f = 0; f < spec.num_bins; ++f) {
      EXPECT_NEAR(spec.at(0, k, f).real(), oracle[f].real(), 1e-10);
      EXPECT_NEAR(spec.at(0, k, f).imag(), oracle[f].imag(), 1e-10);
    }
  }

  double total = 0.0, in_bin = 0.0;
  for (std::size_t k = 0; k < spec.num_frames; ++k)
    for (std::size_t f = 0; f < spec.num_bins; ++f) {
      const double e = std::norm(spec.at(0, k, f));
      total += e;
      if (f == bin) in_bin += e;
    }
  EXPECT_GT(in_bin / total, 0.999);
}

TEST(Stft, RejectsShortAndNonFiniteSignals) {
  const auto cfg = StftConfig<double>::hann(256, 128);
  MultichannelWaveform<double> shorty(1, 255, 8000);
  EXPECT_THROW(stft(shorty, cfg), std::invalid_argument);

  MultichannelWaveform<double> bad(1, 512, 8000);
  bad.channel(0)[17] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(stft(bad, cfg), std::invalid_argument);
}

TEST(Stft, LinearityProperty) {
  RngState rng(11);
  const auto cfg = StftConfig<double>::hann(256, 128);
  for (int rep = 0; rep < 5; ++rep) {
    const auto x = random_wave(1, 700, 8000, rng);
    const auto y = random_wave(1, 700, 8000, rng);
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    MultichannelWaveform<double> z(1, 700, 8000);
    for (std::size_t i = 0; i < z.num_samples; ++i)
      z.channel(0)[i] = a * x.channel(0)[i] + b * y.channel(0)[i];
    const auto sx = stft(x, cfg), sy = stft(y, cfg), sz = stft(z, cfg);
    for (std::size_t i = 0; i < sz.data.size(); ++i) {
      const auto combo = a * sx.data[i] + b * sy.data[i];
      EXPECT_NEAR(sz.data[i].real(), combo.real(), 1e-9);
      EXPECT_NEAR(sz.data[i].imag(), combo.imag(), 1e-9);
    }
  }
}

TEST(Istft, RoundTripReconstructsInterior) {
  RngState rng(7);
  const auto cfg = StftConfig<double>::for_sample_rate(8000);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 600 + rng.uniform_index(4000);
    const auto w = random_wave(1 + rep % 2, n, 8000, rng);
    const auto back = istft(stft(w, cfg));
    ASSERT_GE(back.num_samples, n);
    for (std::size_t c = 0; c < w.num_channels; ++c)
      EXPECT_GT(snr_db(w.channel(c), back.channel(c), cfg.frame_len, n - cfg.frame_len), 60.0);
  }
}

TEST(Istft, ZeroAndScaledSpectrograms) {
  RngState rng(3);
  const auto cfg = StftConfig<double>::hann(256, 128);
  const auto w = random_wave(1, 1000, 8000, rng);
  auto spec = stft(w, cfg);

  auto zero = spec;
  for (auto& v : zero.data) v = {0.0, 0.0};
  const auto silent = istft(zero);
  for (std::size_t i = 0; i < silent.num_samples; ++i) EXPECT_EQ(silent.channel(0)[i], 0.0);

  auto scaled = spec;
  for (auto& v : scaled.data) v *= 2.5;
  const auto y1 = istft(spec);
  const auto y2 = istft(scaled);
  for (std::size_t i = 0; i < y1.num_samples; ++i)
    EXPECT_NEAR(y2.channel(0)[i], 2.5 * y1.channel(0)[i], 1e-12);
}

TEST(Istft, RejectsInconsistentBins) {
  RngState rng(5);
  const auto cfg = StftConfig<double>::hann(256, 128);
  auto spec = stft(random_wave(1, 512, 8000, rng), cfg);
  spec.frame_len = 512;  // now num_bins != frame_len/2 + 1
  EXPECT_THROW(istft(spec), std::invalid_argument);
}

TEST(Istft, AdjointMatchesDotProduct) {
  RngState rng(19);
  const auto cfg = StftConfig<double>::hann(64, 32);
  auto like = stft(random_wave(1, 200, 8000, rng), cfg);

  auto X = like;
  for (auto& v : X.data) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const auto y = istft(X);

  MultichannelWaveform<double> g(1, y.num_samples, 8000);
  for (auto& v : g.samples) v = rng.uniform(-1, 1);
  const auto gX = istft_adjoint(g, like);

  double lhs = 0.0;
  for (std::size_t i = 0; i < y.num_samples; ++i) lhs += y.channel(0)[i] * g.channel(0)[i];
  double rhs = 0.0;
  for (std::size_t i = 0; i < X.data.size(); ++i)
    rhs += X.data[i].real() * gX.data[i].real() + X.data[i].imag() * gX.data[i].imag();
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST(Stft, ParsevalSingleFrame) {
  RngState rng(23);
  const std::size_t frame = 256;
  const auto cfg = StftConfig<double>::hann(frame, 128);
  MultichannelWaveform<double> w(1, frame, 8000);
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  const auto spec = stft(w, cfg);

  double windowed_energy = 0.0;
  for (std::size_t n = 0; n < frame; ++n) {
    const double v = w.channel(0)[n] * cfg.window[n];
    windowed_energy += v * v;
  }
  // one-sided spectrum: interior bins count twice, DC/Nyquist once
  double spec_energy = std::norm(spec.at(0, 0, 0)) + std::norm(spec.at(0, 0, frame / 2));
  for (std::size_t f = 1; f < frame / 2; ++f) spec_energy += 2.0 * std::norm(spec.at(0, 0, f));
  spec_energy /= double(frame);
  EXPECT_NEAR(spec_energy, windowed_energy, 1e-6 * windowed_energy);
}

TEST(PackUnpack, SingleBinDefinition) {
  ComplexSpectrogram<double> spec;
  spec.num_channels = 1;
  spec.num_frames = 1;
  spec.num_bins = 1;
  spec.frame_len = 0;  // not used by pack
  spec.data = {{3.0, 4.0}};
  const auto grid = pack_input(spec);
  EXPECT_EQ(grid.dim(0), 2u);
  EXPECT_EQ(grid.at(0, 0, 0), 3.0);
  EXPECT_EQ(grid.at(1, 0, 0), 4.0);
}

TEST(PackUnpack, FourMicsGiveEightChannels) {
  RngState rng(31);
  const auto cfg = StftConfig<double>::hann(64, 32);
  const auto spec = stft(random_wave(4, 200, 8000, rng), cfg);
  const auto grid = pack_input(spec);
  EXPECT_EQ(grid.dim(0), 8u);
}

TEST(PackUnpack, ExactMutualInverses) {
  RngState rng(37);
  const auto cfg = StftConfig<double>::hann(64, 32);
  auto spec = stft(random_wave(3, 300, 8000, rng), cfg);
  for (auto& v : spec.data) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};

  const auto grid = pack_input(spec);
  const auto back = unpack_output(grid, spec);
  ASSERT_EQ(back.data.size(), spec.data.size());
  for (std::size_t i = 0; i < spec.data.size(); ++i) EXPECT_EQ(back.data[i], spec.data[i]);

  const auto grid2 = unpack_output_adjoint(back);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(grid2[i], grid[i]);
}

TEST(PackUnpack, OddChannelCountRejected) {
  RngState rng(41);
  const auto cfg = StftConfig<double>::hann(64, 32);
  const auto spec = stft(random_wave(1, 200, 8000, rng), cfg);
  Tensor<double> grid({3, spec.num_frames, spec.num_bins});
  EXPECT_THROW(unpack_output(grid, spec), std::invalid_argument);
}

TEST(Istft, ZeroDecoderChannelsSurviveHermitianHandling) {
  // imaginary parts at DC and Nyquist must have no effect on the output
  RngState rng(43);
  const auto cfg = StftConfig<double>::hann(64, 32);
  auto spec = stft(random_wave(1, 200, 8000, rng), cfg);
  auto spiked = spec;
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    spiked.at(0, t, 0) += std::complex<double>(0.0, 5.0);
    spiked.at(0, t, spec.num_bins - 1) += std::complex<double>(0.0, -3.0);
  }
  const auto a = istft(spec), b = istft(spiked);
  for (std::size_t i = 0; i < a.num_samples; ++i)
    EXPECT_NEAR(a.channel(0)[i], b.channel(0)[i], 1e-12);
}
