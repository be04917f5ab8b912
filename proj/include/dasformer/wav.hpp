// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dasformer/signal.hpp"

namespace dasformer {

enum class WavFormat { kPcm16, kFloat32 };

namespace detail {

inline std::uint32_t rd_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t rd_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}
inline void wr_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(v & 0xFF);
  b.push_back((v >> 8) & 0xFF);
  b.push_back((v >> 16) & 0xFF);
  b.push_back((v >> 24) & 0xFF);
}
inline void wr_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back((v >> 8) & 0xFF);
}

[[noreturn]] inline void wav_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("wav: " + path + ": " + what);
}

}  // namespace detail

/// RIFF/WAVE reader. Accepts format 1 (16-bit PCM, normalized by 1/32768)
/// and format 3 (32-bit float). Interleaved multichannel. Truncated or
/// malformed files raise, never return partial data.
template <typename T>
MultichannelWaveform<T> read_wav(const std::string& path) {
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) wav_fail(path, "cannot open file");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());

  if (buf.size() < 12) wav_fail(path, "truncated RIFF header");
  if (std::memcmp(buf.data(), "RIFF", 4) != 0) wav_fail(path, "bad chunk id (want RIFF)");
  if (std::memcmp(buf.data() + 8, "WAVE", 4) != 0) wav_fail(path, "bad RIFF form type (want WAVE)");

  std::uint16_t audio_format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data_ptr = nullptr;
  std::uint32_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const std::uint32_t len = rd_u32(buf.data() + pos + 4);
    pos += 8;
    if (pos + len > buf.size()) {
      if (std::memcmp(id, "data", 4) == 0) wav_fail(path, "data chunk truncated");
      wav_fail(path, std::string("chunk '") + std::string(id, 4) + "' truncated");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) wav_fail(path, "fmt chunk too short");
      audio_format = rd_u16(buf.data() + pos);
      channels = rd_u16(buf.data() + pos + 2);
      sample_rate = rd_u32(buf.data() + pos + 4);
      bits = rd_u16(buf.data() + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = buf.data() + pos;
      data_len = len;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) wav_fail(path, "missing fmt chunk");
  if (data_ptr == nullptr) wav_fail(path, "missing data chunk");
  if (channels == 0) wav_fail(path, "fmt num_channels is zero");
  if (sample_rate == 0) wav_fail(path, "fmt sample_rate is zero");
  if (audio_format == 1) {
    if (bits != 16) wav_fail(path, "fmt bits_per_sample " + std::to_string(bits) + " unsupported for PCM (want 16)");
  } else if (audio_format == 3) {
    if (bits != 32) wav_fail(path, "fmt bits_per_sample " + std::to_string(bits) + " unsupported for float (want 32)");
  } else {
    wav_fail(path, "fmt audio_format " + std::to_string(audio_format) + " unsupported (want 1=PCM or 3=float)");
  }

  const std::size_t bytes_per = bits / 8;
  if (data_len % (bytes_per * channels) != 0) wav_fail(path, "data chunk size not a whole number of frames");
  const std::size_t n = data_len / (bytes_per * channels);
  if (n == 0) wav_fail(path, "data chunk holds no samples");

  MultichannelWaveform<T> wave(channels, n, sample_rate);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data_ptr + (s * channels + c) * bytes_per;
      if (audio_format == 1) {
        const auto v = std::int16_t(rd_u16(p));
        wave.channel(c)[s] = T(double(v) / 32768.0);
      } else {
        float f;
        std::memcpy(&f, p, 4);
        wave.channel(c)[s] = T(f);
      }
    }
  }
  return wave;
}

/// Writer. float32 payloads round-trip bit-exactly through read_wav when T is
/// float; PCM16 uses round(x * 32767) with clamping.
template <typename T>
void write_wav(const std::string& path, const MultichannelWaveform<T>& wave,
               WavFormat fmt = WavFormat::kFloat32) {
  using namespace detail;
  wave.validate();
  const std::uint16_t channels = std::uint16_t(wave.num_channels);
  const std::uint16_t bits = fmt == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t block_align = std::uint16_t(channels * bits / 8);
  const std::uint32_t data_len = std::uint32_t(wave.num_samples * block_align);

  std::vector<std::uint8_t> b;
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, fmt == WavFormat::kPcm16 ? 1 : 3);
  wr_u16(b, channels);
  wr_u32(b, std::uint32_t(wave.sample_rate));
  wr_u32(b, std::uint32_t(wave.sample_rate) * block_align);
  wr_u16(b, block_align);
  wr_u16(b, bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, data_len);

  for (std::size_t s = 0; s < wave.num_samples; ++s) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = double(wave.channel(c)[s]);
      if (fmt == WavFormat::kPcm16) {
        long q = std::lround(v * 32767.0);
        q = std::min(32767l, std::max(-32768l, q));
        wr_u16(b, std::uint16_t(std::int16_t(q)));
      } else {
        const float f = float(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        wr_u32(b, u);
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) wav_fail(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  if (!out) wav_fail(path, "write failed");
}

}  // namespace dasformer
