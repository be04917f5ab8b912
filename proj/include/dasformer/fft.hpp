// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dasformer {

inline constexpr double kPi = 3.14159265358979323846;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, no scaling.
inline void fft_radix2(std::complex<double>* a, std::size_t n, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// O(n^2) DFT for sizes the radix-2 path cannot take.
inline void dft_direct(const std::complex<double>* in, std::complex<double>* out, std::size_t n,
                       bool inverse) {
  const double sgn = inverse ? 1.0 : -1.0;
  for (std::size_t f = 0; f < n; ++f) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sgn * 2.0 * kPi * double(f) * double(t) / double(n);
      acc += in[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
}

}  // namespace detail

/// In-place DFT. Forward is unscaled, inverse applies 1/n.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0) return;
  if (detail::is_pow2(n)) {
    detail::fft_radix2(a.data(), n, inverse);
  } else {
    std::vector<std::complex<double>> out(n);
    detail::dft_direct(a.data(), out.data(), n, inverse);
    a.swap(out);
  }
  if (inverse) {
    const double inv = 1.0 / double(n);
    for (auto& v : a) v *= inv;
  }
}

/// Real-input DFT, one-sided output of n/2+1 bins. n must be even.
inline void rfft(const double* x, std::size_t n, std::complex<double>* out) {
  if (n % 2 != 0) throw std::invalid_argument("rfft: length must be even");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = std::complex<double>(x[i], 0.0);
  fft_inplace(buf, false);
  for (std::size_t f = 0; f <= n / 2; ++f) out[f] = buf[f];
}

/// Inverse of rfft: hermitian-extends the one-sided spectrum and returns the
/// real part, so imaginary components at DC/Nyquist have no effect.
inline void irfft(const std::complex<double>* X, std::size_t n, double* out) {
  if (n % 2 != 0) throw std::invalid_argument("irfft: length must be even");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t f = 0; f <= n / 2; ++f) buf[f] = X[f];
  for (std::size_t f = 1; f < n / 2; ++f) buf[n - f] = std::conj(X[f]);
  fft_inplace(buf, true);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
}

/// Adjoint of irfft as a real-linear map from the (Re, Im) pairs of the
/// one-sided spectrum to the time frame: given dL/dx it returns dL/dX.
/// Im parts at DC/Nyquist come out exactly zero, matching the forward map.
inline void irfft_adjoint(const double* dx, std::size_t n, std::complex<double>* dX) {
  if (n % 2 != 0) throw std::invalid_argument("irfft_adjoint: length must be even");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = std::complex<double>(dx[i], 0.0);
  fft_inplace(buf, false);
  const double inv = 1.0 / double(n);
  for (auto& v : buf) v *= inv;
  dX[0] = buf[0];
  dX[n / 2] = buf[n / 2];
  for (std::size_t f = 1; f < n / 2; ++f) dX[f] = buf[f] + std::conj(buf[n - f]);
}

}  // namespace dasformer
