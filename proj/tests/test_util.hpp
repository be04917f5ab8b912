// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Independent reference computations (oracles) used by the test suites. These
// deliberately do not share code with the library paths they check.

#pragma once

#include <complex>
#include <vector>

#include "dasformer/rng.hpp"
#include "dasformer/tensor.hpp"

namespace testutil {

inline constexpr double kPi = 3.14159265358979323846;

// Brute-force windowed DFT of one frame: X[f] = sum_n w[n] x[n] e^{-i2pi f n/N}.
inline std::vector<std::complex<double>> dft_frame(const std::vector<double>& x,
                                                   const std::vector<double>& w) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t f = 0; f < out.size(); ++f) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * double(f) * double(t) / double(n);
      acc += w[t] * x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

// Six-nested-loop same-padding stride-1 convolution oracle, full kernel
// [Cout][Cin][kh][kw] on input [Cin][rows][cols].
inline std::vector<double> conv2d_loops(const std::vector<double>& x, std::size_t cin,
                                        std::size_t rows, std::size_t cols,
                                        const std::vector<double>& w, std::size_t cout,
                                        std::size_t kh, std::size_t kw,
                                        const std::vector<double>& bias) {
  std::vector<double> y(cout * rows * cols, 0.0);
  const auto rh = std::ptrdiff_t(kh / 2), rw = std::ptrdiff_t(kw / 2);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t f = 0; f < cols; ++f) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b) {
              const std::ptrdiff_t tt = std::ptrdiff_t(t) + std::ptrdiff_t(a) - rh;
              const std::ptrdiff_t ff = std::ptrdiff_t(f) + std::ptrdiff_t(b) - rw;
              if (tt < 0 || tt >= std::ptrdiff_t(rows) || ff < 0 || ff >= std::ptrdiff_t(cols))
                continue;
              acc += w[((co * cin + ci) * kh + a) * kw + b] *
                     x[(ci * rows + std::size_t(tt)) * cols + std::size_t(ff)];
            }
        y[(co * rows + t) * cols + f] = acc;
      }
  return y;
}

// Independent SI-SDR: projection formula evaluated stepwise.
inline double si_sdr_reference(const std::vector<double>& est, const std::vector<double>& ref,
                               bool zero_mean = true, double clamp = 60.0) {
  std::vector<double> e = est, r = ref;
  if (zero_mean) {
    double me = 0.0, mr = 0.0;
    for (double v : e) me += v;
    for (double v : r) mr += v;
    me /= double(e.size());
    mr /= double(r.size());
    for (double& v : e) v -= me;
    for (double& v : r) v -= mr;
  }
  double er = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    er += e[i] * r[i];
    rr += r[i] * r[i];
  }
  const double alpha = er / rr;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    num += (alpha * r[i]) * (alpha * r[i]);
    den += (e[i] - alpha * r[i]) * (e[i] - alpha * r[i]);
  }
  if (num <= 0.0) return -clamp;
  if (den <= 0.0) return clamp;
  const double v = 10.0 * std::log10(num / den);
  return std::min(clamp, std::max(-clamp, v));
}

// Recursive assignment enumeration, independent of std::next_permutation.
inline void best_assignment_rec(const std::vector<std::vector<double>>& pair_si_sdr,
                                std::vector<std::size_t>& perm, std::vector<bool>& used,
                                std::size_t i, double acc, double& best,
                                std::vector<std::size_t>& best_perm) {
  const std::size_t I = pair_si_sdr.size();
  if (i == I) {
    const double loss = -acc / double(I);
    if (loss < best) {
      best = loss;
      best_perm = perm;
    }
    return;
  }
  for (std::size_t j = 0; j < I; ++j) {
    if (used[j]) continue;
    used[j] = true;
    perm[i] = j;
    best_assignment_rec(pair_si_sdr, perm, used, i + 1, acc + pair_si_sdr[i][j], best, best_perm);
    used[j] = false;
  }
}

inline std::pair<double, std::vector<std::size_t>> pit_reference(
    const std::vector<std::vector<double>>& est, const std::vector<std::vector<double>>& ref) {
  const std::size_t I = est.size();
  std::vector<std::vector<double>> pair(I, std::vector<double>(I));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < I; ++j) pair[i][j] = si_sdr_reference(est[i], ref[j]);
  std::vector<std::size_t> perm(I), best_perm;
  std::vector<bool> used(I, false);
  double best = 1e300;
  best_assignment_rec(pair, perm, used, 0, 0.0, best, best_perm);
  return {best, best_perm};
}

template <typename T>
void fill_uniform(dasformer::Tensor<T>& t, dasformer::RngState& rng, double lo = -1.0,
                  double hi = 1.0) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(lo, hi));
}

inline std::vector<double> random_vec(std::size_t n, dasformer::RngState& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testutil
