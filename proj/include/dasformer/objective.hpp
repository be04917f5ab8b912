// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dasformer/signal.hpp"

namespace dasformer {

/// Metric knobs. Both SI-SDR and SDR zero-mean the signals first (disable for
/// hand-computed unit cases) and clamp to +/- clamp_db so the value stays
/// finite when est == ref.
struct MetricOptions {
  bool zero_mean = true;
  double clamp_db = 60.0;
};

namespace detail {

inline double clamp_db(double v, double limit) { return std::min(limit, std::max(-limit, v)); }

template <typename T>
inline void centered(std::span<const T> x, bool zero_mean, std::vector<double>& out) {
  out.resize(x.size());
  double mean = 0.0;
  if (zero_mean) {
    for (const T& v : x) mean += double(v);
    mean /= double(x.size());
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = double(x[i]) - mean;
}

}  // namespace detail

/// Scale-invariant SDR in dB: 10*log10(||a r||^2 / ||e - a r||^2) with
/// a = <e, r>/||r||^2. Zero-energy reference is an error; zero-energy
/// estimate returns the clamp floor.
template <typename T>
double si_sdr(std::span<const T> est, std::span<const T> ref, const MetricOptions& opts = {}) {
  if (est.size() != ref.size() || est.size() < 2)
    throw std::invalid_argument("si_sdr: signals must have equal length >= 2");
  std::vector<double> e, r;
  detail::centered(est, opts.zero_mean, e);
  detail::centered(ref, opts.zero_mean, r);

  const double rr = dot_d(r.size(), r.data(), r.data());
  if (rr <= 0.0) throw std::invalid_argument("si_sdr: reference has zero energy");
  const double er = dot_d(e.size(), e.data(), r.data());
  const double alpha = er / rr;
  const double target = alpha * alpha * rr;
  double noise = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = e[i] - alpha * r[i];
    noise += d * d;
  }
  if (target <= 0.0) return -opts.clamp_db;
  if (noise <= 0.0) return opts.clamp_db;
  return detail::clamp_db(10.0 * std::log10(target / noise), opts.clamp_db);
}

/// SI-SDR value plus d(si_sdr)/d(est). The gradient is zero in the clamped
/// regions (and at the degenerate zero-projection point).
template <typename T>
double si_sdr_grad(std::span<const T> est, std::span<const T> ref, std::span<T> grad,
                   const MetricOptions& opts = {}) {
  if (grad.size() != est.size()) throw std::invalid_argument("si_sdr_grad: grad size mismatch");
  std::vector<double> e, r;
  detail::centered(est, opts.zero_mean, e);
  detail::centered(ref, opts.zero_mean, r);

  const double rr = dot_d(r.size(), r.data(), r.data());
  if (rr <= 0.0) throw std::invalid_argument("si_sdr: reference has zero energy");
  const double er = dot_d(e.size(), e.data(), r.data());
  const double alpha = er / rr;
  const double target = alpha * alpha * rr;
  double noise = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = e[i] - alpha * r[i];
    noise += d * d;
  }

  std::fill(grad.begin(), grad.end(), T(0));
  if (target <= 0.0 || noise <= 0.0) return target <= 0.0 ? -opts.clamp_db : opts.clamp_db;
  const double value = 10.0 * std::log10(target / noise);
  if (value <= -opts.clamp_db || value >= opts.clamp_db)
    return detail::clamp_db(value, opts.clamp_db);

  // d/de of 10/ln10 * (ln||ar||^2 - ln||e-ar||^2); the residual is orthogonal
  // to r, which collapses the noise term's derivative to 2(e - ar).
  const double c = 10.0 / std::log(10.0);
  const double g_target = 2.0 * c / (alpha * rr);  // times r
  std::vector<double> g(e.size());
  double gsum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = e[i] - alpha * r[i];
    g[i] = g_target * r[i] - 2.0 * c * d / noise;
    gsum += g[i];
  }
  const double gmean = opts.zero_mean ? gsum / double(g.size()) : 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] = T(g[i] - gmean);
  return value;
}

/// Plain SDR: alpha fixed to 1 (no rescaling), same zero-mean and clamping.
template <typename T>
double sdr(std::span<const T> est, std::span<const T> ref, const MetricOptions& opts = {}) {
  if (est.size() != ref.size() || est.size() < 2)
    throw std::invalid_argument("sdr: signals must have equal length >= 2");
  std::vector<double> e, r;
  detail::centered(est, opts.zero_mean, e);
  detail::centered(ref, opts.zero_mean, r);
  const double rr = dot_d(r.size(), r.data(), r.data());
  if (rr <= 0.0) throw std::invalid_argument("sdr: reference has zero energy");
  double noise = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = e[i] - r[i];
    noise += d * d;
  }
  if (noise <= 0.0) return opts.clamp_db;
  return detail::clamp_db(10.0 * std::log10(rr / noise), opts.clamp_db);
}

// ---------------------------------------------------------------------------
// Permutation-invariant training loss (utterance-level).

struct PitResult {
  double loss = 0.0;                     // min over perms of mean_i -si_sdr(est_i, ref_perm(i))
  std::vector<std::size_t> permutation;  // est i is matched to ref permutation[i]
  std::vector<std::vector<double>> pair_si_sdr;  // [i][j] = si_sdr(est_i, ref_j)
};

/// Enumerates all I! assignments (I <= 6). Ties resolve to the
/// lexicographically smallest permutation. Gradients are meant to flow only
/// through the returned assignment.
template <typename T>
PitResult pit_loss(const std::vector<std::span<const T>>& estimates,
                   const std::vector<std::span<const T>>& references,
                   const MetricOptions& opts = {}) {
  const std::size_t I = estimates.size();
  if (I == 0 || references.size() != I)
    throw std::invalid_argument("pit_loss: estimate/reference speaker count mismatch");
  if (I > 6) throw std::invalid_argument("pit_loss: more than 6 speakers not supported");

  PitResult res;
  res.pair_si_sdr.assign(I, std::vector<double>(I));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < I; ++j)
      res.pair_si_sdr[i][j] = si_sdr(estimates[i], references[j], opts);

  std::vector<std::size_t> perm(I);
  std::iota(perm.begin(), perm.end(), 0);
  res.loss = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    for (std::size_t i = 0; i < I; ++i) loss -= res.pair_si_sdr[i][perm[i]];
    loss /= double(I);
    if (loss < res.loss) {
      res.loss = loss;
      res.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return res;
}

// ---------------------------------------------------------------------------
// Improvement metrics over the unprocessed mixture at the reference mic.

/// One utterance's estimates and targets, plus the reference-channel mixture
/// used as the improvement baseline.
template <typename T>
struct SeparationBatch {
  std::vector<std::span<const T>> estimates;
  std::vector<std::span<const T>> references;
  std::span<const T> mixture;

  void validate() const {
    if (estimates.size() < 2 || estimates.size() != references.size())
      throw std::invalid_argument("separation batch: need I >= 2 matched estimate/reference pairs");
    for (const auto& e : estimates)
      if (e.size() != mixture.size())
        throw std::invalid_argument("separation batch: estimate length != mixture length");
    for (const auto& r : references)
      if (r.size() != mixture.size())
        throw std::invalid_argument("separation batch: reference length != mixture length");
  }
};

struct SeparationScores {
  std::vector<std::size_t> permutation;
  std::vector<double> si_sdr_per_speaker, sdr_per_speaker;
  double si_sdri = 0.0;  // mean_i [si_sdr(est_i, ref_p(i)) - si_sdr(mix, ref_p(i))]
  double sdri = 0.0;
};

template <typename T>
SeparationScores score_separation(const SeparationBatch<T>& batch, const MetricOptions& opts = {}) {
  batch.validate();
  const std::size_t I = batch.estimates.size();
  PitResult pit = pit_loss(batch.estimates, batch.references, opts);

  SeparationScores s;
  s.permutation = pit.permutation;
  s.si_sdr_per_speaker.resize(I);
  s.sdr_per_speaker.resize(I);
  for (std::size_t i = 0; i < I; ++i) {
    const std::size_t j = pit.permutation[i];
    s.si_sdr_per_speaker[i] = pit.pair_si_sdr[i][j];
    s.sdr_per_speaker[i] = sdr(batch.estimates[i], batch.references[j], opts);
    s.si_sdri += s.si_sdr_per_speaker[i] - si_sdr(batch.mixture, batch.references[j], opts);
    s.sdri += s.sdr_per_speaker[i] - sdr(batch.mixture, batch.references[j], opts);
  }
  s.si_sdri /= double(I);
  s.sdri /= double(I);
  return s;
}

}  // namespace dasformer
