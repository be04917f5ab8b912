// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dasformer/param_store.hpp"
#include "dasformer/tensor.hpp"

namespace dasformer {

/// Finite-difference verification of analytic gradients. Always runs in
/// double precision; loss closures must be deterministic (re-seed any
/// randomness inside the closure).
struct GradCheckOptions {
  double step_scale = 1e-5;   // h = step_scale * max(1, |value|)
  double tolerance = 1e-3;
  double denom_floor = 1e-6;  // relative-error denominator floor
  std::size_t max_worst = 5;  // entries listed per failing tensor
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  double max_rel_err = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_err < tolerance; }

  std::string summary() const {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3);
    os << (passed() ? "PASS" : "FAIL") << " max rel err " << max_rel_err << " (tol " << tolerance
       << ")";
    if (!passed()) {
      for (const auto& e : tensors)
        if (e.max_rel_err >= tolerance)
          os << "\n  " << e.name << "[" << e.worst_index << "]: analytic " << e.analytic
             << " numeric " << e.numeric << " rel " << e.max_rel_err;
    }
    return os.str();
  }
};

namespace detail {

inline double rel_err(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace detail

/// Central finite differences on one tensor against a precomputed analytic
/// gradient. `loss` must re-run the full forward deterministically.
inline GradCheckEntry check_tensor_gradient(const std::string& name, Tensor<double>& x,
                                            const Tensor<double>& analytic,
                                            const std::function<double()>& loss,
                                            const GradCheckOptions& opts = {}) {
  GradCheckEntry entry;
  entry.name = name;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double h = opts.step_scale * std::max(1.0, std::abs(v));
    x[i] = v + h;
    const double lp = loss();
    x[i] = v - h;
    const double lm = loss();
    x[i] = v;
    const double numeric = (lp - lm) / (2.0 * h);
    const double err = detail::rel_err(analytic[i], numeric, opts.denom_floor);
    if (err > entry.max_rel_err) {
      entry.max_rel_err = err;
      entry.worst_index = i;
      entry.analytic = analytic[i];
      entry.numeric = numeric;
    }
  }
  return entry;
}

/// Checks d(loss)/d(theta) for every trainable entry of the store.
/// `compute_grads` must zero the store's gradient slots itself (or rely on
/// the harness, which zeroes before calling) and then run forward + backward.
inline GradCheckReport check_param_gradients(ParamStore<double>& store,
                                             const std::function<double()>& loss,
                                             const std::function<void()>& compute_grads,
                                             const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;

  store.zero_grad();
  compute_grads();

  for (std::size_t e = 0; e < store.count(); ++e) {
    if (!store.trainable(e)) continue;
    GradCheckEntry entry =
        check_tensor_gradient(store.name(e), store.value(e), store.grad(e), loss, opts);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dasformer
