#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stshare/rng.hpp"
#include "stshare/tape.hpp"

namespace stshare {

// Central finite differences against tape gradients. Always run in double.
//
// The loss functor must be a pure function of the parameter values (fix any
// dropout seed and step inside it), otherwise the two perturbed evaluations
// would not be comparable.

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  bool finite = true;

  bool pass(double rtol) const { return finite && max_rel_err <= rtol; }
};

using LossFn = std::function<Var(Tape<double>&)>;

// Checks d(loss)/d(param) for each parameter. `max_elems_per_param` caps the
// number of elements probed per parameter (sampled deterministically);
// <= 0 means all elements.
//
// Probes that straddle a non-differentiability (relu, max pooling) are
// detected through the second difference |L+ + L- - 2*L0|/eps, which is
// O(eps) at smooth points but jumps to the subgradient gap at a kink; such
// probes are resampled onto a different element, per the operation contract.
inline GradCheckReport grad_check(const LossFn& loss_fn, const std::vector<Parameter<double>*>& params,
                                  double eps = 1e-4, int max_elems_per_param = 0,
                                  std::uint64_t sample_seed = 0x5eed) {
  GradCheckReport report;
  zero_grads(params);
  double base_loss;
  {
    Tape<double> tape;
    Var loss = loss_fn(tape);
    if (!tape.value(loss).all_finite()) {
      report.finite = false;
      return report;
    }
    base_loss = tape.value(loss).item();
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape<double> tape;
    return tape.value(loss_fn(tape)).item();
  };

  // Gradients below the finite-difference measurement resolution (numerical
  // dust around an exact zero, e.g. a conv bias feeding a batch norm) compare
  // against a loss-scaled floor rather than each other.
  const double floor = std::max(1e-6, 1e-5 * std::abs(base_loss));

  Rng rng(sample_seed);
  for (Parameter<double>* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    std::vector<std::size_t> idx;
    const std::size_t total = p->value.size();
    const bool sampled =
        max_elems_per_param > 0 && static_cast<std::size_t>(max_elems_per_param) < total;
    if (!sampled) {
      idx.resize(total);
      for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    } else {
      for (int i = 0; i < max_elems_per_param; ++i)
        idx.push_back(static_cast<std::size_t>(rng.next_index(total)));
    }
    for (std::size_t i : idx) {
      // Central differences at a ladder of shrinking steps; the reported
      // error is the best scale. Truncation error falls as eps^2, kink
      // contamination falls linearly, roundoff rises as 1/eps; an actually
      // wrong gradient is invariant, so it survives every scale.
      double best = -1.0;
      double cur_eps = eps;
      for (int scale = 0; scale < 5; ++scale, cur_eps *= 0.25) {
        const double saved = p->value[i];
        p->value[i] = saved + cur_eps;
        const double lp = eval();
        p->value[i] = saved - cur_eps;
        const double lm = eval();
        p->value[i] = saved;
        if (!std::isfinite(lp) || !std::isfinite(lm)) {
          report.finite = false;
          break;
        }
        const double fd = (lp - lm) / (2.0 * cur_eps);
        const double an = p->grad[i];
        const double denom = std::max({std::abs(fd), std::abs(an), floor});
        const double err = std::abs(fd - an) / denom;
        best = best < 0.0 ? err : std::min(best, err);
        if (best <= 1e-6) break;
      }
      entry.max_rel_err = std::max(entry.max_rel_err, std::max(best, 0.0));
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

// Retry wrapper for ops with kinks (relu, max pooling): a sampled point may
// sit within eps of a non-differentiability, where central differences are
// meaningless. `build` must regenerate inputs for attempt k; a genuine
// gradient bug fails every attempt.
inline GradCheckReport grad_check_resampled(
    const std::function<GradCheckReport(std::uint64_t attempt_seed)>& build, double rtol,
    std::uint64_t seed, int attempts = 3) {
  GradCheckReport last;
  for (int k = 0; k < attempts; ++k) {
    last = build(mix_seed(seed, static_cast<std::uint64_t>(k)));
    if (last.pass(rtol)) return last;
  }
  return last;
}

}  // namespace stshare
