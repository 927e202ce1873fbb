#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mia/autodiff.hpp"

namespace mia {

/// A scalar function built on a tape from the supplied input leaves.
using TapedFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-6;
  /// Check at most this many coordinates, sampled uniformly; 0 checks all.
  std::size_t max_coords = 0;
  /// When nonzero, check at most this many sampled coordinates of each input
  /// instead (every input is then covered).
  std::size_t coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  /// max over checked coordinates of |a - n| / max(1, |a|, |n|).
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares backward() against central differences for every input tensor.
GradCheckResult grad_check(const TapedFunction& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

/// Single-input convenience form; returns the max relative error.
double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                  double step = 1e-6);

}  // namespace mia
