#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mia/grad_check.hpp"

namespace mia {

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Sampled coordinates per parameter tensor in the full-loss check.
  std::size_t loss_coords_per_tensor = 8;
  /// Test fixture: swaps in a silu with a wrong adjoint.
  bool inject_fault = false;
};

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

/// Finite-difference checks of every tape op, the attention kernel in both
/// mask modes, face projection and stacking, and the full denoising loss on a
/// tiny model (d_K 16, L 2, 8x8 grid). The seed picks inputs and sampled
/// coordinates.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options);

}  // namespace mia
