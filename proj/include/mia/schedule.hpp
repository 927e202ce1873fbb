#pragma once

#include <cstddef>
#include <vector>

#include "mia/tensor.hpp"

namespace mia {

/// Discrete forward-process schedule. Steps are 1-based: beta(1) .. beta(steps).
class NoiseSchedule {
 public:
  /// Linear betas from `beta_start` to `beta_end` over `steps` steps.
  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(check(t)); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  /// Product of alpha(1..t); alpha_bar(0) is 1.
  double alpha_bar(std::size_t t) const;

 private:
  std::size_t check(std::size_t t) const;

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps.
Tensor add_noise(const Tensor& z0, std::size_t t, const Tensor& noise, const NoiseSchedule& schedule);

}  // namespace mia
