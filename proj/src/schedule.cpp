#include "mia/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mia {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0))
    throw std::invalid_argument("noise schedule betas must lie in (0, 1)");
  NoiseSchedule s;
  double bar = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    s.betas_.push_back(beta);
    bar *= 1.0 - beta;
    s.alpha_bars_.push_back(bar);
  }
  return s;
}

std::size_t NoiseSchedule::check(std::size_t t) const {
  if (t < 1 || t > betas_.size())
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(betas_.size()) + "]");
  return t - 1;
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t == 0) return 1.0;
  return alpha_bars_.at(check(t));
}

Tensor add_noise(const Tensor& z0, std::size_t t, const Tensor& noise, const NoiseSchedule& schedule) {
  if (z0.shape() != noise.shape())
    throw ShapeError("add_noise: noise " + shape_string(noise.shape()) + " vs signal " +
                     shape_string(z0.shape()));
  const double bar = schedule.alpha_bar(t);
  if (t == 0) throw std::out_of_range("add_noise: timestep must be >= 1");
  const double a = std::sqrt(bar), b = std::sqrt(1.0 - bar);
  Tensor out = z0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * noise[i];
  return out;
}

}  // namespace mia
