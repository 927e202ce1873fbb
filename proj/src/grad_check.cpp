#include "mia/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

namespace mia {

namespace {

double evaluate(const TapedFunction& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var out = f(tape, vars);
  const Tensor& v = out.value();
  if (v.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  if (!std::isfinite(v[0])) throw NumericError("grad_check: function value is not finite");
  return v[0];
}

}  // namespace

GradCheckResult grad_check(const TapedFunction& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const Var loss = f(tape, leaves);
  if (loss.value().size() != 1) throw ShapeError("grad_check: function must return a scalar");

  std::vector<Tensor> analytic;
  if (tape.requires_grad(loss)) {
    Gradients grads = tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(grads.of(l));
  } else {
    for (const auto& t : inputs) analytic.emplace_back(t.shape(), 0.0);
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> index(inputs[i].size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    if (options.coords_per_input > 0 && index.size() > options.coords_per_input) {
      std::shuffle(index.begin(), index.end(), rng);
      index.resize(options.coords_per_input);
      std::sort(index.begin(), index.end());
    }
    for (auto j : index) coords.emplace_back(i, j);
  }
  if (options.max_coords > 0 && coords.size() > options.max_coords) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (auto [i, j] : coords) {
    const double original = probe[i][j];
    probe[i][j] = original + options.step;
    const double up = evaluate(f, probe);
    probe[i][j] = original - options.step;
    const double down = evaluate(f, probe);
    probe[i][j] = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[i][j];
    const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
    const double err = std::abs(a - numeric) / denom;
    if (err > result.max_rel_error || result.coords_checked == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_input = i;
      result.worst_index = j;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
    ++result.coords_checked;
  }
  return result;
}

double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double step) {
  TapedFunction wrapped = [&f](Tape& tape, std::span<const Var> vars) { return f(tape, vars[0]); };
  GradCheckOptions options;
  options.step = step;
  return grad_check(wrapped, {x}, options).max_rel_error;
}

}  // namespace mia
