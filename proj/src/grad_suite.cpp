#include "mia/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "mia/attention.hpp"
#include "mia/denoiser.hpp"
#include "mia/embedding.hpp"
#include "mia/ops.hpp"
#include "mia/synthetic.hpp"
#include "mia/training.hpp"

namespace mia {

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

/// Projects a tensor-valued function to a scalar with fixed random weights so
/// every output coordinate contributes to the checked gradient.
Var weighted_sum(Tape& tape, const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::hadamard(y, tape.constant(random_tensor(y.value().shape(), rng))));
}

Var silu_with_wrong_adjoint(const Var& x) {
  const Tensor& in = x.value();
  Tape& tape = x.tape();
  return tape.record(ops::silu(in), {x},
                     [in](const Tensor& g) {
                       Tensor dx(in.shape());
                       for (std::size_t i = 0; i < dx.size(); ++i)
                         dx[i] = g[i] / (1.0 + std::exp(-in[i]));
                       return std::vector<Tensor>{dx};
                     },
                     "silu_faulty");
}

struct Check {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(Tape&, std::span<const Var>)> f;
  GradCheckOptions options;
};

ModelConfig tiny_model() {
  ModelConfig c;
  c.image_size = 8;
  c.channels = 4;
  c.width = 8;
  c.time_dim = 8;
  c.key_dim = 16;
  c.global_dim = 8;
  c.local_dim = 4;
  c.grid_side = 2;
  c.heads = 2;
  c.head_dim = 4;
  c.text_len = 4;
  c.stages = {8, 4};
  return c;
}

Check full_loss_check(const GradSuiteOptions& options) {
  const ModelConfig mc = tiny_model();
  SyntheticOptions so;
  so.records = 4;
  so.height = so.width = mc.image_size;
  so.channels = mc.channels;
  so.min_faces = 1;
  so.max_faces = 2;
  so.min_face_size = so.max_face_size = 4;
  so.grid_side = mc.grid_side;
  so.global_dim = mc.global_dim;
  so.local_dim = mc.local_dim;
  so.seed = options.seed;
  auto dataset = std::make_shared<std::vector<AnnotatedRecord>>(make_synthetic_dataset(so));

  TrainConfig tc;
  tc.batch = 2;
  tc.capacity = 2;
  tc.seed = options.seed;
  const auto schedule = std::make_shared<NoiseSchedule>(NoiseSchedule::linear(100, 1e-4, 0.02));
  auto batch = std::make_shared<std::vector<TrainingSample>>(draw_batch(*dataset, tc, *schedule, 0));

  // Zero-initialized tensors (biases, fusion projections) get random values so
  // that every parameter has a nonzero gradient path.
  ToyDenoiser model = ToyDenoiser::initialize(mc, options.seed);
  std::mt19937_64 rng(options.seed ^ 0x5eedULL);
  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (auto& [name, value] : model.parameters()) {
    bool zero = true;
    for (double v : value.values()) zero = zero && v == 0.0;
    if (zero) value = random_tensor(value.shape(), rng, 0.1);
    names.push_back(name);
    inputs.push_back(value);
  }

  Check c;
  c.name = "full_loss";
  c.inputs = std::move(inputs);
  c.options.coords_per_input = options.loss_coords_per_tensor;
  // The batch points into the dataset, so the closure owns both.
  c.f = [=, dataset = dataset](Tape& tape, std::span<const Var> vars) {
    (void)dataset;
    std::map<std::string, Var> bound;
    for (std::size_t i = 0; i < names.size(); ++i) bound.emplace(names[i], vars[i]);
    const BoundModel m(mc, tape, std::move(bound));
    const ToyTextEncoder text(mc.text_len, mc.key_dim);
    return training_loss(m, *batch, tc, *schedule, text);
  };
  return c;
}

std::vector<Check> build_checks(const GradSuiteOptions& options) {
  std::mt19937_64 rng(options.seed);
  auto rnd = [&](Shape s) { return random_tensor(s, rng); };
  const std::uint64_t w = options.seed + 1;
  std::vector<Check> checks;
  auto unary = [&](std::string name, Tensor x, std::function<Var(const Var&)> op) {
    checks.push_back({std::move(name), {std::move(x)},
                      [op, w](Tape& t, std::span<const Var> v) { return weighted_sum(t, op(v[0]), w); },
                      {}});
  };
  auto binary = [&](std::string name, Tensor a, Tensor b,
                    std::function<Var(const Var&, const Var&)> op) {
    checks.push_back({std::move(name), {std::move(a), std::move(b)},
                      [op, w](Tape& t, std::span<const Var> v) {
                        return weighted_sum(t, op(v[0], v[1]), w);
                      },
                      {}});
  };

  binary("matmul", rnd({3, 4}), rnd({4, 5}), ad::matmul);
  unary("transpose", rnd({3, 4}), ad::transpose);
  unary("softmax_rows", rnd({3, 5}), ad::softmax_rows);
  binary("hadamard", rnd({3, 4}), rnd({3, 4}), ad::hadamard);
  binary("hadamard_row_broadcast", rnd({3, 4}), rnd({1, 4}), ad::hadamard);
  binary("hadamard_column_broadcast", rnd({3, 4}), rnd({3, 1}), ad::hadamard);
  binary("add", rnd({3, 4}), rnd({3, 4}), ad::add);
  binary("add_row_broadcast", rnd({3, 4}), rnd({1, 4}), ad::add);
  binary("add_column_broadcast", rnd({3, 4}), rnd({3, 1}), ad::add);
  binary("sub", rnd({3, 4}), rnd({3, 4}), ad::sub);
  unary("scale", rnd({3, 4}), [](const Var& x) { return ad::scale(x, -1.7); });
  if (options.inject_fault)
    unary("silu", rnd({3, 4}), silu_with_wrong_adjoint);
  else
    unary("silu", rnd({3, 4}), ad::silu);
  unary("pool_down_mean", rnd({4, 4, 2}),
        [](const Var& x) { return ad::pool_down(x, ops::PoolMode::kMean); });
  unary("pool_down_max", rnd({4, 4, 2}),
        [](const Var& x) { return ad::pool_down(x, ops::PoolMode::kMax); });
  unary("upsample_nearest", rnd({2, 2, 3}), ad::upsample_nearest);
  unary("reshape", rnd({2, 3, 2}), [](const Var& x) { return ad::reshape(x, {3, 4}); });
  binary("concat_rows", rnd({2, 3}), rnd({4, 3}), [](const Var& a, const Var& b) {
    const Var parts[] = {a, b};
    return ad::concat_rows(parts);
  });
  binary("concat_cols", rnd({3, 2}), rnd({3, 4}), [](const Var& a, const Var& b) {
    const Var parts[] = {a, b};
    return ad::concat_cols(parts);
  });
  unary("slice_cols", rnd({3, 6}), [](const Var& x) { return ad::slice_cols(x, 1, 4); });
  unary("gather_rows", rnd({4, 3}), [](const Var& x) { return ad::gather_rows(x, {2, 0, 2, 3}); });
  unary("gather_cols", rnd({3, 4}), [](const Var& x) { return ad::gather_cols(x, {3, 1, 1}); });
  unary("sum", rnd({3, 4}), ad::sum);
  binary("mse", rnd({3, 4}), rnd({3, 4}), ad::mse);

  // Face projection and stacking: text, projection weights and biases.
  {
    const std::size_t d_gf = 8, d_lf = 4, d_k = 16, side = 2;
    FaceFeature a{rnd({1, d_gf}), rnd({side * side, d_lf}), "a"};
    FaceFeature b{rnd({1, d_gf}), rnd({side * side, d_lf}), "b"};
    checks.push_back({"project_and_stack",
                      {rnd({3, d_k}), rnd({d_gf, d_k}), rnd({1, d_k}), rnd({d_lf, d_k}), rnd({1, d_k})},
                      [a, b, w](Tape& t, std::span<const Var> v) {
                        const ProjectionVars p{v[1], v[2], v[3], v[4]};
                        const Var blocks[] = {project_face(a, p), project_face(b, p)};
                        StackLayout layout;
                        return weighted_sum(t, stack_embeddings(v[0], blocks, layout), w);
                      },
                      {}});
  }

  // Attention kernel over every input, both mask modes.
  for (MaskMode mode : {MaskMode::kMultiplicative, MaskMode::kAdditive}) {
    const std::size_t queries = 6, d_model = 5, d_k = 16, heads = 2, head_dim = 3;
    const StackLayout layout{2, 5, 2};
    AttentionMask mask{Tensor({queries, layout.keys()}, 1.0), layout};
    std::bernoulli_distribution in(0.5);
    for (std::size_t q = 0; q < queries; ++q)
      for (std::size_t f = 0; f < layout.faces; ++f) {
        const double m = in(rng) ? 1.0 : 0.0;
        for (std::size_t k = layout.block_begin(f); k < layout.block_end(f); ++k) mask.values.at(q, k) = m;
      }
    const std::size_t inner = heads * head_dim;
    checks.push_back({mode == MaskMode::kMultiplicative ? "attention_multiplicative" : "attention_additive",
                      {rnd({queries, d_model}), rnd({layout.keys(), d_k}), rnd({d_model, inner}),
                       rnd({d_k, inner}), rnd({d_k, inner}), rnd({inner, d_model})},
                      [mask, mode, heads, head_dim, w](Tape& t, std::span<const Var> v) {
                        const AttentionVars p{v[2], v[3], v[4], v[5], heads, head_dim};
                        AttentionOptions o;
                        o.mode = mode;
                        return weighted_sum(t, masked_cross_attention(v[0], v[1], mask, p, o).out, w);
                      },
                      {}});
  }

  checks.push_back(full_loss_check(options));
  return checks;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
  std::vector<GradSuiteEntry> out;
  for (auto& check : build_checks(options)) {
    GradCheckOptions o = check.options;
    o.step = options.step;
    o.seed = options.seed;
    GradSuiteEntry e;
    e.name = check.name;
    e.result = grad_check(check.f, check.inputs, o);
    e.passed = e.result.max_rel_error < options.tolerance;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mia
