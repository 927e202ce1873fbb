#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mia/attention.hpp"
#include "mia/ops.hpp"

using namespace mia;

namespace {

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

/// Random problem: n faces, 2x2 local grid, queries on an r x r grid.
struct Problem {
  Tensor x;
  EmbeddingStack keys;
  AttentionMask mask;
  AttentionParams params;
};

Problem random_problem(std::size_t faces, std::size_t r, std::mt19937_64& rng) {
  const std::size_t text_len = 3, block = 5, d_k = 6;
  Problem p;
  p.x = gaussian({r * r, 8}, rng);
  p.keys.layout = {text_len, block, faces};
  p.keys.keys = gaussian({p.keys.layout.keys(), d_k}, rng);
  std::vector<SpatialMask> masks;
  std::bernoulli_distribution coin(0.4);
  for (std::size_t f = 0; f < faces; ++f) {
    SpatialMask m{Tensor({r, r}, 0.0), f};
    for (auto& v : m.grid.data()) v = coin(rng) ? 1.0 : 0.0;
    masks.push_back(m);
  }
  p.mask = assemble_attention_mask(text_len, block, r, masks);
  p.params = AttentionParams::random(8, d_k, 2, 3, rng);
  return p;
}

AttentionOptions with_maps(MaskMode mode = MaskMode::kMultiplicative) {
  AttentionOptions o;
  o.retain_maps = true;
  o.mode = mode;
  return o;
}

}  // namespace

TEST(MaskedAttention, HandEvaluatedSingleHead) {
  AttentionParams p;
  p.heads = 1;
  p.head_dim = 2;
  p.query = Tensor::matrix({{1, 0}, {0, 1}});
  p.key = p.query;
  p.value = p.query;
  p.output = Tensor::matrix({{1, 0}, {0, 0}});
  const EmbeddingStack keys{Tensor::matrix({{1, 0}, {0, 1}}), StackLayout{2, 0, 0}};
  const AttentionMask m = all_ones_mask(1, keys.layout);
  const AttentionOutput out = masked_cross_attention(Tensor::matrix({{1, 0}}), keys, m, p, with_maps());
  const double w0 = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(out.maps[0].at(0, 0), 0.6698, 1e-4);
  EXPECT_NEAR(out.maps[0].at(0, 1), 0.3302, 1e-4);
  EXPECT_NEAR(out.maps[0].at(0, 0), w0, 1e-15);
  EXPECT_NEAR(out.out.at(0, 0), w0, 1e-15);
  EXPECT_EQ(out.out.at(0, 1), 0.0);
}

TEST(MaskedAttention, AllOnesIsBitwiseUnmasked) {
  std::mt19937_64 rng(1);
  for (std::size_t faces = 0; faces <= 4; ++faces) {
    Problem p = random_problem(faces, 4, rng);
    p.mask = all_ones_mask(16, p.keys.layout);
    AttentionOptions reference = with_maps();
    reference.apply_mask = false;
    const AttentionOutput masked = masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps());
    const AttentionOutput plain = masked_cross_attention(p.x, p.keys, p.mask, p.params, reference);
    EXPECT_EQ(masked.out, plain.out);
    for (std::size_t h = 0; h < masked.maps.size(); ++h) EXPECT_EQ(masked.maps[h], plain.maps[h]);
  }
}

TEST(MaskedAttention, RowsSumToOne) {
  std::mt19937_64 rng(2);
  for (auto mode : {MaskMode::kMultiplicative, MaskMode::kAdditive})
    for (int trial = 0; trial < 10; ++trial) {
      const Problem p = random_problem(3, 4, rng);
      for (const auto& map : masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps(mode)).maps)
        for (std::size_t q = 0; q < map.rows(); ++q) {
          double s = 0.0;
          for (std::size_t k = 0; k < map.cols(); ++k) s += map.at(q, k);
          EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(MaskedAttention, MaskedKeysShareOneWeight) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Problem p = random_problem(4, 4, rng);
    for (const auto& map : masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps()).maps)
      for (std::size_t q = 0; q < map.rows(); ++q) {
        double first = -1.0;
        for (std::size_t k = 0; k < map.cols(); ++k) {
          if (p.mask.values.at(q, k) != 0.0) continue;
          if (first < 0.0) first = map.at(q, k);
          EXPECT_EQ(map.at(q, k), first);
        }
      }
  }
}

TEST(MaskedAttention, ZeroRowIsUniform) {
  std::mt19937_64 rng(4);
  Problem p = random_problem(2, 2, rng);
  for (std::size_t k = 0; k < p.mask.values.cols(); ++k) p.mask.values.at(1, k) = 0.0;
  const auto out = masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps());
  const double n = static_cast<double>(p.keys.layout.keys());
  for (const auto& map : out.maps)
    for (std::size_t k = 0; k < map.cols(); ++k) EXPECT_NEAR(map.at(1, k), 1.0 / n, 1e-15);
}

TEST(MaskedAttention, ReorderingBlocksIsBitIdentical) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Problem p = random_problem(3, 4, rng);
    const StackLayout& l = p.keys.layout;
    std::vector<std::size_t> perm(l.text_len);
    for (std::size_t k = 0; k < l.text_len; ++k) perm[k] = k;
    for (std::size_t f : {2, 0, 1})
      for (std::size_t k = l.block_begin(f); k < l.block_end(f); ++k) perm.push_back(k);
    const EmbeddingStack keys{ops::gather_rows(p.keys.keys, perm), l};
    const AttentionMask mask{ops::gather_cols(p.mask.values, perm), l};
    const auto a = masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps());
    const auto b = masked_cross_attention(p.x, keys, mask, p.params, with_maps());
    EXPECT_EQ(a.out, b.out);
    for (std::size_t h = 0; h < a.maps.size(); ++h) EXPECT_EQ(ops::gather_cols(a.maps[h], perm), b.maps[h]);
  }
}

TEST(MaskedAttention, AdditiveExcludesMaskedKeys) {
  std::mt19937_64 rng(6);
  const Problem p = random_problem(3, 4, rng);
  for (const auto& map : masked_cross_attention(p.x, p.keys, p.mask, p.params, with_maps(MaskMode::kAdditive)).maps)
    for (std::size_t q = 0; q < map.rows(); ++q)
      for (std::size_t k = 0; k < map.cols(); ++k)
        if (p.mask.values.at(q, k) == 0.0) EXPECT_EQ(map.at(q, k), 0.0);
}

TEST(MaskedAttention, RejectsInvalidInputs) {
  std::mt19937_64 rng(7);
  Problem p = random_problem(2, 2, rng);
  AttentionMask bad = p.mask;
  bad.values.at(0, 0) = 1.5;
  EXPECT_THROW(masked_cross_attention(p.x, p.keys, bad, p.params), std::invalid_argument);
  bad = p.mask;
  bad.values.at(0, 0) = std::nan("");
  EXPECT_THROW(masked_cross_attention(p.x, p.keys, bad, p.params), std::invalid_argument);
  const AttentionMask wrong = all_ones_mask(3, p.keys.layout);
  EXPECT_THROW(masked_cross_attention(p.x, p.keys, wrong, p.params), ShapeError);
  AttentionMask other_layout = p.mask;
  other_layout.layout.faces = 1;
  EXPECT_THROW(masked_cross_attention(p.x, p.keys, other_layout, p.params), ShapeError);
}

TEST(MaskedAttention, ZeroMaskRowStillTrainsValueProjection) {
  std::mt19937_64 rng(8);
  Problem p = random_problem(2, 2, rng);
  p.mask.values = Tensor(p.mask.values.shape(), 0.0);
  Tape tape;
  const Var wv = tape.leaf(p.params.value);
  const AttentionVars vars{tape.constant(p.params.query), tape.constant(p.params.key), wv,
                           tape.constant(p.params.output), p.params.heads, p.params.head_dim};
  const TapedAttention r =
      masked_cross_attention(tape.constant(p.x), tape.constant(p.keys.keys), p.mask, vars);
  const Tensor g = tape.backward(ad::sum(ad::hadamard(r.out, r.out))).of(wv);
  double norm = 0.0;
  for (double v : g.values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(Concentration, PerfectRouting) {
  // Two faces on a 2x2 grid; each in-mask query attends only to its own block.
  SpatialMask a{Tensor::matrix({{1, 0}, {0, 0}}), 0}, b{Tensor::matrix({{0, 0}, {0, 1}}), 1};
  const SpatialMask masks[] = {a, b};
  const AttentionMask m = assemble_attention_mask(1, 2, 2, masks);
  Tensor map({4, 5}, 0.2);
  map.at(0, 0) = 0.0, map.at(0, 1) = 0.5, map.at(0, 2) = 0.5, map.at(0, 3) = 0.0, map.at(0, 4) = 0.0;
  map.at(3, 0) = 0.2, map.at(3, 1) = 0.0, map.at(3, 2) = 0.0, map.at(3, 3) = 0.4, map.at(3, 4) = 0.4;
  const Tensor maps[] = {map};
  const auto stats = attention_concentration(maps, m);
  ASSERT_EQ(stats.size(), 2u);
  EXPECT_DOUBLE_EQ(stats[0].matching, 1.0);
  EXPECT_DOUBLE_EQ(stats[0].foreign, 0.0);
  EXPECT_DOUBLE_EQ(stats[1].matching, 0.8);
  EXPECT_DOUBLE_EQ(stats[1].text, 0.2);
  EXPECT_EQ(stats[0].samples, 1u);
  ConcentrationSummary s;
  for (const auto& f : stats) s.merge(f);
  EXPECT_DOUBLE_EQ(s.matching, 0.9);
  EXPECT_EQ(s.ratio(), std::numeric_limits<double>::infinity());
}

TEST(Concentration, UniformMapsGiveRatioOne) {
  std::mt19937_64 rng(9);
  const Problem p = random_problem(4, 4, rng);
  const Tensor maps[] = {Tensor({16, p.keys.layout.keys()}, 1.0 / p.keys.layout.keys())};
  ConcentrationSummary s;
  for (const auto& f : attention_concentration(maps, p.mask)) s.merge(f);
  EXPECT_NEAR(s.ratio(), 1.0, 1e-12);
}

TEST(Concentration, ForeignMassIsPerBlock) {
  // Three faces sharing every query; 0.3 on own block, 0.3 on each other block.
  const SpatialMask masks[] = {{Tensor({1, 1}, 1.0), 0}, {Tensor({1, 1}, 1.0), 1}, {Tensor({1, 1}, 1.0), 2}};
  const AttentionMask m = assemble_attention_mask(1, 1, 1, masks);
  const Tensor maps[] = {Tensor::row({0.1, 0.3, 0.3, 0.3})};
  for (const auto& f : attention_concentration(maps, m)) {
    EXPECT_DOUBLE_EQ(f.matching, 0.3);
    EXPECT_DOUBLE_EQ(f.foreign, 0.3);
  }
}

TEST(Concentration, RejectsMismatchedMaps) {
  std::mt19937_64 rng(10);
  const Problem p = random_problem(2, 2, rng);
  const Tensor maps[] = {Tensor({4, 2}, 0.5)};
  EXPECT_THROW(attention_concentration(maps, p.mask), ShapeError);
  EXPECT_THROW(attention_concentration({}, p.mask), std::invalid_argument);
}
