#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "mia/embedding.hpp"
#include "mia/ops.hpp"

using namespace mia;

namespace {

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

FaceFeature random_face(std::size_t d_gf, std::size_t side, std::size_t d_lf, std::mt19937_64& rng) {
  return {gaussian({1, d_gf}, rng), gaussian({side * side, d_lf}, rng), "face"};
}

std::vector<FaceTokenBlock> blocks(std::size_t n, std::size_t side, std::mt19937_64& rng) {
  const ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  std::vector<FaceTokenBlock> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(project_face(random_face(8, side, 4, rng), p));
  return out;
}

}  // namespace

TEST(ProjectFace, FullScaleBlockShape) {
  std::mt19937_64 rng(1);
  const ProjectionParams p = ProjectionParams::random(512, 256, 768, rng);
  const FaceTokenBlock b = project_face(random_face(512, 7, 256, rng), p);
  EXPECT_EQ(b.tokens.shape(), (Shape{50, 768}));
}

TEST(ProjectFace, GlobalTokenFirst) {
  std::mt19937_64 rng(2);
  const ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  const FaceFeature f = random_face(8, 2, 4, rng);
  const FaceTokenBlock b = project_face(f, p);
  const Tensor global = ops::add(ops::matmul(f.global, p.global_weight), p.global_bias);
  const Tensor local = ops::add(ops::matmul(f.local, p.local_weight), p.local_bias);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(b.tokens.at(0, j), global.at(0, j));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(b.tokens.at(i + 1, j), local.at(i, j));
}

TEST(ProjectFace, ZeroFeatureZeroBiasGivesZeroBlock) {
  std::mt19937_64 rng(3);
  ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  p.global_bias = Tensor({1, 16}, 0.0);
  p.local_bias = Tensor({1, 16}, 0.0);
  const FaceFeature zero{Tensor({1, 8}, 0.0), Tensor({4, 4}, 0.0), "z"};
  EXPECT_EQ(project_face(zero, p).tokens, Tensor({5, 16}, 0.0));
}

TEST(ProjectFace, DegenerateGrid) {
  std::mt19937_64 rng(4);
  const ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  EXPECT_EQ(project_face(random_face(8, 1, 4, rng), p).tokens.shape(), (Shape{2, 16}));
}

TEST(ProjectFace, LinearWithoutBias) {
  std::mt19937_64 rng(5);
  ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  p.global_bias = Tensor({1, 16}, 0.0);
  p.local_bias = Tensor({1, 16}, 0.0);
  const FaceFeature f = random_face(8, 2, 4, rng);
  const double alpha = -2.5;
  const FaceFeature scaled{ops::scale(f.global, alpha), ops::scale(f.local, alpha), "s"};
  const Tensor a = project_face(scaled, p).tokens;
  const Tensor b = ops::scale(project_face(f, p).tokens, alpha);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ProjectFace, DimensionMismatch) {
  std::mt19937_64 rng(6);
  const ProjectionParams p = ProjectionParams::random(8, 4, 16, rng);
  EXPECT_THROW(project_face(random_face(7, 2, 4, rng), p), ShapeError);
  EXPECT_THROW(project_face(random_face(8, 2, 5, rng), p), ShapeError);
  const FaceFeature not_square{gaussian({1, 8}, rng), gaussian({3, 4}, rng), "x"};
  EXPECT_THROW(project_face(not_square, p), ShapeError);
}

TEST(StackEmbeddings, RowCountLaw) {
  std::mt19937_64 rng(7);
  const TextEmbedding text{gaussian({4, 16}, rng)};
  for (std::size_t n = 0; n <= 8; ++n) {
    const auto b = blocks(n, 2, rng);
    const EmbeddingStack k = stack_embeddings(text, b);
    EXPECT_EQ(k.keys.rows(), 4 + n * 5);
    EXPECT_EQ(k.layout.faces, n);
    EXPECT_EQ(k.layout.keys(), k.keys.rows());
  }
}

TEST(StackEmbeddings, ArithmeticExamples) {
  const StackLayout four{77, 50, 4}, seven{77, 50, 7};
  EXPECT_EQ(four.keys(), 277u);
  EXPECT_EQ(seven.keys(), 427u);
}

TEST(StackEmbeddings, NoFacesIsPureText) {
  std::mt19937_64 rng(8);
  const TextEmbedding text{gaussian({3, 16}, rng)};
  const EmbeddingStack k = stack_embeddings(text, {});
  EXPECT_EQ(k.keys, text.tokens);
  EXPECT_EQ(k.layout.faces, 0u);
}

TEST(StackEmbeddings, TextFirstThenBlocksInOrder) {
  std::mt19937_64 rng(9);
  const TextEmbedding text{gaussian({3, 16}, rng)};
  const auto b = blocks(3, 2, rng);
  const EmbeddingStack k = stack_embeddings(text, b);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(k.keys.at(2, j), text.tokens.at(2, j));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 16; ++j)
        EXPECT_EQ(k.keys.at(k.layout.block_begin(n) + r, j), b[n].tokens.at(r, j));
}

TEST(StackEmbeddings, PermutingBlocksPermutesRowBlocksOnly) {
  std::mt19937_64 rng(10);
  const TextEmbedding text{gaussian({3, 16}, rng)};
  const auto b = blocks(3, 2, rng);
  const std::vector<FaceTokenBlock> permuted{b[2], b[0], b[1]};
  const EmbeddingStack k = stack_embeddings(text, b), kp = stack_embeddings(text, permuted);
  const std::size_t source[] = {2, 0, 1};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(kp.keys.at(r, j), k.keys.at(r, j));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 16; ++j)
        EXPECT_EQ(kp.keys.at(kp.layout.block_begin(n) + r, j),
                  k.keys.at(k.layout.block_begin(source[n]) + r, j));
}

TEST(StackEmbeddings, Errors) {
  std::mt19937_64 rng(11);
  const auto b = blocks(1, 2, rng);
  EXPECT_THROW(stack_embeddings(TextEmbedding{gaussian({3, 8}, rng)}, b), ShapeError);
  EXPECT_THROW(stack_embeddings(TextEmbedding{}, b), std::invalid_argument);
}

TEST(Selection, FewerFacesThanCapacity) {
  std::mt19937_64 a(12), b(12);
  const FaceSelection s = select_and_order_faces(2, 4, a);
  EXPECT_EQ(s.order.size(), 2u);
  EXPECT_TRUE(s.pose_only.empty());
  EXPECT_EQ(select_and_order_faces(2, 4, b).order, s.order);
}

TEST(Selection, MoreFacesThanCapacity) {
  std::mt19937_64 rng(13);
  const FaceSelection s = select_and_order_faces(7, 4, rng);
  EXPECT_EQ(s.order.size(), 4u);
  EXPECT_EQ(s.pose_only.size(), 3u);
  std::set<std::size_t> circled(s.circled.begin(), s.circled.end());
  EXPECT_EQ(circled, std::set<std::size_t>(s.order.begin(), s.order.end()));
  std::set<std::size_t> all(s.order.begin(), s.order.end());
  all.insert(s.pose_only.begin(), s.pose_only.end());
  EXPECT_EQ(all.size(), 7u);
}

TEST(Selection, Deterministic) {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 20; ++i) {
    const auto x = select_and_order_faces(7, 4, a), y = select_and_order_faces(7, 4, b);
    EXPECT_EQ(x.order, y.order);
    EXPECT_EQ(x.pose_only, y.pose_only);
  }
}

TEST(Selection, UniformFrequencyChiSquare) {
  // 10^4 draws of 4 out of 7: each face should be selected with p = 4/7 and
  // each face should land in slot 0 with p = 1/7. Critical value: chi-square
  // with 6 degrees of freedom at the 0.001 level.
  constexpr std::size_t kDraws = 10000, kFaces = 7, kCapacity = 4;
  constexpr double kCritical = 22.458;
  std::mt19937_64 rng(2024);
  std::vector<double> selected(kFaces, 0.0), first(kFaces, 0.0);
  for (std::size_t d = 0; d < kDraws; ++d) {
    const auto s = select_and_order_faces(kFaces, kCapacity, rng);
    for (auto f : s.order) selected[f] += 1.0;
    first[s.order.front()] += 1.0;
  }
  auto chi = [](const std::vector<double>& observed, double expected) {
    double x = 0.0;
    for (double o : observed) x += (o - expected) * (o - expected) / expected;
    return x;
  };
  EXPECT_LT(chi(selected, kDraws * 4.0 / 7.0), kCritical);
  EXPECT_LT(chi(first, kDraws / 7.0), kCritical);
}

TEST(ToyTextEncoder, DeterministicAndPadded) {
  const ToyTextEncoder enc(6, 16);
  const TextEmbedding a = enc.encode("a photo of 2 people");
  EXPECT_EQ(a.tokens.shape(), (Shape{6, 16}));
  EXPECT_EQ(enc.encode("a photo of 2 people").tokens, a.tokens);
  EXPECT_NE(enc.encode("a photo of 3 people").tokens, a.tokens);
  EXPECT_EQ(ToyTextEncoder(2, 16).encode("one two three").tokens.rows(), 2u);
}

TEST(FaceFeatureFile, RoundTrip) {
  std::mt19937_64 rng(14);
  FaceFeature f = random_face(8, 2, 4, rng);
  f.identity = "id7";
  const auto path = std::filesystem::temp_directory_path() / "mia_test_face.feature";
  save_face_feature(path, f);
  const FaceFeature g = load_face_feature(path);
  EXPECT_EQ(g.identity, "id7");
  EXPECT_EQ(g.global, f.global);
  EXPECT_EQ(g.local, f.local);
  std::filesystem::remove(path);
}
