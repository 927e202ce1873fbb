#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mia/autodiff.hpp"
#include "mia/layout.hpp"
#include "mia/tensor.hpp"

namespace mia {

/// Text conditioning tokens, [T x d_K].
struct TextEmbedding {
  Tensor tokens;

  std::size_t length() const { return tokens.rows(); }
  std::size_t width() const { return tokens.cols(); }
};

/// One identity as seen by a face-recognition encoder: a global vector
/// [1 x d_gf] and a local feature grid flattened to [(L*L) x d_lf].
struct FaceFeature {
  Tensor global;
  Tensor local;
  std::string identity;

  /// L, the side of the local grid. Throws if the row count is not a square.
  std::size_t grid_side() const;
};

/// Projected tokens of one face, [(L*L + 1) x d_K]; row 0 is the global token.
struct FaceTokenBlock {
  Tensor tokens;
};

/// Affine maps from face features to key width. One pair of maps is shared by
/// every face and every stacking slot.
struct ProjectionParams {
  Tensor global_weight;  // [d_gf x d_K]
  Tensor global_bias;    // [1 x d_K]
  Tensor local_weight;   // [d_lf x d_K]
  Tensor local_bias;     // [1 x d_K]

  static ProjectionParams random(std::size_t d_gf, std::size_t d_lf, std::size_t d_k,
                                 std::mt19937_64& rng);
};

/// The same maps bound to a tape for training.
struct ProjectionVars {
  Var global_weight;
  Var global_bias;
  Var local_weight;
  Var local_bias;
};

/// Key/value source for cross-attention: text rows then face blocks.
struct EmbeddingStack {
  Tensor keys;
  StackLayout layout;
};

FaceTokenBlock project_face(const FaceFeature& face, const ProjectionParams& params);
Var project_face(const FaceFeature& face, const ProjectionVars& params);

/// Concatenates text tokens and face blocks in the given order.
EmbeddingStack stack_embeddings(const TextEmbedding& text, std::span<const FaceTokenBlock> blocks);
/// Taped concatenation; returns the stacked keys and fills `layout`.
Var stack_embeddings(const Var& text, std::span<const Var> blocks, StackLayout& layout);

/// Outcome of choosing which annotated faces get an identity slot.
struct FaceSelection {
  /// Face indices in stacking order; slot s holds face order[s].
  std::vector<std::size_t> order;
  /// Faces that receive a colored center circle: exactly the selected ones.
  std::vector<std::size_t> circled;
  /// Faces present only through their pose keypoints.
  std::vector<std::size_t> pose_only;
};

/// Picks min(capacity, annotated) faces uniformly at random and stacks them in
/// a uniformly random order.
FaceSelection select_and_order_faces(std::size_t annotated, std::size_t capacity,
                                     std::mt19937_64& rng);

/// Deterministic stand-in for a frozen text encoder: each whitespace token
/// maps to a fixed pseudo-random vector derived from its hash; the sequence is
/// padded or truncated to `length` tokens.
class ToyTextEncoder {
 public:
  ToyTextEncoder(std::size_t length, std::size_t width) : length_(length), width_(width) {}

  TextEmbedding encode(const std::string& text) const;
  std::size_t length() const { return length_; }
  std::size_t width() const { return width_; }

 private:
  std::size_t length_;
  std::size_t width_;
};

/// 64-bit FNV-1a; the stable hash used for all text-derived seeds.
std::uint64_t fnv1a(const std::string& text);

// Face feature file: `identity: <label>` line, then a `global:` line and a
// tensor dump, then a `local:` line and a tensor dump.
void save_face_feature(const std::filesystem::path& path, const FaceFeature& face);
FaceFeature load_face_feature(const std::filesystem::path& path);

}  // namespace mia
