#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mia/autodiff.hpp"
#include "mia/embedding.hpp"
#include "mia/layout.hpp"
#include "mia/mask.hpp"

namespace mia {

/// How the attention mask enters the logits.
enum class MaskMode {
  /// logits * M before the softmax. Masked keys keep a zero logit, so they
  /// still receive exp(0) weight.
  kMultiplicative,
  /// Comparison mode, not the default: logits + log(M), which excludes keys
  /// whose mask entry is 0.
  kAdditive,
};

/// Projection weights for multi-head cross-attention.
struct AttentionParams {
  Tensor query;   // [d_model x heads*head_dim]
  Tensor key;     // [d_K x heads*head_dim]
  Tensor value;   // [d_K x heads*head_dim]
  Tensor output;  // [heads*head_dim x d_model]
  std::size_t heads = 1;
  std::size_t head_dim = 1;

  static AttentionParams random(std::size_t d_model, std::size_t d_k, std::size_t heads,
                                std::size_t head_dim, std::mt19937_64& rng);
};

struct AttentionVars {
  Var query;
  Var key;
  Var value;
  Var output;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
};

struct AttentionOptions {
  MaskMode mode = MaskMode::kMultiplicative;
  /// Keep the per-head weight matrices in the result.
  bool retain_maps = false;
  /// false computes plain unmasked attention (reference path).
  bool apply_mask = true;
};

struct AttentionOutput {
  Tensor out;                // [n_q x d_model]
  std::vector<Tensor> maps;  // per head, [n_q x n_k], key order as given
};

struct TapedAttention {
  Var out;
  std::vector<Tensor> maps;
};

/// softmax(M (.) (x W_Q)(K W_K)^T / sqrt(head_dim)) (K W_V), per head, then the
/// heads are concatenated and mapped by W_O. The same M is used by every head.
///
/// Face blocks are visited in a canonical order derived from their contents,
/// so reordering the blocks of K and M together gives a bit-identical output.
TapedAttention masked_cross_attention(const Var& x, const Var& keys, const AttentionMask& mask,
                                      const AttentionVars& params,
                                      const AttentionOptions& options = {});

AttentionOutput masked_cross_attention(const Tensor& x, const EmbeddingStack& keys,
                                       const AttentionMask& mask, const AttentionParams& params,
                                       const AttentionOptions& options = {});

/// Attention mass statistics for one face, averaged over heads and over the
/// queries that lie inside that face's mask.
struct FaceConcentration {
  double matching = 0.0;  // mass on the face's own block
  double foreign = 0.0;   // mass per other face block
  double text = 0.0;      // mass on the text block
  std::size_t samples = 0;  // (query, head) pairs averaged
};

/// `reference` decides which queries count as inside each face; it may differ
/// from the mask the maps were computed with (e.g. for an unmasked control).
std::vector<FaceConcentration> attention_concentration(std::span<const Tensor> maps,
                                                       const AttentionMask& reference);

struct ConcentrationSummary {
  double matching = 0.0;
  double foreign = 0.0;
  double text = 0.0;
  std::size_t samples = 0;

  /// matching / foreign.
  double ratio() const;
  void merge(const FaceConcentration& face);
};

}  // namespace mia
