#include "mia/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mia {

namespace {

constexpr double kExcluded = -1e30;

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Key permutation that lists the text block first and the face blocks sorted
// by (tokens, mask column). Blocks that compare equal are interchangeable.
std::vector<std::size_t> canonical_key_order(const Tensor& keys, const AttentionMask& mask) {
  const StackLayout& l = mask.layout;
  std::vector<std::size_t> blocks(l.faces);
  std::iota(blocks.begin(), blocks.end(), 0);
  auto signature = [&](std::size_t n) {
    std::vector<double> sig;
    const std::size_t width = keys.cols();
    for (std::size_t r = l.block_begin(n); r < l.block_end(n); ++r)
      for (std::size_t c = 0; c < width; ++c) sig.push_back(keys.at(r, c));
    for (std::size_t q = 0; q < mask.values.rows(); ++q)
      sig.push_back(mask.values.at(q, l.block_begin(n)));
    return sig;
  };
  std::vector<std::vector<double>> sigs;
  for (std::size_t n = 0; n < l.faces; ++n) sigs.push_back(signature(n));
  std::stable_sort(blocks.begin(), blocks.end(),
                   [&](std::size_t a, std::size_t b) { return sigs[a] < sigs[b]; });

  std::vector<std::size_t> order(l.text_len);
  std::iota(order.begin(), order.end(), 0);
  for (auto n : blocks)
    for (std::size_t k = l.block_begin(n); k < l.block_end(n); ++k) order.push_back(k);
  return order;
}

void validate(const Tensor& x, const Tensor& keys, const AttentionMask& mask,
              const AttentionVars& p) {
  const std::size_t inner = p.heads * p.head_dim;
  if (p.heads == 0 || p.head_dim == 0) throw ShapeError("attention: heads and head_dim must be positive");
  const Tensor& wq = p.query.value();
  const Tensor& wk = p.key.value();
  const Tensor& wv = p.value.value();
  const Tensor& wo = p.output.value();
  if (wq.cols() != inner || wk.cols() != inner || wv.cols() != inner || wo.rows() != inner)
    throw ShapeError("attention: projection widths disagree with heads*head_dim = " +
                     std::to_string(inner));
  if (x.cols() != wq.rows())
    throw ShapeError("attention: query input " + shape_string(x.shape()) + " vs W_Q " +
                     shape_string(wq.shape()));
  if (keys.cols() != wk.rows() || keys.cols() != wv.rows())
    throw ShapeError("attention: key input " + shape_string(keys.shape()) + " vs W_K " +
                     shape_string(wk.shape()));
  if (wo.cols() != x.cols()) throw ShapeError("attention: W_O must map back to the query width");
  if (mask.values.rows() != x.rows() || mask.values.cols() != keys.rows())
    throw ShapeError("attention: mask " + shape_string(mask.values.shape()) + " does not match " +
                     std::to_string(x.rows()) + " queries x " + std::to_string(keys.rows()) +
                     " keys");
  if (mask.layout.keys() != keys.rows())
    throw ShapeError("attention: mask layout does not match the key stack");
  for (double v : mask.values.data())
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("attention: mask values must lie in [0, 1]");
}

}  // namespace

AttentionParams AttentionParams::random(std::size_t d_model, std::size_t d_k, std::size_t heads,
                                        std::size_t head_dim, std::mt19937_64& rng) {
  const std::size_t inner = heads * head_dim;
  AttentionParams p;
  p.query = gaussian({d_model, inner}, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
  p.key = gaussian({d_k, inner}, 1.0 / std::sqrt(static_cast<double>(d_k)), rng);
  p.value = gaussian({d_k, inner}, 1.0 / std::sqrt(static_cast<double>(d_k)), rng);
  p.output = gaussian({inner, d_model}, 1.0 / std::sqrt(static_cast<double>(inner)), rng);
  p.heads = heads;
  p.head_dim = head_dim;
  return p;
}

TapedAttention masked_cross_attention(const Var& x, const Var& keys, const AttentionMask& mask,
                                      const AttentionVars& params,
                                      const AttentionOptions& options) {
  validate(x.value(), keys.value(), mask, params);
  Tape& tape = x.tape();

  const std::vector<std::size_t> order = canonical_key_order(keys.value(), mask);
  const bool identity_order = std::is_sorted(order.begin(), order.end());
  const Var k_sorted = identity_order ? keys : ad::gather_rows(keys, order);
  const Tensor m_sorted = identity_order ? mask.values : ops::gather_cols(mask.values, order);

  Var m_var;
  if (options.apply_mask) {
    if (options.mode == MaskMode::kMultiplicative) {
      m_var = tape.constant(m_sorted);
    } else {
      Tensor bias = m_sorted;
      for (auto& v : bias.data()) v = v > 0.0 ? std::log(v) : kExcluded;
      m_var = tape.constant(std::move(bias));
    }
  }

  const Var q_all = ad::matmul(x, params.query);
  const Var k_all = ad::matmul(k_sorted, params.key);
  const Var v_all = ad::matmul(k_sorted, params.value);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(params.head_dim));

  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;

  TapedAttention result;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const std::size_t b = h * params.head_dim, e = b + params.head_dim;
    const Var q = ad::slice_cols(q_all, b, e);
    const Var k = ad::slice_cols(k_all, b, e);
    const Var v = ad::slice_cols(v_all, b, e);
    Var logits = ad::matmul(q, ad::transpose(k));
    if (options.apply_mask && options.mode == MaskMode::kMultiplicative)
      logits = ad::hadamard(logits, m_var);
    logits = ad::scale(logits, inv_scale);
    if (options.apply_mask && options.mode == MaskMode::kAdditive) logits = ad::add(logits, m_var);
    const Var weights = ad::softmax_rows(logits);
    if (options.retain_maps)
      result.maps.push_back(identity_order ? weights.value()
                                           : ops::gather_cols(weights.value(), inverse));
    heads.push_back(ad::matmul(weights, v));
  }
  const Var merged = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  result.out = ad::matmul(merged, params.output);
  return result;
}

AttentionOutput masked_cross_attention(const Tensor& x, const EmbeddingStack& keys,
                                       const AttentionMask& mask, const AttentionParams& params,
                                       const AttentionOptions& options) {
  if (!(mask.layout == keys.layout))
    throw ShapeError("attention: mask layout does not match the embedding stack layout");
  Tape tape;
  AttentionVars vars{tape.constant(params.query), tape.constant(params.key),
                     tape.constant(params.value), tape.constant(params.output), params.heads,
                     params.head_dim};
  TapedAttention r =
      masked_cross_attention(tape.constant(x), tape.constant(keys.keys), mask, vars, options);
  return {r.out.value(), std::move(r.maps)};
}

std::vector<FaceConcentration> attention_concentration(std::span<const Tensor> maps,
                                                       const AttentionMask& reference) {
  const StackLayout& l = reference.layout;
  std::vector<FaceConcentration> stats(l.faces);
  if (l.faces == 0) return stats;
  if (maps.empty()) throw std::invalid_argument("attention_concentration: no retained maps");
  for (const auto& m : maps)
    if (m.rows() != reference.values.rows() || m.cols() != l.keys())
      throw ShapeError("attention_concentration: map " + shape_string(m.shape()) +
                       " does not match mask layout");

  const double foreign_blocks = l.faces > 1 ? static_cast<double>(l.faces - 1) : 1.0;
  for (std::size_t n = 0; n < l.faces; ++n) {
    FaceConcentration& s = stats[n];
    for (std::size_t q = 0; q < reference.values.rows(); ++q) {
      if (reference.values.at(q, l.block_begin(n)) != 1.0) continue;
      for (const auto& map : maps) {
        double own = 0.0, other = 0.0, text = 0.0;
        for (std::size_t k = 0; k < l.text_len; ++k) text += map.at(q, k);
        for (std::size_t f = 0; f < l.faces; ++f) {
          double block = 0.0;
          for (std::size_t k = l.block_begin(f); k < l.block_end(f); ++k) block += map.at(q, k);
          (f == n ? own : other) += block;
        }
        s.matching += own;
        s.foreign += other / foreign_blocks;
        s.text += text;
        ++s.samples;
      }
    }
    if (s.samples) {
      const double count = static_cast<double>(s.samples);
      s.matching /= count;
      s.foreign /= count;
      s.text /= count;
    }
  }
  return stats;
}

double ConcentrationSummary::ratio() const {
  if (foreign <= 0.0) return matching > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return matching / foreign;
}

void ConcentrationSummary::merge(const FaceConcentration& face) {
  if (face.samples == 0) return;
  const double total = static_cast<double>(samples + face.samples);
  const double w_old = static_cast<double>(samples) / total;
  const double w_new = static_cast<double>(face.samples) / total;
  matching = matching * w_old + face.matching * w_new;
  foreign = foreign * w_old + face.foreign * w_new;
  text = text * w_old + face.text * w_new;
  samples += face.samples;
}

}  // namespace mia
