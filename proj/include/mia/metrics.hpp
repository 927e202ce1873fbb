#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mia/tensor.hpp"

namespace mia {

using Embedding = std::vector<double>;

enum class EncoderKind { kText, kImage, kFace };

/// Maps an image (or face crop) to a fixed-width vector. Implementations must
/// be deterministic.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual EncoderKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(const Tensor& input) const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(const std::string& text) const = 0;
};

/// Returns the flattened input unchanged; the input must have `dim` values.
class PassthroughEncoder final : public ImageEncoder {
 public:
  PassthroughEncoder(std::size_t dim, EncoderKind kind = EncoderKind::kFace)
      : dim_(dim), kind_(kind) {}
  EncoderKind kind() const override { return kind_; }
  std::size_t dim() const override { return dim_; }
  Embedding embed(const Tensor& input) const override;

 private:
  std::size_t dim_;
  EncoderKind kind_;
};

/// Face encoder for synthetic identities: area-averages an [h x w x C] crop
/// onto a side x side grid and flattens it.
class PatternFaceEncoder final : public ImageEncoder {
 public:
  PatternFaceEncoder(std::size_t channels, std::size_t side) : channels_(channels), side_(side) {}
  EncoderKind kind() const override { return EncoderKind::kFace; }
  std::size_t dim() const override { return side_ * side_ * channels_; }
  Embedding embed(const Tensor& input) const override;

 private:
  std::size_t channels_;
  std::size_t side_;
};

/// Bag of hashed word vectors.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Embedding embed(const std::string& text) const override;

 private:
  std::size_t dim_;
};

/// dot(u, v) / (|u| |v|), clamped to [-1, 1]. Throws on zero norm or unequal
/// dimensions.
double cosine_sim(std::span<const double> u, std::span<const double> v);

double text_sim(const std::string& prompt, const Tensor& generated, const TextEncoder& text_encoder,
                const ImageEncoder& image_encoder);

double single_sim(const Tensor& reference, const Tensor& generated, const ImageEncoder& face_encoder);

/// (SingleSim(A, A') + SingleSim(B, B')) / 2 + (1 - SingleSim(A', B')).
double multi_sim(const Tensor& a, const Tensor& b, const Tensor& a_gen, const Tensor& b_gen,
                 const ImageEncoder& face_encoder);

/// Extension for more than two identities, reported separately from
/// multi_sim: the mean of multi_sim over all unordered pairs (i < j).
double multi_sim_all_pairs(std::span<const Tensor> references, std::span<const Tensor> generated,
                           const ImageEncoder& face_encoder);

struct MeanStd {
  double mean = 0.0;
  /// Population standard deviation; 0 for a single value.
  double std = 0.0;
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

struct ReferencePair {
  Tensor a;
  Tensor b;
};

struct MetricRow {
  double single_a = 0.0;
  double single_b = 0.0;
  double multi = 0.0;
  double text_a = 0.0;
  double text_b = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MeanStd single;  // over both identities of every row
  MeanStd multi;
  MeanStd text;    // over both generated images of every row
  bool has_text = false;
};

/// Scores aligned lists of reference pairs, generated pairs and prompts. Text
/// consistency is computed only when both text-side encoders are given.
MetricReport evaluate_batch(std::span<const ReferencePair> references,
                            std::span<const ReferencePair> generated,
                            std::span<const std::string> prompts, const ImageEncoder& face_encoder,
                            const TextEncoder* text_encoder = nullptr,
                            const ImageEncoder* image_encoder = nullptr);

/// CSV with one row per pair and a trailing mean/std block.
void write_report_csv(std::ostream& out, const MetricReport& report);
std::string report_summary(const MetricReport& report);

}  // namespace mia
