#include "mia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mia/embedding.hpp"
#include "mia/synthetic.hpp"

namespace mia {

Embedding PassthroughEncoder::embed(const Tensor& input) const {
  if (input.size() != dim_)
    throw ShapeError("passthrough encoder expects " + std::to_string(dim_) + " values, got " +
                     std::to_string(input.size()));
  return input.values();
}

Embedding PatternFaceEncoder::embed(const Tensor& input) const {
  if (input.rank() != 3 || input.dim(2) != channels_)
    throw ShapeError("pattern encoder expects an [h x w x " + std::to_string(channels_) +
                     "] crop, got " + shape_string(input.shape()));
  return resample_cells(input, side_).values();
}

Embedding HashTextEncoder::embed(const std::string& text) const {
  Embedding out(dim_, 0.0);
  std::istringstream words(text);
  std::string w;
  while (words >> w) {
    std::mt19937_64 rng(fnv1a(w));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out) v += normal(rng);
  }
  return out;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine_sim: dimension mismatch " + std::to_string(u.size()) +
                                " vs " + std::to_string(v.size()));
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw std::invalid_argument("cosine_sim: zero-norm input");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double text_sim(const std::string& prompt, const Tensor& generated, const TextEncoder& text_encoder,
                const ImageEncoder& image_encoder) {
  if (text_encoder.dim() != image_encoder.dim())
    throw std::invalid_argument("text_sim: text and image encoders differ in dimension");
  return cosine_sim(text_encoder.embed(prompt), image_encoder.embed(generated));
}

double single_sim(const Tensor& reference, const Tensor& generated, const ImageEncoder& face_encoder) {
  return cosine_sim(face_encoder.embed(reference), face_encoder.embed(generated));
}

double multi_sim(const Tensor& a, const Tensor& b, const Tensor& a_gen, const Tensor& b_gen,
                 const ImageEncoder& face_encoder) {
  const double keep_a = single_sim(a, a_gen, face_encoder);
  const double keep_b = single_sim(b, b_gen, face_encoder);
  const double mixing = single_sim(a_gen, b_gen, face_encoder);
  return (keep_a + keep_b) / 2.0 + (1.0 - mixing);
}

double multi_sim_all_pairs(std::span<const Tensor> references, std::span<const Tensor> generated,
                           const ImageEncoder& face_encoder) {
  if (references.size() != generated.size())
    throw std::invalid_argument("multi_sim_all_pairs: misaligned lists");
  if (references.size() < 2) throw std::invalid_argument("multi_sim_all_pairs: need two identities");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < references.size(); ++i)
    for (std::size_t j = i + 1; j < references.size(); ++j) {
      total += multi_sim(references[i], references[j], generated[i], generated[j], face_encoder);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

MetricReport evaluate_batch(std::span<const ReferencePair> references,
                            std::span<const ReferencePair> generated,
                            std::span<const std::string> prompts, const ImageEncoder& face_encoder,
                            const TextEncoder* text_encoder, const ImageEncoder* image_encoder) {
  if (references.empty()) throw std::invalid_argument("evaluate_batch: no pairs to evaluate");
  if (references.size() != generated.size() || references.size() != prompts.size())
    throw std::invalid_argument("evaluate_batch: misaligned lists (" +
                                std::to_string(references.size()) + " references, " +
                                std::to_string(generated.size()) + " generated, " +
                                std::to_string(prompts.size()) + " prompts)");
  MetricReport report;
  report.has_text = text_encoder && image_encoder;
  std::vector<double> singles, multis, texts;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& ref = references[i];
    const auto& gen = generated[i];
    MetricRow row;
    row.single_a = single_sim(ref.a, gen.a, face_encoder);
    row.single_b = single_sim(ref.b, gen.b, face_encoder);
    row.multi = multi_sim(ref.a, ref.b, gen.a, gen.b, face_encoder);
    if (report.has_text) {
      row.text_a = text_sim(prompts[i], gen.a, *text_encoder, *image_encoder);
      row.text_b = text_sim(prompts[i], gen.b, *text_encoder, *image_encoder);
      texts.push_back(row.text_a);
      texts.push_back(row.text_b);
    }
    singles.push_back(row.single_a);
    singles.push_back(row.single_b);
    multis.push_back(row.multi);
    report.rows.push_back(row);
  }
  report.single = mean_std(singles);
  report.multi = mean_std(multis);
  report.text = mean_std(texts);
  return report;
}

void write_report_csv(std::ostream& out, const MetricReport& report) {
  out << std::setprecision(17);
  out << "row,single_sim_a,single_sim_b,multi_sim,text_sim_a,text_sim_b\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out << i << ',' << r.single_a << ',' << r.single_b << ',' << r.multi << ',';
    if (report.has_text)
      out << r.text_a << ',' << r.text_b;
    else
      out << ',';
    out << '\n';
  }
  out << "mean,"  << report.single.mean << ",," << report.multi.mean << ',';
  if (report.has_text) out << report.text.mean;
  out << ",\nstd," << report.single.std << ",," << report.multi.std << ',';
  if (report.has_text) out << report.text.std;
  out << ",\n";
}

std::string report_summary(const MetricReport& report) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  s << "SingleSim " << report.single.mean << " +- " << report.single.std << '\n';
  s << "MultiSim  " << report.multi.mean << " +- " << report.multi.std << '\n';
  if (report.has_text) s << "TextSim   " << report.text.mean << " +- " << report.text.std << '\n';
  s << "pairs     " << report.rows.size() << '\n';
  return s.str();
}

}  // namespace mia
