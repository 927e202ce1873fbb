#include "mia/inference.hpp"

#include <numeric>
#include <stdexcept>

#include "mia/pose.hpp"
#include "mia/training.hpp"

namespace mia {

InferenceResult run_inference(const ToyDenoiser& model, const NoiseSchedule& schedule,
                              const InferenceRequest& request) {
  const ModelConfig& mc = model.config();
  const std::size_t n = request.identities.size();
  if (n == 0) throw std::invalid_argument("inference needs at least one identity");
  if (n > kPaletteSize)
    throw std::invalid_argument("inference supports at most " + std::to_string(kPaletteSize) +
                                " identities, got " + std::to_string(n));
  if (request.pose_faces.size() < n)
    throw std::invalid_argument("pose annotation has " + std::to_string(request.pose_faces.size()) +
                                " faces for " + std::to_string(n) + " identities");

  std::vector<AnnotatedFace> faces = request.pose_faces;
  for (std::size_t s = 0; s < n; ++s) {
    faces[s].feature = request.identities[s];
    faces[s].identity = request.identities[s].identity;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const ToyTextEncoder text_encoder(mc.text_len, mc.key_dim);

  InferenceResult result;
  result.conditioning = make_conditioning(mc, text_encoder.encode(request.caption), faces, order,
                                          circles_for_order(order), request.margin);
  {
    Tape tape;
    const BoundModel bound(model, tape, false);
    const Var keys = embed_conditioning(bound, result.conditioning, result.layout);
    result.stack_rows = keys.value().rows();
  }
  for (auto r : mc.stages) {
    std::vector<SpatialMask> level;
    for (const auto& pyramid : result.conditioning.masks) level.push_back(pyramid.at(r));
    result.masks.push_back(assemble_attention_mask(mc.text_len, mc.block_len(), r, level));
  }

  PredictOptions options;
  options.ablate_mask = request.ablate_mask;
  result.sample = sample(model, result.conditioning, schedule, request.sample_steps, request.seed,
                         options);
  options.sites = &result.sites;
  predict_noise(model, result.sample, 1, result.conditioning, options);
  return result;
}

}  // namespace mia
