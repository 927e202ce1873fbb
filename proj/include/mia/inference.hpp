#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mia/denoiser.hpp"
#include "mia/record.hpp"
#include "mia/schedule.hpp"

namespace mia {

struct InferenceRequest {
  /// Identity features in stacking order; may exceed the training capacity.
  std::vector<FaceFeature> identities;
  /// Pose source: boxes and keypoints. Slot s uses pose_faces[s]; extra
  /// faces only contribute their skeletons.
  std::vector<AnnotatedFace> pose_faces;
  std::string caption;
  double margin = 0.25;
  std::size_t sample_steps = 10;
  std::uint64_t seed = 0;
  bool ablate_mask = false;
};

struct InferenceResult {
  Tensor sample;  // [H x W x C]
  Conditioning conditioning;
  StackLayout layout;
  std::size_t stack_rows = 0;
  /// Assembled M per stage, finest first.
  std::vector<AttentionMask> masks;
  /// Attention maps of one denoiser pass over the final sample at t = 1.
  std::vector<AttentionSite> sites;
};

/// Stack, mask and sample for up to kPaletteSize identities.
InferenceResult run_inference(const ToyDenoiser& model, const NoiseSchedule& schedule,
                              const InferenceRequest& request);

}  // namespace mia
