#pragma once

#include <string>
#include <vector>

#include "mia/embedding.hpp"
#include "mia/mask.hpp"
#include "mia/tensor.hpp"

namespace mia {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 1.0;
};

/// One annotated face. The first keypoint is the face center; the rest are
/// optional skeleton points.
struct AnnotatedFace {
  FaceBox box;
  std::vector<Keypoint> keypoints;
  FaceFeature feature;
  std::string identity;
};

/// A training or conditioning example: image [H x W x C], caption and faces.
struct AnnotatedRecord {
  Tensor image;
  std::string caption;
  std::vector<AnnotatedFace> faces;
};

}  // namespace mia
