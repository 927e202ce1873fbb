#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mia/record.hpp"
#include "mia/tensor.hpp"

namespace mia {

inline constexpr std::size_t kPaletteSize = 8;

/// RGB color of stacking slot `slot`.
std::array<double, 3> palette_color(std::size_t slot);

/// A center circle: which face, painted with which slot's color.
struct Circle {
  std::size_t face = 0;
  std::size_t slot = 0;
};

/// Control raster c_c [H x W x 3] with the inputs that produced it.
struct PoseControl {
  Tensor image;
  std::vector<std::vector<Keypoint>> keypoints;
  std::vector<Circle> circles;
};

/// Circles for a stacking order: face order[s] gets slot s.
std::vector<Circle> circles_for_order(std::span<const std::size_t> order);

/// Draws every face's skeleton (strokes from the center keypoint to each other
/// keypoint, plus a dot per keypoint) and then a filled center circle for each
/// entry of `circles`.
PoseControl render_pose_control(std::span<const AnnotatedFace> faces,
                                std::span<const Circle> circles, std::size_t height,
                                std::size_t width);

}  // namespace mia
