#include "mia/pose.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mia {

namespace {

constexpr std::array<std::array<double, 3>, kPaletteSize> kPalette = {{
    {1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0},
    {0.0, 0.0, 1.0},
    {1.0, 1.0, 0.0},
    {1.0, 0.0, 1.0},
    {0.0, 1.0, 1.0},
    {1.0, 0.5, 0.0},
    {0.5, 0.0, 1.0},
}};

constexpr double kStroke = 0.5;
constexpr double kJoint = 1.0;

void paint(Tensor& img, double x, double y, const std::array<double, 3>& rgb) {
  if (x < 0 || y < 0) return;
  const auto j = static_cast<std::size_t>(x), i = static_cast<std::size_t>(y);
  if (i >= img.dim(0) || j >= img.dim(1)) return;
  for (std::size_t c = 0; c < 3; ++c) img.at(i, j, c) = rgb[c];
}

void stroke(Tensor& img, const Keypoint& a, const Keypoint& b) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const auto n = static_cast<std::size_t>(std::ceil(len * 4.0)) + 1;
  for (std::size_t s = 0; s <= n; ++s) {
    const double u = static_cast<double>(s) / static_cast<double>(n);
    paint(img, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), {kStroke, kStroke, kStroke});
  }
}

}  // namespace

std::array<double, 3> palette_color(std::size_t slot) {
  if (slot >= kPaletteSize) throw std::out_of_range("palette has only 8 slot colors");
  return kPalette[slot];
}

std::vector<Circle> circles_for_order(std::span<const std::size_t> order) {
  std::vector<Circle> circles;
  for (std::size_t s = 0; s < order.size(); ++s) circles.push_back({order[s], s});
  return circles;
}

PoseControl render_pose_control(std::span<const AnnotatedFace> faces,
                                std::span<const Circle> circles, std::size_t height,
                                std::size_t width) {
  PoseControl pc{Tensor({height, width, 3}, 0.0), {}, {circles.begin(), circles.end()}};
  std::vector<bool> seen(faces.size(), false);
  for (const auto& c : circles) {
    if (c.face >= faces.size()) throw std::out_of_range("circle refers to a missing face");
    if (seen[c.face]) throw std::invalid_argument("a face can carry only one circle");
    seen[c.face] = true;
    palette_color(c.slot);
  }

  for (const auto& face : faces) {
    pc.keypoints.push_back(face.keypoints);
    if (face.keypoints.empty()) continue;
    const Keypoint& center = face.keypoints.front();
    for (std::size_t k = 1; k < face.keypoints.size(); ++k)
      if (face.keypoints[k].confidence > 0.0) stroke(pc.image, center, face.keypoints[k]);
    for (const auto& kp : face.keypoints)
      if (kp.confidence > 0.0) paint(pc.image, kp.x, kp.y, {kJoint, kJoint, kJoint});
  }

  for (const auto& c : circles) {
    const FaceBox& box = faces[c.face].box;
    const double cx = box.center_x(), cy = box.center_y();
    const double r = std::max(1.0, 0.25 * std::min(box.width(), box.height()));
    const auto rgb = palette_color(c.slot);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double dx = static_cast<double>(j) + 0.5 - cx, dy = static_cast<double>(i) + 0.5 - cy;
        if (dx * dx + dy * dy <= r * r)
          for (std::size_t ch = 0; ch < 3; ++ch) pc.image.at(i, j, ch) = rgb[ch];
      }
  }
  return pc;
}

}  // namespace mia
