#include "mia/mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mia/tensor_io.hpp"

namespace mia {

bool SpatialMask::any() const {
  return std::any_of(grid.values().begin(), grid.values().end(), [](double v) { return v != 0.0; });
}

const SpatialMask& MaskPyramid::at(std::size_t resolution) const {
  auto it = levels.find(resolution);
  if (it == levels.end())
    throw std::out_of_range("mask pyramid has no level " + std::to_string(resolution));
  return it->second;
}

FaceBox expand_box(const FaceBox& box, double margin, std::size_t height, std::size_t width) {
  if (!(margin >= 0.0)) throw std::invalid_argument("expand_box: margin must be non-negative");
  if (!(box.x0 < box.x1) || !(box.y0 < box.y1))
    throw std::invalid_argument("expand_box: degenerate box");
  const double dx = 0.5 * margin * box.width();
  const double dy = 0.5 * margin * box.height();
  FaceBox out;
  out.x0 = std::clamp(std::floor(box.x0 - dx), 0.0, static_cast<double>(width));
  out.y0 = std::clamp(std::floor(box.y0 - dy), 0.0, static_cast<double>(height));
  out.x1 = std::clamp(std::ceil(box.x1 + dx), 0.0, static_cast<double>(width));
  out.y1 = std::clamp(std::ceil(box.y1 + dy), 0.0, static_cast<double>(height));
  if (!(out.x0 < out.x1) || !(out.y0 < out.y1))
    throw std::invalid_argument("expand_box: box lies outside the image");
  return out;
}

SpatialMask rasterize_mask(const FaceBox& box, std::size_t height, std::size_t width,
                           std::size_t face) {
  SpatialMask m{Tensor({height, width}, 0.0), face};
  for (std::size_t i = 0; i < height; ++i) {
    const double cy = static_cast<double>(i) + 0.5;
    if (cy < box.y0 || cy > box.y1) continue;
    for (std::size_t j = 0; j < width; ++j) {
      const double cx = static_cast<double>(j) + 0.5;
      if (cx >= box.x0 && cx <= box.x1) m.grid.at(i, j) = 1.0;
    }
  }
  return m;
}

SpatialMask downsample_mask(const SpatialMask& mask, std::size_t target) {
  const std::size_t h = mask.height(), w = mask.width();
  if (target == 0 || h % target || w % target)
    throw std::invalid_argument("downsample_mask: " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not divisible into " + std::to_string(target) + "x" +
                                std::to_string(target));
  const std::size_t fy = h / target, fx = w / target;
  SpatialMask out{Tensor({target, target}, 0.0), mask.face};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      if (mask.grid.at(i, j) != 0.0) out.grid.at(i / fy, j / fx) = 1.0;
  return out;
}

MaskPyramid build_pyramid(const SpatialMask& mask, std::span<const std::size_t> levels) {
  MaskPyramid p;
  for (auto r : levels) p.levels.emplace(r, downsample_mask(mask, r));
  return p;
}

AttentionMask assemble_attention_mask(std::size_t text_len, std::size_t block_len,
                                      std::size_t resolution, std::span<const SpatialMask> masks) {
  if (text_len == 0) throw std::invalid_argument("assemble_attention_mask: empty text block");
  if (!masks.empty() && block_len == 0)
    throw std::invalid_argument("assemble_attention_mask: zero face block length");
  for (const auto& m : masks)
    if (m.height() != resolution || m.width() != resolution)
      throw std::invalid_argument("assemble_attention_mask: mask is " +
                                  std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                                  ", expected " + std::to_string(resolution) + "x" +
                                  std::to_string(resolution));

  const StackLayout layout{text_len, block_len, masks.size()};
  const std::size_t queries = resolution * resolution;
  AttentionMask out{Tensor({queries, layout.keys()}, 1.0), layout};
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const auto& grid = masks[n].grid;
    for (std::size_t q = 0; q < queries; ++q) {
      const double v = grid[q];
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("assemble_attention_mask: mask values must be 0 or 1");
      for (std::size_t k = layout.block_begin(n); k < layout.block_end(n); ++k)
        out.values.at(q, k) = v;
    }
  }
  return out;
}

AttentionMask all_ones_mask(std::size_t queries, const StackLayout& layout) {
  return {Tensor({queries, layout.keys()}, 1.0), layout};
}

std::vector<std::filesystem::path> write_pyramid_pgm(const std::filesystem::path& dir,
                                                     const std::string& stem,
                                                     const MaskPyramid& pyramid) {
  std::vector<std::filesystem::path> written;
  for (const auto& [res, mask] : pyramid.levels) {
    auto path = dir / (stem + "_" + std::to_string(res) + ".pgm");
    write_pgm(path, mask.grid, 0.0, 1.0);
    written.push_back(path);
  }
  return written;
}

}  // namespace mia
