#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "mia/layout.hpp"
#include "mia/tensor.hpp"

namespace mia {

/// Axis-aligned face rectangle in pixel coordinates: x spans [x0, x1), y spans
/// [y0, y1).
struct FaceBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool operator==(const FaceBox&) const = default;
};

/// Binary [H x W] grid for one face; 1 marks the face area.
struct SpatialMask {
  Tensor grid;
  std::size_t face = 0;

  std::size_t height() const { return grid.rows(); }
  std::size_t width() const { return grid.cols(); }
  bool any() const;
};

/// One face's mask at several square resolutions, keyed by side length.
struct MaskPyramid {
  std::map<std::size_t, SpatialMask> levels;

  const SpatialMask& at(std::size_t resolution) const;
};

/// Query-by-key multiplier matrix [n_q x n_k]. Text columns are all ones;
/// face block n repeats that face's mask value across its columns.
struct AttentionMask {
  Tensor values;
  StackLayout layout;
};

/// Grows the box by `margin` of its width and height in total (half per side),
/// rounds outward to whole pixels and clamps to [0, width] x [0, height].
FaceBox expand_box(const FaceBox& box, double margin, std::size_t height, std::size_t width);

/// Cells whose centers fall inside the box are 1.
SpatialMask rasterize_mask(const FaceBox& box, std::size_t height, std::size_t width,
                           std::size_t face = 0);

/// Max-pool to a `target` x `target` grid: a cell is 1 iff any covered source
/// cell is 1. The source side must be a multiple of `target`.
SpatialMask downsample_mask(const SpatialMask& mask, std::size_t target);

MaskPyramid build_pyramid(const SpatialMask& mask, std::span<const std::size_t> levels);

/// Builds M for one `resolution` x `resolution` attention stage. `masks` must
/// be in stacking order and at that resolution; with no masks the result is
/// the all-ones text-only mask.
AttentionMask assemble_attention_mask(std::size_t text_len, std::size_t block_len,
                                      std::size_t resolution, std::span<const SpatialMask> masks);

/// Mask with every entry 1 for the given layout and query count.
AttentionMask all_ones_mask(std::size_t queries, const StackLayout& layout);

/// Writes each pyramid level as `<stem>_<res>.pgm` under `dir` (0 / 255 levels).
std::vector<std::filesystem::path> write_pyramid_pgm(const std::filesystem::path& dir,
                                                     const std::string& stem,
                                                     const MaskPyramid& pyramid);

}  // namespace mia
