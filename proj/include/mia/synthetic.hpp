#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mia/record.hpp"
#include "mia/tensor.hpp"

namespace mia {

/// Canonical resolution of identity templates for a given local grid side:
/// the smallest multiple of `grid_side` that is at least 4.
std::size_t template_side(std::size_t grid_side);

/// Deterministic appearance of synthetic identity `index`:
/// [P x P x channels], a per-identity base color plus a cell texture.
Tensor identity_template(std::size_t index, std::size_t channels, std::size_t side);

std::string identity_label(std::size_t index);

/// Stand-in for a face-recognition backbone. Maps a face appearance (any
/// [h x w x C] crop) to a global vector and an L x L local grid through fixed
/// pseudo-random linear maps.
class ToyFaceEncoder {
 public:
  ToyFaceEncoder(std::size_t channels, std::size_t grid_side, std::size_t global_dim,
                 std::size_t local_dim);

  FaceFeature encode(const Tensor& appearance, const std::string& identity) const;

  std::size_t side() const { return side_; }

 private:
  std::size_t channels_;
  std::size_t grid_side_;
  std::size_t side_;
  Tensor global_map_;  // [P*P*C x d_gf]
  Tensor local_map_;   // [C x d_lf]
};

/// Area-average resampling of an [h x w x C] crop onto a side x side grid;
/// pixel (y, x) falls in cell (y*side/h, x*side/w).
Tensor resample_cells(const Tensor& crop, std::size_t side);

/// Copies the [y0,y1) x [x0,x1) window out of an [H x W x C] image.
Tensor crop(const Tensor& image, const FaceBox& box);

struct SyntheticOptions {
  std::size_t records = 64;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 4;
  std::size_t identities = 2;
  std::size_t min_faces = 1;
  std::size_t max_faces = 6;
  std::size_t min_face_size = 4;
  std::size_t max_face_size = 5;
  double background_scale = 0.3;
  std::size_t grid_side = 2;
  std::size_t global_dim = 8;
  std::size_t local_dim = 4;
  std::uint64_t seed = 0;
};

/// Records with a noisy background and non-overlapping square faces. Within a
/// record, identities repeat only when there are more faces than identities.
std::vector<AnnotatedRecord> make_synthetic_dataset(const SyntheticOptions& options);

}  // namespace mia
