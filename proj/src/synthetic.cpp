#include "mia/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mia/ops.hpp"

namespace mia {

std::size_t template_side(std::size_t grid_side) {
  if (grid_side == 0) throw std::invalid_argument("grid side must be positive");
  return grid_side * ((4 + grid_side - 1) / grid_side);
}

std::string identity_label(std::size_t index) { return "id" + std::to_string(index); }

Tensor identity_template(std::size_t index, std::size_t channels, std::size_t side) {
  std::mt19937_64 rng(fnv1a("identity-template:" + std::to_string(index)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> base(channels);
  for (auto& b : base) b = normal(rng);
  Tensor t({side, side, channels});
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j)
      for (std::size_t c = 0; c < channels; ++c) t.at(i, j, c) = base[c] + 0.5 * normal(rng);
  double rms = 0.0;
  for (double v : t.data()) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(t.size()));
  return ops::scale(t, 1.0 / rms);
}

Tensor resample_cells(const Tensor& crop, std::size_t side) {
  if (crop.rank() != 3) throw ShapeError("resample_cells expects an [h x w x c] crop");
  const std::size_t h = crop.dim(0), w = crop.dim(1), ch = crop.dim(2);
  Tensor sums({side, side, ch}, 0.0);
  std::vector<double> counts(side * side, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t ci = y * side / h, cj = x * side / w;
      counts[ci * side + cj] += 1.0;
      for (std::size_t c = 0; c < ch; ++c) sums.at(ci, cj, c) += crop.at(y, x, c);
    }
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const double n = counts[i * side + j];
      if (n == 0.0) throw ShapeError("resample_cells: crop smaller than the target grid");
      for (std::size_t c = 0; c < ch; ++c) sums.at(i, j, c) /= n;
    }
  return sums;
}

Tensor crop(const Tensor& image, const FaceBox& box) {
  const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.x0)));
  const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.y0)));
  const auto x1 = std::min(image.dim(1), static_cast<std::size_t>(std::ceil(box.x1)));
  const auto y1 = std::min(image.dim(0), static_cast<std::size_t>(std::ceil(box.y1)));
  if (x1 <= x0 || y1 <= y0) throw std::invalid_argument("crop: empty window");
  const std::size_t ch = image.dim(2);
  Tensor out({y1 - y0, x1 - x0, ch});
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x)
      for (std::size_t c = 0; c < ch; ++c) out.at(y - y0, x - x0, c) = image.at(y, x, c);
  return out;
}

ToyFaceEncoder::ToyFaceEncoder(std::size_t channels, std::size_t grid_side, std::size_t global_dim,
                               std::size_t local_dim)
    : channels_(channels), grid_side_(grid_side), side_(template_side(grid_side)) {
  std::mt19937_64 rng(fnv1a("toy-face-encoder"));
  const std::size_t flat = side_ * side_ * channels_;
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(flat)));
  global_map_ = Tensor({flat, global_dim});
  for (auto& v : global_map_.data()) v = g(rng);
  std::normal_distribution<double> l(0.0, 1.0 / std::sqrt(static_cast<double>(channels_)));
  local_map_ = Tensor({channels_, local_dim});
  for (auto& v : local_map_.data()) v = l(rng);
}

FaceFeature ToyFaceEncoder::encode(const Tensor& appearance, const std::string& identity) const {
  if (appearance.rank() != 3 || appearance.dim(2) != channels_)
    throw ShapeError("toy face encoder expects an [h x w x " + std::to_string(channels_) +
                     "] crop, got " + shape_string(appearance.shape()));
  const Tensor cells = resample_cells(appearance, side_);
  FaceFeature f;
  f.identity = identity;
  f.global = ops::matmul(cells.reshaped({1, cells.size()}), global_map_);

  const std::size_t per = side_ / grid_side_;
  Tensor pooled({grid_side_ * grid_side_, channels_}, 0.0);
  for (std::size_t i = 0; i < side_; ++i)
    for (std::size_t j = 0; j < side_; ++j)
      for (std::size_t c = 0; c < channels_; ++c)
        pooled.at((i / per) * grid_side_ + j / per, c) +=
            cells.at(i, j, c) / static_cast<double>(per * per);
  f.local = ops::matmul(pooled, local_map_);
  return f;
}

namespace {

bool overlaps(const FaceBox& a, const FaceBox& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

bool place_faces(std::size_t count, const SyntheticOptions& o, std::mt19937_64& rng,
                 std::vector<FaceBox>& boxes) {
  std::uniform_int_distribution<std::size_t> size_dist(o.min_face_size, o.max_face_size);
  boxes.clear();
  for (std::size_t f = 0; f < count; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const std::size_t s = size_dist(rng);
      if (s > o.width || s > o.height) return false;
      std::uniform_int_distribution<std::size_t> xd(0, o.width - s), yd(0, o.height - s);
      const double x = static_cast<double>(xd(rng)), y = static_cast<double>(yd(rng));
      const FaceBox box{x, y, x + static_cast<double>(s), y + static_cast<double>(s)};
      if (std::none_of(boxes.begin(), boxes.end(), [&](const FaceBox& b) { return overlaps(b, box); })) {
        boxes.push_back(box);
        placed = true;
      }
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

std::vector<AnnotatedRecord> make_synthetic_dataset(const SyntheticOptions& o) {
  if (o.identities < 2) throw std::invalid_argument("synthetic dataset needs at least two identities");
  if (o.min_faces > o.max_faces || o.min_face_size == 0 || o.min_face_size > o.max_face_size)
    throw std::invalid_argument("synthetic dataset: inconsistent face count or size range");

  const std::size_t side = template_side(o.grid_side);
  std::vector<Tensor> templates;
  for (std::size_t i = 0; i < o.identities; ++i)
    templates.push_back(identity_template(i, o.channels, side));
  const ToyFaceEncoder encoder(o.channels, o.grid_side, o.global_dim, o.local_dim);
  std::vector<FaceFeature> features;
  for (std::size_t i = 0; i < o.identities; ++i)
    features.push_back(encoder.encode(templates[i], identity_label(i)));

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count_dist(o.min_faces, o.max_faces);

  std::vector<AnnotatedRecord> records;
  for (std::size_t r = 0; r < o.records; ++r) {
    const std::size_t count = count_dist(rng);
    std::vector<FaceBox> boxes;
    bool ok = false;
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) ok = place_faces(count, o, rng, boxes);
    if (!ok)
      throw std::runtime_error("synthetic dataset: cannot place " + std::to_string(count) +
                               " non-overlapping faces in a " + std::to_string(o.height) + "x" +
                               std::to_string(o.width) + " image");

    std::vector<std::size_t> ids(o.identities);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);

    AnnotatedRecord rec;
    rec.image = Tensor({o.height, o.width, o.channels});
    for (auto& v : rec.image.data()) v = o.background_scale * normal(rng);
    for (std::size_t f = 0; f < count; ++f) {
      const std::size_t id = ids[f % ids.size()];
      const FaceBox& b = boxes[f];
      const auto x0 = static_cast<std::size_t>(b.x0), y0 = static_cast<std::size_t>(b.y0);
      const auto w = static_cast<std::size_t>(b.width()), h = static_cast<std::size_t>(b.height());
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t c = 0; c < o.channels; ++c)
            rec.image.at(y0 + y, x0 + x, c) = templates[id].at(y * side / h, x * side / w, c);

      AnnotatedFace face;
      face.box = b;
      face.identity = identity_label(id);
      face.feature = features[id];
      face.keypoints = {{b.center_x(), b.center_y(), 1.0},
                        {b.x0, b.y0, 1.0},
                        {b.x1 - 0.5, b.y0, 1.0},
                        {b.x0, b.y1 - 0.5, 1.0},
                        {b.x1 - 0.5, b.y1 - 0.5, 1.0}};
      rec.faces.push_back(std::move(face));
    }
    rec.caption = "a photo of " + std::to_string(count) + (count == 1 ? " person" : " people");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace mia
