#include "mia/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mia/tensor_io.hpp"

namespace mia {

std::size_t FaceFeature::grid_side() const {
  const std::size_t rows = local.rows();
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(rows))));
  if (side * side != rows)
    throw ShapeError("face local feature must have L*L rows, got " + std::to_string(rows));
  return side;
}

namespace {

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void check_projection(const FaceFeature& face, const Tensor& gw, const Tensor& lw) {
  face.grid_side();
  if (face.global.rank() != 2 || face.global.rows() != 1)
    throw ShapeError("face global feature must be [1 x d_gf], got " +
                     shape_string(face.global.shape()));
  if (face.global.cols() != gw.rows())
    throw ShapeError("global feature width " + std::to_string(face.global.cols()) +
                     " does not match projection input " + std::to_string(gw.rows()));
  if (face.local.cols() != lw.rows())
    throw ShapeError("local feature width " + std::to_string(face.local.cols()) +
                     " does not match projection input " + std::to_string(lw.rows()));
  if (gw.cols() != lw.cols())
    throw ShapeError("global and local projections disagree on key width");
}

}  // namespace

ProjectionParams ProjectionParams::random(std::size_t d_gf, std::size_t d_lf, std::size_t d_k,
                                          std::mt19937_64& rng) {
  ProjectionParams p;
  p.global_weight = gaussian({d_gf, d_k}, 1.0 / std::sqrt(static_cast<double>(d_gf)), rng);
  p.global_bias = Tensor({1, d_k}, 0.0);
  p.local_weight = gaussian({d_lf, d_k}, 1.0 / std::sqrt(static_cast<double>(d_lf)), rng);
  p.local_bias = Tensor({1, d_k}, 0.0);
  return p;
}

Var project_face(const FaceFeature& face, const ProjectionVars& params) {
  check_projection(face, params.global_weight.value(), params.local_weight.value());
  Tape& tape = params.global_weight.tape();
  const Var global = ad::add(ad::matmul(tape.constant(face.global), params.global_weight),
                             params.global_bias);
  const Var local =
      ad::add(ad::matmul(tape.constant(face.local), params.local_weight), params.local_bias);
  const Var parts[] = {global, local};
  return ad::concat_rows(parts);
}

FaceTokenBlock project_face(const FaceFeature& face, const ProjectionParams& params) {
  Tape tape;
  ProjectionVars vars{tape.constant(params.global_weight), tape.constant(params.global_bias),
                      tape.constant(params.local_weight), tape.constant(params.local_bias)};
  return {project_face(face, vars).value()};
}

EmbeddingStack stack_embeddings(const TextEmbedding& text, std::span<const FaceTokenBlock> blocks) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& b : blocks) vars.push_back(tape.constant(b.tokens));
  EmbeddingStack stack;
  stack.keys = stack_embeddings(tape.constant(text.tokens), vars, stack.layout).value();
  return stack;
}

Var stack_embeddings(const Var& text, std::span<const Var> blocks, StackLayout& layout) {
  const Tensor& t = text.value();
  if (t.rank() != 2 || t.rows() == 0) throw ShapeError("text embedding must be a non-empty matrix");
  layout = StackLayout{t.rows(), 0, blocks.size()};
  std::vector<Var> parts{text};
  for (const auto& b : blocks) {
    const Tensor& bt = b.value();
    if (bt.cols() != t.cols())
      throw ShapeError("face block width " + std::to_string(bt.cols()) +
                       " does not match text width " + std::to_string(t.cols()));
    if (layout.block_len == 0) layout.block_len = bt.rows();
    if (bt.rows() != layout.block_len)
      throw ShapeError("face blocks must all have the same token count");
    parts.push_back(b);
  }
  if (parts.size() == 1) return text;
  return ad::concat_rows(parts);
}

FaceSelection select_and_order_faces(std::size_t annotated, std::size_t capacity,
                                     std::mt19937_64& rng) {
  std::vector<std::size_t> all(annotated);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  FaceSelection sel;
  const std::size_t take = std::min(capacity, annotated);
  sel.order.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  sel.circled = sel.order;
  sel.pose_only.assign(all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  std::sort(sel.pose_only.begin(), sel.pose_only.end());
  return sel;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

TextEmbedding ToyTextEncoder::encode(const std::string& text) const {
  std::istringstream words(text);
  std::vector<std::string> tokens;
  std::string w;
  while (words >> w && tokens.size() < length_) tokens.push_back(w);
  while (tokens.size() < length_) tokens.emplace_back("<pad>");

  Tensor out({length_, width_});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(width_));
  for (std::size_t i = 0; i < length_; ++i) {
    std::mt19937_64 rng(fnv1a(tokens[i]));
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t j = 0; j < width_; ++j) out.at(i, j) = dist(rng);
  }
  return {std::move(out)};
}

void save_face_feature(const std::filesystem::path& path, const FaceFeature& face) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "identity: " << face.identity << "\nglobal:\n";
  write_tensor(out, face.global);
  out << "local:\n";
  write_tensor(out, face.local);
}

FaceFeature load_face_feature(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  FaceFeature face;
  std::string line;
  auto expect = [&](const std::string& tag) {
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    if (line.rfind(tag, 0) != 0)
      throw FormatError(path.string() + ": expected '" + tag + "', got '" + line + "'");
  };
  expect("identity:");
  face.identity = line.substr(std::string("identity:").size());
  face.identity.erase(0, face.identity.find_first_not_of(' '));
  while (!face.identity.empty() && (face.identity.back() == '\r' || face.identity.back() == ' '))
    face.identity.pop_back();
  expect("global:");
  face.global = read_tensor(in);
  expect("local:");
  face.local = read_tensor(in);
  if (face.global.rank() != 2 || face.local.rank() != 2)
    throw FormatError(path.string() + ": face features must be matrices");
  face.grid_side();
  return face;
}

}  // namespace mia
