#include "mia/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mia {

void write_tensor(std::ostream& out, const Tensor& t) {
  out << "shape:";
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  const std::size_t row = t.shape().back();
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t i = 0; i < t.size(); ++i) {
    line << t[i] << ((i + 1) % row == 0 ? '\n' : ' ');
  }
  out << line.str();
}

Tensor read_tensor(std::istream& in) {
  std::string header;
  while (header.empty() && std::getline(in, header)) {
    if (header.find_first_not_of(" \t\r") == std::string::npos) header.clear();
  }
  std::istringstream hs(header);
  std::string tag;
  hs >> tag;
  if (tag != "shape:") throw FormatError("tensor dump: expected 'shape:' header, got '" + header + "'");
  Shape shape;
  std::size_t d;
  while (hs >> d) shape.push_back(d);
  if (shape.empty()) throw FormatError("tensor dump: header lists no extents");
  for (auto e : shape)
    if (e == 0) throw FormatError("tensor dump: zero extent in header");

  std::vector<double> data(shape_size(shape));
  for (auto& v : data) {
    std::string token;
    if (!(in >> token)) throw FormatError("tensor dump: truncated data for shape " + shape_string(shape));
    try {
      std::size_t used = 0;
      v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("tensor dump: bad value '" + token + "'");
    }
  }
  // Consume the rest of the final line so stacked dumps can follow.
  std::string rest;
  std::getline(in, rest);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return read_tensor(in);
}

void write_pgm(const std::filesystem::path& path, const Tensor& image, double lo, double hi) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::size_t h = image.rows(), w = image.cols();
  out << "P2\n" << w << ' ' << h << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double u = std::clamp((image.at(i, j) - lo) / span, 0.0, 1.0);
      out << static_cast<int>(std::lround(u * 255.0)) << (j + 1 == w ? '\n' : ' ');
    }
  }
}

}  // namespace mia
