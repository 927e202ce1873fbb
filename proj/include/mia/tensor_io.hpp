#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mia/tensor.hpp"

namespace mia {

/// Raised on malformed or unreadable input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dump format: a header line `shape: d0 d1 ...` followed by the values
// in row-major order, whitespace separated. Values are written with 17
// significant digits so a dump reads back bit-identical.

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Plain PGM (P2) of a rank-2 tensor, values mapped linearly from [lo, hi] to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor& image, double lo, double hi);

}  // namespace mia
