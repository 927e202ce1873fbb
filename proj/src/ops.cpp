#include "mia/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mia::ops {

namespace {

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

void require_field(const Tensor& x, const char* op) {
  if (x.rank() != 3)
    throw ShapeError(std::string(op) + ": expected an [h x w x c] field, got " +
                     shape_string(x.shape()));
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  Tensor out = a;
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  } else {
    const auto kind = broadcast_kind(a, b, op);
    const std::size_t m = a.rows(), n = a.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out.at(i, j) = f(a.at(i, j), kind == Broadcast::kRow ? b[j] : b[i]);
  }
  out.require_finite(op);
  return out;
}

}  // namespace

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kColumn;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  c.require_finite("matmul");
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  x.require_finite("softmax_rows input");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double hi = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, x.at(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(x.at(i, j) - hi);
      y.at(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) y.at(i, j) /= total;
  }
  return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(a, b, "hadamard", [](double u, double v) { return u * v; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double u, double v) { return u + v; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  return zip(a, b, "sub", [](double u, double v) { return u - v; });
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out = x;
  for (auto& v : out.data()) v *= factor;
  out.require_finite("scale");
  return out;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Tensor silu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = silu(v);
  out.require_finite("silu");
  return out;
}

Tensor pool_down(const Tensor& x, PoolMode mode) {
  require_field(x, "pool_down");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 || w % 2)
    throw ShapeError("pool_down: extents must be even, got " + shape_string(x.shape()));
  Tensor out({h / 2, w / 2, c});
  for (std::size_t i = 0; i < h / 2; ++i)
    for (std::size_t j = 0; j < w / 2; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double a = x.at(2 * i, 2 * j, k), b = x.at(2 * i, 2 * j + 1, k);
        const double d = x.at(2 * i + 1, 2 * j, k), e = x.at(2 * i + 1, 2 * j + 1, k);
        out.at(i, j, k) = mode == PoolMode::kMean ? (a + b + d + e) * 0.25
                                                  : std::max(std::max(a, b), std::max(d, e));
      }
  return out;
}

Tensor upsample_nearest(const Tensor& x) {
  require_field(x, "upsample_nearest");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({2 * h, 2 * w, c});
  for (std::size_t i = 0; i < 2 * h; ++i)
    for (std::size_t j = 0; j < 2 * w; ++j)
      for (std::size_t k = 0; k < c; ++k) out.at(i, j, k) = x.at(i / 2, j / 2, k);
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                       " vs " + shape_string(p.shape()));
    m += p.rows();
  }
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor({m, n}, std::move(data));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m)
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                       " vs " + shape_string(p.shape()));
    n += p.cols();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, offset + j) = p.at(i, j);
    offset += p.cols();
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(x.shape()));
  Tensor out({x.rows(), end - begin});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out.at(i, j - begin) = x.at(i, j);
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix(x, "gather_rows");
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  const std::size_t n = x.cols();
  Tensor out({index.size(), n});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    for (std::size_t j = 0; j < n; ++j) out.at(r, j) = x.at(index[r], j);
  }
  return out;
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix(x, "gather_cols");
  if (index.empty()) throw ShapeError("gather_cols: empty index");
  Tensor out({x.rows(), index.size()});
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c] >= x.cols()) throw ShapeError("gather_cols: index out of range");
    for (std::size_t i = 0; i < x.rows(); ++i) out.at(i, c) = x.at(i, index[c]);
  }
  return out;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

double max_abs(const Tensor& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace mia::ops
