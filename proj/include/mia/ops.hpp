#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mia/tensor.hpp"

// Value-level kernels. Every taped op in autodiff.hpp forwards to one of these.
//
// Broadcasting is limited to two forms, and only where an op says so: a right
// operand of shape [1 x n] is repeated down the rows of an [m x n] left
// operand, and one of shape [m x 1] is repeated across its columns.

namespace mia::ops {

enum class PoolMode { kMean, kMax };

enum class Broadcast { kNone, kRow, kColumn };

/// Classifies how `b` broadcasts against matrix `a`; throws ShapeError otherwise.
Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);

/// Elementwise product; `b` may broadcast by row or column.
Tensor hadamard(const Tensor& a, const Tensor& b);
/// Elementwise sum; `b` may broadcast by row or column.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x * sigmoid(x).
Tensor silu(const Tensor& x);
double silu(double x);
double silu_derivative(double x);

/// 2x2 window reduction of an [h x w x c] field; h and w must be even.
Tensor pool_down(const Tensor& x, PoolMode mode);
/// Replicates each cell of an [h x w x c] field into a 2x2 block.
Tensor upsample_nearest(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index);

double sum(const Tensor& x);
double max_abs(const Tensor& x);

}  // namespace mia::ops
