#include "mia/autodiff.hpp"

#include <algorithm>
#include <stdexcept>

namespace mia {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var is not bound to a tape");
  return tape_->value(id_);
}

const Tensor& Gradients::of(const Var& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw std::out_of_range("no gradient recorded for this leaf");
  return it->second;
}

Var Tape::leaf(Tensor value) {
  value.require_finite("leaf");
  nodes_.push_back({std::move(value), {}, {}, "leaf", true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  nodes_.push_back({std::move(value), {}, {}, "constant", false, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(const Var& v) const {
  if (v.tape_ != this) throw std::invalid_argument("value belongs to a different tape");
}

bool Tape::requires_grad(const Var& v) const {
  check_owner(v);
  return nodes_[v.id()].requires_grad;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, Adjoint adjoint, std::string name) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  value.require_finite(name);
  Node node{std::move(value), {}, std::move(adjoint), std::move(name), false, false};
  for (const auto& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  check_owner(loss);
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(lv.shape()));
  if (!nodes_[loss.id()].requires_grad)
    throw std::invalid_argument("backward: loss does not depend on any trainable leaf");

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(lv.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads[i].empty() || !node.requires_grad || !node.adjoint) continue;
    std::vector<Tensor> contrib = node.adjoint(grads[i]);
    for (std::size_t k = 0; k < node.inputs.size() && k < contrib.size(); ++k) {
      const std::size_t src = node.inputs[k];
      if (contrib[k].empty() || !nodes_[src].requires_grad) continue;
      if (grads[src].empty()) {
        grads[src] = std::move(contrib[k]);
      } else {
        auto dst = grads[src].data();
        auto add = contrib[k].data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += add[j];
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (!node.trainable) grads[i] = Tensor();
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].trainable) continue;
    Tensor g = grads[i].empty() ? Tensor(nodes_[i].value.shape(), 0.0) : std::move(grads[i]);
    g.require_finite("backward");
    out.grads_.emplace(i, std::move(g));
  }
  consumed_ = true;
  return out;
}

namespace ad {

namespace {

// Sums a full-shape gradient down to the shape of a broadcast operand.
Tensor reduce_to(const Tensor& g, const Tensor& operand, ops::Broadcast kind) {
  if (kind == ops::Broadcast::kNone) return g;
  Tensor out(operand.shape(), 0.0);
  const std::size_t m = g.rows(), n = g.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[kind == ops::Broadcast::kRow ? j : i] += g.at(i, j);
  return out;
}

Tape& tape_of(const Var& v) { return v.tape(); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tensor av = a.value(), bv = b.value();
  Tensor out = ops::matmul(av, bv);
  return tape_of(a).record(
      std::move(out), {a, b},
      [av, bv](const Tensor& g) {
        return std::vector<Tensor>{ops::matmul(g, ops::transpose(bv)),
                                   ops::matmul(ops::transpose(av), g)};
      },
      "matmul");
}

Var transpose(const Var& a) {
  return tape_of(a).record(
      ops::transpose(a.value()), {a},
      [](const Tensor& g) { return std::vector<Tensor>{ops::transpose(g)}; }, "transpose");
}

Var softmax_rows(const Var& x) {
  Tensor y = ops::softmax_rows(x.value());
  Tensor saved = y;
  return tape_of(x).record(
      std::move(y), {x},
      [saved](const Tensor& g) {
        Tensor gx = saved;
        const std::size_t m = saved.rows(), n = saved.cols();
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * saved.at(i, j);
          for (std::size_t j = 0; j < n; ++j) gx.at(i, j) = saved.at(i, j) * (g.at(i, j) - dot);
        }
        return std::vector<Tensor>{std::move(gx)};
      },
      "softmax_rows");
}

Var hadamard(const Var& a, const Var& b) {
  Tensor av = a.value(), bv = b.value();
  const auto kind = ops::broadcast_kind(av, bv, "hadamard");
  Tensor out = ops::hadamard(av, bv);
  return tape_of(a).record(
      std::move(out), {a, b},
      [av, bv, kind](const Tensor& g) {
        return std::vector<Tensor>{ops::hadamard(g, bv), reduce_to(ops::hadamard(g, av), bv, kind)};
      },
      "hadamard");
}

Var add(const Var& a, const Var& b) {
  const Tensor& bv = b.value();
  const auto kind = ops::broadcast_kind(a.value(), bv, "add");
  Tensor shape_of_b(bv.shape());
  return tape_of(a).record(
      ops::add(a.value(), bv), {a, b},
      [kind, shape_of_b](const Tensor& g) {
        return std::vector<Tensor>{g, reduce_to(g, shape_of_b, kind)};
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  return tape_of(a).record(
      ops::sub(a.value(), b.value()), {a, b},
      [](const Tensor& g) { return std::vector<Tensor>{g, ops::scale(g, -1.0)}; }, "sub");
}

Var scale(const Var& x, double factor) {
  return tape_of(x).record(
      ops::scale(x.value(), factor), {x},
      [factor](const Tensor& g) { return std::vector<Tensor>{ops::scale(g, factor)}; }, "scale");
}

Var silu(const Var& x) {
  Tensor xv = x.value();
  return tape_of(x).record(
      ops::silu(xv), {x},
      [xv](const Tensor& g) {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= ops::silu_derivative(xv[i]);
        return std::vector<Tensor>{std::move(gx)};
      },
      "silu");
}

Var pool_down(const Var& x, ops::PoolMode mode) {
  Tensor xv = x.value();
  return tape_of(x).record(
      ops::pool_down(xv, mode), {x},
      [xv, mode](const Tensor& g) {
        Tensor gx(xv.shape(), 0.0);
        const std::size_t h = g.dim(0), w = g.dim(1), c = g.dim(2);
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            for (std::size_t k = 0; k < c; ++k) {
              if (mode == ops::PoolMode::kMean) {
                const double share = 0.25 * g.at(i, j, k);
                gx.at(2 * i, 2 * j, k) += share;
                gx.at(2 * i, 2 * j + 1, k) += share;
                gx.at(2 * i + 1, 2 * j, k) += share;
                gx.at(2 * i + 1, 2 * j + 1, k) += share;
              } else {
                // First maximum in row-major window order takes the gradient.
                std::size_t bi = 2 * i, bj = 2 * j;
                for (std::size_t di = 0; di < 2; ++di)
                  for (std::size_t dj = 0; dj < 2; ++dj)
                    if (xv.at(2 * i + di, 2 * j + dj, k) > xv.at(bi, bj, k)) {
                      bi = 2 * i + di;
                      bj = 2 * j + dj;
                    }
                gx.at(bi, bj, k) += g.at(i, j, k);
              }
            }
        return std::vector<Tensor>{std::move(gx)};
      },
      "pool_down");
}

Var upsample_nearest(const Var& x) {
  Shape in_shape = x.value().shape();
  return tape_of(x).record(
      ops::upsample_nearest(x.value()), {x},
      [in_shape](const Tensor& g) {
        Tensor gx(in_shape, 0.0);
        for (std::size_t i = 0; i < g.dim(0); ++i)
          for (std::size_t j = 0; j < g.dim(1); ++j)
            for (std::size_t k = 0; k < g.dim(2); ++k) gx.at(i / 2, j / 2, k) += g.at(i, j, k);
        return std::vector<Tensor>{std::move(gx)};
      },
      "upsample_nearest");
}

Var reshape(const Var& x, Shape shape) {
  Shape in_shape = x.value().shape();
  return tape_of(x).record(
      x.value().reshaped(std::move(shape)), {x},
      [in_shape](const Tensor& g) { return std::vector<Tensor>{g.reshaped(in_shape)}; },
      "reshape");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  std::vector<Tensor> values;
  std::vector<std::size_t> rows;
  for (const auto& p : parts) {
    values.push_back(p.value());
    rows.push_back(p.value().rows());
  }
  return tape_of(parts.front())
      .record(
          ops::concat_rows(values), std::vector<Var>(parts.begin(), parts.end()),
          [rows](const Tensor& g) {
            std::vector<Tensor> out;
            const std::size_t n = g.cols();
            std::size_t offset = 0;
            for (auto r : rows) {
              auto begin = g.values().begin() + static_cast<std::ptrdiff_t>(offset * n);
              out.emplace_back(Shape{r, n},
                               std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(r * n)));
              offset += r;
            }
            return out;
          },
          "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  std::vector<Tensor> values;
  std::vector<std::size_t> cols;
  for (const auto& p : parts) {
    values.push_back(p.value());
    cols.push_back(p.value().cols());
  }
  return tape_of(parts.front())
      .record(
          ops::concat_cols(values), std::vector<Var>(parts.begin(), parts.end()),
          [cols](const Tensor& g) {
            std::vector<Tensor> out;
            std::size_t offset = 0;
            for (auto c : cols) {
              out.push_back(ops::slice_cols(g, offset, offset + c));
              offset += c;
            }
            return out;
          },
          "concat_cols");
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  Shape in_shape = x.value().shape();
  return tape_of(x).record(
      ops::slice_cols(x.value(), begin, end), {x},
      [in_shape, begin](const Tensor& g) {
        Tensor gx(in_shape, 0.0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gx.at(i, begin + j) = g.at(i, j);
        return std::vector<Tensor>{std::move(gx)};
      },
      "slice_cols");
}

Var gather_rows(const Var& x, std::vector<std::size_t> index) {
  Shape in_shape = x.value().shape();
  Tensor out = ops::gather_rows(x.value(), index);
  return tape_of(x).record(
      std::move(out), {x},
      [in_shape, index = std::move(index)](const Tensor& g) {
        Tensor gx(in_shape, 0.0);
        for (std::size_t r = 0; r < index.size(); ++r)
          for (std::size_t j = 0; j < g.cols(); ++j) gx.at(index[r], j) += g.at(r, j);
        return std::vector<Tensor>{std::move(gx)};
      },
      "gather_rows");
}

Var gather_cols(const Var& x, std::vector<std::size_t> index) {
  Shape in_shape = x.value().shape();
  Tensor out = ops::gather_cols(x.value(), index);
  return tape_of(x).record(
      std::move(out), {x},
      [in_shape, index = std::move(index)](const Tensor& g) {
        Tensor gx(in_shape, 0.0);
        for (std::size_t c = 0; c < index.size(); ++c)
          for (std::size_t i = 0; i < g.rows(); ++i) gx.at(i, index[c]) += g.at(i, c);
        return std::vector<Tensor>{std::move(gx)};
      },
      "gather_cols");
}

Var sum(const Var& x) {
  Shape in_shape = x.value().shape();
  return tape_of(x).record(
      Tensor::scalar(ops::sum(x.value())), {x},
      [in_shape](const Tensor& g) { return std::vector<Tensor>{Tensor(in_shape, g[0])}; }, "sum");
}

Var mse(const Var& prediction, const Var& target) {
  Tensor diff = ops::sub(prediction.value(), target.value());
  double total = 0.0;
  for (double d : diff.data()) total += d * d;
  const double n = static_cast<double>(diff.size());
  return tape_of(prediction)
      .record(
          Tensor::scalar(total / n), {prediction, target},
          [diff, n](const Tensor& g) {
            Tensor gp = ops::scale(diff, 2.0 * g[0] / n);
            Tensor gt = ops::scale(gp, -1.0);
            return std::vector<Tensor>{std::move(gp), std::move(gt)};
          },
          "mse");
}

}  // namespace ad

}  // namespace mia
