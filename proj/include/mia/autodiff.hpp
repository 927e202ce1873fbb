#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mia/ops.hpp"
#include "mia/tensor.hpp"

namespace mia {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients keyed by the leaf they belong to.
class Gradients {
 public:
  /// Gradient of `leaf`; a zero tensor if the loss does not depend on it.
  const Tensor& of(const Var& leaf) const;
  bool contains(const Var& leaf) const { return grads_.count(leaf.id()) > 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Adjoint of a recorded op: given dL/d(output), returns dL/d(input) for each
/// input in order. An empty tensor in the result means "no contribution".
using Adjoint = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

/// Record of one forward pass. Nodes are appended in evaluation order, so the
/// tape is acyclic by construction and a reverse sweep visits each node once.
///
/// A tape belongs to a single forward/backward episode and a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input: backward() reports a gradient for it.
  Var leaf(Tensor value);
  /// Input that never receives a gradient (masks, data, frozen values).
  Var constant(Tensor value);

  /// Appends a custom op. Used by the built-in ops and by tests that need
  /// deliberately broken adjoints.
  Var record(Tensor value, std::vector<Var> inputs, Adjoint adjoint, std::string name);

  /// Reverse sweep from a scalar loss. Consumes the tape.
  Gradients backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(const Var& v) const;
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    std::string name;
    bool requires_grad = false;
    bool trainable = false;
  };

  void check_owner(const Var& v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Taped ops. Each mirrors the ops:: kernel of the same name.
namespace ad {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax_rows(const Var& x);
/// `b` may broadcast by row or column (see ops.hpp).
Var hadamard(const Var& a, const Var& b);
/// `b` may broadcast by row or column (see ops.hpp).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var silu(const Var& x);
Var pool_down(const Var& x, ops::PoolMode mode);
Var upsample_nearest(const Var& x);
Var reshape(const Var& x, Shape shape);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var gather_rows(const Var& x, std::vector<std::size_t> index);
Var gather_cols(const Var& x, std::vector<std::size_t> index);
/// Scalar sum of all elements.
Var sum(const Var& x);
/// Mean of squared differences, as a scalar.
Var mse(const Var& prediction, const Var& target);

}  // namespace ad

}  // namespace mia
