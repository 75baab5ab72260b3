#pragma once

// Reverse-mode differentiation over an append-only tape of tensor primitives.
//
// Every primitive records its operands by slot index. `Tape::gradient` runs a
// plain adjoint sweep. `Tape::gradient_graph` runs the same sweep but records
// each adjoint computation back onto the tape as ordinary primitives, so the
// resulting gradient expressions can themselves be differentiated once more.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gild/tensor.hpp"

namespace gild {

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Affine,
  Mean,
  Sum,
  SumCols,
  Expand,
  ReduceTo,
  Min,
  Clip,
  Relu,
  Tanh,
  Sigmoid,
  Softplus,
  Exp,
  Log,
  Square,
  Abs,
  GaussianLogPdf,
  ConcatCols,
  SliceCols,
  PadCols,
};

std::string_view op_name(OpKind op) noexcept;

class Tape;

/// Handle to a value slot on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::int32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

struct Node {
  OpKind op = OpKind::Constant;
  std::array<std::int32_t, 3> in{-1, -1, -1};
  // Scalar attributes: affine scale/shift, clip bounds.
  double a = 0.0;
  double b = 0.0;
  // Integer attributes: slice/pad column ranges, expand extents.
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  bool requires_grad = false;
  Tensor value;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// A differentiable input.
  Var leaf(Tensor value);
  /// A value treated as constant by every gradient sweep.
  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  const Node& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Records a primitive, evaluates it and rejects non-finite results.
  Var record(Node node);

  /// Adjoints of `out` with respect to each of `wrt`. `out` must be 1 x 1
  /// unless `seed` is supplied with out's shape. Slots that `out` does not
  /// depend on get exact zeros.
  std::vector<Tensor> gradient(Var out, std::span<const Var> wrt,
                               const std::optional<Tensor>& seed = std::nullopt) const;

  /// Same as `gradient`, but the adjoint computation is recorded on this
  /// tape, and the returned slots are differentiable expressions.
  std::vector<Var> gradient_graph(Var out, std::span<const Var> wrt);

  /// Re-evaluates every recorded primitive from its operands and reports
  /// whether each result is bit-identical to the stored value.
  bool replay_matches() const;

 private:
  Tensor evaluate(const Node& n) const;

  std::vector<Node> nodes_;
};

// Primitives. Binary elementwise ops accept a second operand that is either
// the same shape as the first, a single row (1 x n), a single column (r x 1)
// or a scalar (1 x 1); it is broadcast over the first operand.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
/// scale * a + shift with constant scalars.
Var affine(Var a, double scale, double shift);
Var mean(Var a);
Var sum(Var a);
/// Row-wise sum: (r, c) -> (r, 1).
Var sum_cols(Var a);
Var expand(Var a, std::size_t rows, std::size_t cols);
/// Sums a down to (rows, cols), the inverse of expand.
Var reduce_to(Var a, std::size_t rows, std::size_t cols);
Var minimum(Var a, Var b);
Var clip(Var a, double lo, double hi);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// log(1 + e^x), evaluated as max(x, 0) + log1p(e^-|x|).
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var abs(Var a);
/// Row-wise log-density of a diagonal Gaussian: (r, n) x3 -> (r, 1).
Var gaussian_log_pdf(Var x, Var mean, Var log_std);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Places a into columns [offset, offset + a.cols) of a zero (r, total) tensor.
Var pad_cols(Var a, std::size_t total, std::size_t offset);
/// Constant copy of a's value; gradients do not flow through it.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace gild
