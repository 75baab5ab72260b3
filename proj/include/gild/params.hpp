#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gild/tape.hpp"
#include "gild/tensor.hpp"

namespace gild {

/// Ordered, named collection of parameter tensors (one network's weights, or
/// a gradient with the same layout).
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, Tensor value);

  std::size_t count() const noexcept { return tensors_.size(); }
  /// Total number of scalars across all tensors.
  std::size_t total_size() const noexcept;

  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool same_layout(const ParamSet& other) const;

  /// A zero-filled set with this layout.
  ParamSet zeros_like() const;

  /// Concatenation of all tensors in order, as a 1 x total_size row.
  Tensor flatten() const;
  /// Inverse of flatten for this layout.
  ParamSet unflatten(const Tensor& flat) const;

  /// Registers every tensor as a differentiable leaf on `tape`.
  std::vector<Var> as_leaves(Tape& tape) const;
  /// Registers every tensor as a constant on `tape`.
  std::vector<Var> as_constants(Tape& tape) const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// this += scale * other, elementwise over matching layouts.
void axpy(ParamSet& target, double scale, const ParamSet& other);
/// Largest absolute entry across the set.
double max_abs(const ParamSet& p);
/// Rebuilds a ParamSet from gradient tensors using a reference layout.
ParamSet with_layout(const ParamSet& layout, std::vector<Tensor> tensors);

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using MixedScalarFn = std::function<Var(Tape&, std::span<const Var> phi, std::span<const Var> omega)>;

/// Gradient of a scalar-valued function of one parameter set, evaluated at
/// `at`. Parameters the function does not touch get exact zeros.
ParamSet grad(const ScalarFn& fn, const ParamSet& at);

/// d/d omega [ outer . dL/dphi ] at (phi, omega), the product of `outer` with
/// the mixed second derivative of L. `outer` is a flat row over phi's layout.
ParamSet grad_of_grad_expression(const Tensor& outer, const MixedScalarFn& inner, const ParamSet& phi,
                                 const ParamSet& omega);

/// Builds sum_i <outer_i, g_i> on the tape that holds `grads`, as a scalar Var.
Var inner_product(Tape& tape, const ParamSet& outer, std::span<const Var> grads);

}  // namespace gild
