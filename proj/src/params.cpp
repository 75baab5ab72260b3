#include "gild/params.hpp"

#include <algorithm>
#include <cmath>

namespace gild {

void ParamSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ParamSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (count() != other.count()) return false;
  for (std::size_t i = 0; i < count(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < count(); ++i) out.add(names_[i], Tensor(tensors_[i].rows(), tensors_[i].cols()));
  return out;
}

Tensor ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& t : tensors_) flat.insert(flat.end(), t.data().begin(), t.data().end());
  const std::size_t n = flat.size();
  return Tensor(1, n, std::move(flat));
}

ParamSet ParamSet::unflatten(const Tensor& flat) const {
  if (flat.size() != total_size()) {
    throw ShapeError("unflatten: expected " + std::to_string(total_size()) + " values, got " +
                     std::to_string(flat.size()));
  }
  ParamSet out;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < count(); ++i) {
    const auto& t = tensors_[i];
    std::vector<double> data(flat.data().begin() + static_cast<std::ptrdiff_t>(offset),
                             flat.data().begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
    out.add(names_[i], Tensor(t.rows(), t.cols(), std::move(data)));
    offset += t.size();
  }
  return out;
}

std::vector<Var> ParamSet::as_leaves(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(count());
  for (const auto& t : tensors_) vars.push_back(tape.leaf(t));
  return vars;
}

std::vector<Var> ParamSet::as_constants(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(count());
  for (const auto& t : tensors_) vars.push_back(tape.constant(t));
  return vars;
}

void axpy(ParamSet& target, double scale, const ParamSet& other) {
  if (!target.same_layout(other)) throw ShapeError("axpy: parameter layouts differ");
  for (std::size_t i = 0; i < target.count(); ++i) {
    auto dst = target[i].data();
    auto src = other[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

double max_abs(const ParamSet& p) {
  double m = 0.0;
  for (const auto& t : p.tensors()) {
    for (double v : t.data()) m = std::max(m, std::abs(v));
  }
  return m;
}

ParamSet with_layout(const ParamSet& layout, std::vector<Tensor> tensors) {
  if (tensors.size() != layout.count()) throw ShapeError("with_layout: tensor count mismatch");
  ParamSet out;
  for (std::size_t i = 0; i < layout.count(); ++i) {
    if (!tensors[i].same_shape(layout[i])) {
      throw ShapeError("with_layout: " + layout.name(i) + " expected " + layout[i].shape_string() + ", got " +
                       tensors[i].shape_string());
    }
    out.add(layout.name(i), std::move(tensors[i]));
  }
  return out;
}

ParamSet grad(const ScalarFn& fn, const ParamSet& at) {
  Tape tape;
  const auto leaves = at.as_leaves(tape);
  const Var out = fn(tape, leaves);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("grad: function output must be scalar, got " + out.value().shape_string());
  }
  return with_layout(at, tape.gradient(out, leaves));
}

Var inner_product(Tape& tape, const ParamSet& outer, std::span<const Var> grads) {
  if (outer.count() != grads.size()) throw ShapeError("inner_product: parameter count mismatch");
  Var acc;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Var term = sum(mul(grads[i], tape.constant(outer[i])));
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc.valid() ? acc : tape.constant(0.0);
}

ParamSet grad_of_grad_expression(const Tensor& outer, const MixedScalarFn& inner, const ParamSet& phi,
                                 const ParamSet& omega) {
  if (outer.size() != phi.total_size()) {
    throw ShapeError("grad_of_grad_expression: outer vector has " + std::to_string(outer.size()) +
                     " entries, phi has " + std::to_string(phi.total_size()));
  }
  Tape tape;
  const auto phi_vars = phi.as_leaves(tape);
  const auto omega_vars = omega.as_leaves(tape);
  const Var loss = inner(tape, phi_vars, omega_vars);
  const auto dphi = tape.gradient_graph(loss, phi_vars);
  const Var contracted = inner_product(tape, phi.unflatten(outer), dphi);
  return with_layout(omega, tape.gradient(contracted, omega_vars));
}

}  // namespace gild
