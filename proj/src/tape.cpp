#include "gild/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gild {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

bool broadcastable(const Tensor& b, std::size_t rows, std::size_t cols) {
  return (b.rows() == rows || b.rows() == 1) && (b.cols() == cols || b.cols() == 1);
}

inline double bcast(const Tensor& b, std::size_t r, std::size_t c) {
  return b(b.rows() == 1 ? 0 : r, b.cols() == 1 ? 0 : c);
}

[[noreturn]] void shape_fail(OpKind op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": operand shapes do not conform, " + a.shape_string() + " and " +
                   b.shape_string());
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <class F>
Tensor zip_bcast(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = f(a(r, c), bcast(b, r, c));
  }
  return out;
}

Tensor reduce_tensor(const Tensor& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) out(rows == 1 ? 0 : r, cols == 1 ? 0 : c) += g(r, c);
  }
  return out;
}

Tensor expand_tensor(const Tensor& x, std::size_t rows, std::size_t cols) {
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = bcast(x, r, c);
  }
  return out;
}

Tensor transpose_tensor(const Tensor& x) {
  Tensor out(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  }
  return out;
}

Tensor slice_tensor(const Tensor& x, std::size_t begin, std::size_t end) {
  Tensor out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
  }
  return out;
}

Tensor pad_tensor(const Tensor& x, std::size_t total, std::size_t offset) {
  Tensor out(x.rows(), total);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, offset + c) = x(r, c);
  }
  return out;
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void add_into(std::optional<Tensor>& slot, Tensor contribution) {
  if (!slot) {
    slot = std::move(contribution);
    return;
  }
  auto dst = slot->data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Affine: return "affine";
    case OpKind::Mean: return "mean";
    case OpKind::Sum: return "sum";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::Expand: return "expand";
    case OpKind::ReduceTo: return "reduce_to";
    case OpKind::Min: return "min";
    case OpKind::Clip: return "clip";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Abs: return "abs";
    case OpKind::GaussianLogPdf: return "gaussian_log_pdf";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::PadCols: return "pad_cols";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = OpKind::Leaf;
  n.requires_grad = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Node n) {
  n.requires_grad = false;
  for (auto id : n.in) {
    if (id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad) n.requires_grad = true;
  }
  n.value = evaluate(n);
  if (!n.value.all_finite()) {
    throw NumericError(std::string(op_name(n.op)) + " produced a non-finite value (slot " +
                       std::to_string(nodes_.size()) + ", shape " + n.value.shape_string() + ")");
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor Tape::evaluate(const Node& n) const {
  auto in = [&](int k) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.in[k])].value; };
  switch (n.op) {
    case OpKind::Leaf:
    case OpKind::Constant:
      return n.value;
    case OpKind::MatMul:
      return gild::matmul(in(0), in(1));
    case OpKind::Transpose:
      return transpose_tensor(in(0));
    case OpKind::Add:
      return zip_bcast(in(0), in(1), [](double x, double y) { return x + y; });
    case OpKind::Sub:
      return zip_bcast(in(0), in(1), [](double x, double y) { return x - y; });
    case OpKind::Mul:
      return zip_bcast(in(0), in(1), [](double x, double y) { return x * y; });
    case OpKind::Div:
      return zip_bcast(in(0), in(1), [](double x, double y) { return x / y; });
    case OpKind::Neg:
      return map(in(0), [](double x) { return -x; });
    case OpKind::Affine:
      return map(in(0), [&](double x) { return n.a * x + n.b; });
    case OpKind::Mean: {
      const auto& x = in(0);
      double s = 0.0;
      for (double v : x.data()) s += v;
      return Tensor::scalar(s / static_cast<double>(x.size()));
    }
    case OpKind::Sum: {
      double s = 0.0;
      for (double v : in(0).data()) s += v;
      return Tensor::scalar(s);
    }
    case OpKind::SumCols: {
      const auto& x = in(0);
      Tensor out(x.rows(), 1);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row_span(r)) s += v;
        out(r, 0) = s;
      }
      return out;
    }
    case OpKind::Expand:
      return expand_tensor(in(0), n.i0, n.i1);
    case OpKind::ReduceTo:
      return reduce_tensor(in(0), n.i0, n.i1);
    case OpKind::Min:
      return zip_bcast(in(0), in(1), [](double x, double y) { return std::min(x, y); });
    case OpKind::Clip:
      return map(in(0), [&](double x) { return std::clamp(x, n.a, n.b); });
    case OpKind::Relu:
      return map(in(0), [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::Tanh:
      return map(in(0), [](double x) { return std::tanh(x); });
    case OpKind::Sigmoid:
      return map(in(0), stable_sigmoid);
    case OpKind::Softplus:
      return map(in(0), stable_softplus);
    case OpKind::Exp:
      return map(in(0), [](double x) { return std::exp(x); });
    case OpKind::Log:
      return map(in(0), [](double x) { return std::log(x); });
    case OpKind::Square:
      return map(in(0), [](double x) { return x * x; });
    case OpKind::Abs:
      return map(in(0), [](double x) { return std::abs(x); });
    case OpKind::GaussianLogPdf: {
      const auto& x = in(0);
      const auto& mu = in(1);
      const auto& ls = in(2);
      Tensor out(x.rows(), 1);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
          const double z = (x(r, c) - mu(r, c)) * std::exp(-ls(r, c));
          s += -0.5 * z * z - ls(r, c) - kHalfLog2Pi;
        }
        out(r, 0) = s;
      }
      return out;
    }
    case OpKind::ConcatCols: {
      std::vector<Tensor> parts;
      for (auto id : n.in) {
        if (id >= 0) parts.push_back(nodes_[static_cast<std::size_t>(id)].value);
      }
      return gild::concat_cols(parts);
    }
    case OpKind::SliceCols:
      return slice_tensor(in(0), n.i0, n.i1);
    case OpKind::PadCols:
      return pad_tensor(in(0), n.i0, n.i1);
  }
  return {};
}

bool Tape::replay_matches() const {
  for (const auto& n : nodes_) {
    if (n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
    if (!(evaluate(n) == n.value)) return false;
  }
  return true;
}

std::vector<Tensor> Tape::gradient(Var out, std::span<const Var> wrt, const std::optional<Tensor>& seed) const {
  if (out.tape() != this) throw std::invalid_argument("gradient: output belongs to another tape");
  const auto& out_val = out.value();
  std::vector<std::optional<Tensor>> adj(static_cast<std::size_t>(out.id()) + 1);
  if (seed) {
    if (!seed->same_shape(out_val)) throw ShapeError("gradient: seed shape " + seed->shape_string() + " vs output " + out_val.shape_string());
    adj.back() = *seed;
  } else {
    if (out_val.rows() != 1 || out_val.cols() != 1) {
      throw ShapeError("gradient: output must be scalar, got " + out_val.shape_string());
    }
    adj.back() = Tensor::scalar(1.0);
  }

  for (std::int32_t id = out.id(); id >= 0; --id) {
    auto& slot = adj[static_cast<std::size_t>(id)];
    if (!slot) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
    const Tensor& g = *slot;
    auto val = [&](int k) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.in[k])].value; };
    auto needs = [&](int k) { return n.in[k] >= 0 && nodes_[static_cast<std::size_t>(n.in[k])].requires_grad; };
    auto give = [&](int k, Tensor t) { add_into(adj[static_cast<std::size_t>(n.in[k])], std::move(t)); };

    switch (n.op) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul:
        if (needs(0)) give(0, gild::matmul(g, val(1), false, true));
        if (needs(1)) give(1, gild::matmul(val(0), g, true, false));
        break;
      case OpKind::Transpose:
        give(0, transpose_tensor(g));
        break;
      case OpKind::Add:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, reduce_tensor(g, val(1).rows(), val(1).cols()));
        break;
      case OpKind::Sub:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, reduce_tensor(map(g, [](double x) { return -x; }), val(1).rows(), val(1).cols()));
        break;
      case OpKind::Mul:
        if (needs(0)) give(0, zip_bcast(g, val(1), [](double x, double y) { return x * y; }));
        if (needs(1)) {
          Tensor t(g.rows(), g.cols());
          for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * val(0)[i];
          give(1, reduce_tensor(t, val(1).rows(), val(1).cols()));
        }
        break;
      case OpKind::Div:
        if (needs(0)) give(0, zip_bcast(g, val(1), [](double x, double y) { return x / y; }));
        if (needs(1)) {
          Tensor t(g.rows(), g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
              const double b = bcast(val(1), r, c);
              t(r, c) = -g(r, c) * val(0)(r, c) / (b * b);
            }
          }
          give(1, reduce_tensor(t, val(1).rows(), val(1).cols()));
        }
        break;
      case OpKind::Neg:
        give(0, map(g, [](double x) { return -x; }));
        break;
      case OpKind::Affine:
        give(0, map(g, [&](double x) { return n.a * x; }));
        break;
      case OpKind::Mean: {
        const auto& x = val(0);
        give(0, Tensor(x.rows(), x.cols(), g.item() / static_cast<double>(x.size())));
        break;
      }
      case OpKind::Sum:
        give(0, Tensor(val(0).rows(), val(0).cols(), g.item()));
        break;
      case OpKind::SumCols:
        give(0, expand_tensor(g, val(0).rows(), val(0).cols()));
        break;
      case OpKind::Expand:
        give(0, reduce_tensor(g, val(0).rows(), val(0).cols()));
        break;
      case OpKind::ReduceTo:
        give(0, expand_tensor(g, val(0).rows(), val(0).cols()));
        break;
      case OpKind::Min: {
        const auto& a = val(0);
        const auto& b = val(1);
        Tensor ga(g.rows(), g.cols());
        Tensor gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) (a[i] <= b[i] ? ga : gb)[i] = g[i];
        if (needs(0)) give(0, std::move(ga));
        if (needs(1)) give(1, std::move(gb));
        break;
      }
      case OpKind::Clip: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = (x[i] >= n.a && x[i] <= n.b) ? g[i] : 0.0;
        give(0, std::move(t));
        break;
      }
      case OpKind::Relu: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = x[i] > 0.0 ? g[i] : 0.0;
        give(0, std::move(t));
        break;
      }
      case OpKind::Tanh: {
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
        give(0, std::move(t));
        break;
      }
      case OpKind::Sigmoid: {
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
        give(0, std::move(t));
        break;
      }
      case OpKind::Softplus: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * stable_sigmoid(x[i]);
        give(0, std::move(t));
        break;
      }
      case OpKind::Exp: {
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * n.value[i];
        give(0, std::move(t));
        break;
      }
      case OpKind::Log: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] / x[i];
        give(0, std::move(t));
        break;
      }
      case OpKind::Square: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = 2.0 * x[i] * g[i];
        give(0, std::move(t));
        break;
      }
      case OpKind::Abs: {
        const auto& x = val(0);
        Tensor t(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) t[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
        give(0, std::move(t));
        break;
      }
      case OpKind::GaussianLogPdf: {
        const auto& x = val(0);
        const auto& mu = val(1);
        const auto& ls = val(2);
        Tensor gx(x.rows(), x.cols());
        Tensor gls(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < x.cols(); ++c) {
            const double inv_std = std::exp(-ls(r, c));
            const double z = (x(r, c) - mu(r, c)) * inv_std;
            gx(r, c) = -g(r, 0) * z * inv_std;
            gls(r, c) = g(r, 0) * (z * z - 1.0);
          }
        }
        if (needs(1)) give(1, map(gx, [](double v) { return -v; }));
        if (needs(0)) give(0, std::move(gx));
        if (needs(2)) give(2, std::move(gls));
        break;
      }
      case OpKind::ConcatCols: {
        std::size_t offset = 0;
        for (int k = 0; k < 3 && n.in[k] >= 0; ++k) {
          const std::size_t w = val(k).cols();
          if (needs(k)) give(k, slice_tensor(g, offset, offset + w));
          offset += w;
        }
        break;
      }
      case OpKind::SliceCols:
        give(0, pad_tensor(g, val(0).cols(), n.i0));
        break;
      case OpKind::PadCols:
        give(0, slice_tensor(g, n.i1, n.i1 + val(0).cols()));
        break;
    }
    if (!g.all_finite()) {
      throw NumericError(std::string("non-finite adjoint at ") + std::string(op_name(n.op)) + " (slot " +
                         std::to_string(id) + ")");
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.tape() != this) throw std::invalid_argument("gradient: wrt slot belongs to another tape");
    if (w.id() <= out.id() && adj[static_cast<std::size_t>(w.id())]) {
      result.push_back(*adj[static_cast<std::size_t>(w.id())]);
    } else {
      result.emplace_back(w.value().rows(), w.value().cols(), 0.0);
    }
  }
  return result;
}

std::vector<Var> Tape::gradient_graph(Var out, std::span<const Var> wrt) {
  if (out.tape() != this) throw std::invalid_argument("gradient_graph: output belongs to another tape");
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("gradient_graph: output must be scalar, got " + out.value().shape_string());
  }
  const std::int32_t top = out.id();
  std::vector<Var> adj(static_cast<std::size_t>(top) + 1);
  adj.back() = constant(1.0);

  auto accumulate = [&](std::int32_t id, Var contribution) {
    auto& slot = adj[static_cast<std::size_t>(id)];
    slot = slot.valid() ? add(slot, contribution) : contribution;
  };

  for (std::int32_t id = top; id >= 0; --id) {
    const Var g = adj[static_cast<std::size_t>(id)];
    if (!g.valid()) continue;
    // Copy what we need: recording below may reallocate the node storage.
    const OpKind op = nodes_[static_cast<std::size_t>(id)].op;
    if (!nodes_[static_cast<std::size_t>(id)].requires_grad || op == OpKind::Leaf || op == OpKind::Constant) continue;
    const auto ins = nodes_[static_cast<std::size_t>(id)].in;
    const double pa = nodes_[static_cast<std::size_t>(id)].a;
    const double pb = nodes_[static_cast<std::size_t>(id)].b;
    const std::size_t p0 = nodes_[static_cast<std::size_t>(id)].i0;
    const std::size_t p1 = nodes_[static_cast<std::size_t>(id)].i1;
    const Var self(this, id);
    auto x = [&](int k) { return Var(this, ins[static_cast<std::size_t>(k)]); };
    auto needs = [&](int k) {
      return ins[static_cast<std::size_t>(k)] >= 0 && nodes_[static_cast<std::size_t>(ins[static_cast<std::size_t>(k)])].requires_grad;
    };
    auto give = [&](int k, Var v) { accumulate(ins[static_cast<std::size_t>(k)], v); };
    auto mask_of = [&](int k, auto pred) {
      const Tensor& xv = nodes_[static_cast<std::size_t>(ins[static_cast<std::size_t>(k)])].value;
      Tensor m(xv.rows(), xv.cols());
      for (std::size_t i = 0; i < xv.size(); ++i) m[i] = pred(i);
      return constant(std::move(m));
    };

    switch (op) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul:
        if (needs(0)) give(0, matmul(g, transpose(x(1))));
        if (needs(1)) give(1, matmul(transpose(x(0)), g));
        break;
      case OpKind::Transpose:
        give(0, transpose(g));
        break;
      case OpKind::Add:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, reduce_to(g, x(1).rows(), x(1).cols()));
        break;
      case OpKind::Sub:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, reduce_to(neg(g), x(1).rows(), x(1).cols()));
        break;
      case OpKind::Mul:
        if (needs(0)) give(0, mul(g, x(1)));
        if (needs(1)) give(1, reduce_to(mul(g, x(0)), x(1).rows(), x(1).cols()));
        break;
      case OpKind::Div:
        if (needs(0)) give(0, div(g, x(1)));
        if (needs(1)) give(1, reduce_to(neg(div(mul(g, self), x(1))), x(1).rows(), x(1).cols()));
        break;
      case OpKind::Neg:
        give(0, neg(g));
        break;
      case OpKind::Affine:
        give(0, affine(g, pa, 0.0));
        break;
      case OpKind::Mean: {
        const double inv = 1.0 / static_cast<double>(x(0).value().size());
        give(0, affine(expand(g, x(0).rows(), x(0).cols()), inv, 0.0));
        break;
      }
      case OpKind::Sum:
      case OpKind::SumCols:
      case OpKind::ReduceTo:
        give(0, expand(g, x(0).rows(), x(0).cols()));
        break;
      case OpKind::Expand:
        give(0, reduce_to(g, x(0).rows(), x(0).cols()));
        break;
      case OpKind::Min: {
        const Tensor& av = x(0).value();
        const Tensor& bv = x(1).value();
        if (needs(0)) give(0, mul(g, mask_of(0, [&](std::size_t i) { return av[i] <= bv[i] ? 1.0 : 0.0; })));
        if (needs(1)) give(1, mul(g, mask_of(1, [&](std::size_t i) { return av[i] <= bv[i] ? 0.0 : 1.0; })));
        break;
      }
      case OpKind::Clip: {
        const Tensor& xv = x(0).value();
        give(0, mul(g, mask_of(0, [&](std::size_t i) { return (xv[i] >= pa && xv[i] <= pb) ? 1.0 : 0.0; })));
        break;
      }
      case OpKind::Relu: {
        const Tensor& xv = x(0).value();
        give(0, mul(g, mask_of(0, [&](std::size_t i) { return xv[i] > 0.0 ? 1.0 : 0.0; })));
        break;
      }
      case OpKind::Abs: {
        const Tensor& xv = x(0).value();
        give(0, mul(g, mask_of(0, [&](std::size_t i) { return xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0); })));
        break;
      }
      case OpKind::Tanh:
        give(0, mul(g, affine(square(self), -1.0, 1.0)));
        break;
      case OpKind::Sigmoid:
        give(0, mul(g, mul(self, affine(self, -1.0, 1.0))));
        break;
      case OpKind::Softplus:
        give(0, mul(g, sigmoid(x(0))));
        break;
      case OpKind::Exp:
        give(0, mul(g, self));
        break;
      case OpKind::Log:
        give(0, div(g, x(0)));
        break;
      case OpKind::Square:
        give(0, mul(g, affine(x(0), 2.0, 0.0)));
        break;
      case OpKind::GaussianLogPdf: {
        const std::size_t r = x(0).rows();
        const std::size_t c = x(0).cols();
        const Var inv_std = exp(neg(x(2)));
        const Var z = mul(sub(x(0), x(1)), inv_std);
        const Var gexp = expand(g, r, c);
        const Var gx = neg(mul(gexp, mul(z, inv_std)));
        if (needs(0)) give(0, gx);
        if (needs(1)) give(1, neg(gx));
        if (needs(2)) give(2, mul(gexp, affine(square(z), 1.0, -1.0)));
        break;
      }
      case OpKind::ConcatCols: {
        std::size_t offset = 0;
        for (int k = 0; k < 3 && ins[static_cast<std::size_t>(k)] >= 0; ++k) {
          const std::size_t w = x(k).cols();
          if (needs(k)) give(k, slice_cols(g, offset, offset + w));
          offset += w;
        }
        break;
      }
      case OpKind::SliceCols:
        give(0, pad_cols(g, x(0).cols(), p0));
        break;
      case OpKind::PadCols:
        give(0, slice_cols(g, p1, p1 + x(0).cols()));
        break;
    }
    (void)pb;
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.tape() != this) throw std::invalid_argument("gradient_graph: wrt slot belongs to another tape");
    if (w.id() <= top && adj[static_cast<std::size_t>(w.id())].valid()) {
      result.push_back(adj[static_cast<std::size_t>(w.id())]);
    } else {
      result.push_back(constant(Tensor(w.rows(), w.cols(), 0.0)));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Primitive constructors

namespace {

Tape& same_tape(Var a, Var b, OpKind op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op_name(op)) + ": operands must live on the same tape");
  }
  return *a.tape();
}

Var unary(OpKind op, Var a, double pa = 0.0, double pb = 0.0) {
  if (!a.valid()) throw std::invalid_argument(std::string(op_name(op)) + ": invalid operand");
  Node n;
  n.op = op;
  n.in = {a.id(), -1, -1};
  n.a = pa;
  n.b = pb;
  return a.tape()->record(std::move(n));
}

Var binary_bcast(OpKind op, Var a, Var b) {
  Tape& t = same_tape(a, b, op);
  if (!broadcastable(b.value(), a.rows(), a.cols())) shape_fail(op, a.value(), b.value());
  Node n;
  n.op = op;
  n.in = {a.id(), b.id(), -1};
  return t.record(std::move(n));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, OpKind::MatMul);
  if (a.cols() != b.rows()) shape_fail(OpKind::MatMul, a.value(), b.value());
  Node n;
  n.op = OpKind::MatMul;
  n.in = {a.id(), b.id(), -1};
  return t.record(std::move(n));
}

Var transpose(Var a) { return unary(OpKind::Transpose, a); }
Var add(Var a, Var b) { return binary_bcast(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return binary_bcast(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return binary_bcast(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return binary_bcast(OpKind::Div, a, b); }
Var neg(Var a) { return unary(OpKind::Neg, a); }
Var affine(Var a, double scale, double shift) { return unary(OpKind::Affine, a, scale, shift); }

Var mean(Var a) {
  if (a.value().empty()) throw ShapeError("mean: empty operand");
  return unary(OpKind::Mean, a);
}

Var sum(Var a) { return unary(OpKind::Sum, a); }
Var sum_cols(Var a) { return unary(OpKind::SumCols, a); }

Var expand(Var a, std::size_t rows, std::size_t cols) {
  if (!broadcastable(a.value(), rows, cols)) {
    shape_fail(OpKind::Expand, a.value(), Tensor(rows, cols));
  }
  Node n;
  n.op = OpKind::Expand;
  n.in = {a.id(), -1, -1};
  n.i0 = rows;
  n.i1 = cols;
  return a.tape()->record(std::move(n));
}

Var reduce_to(Var a, std::size_t rows, std::size_t cols) {
  if (!broadcastable(Tensor(rows, cols), a.rows(), a.cols())) {
    shape_fail(OpKind::ReduceTo, a.value(), Tensor(rows, cols));
  }
  Node n;
  n.op = OpKind::ReduceTo;
  n.in = {a.id(), -1, -1};
  n.i0 = rows;
  n.i1 = cols;
  return a.tape()->record(std::move(n));
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b, OpKind::Min);
  if (!a.value().same_shape(b.value())) shape_fail(OpKind::Min, a.value(), b.value());
  Node n;
  n.op = OpKind::Min;
  n.in = {a.id(), b.id(), -1};
  return t.record(std::move(n));
}

Var clip(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip: lower bound exceeds upper bound");
  return unary(OpKind::Clip, a, lo, hi);
}

Var relu(Var a) { return unary(OpKind::Relu, a); }
Var tanh(Var a) { return unary(OpKind::Tanh, a); }
Var sigmoid(Var a) { return unary(OpKind::Sigmoid, a); }
Var softplus(Var a) { return unary(OpKind::Softplus, a); }
Var exp(Var a) { return unary(OpKind::Exp, a); }
Var log(Var a) { return unary(OpKind::Log, a); }
Var square(Var a) { return unary(OpKind::Square, a); }
Var abs(Var a) { return unary(OpKind::Abs, a); }

Var gaussian_log_pdf(Var x, Var mean_, Var log_std) {
  Tape& t = same_tape(x, mean_, OpKind::GaussianLogPdf);
  same_tape(x, log_std, OpKind::GaussianLogPdf);
  if (!x.value().same_shape(mean_.value())) shape_fail(OpKind::GaussianLogPdf, x.value(), mean_.value());
  if (!x.value().same_shape(log_std.value())) shape_fail(OpKind::GaussianLogPdf, x.value(), log_std.value());
  Node n;
  n.op = OpKind::GaussianLogPdf;
  n.in = {x.id(), mean_.id(), log_std.id()};
  return t.record(std::move(n));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  if (parts.size() == 1) return parts.front();
  Var acc = parts.front();
  std::size_t i = 1;
  while (i < parts.size()) {
    Tape& t = same_tape(acc, parts[i], OpKind::ConcatCols);
    Node n;
    n.op = OpKind::ConcatCols;
    n.in[0] = acc.id();
    int k = 1;
    for (; k < 3 && i < parts.size(); ++k, ++i) {
      same_tape(acc, parts[i], OpKind::ConcatCols);
      if (parts[i].rows() != acc.rows()) shape_fail(OpKind::ConcatCols, acc.value(), parts[i].value());
      n.in[static_cast<std::size_t>(k)] = parts[i].id();
    }
    acc = t.record(std::move(n));
  }
  return acc;
}

Var concat_cols(Var a, Var b) {
  const std::array<Var, 2> parts{a, b};
  return concat_cols(parts);
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                     a.value().shape_string());
  }
  Node n;
  n.op = OpKind::SliceCols;
  n.in = {a.id(), -1, -1};
  n.i0 = begin;
  n.i1 = end;
  return a.tape()->record(std::move(n));
}

Var pad_cols(Var a, std::size_t total, std::size_t offset) {
  if (offset + a.cols() > total) {
    throw ShapeError("pad_cols: " + a.value().shape_string() + " does not fit at offset " + std::to_string(offset));
  }
  Node n;
  n.op = OpKind::PadCols;
  n.in = {a.id(), -1, -1};
  n.i0 = total;
  n.i1 = offset;
  return a.tape()->record(std::move(n));
}

Var detach(Var a) { return a.tape()->constant(a.value()); }

}  // namespace gild
