#include "fade/autodiff.hpp"

#include <cmath>
#include <string>

#include "fade/errors.hpp"
#include "fade/linalg.hpp"

namespace fade {

namespace {

inline double sigma(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::span<const double> Gradients::for_entry(const ParameterStore& store,
                                             const std::string& name) const {
  const auto& e = store.entry(store.entry_index(name));
  return {flat.data() + e.flat_offset, static_cast<std::size_t>(e.tensor.numel())};
}

GradientRecord::GradientRecord(const ParameterStore& watched)
    : watched_(&watched), version_at_trace_(watched.version()) {}

ValueId GradientRecord::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<ValueId>(nodes_.size() - 1);
}

const GradientRecord::Node& GradientRecord::node(ValueId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw ValidationError("value id " + std::to_string(id) + " is not part of this record");
  return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& GradientRecord::value(ValueId id) const { return node(id).value; }

void GradientRecord::check_2d(ValueId id, const char* who) const {
  if (node(id).value.rank() != 2)
    throw ShapeError(std::string(who) + " requires a rank-2 tensor");
}

ValueId GradientRecord::constant(Tensor v) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(v);
  return push(std::move(n));
}

ValueId GradientRecord::param(const ParameterStore& store, const std::string& name) {
  if (&store != watched_) return constant(store.get(name));
  if (store.version() != version_at_trace_)
    throw StalenessError("parameters of the watched store changed while tracing");
  const std::size_t idx = store.entry_index(name);
  auto it = param_leaves_.find(idx);
  if (it != param_leaves_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.needs_grad = true;
  n.value = store.entry(idx).tensor;
  n.entry = idx;
  const ValueId id = push(std::move(n));
  param_leaves_.emplace(idx, id);
  return id;
}

ValueId GradientRecord::linear(ValueId x, ValueId w, ValueId b) {
  check_2d(x, "linear input");
  check_2d(w, "linear weight");
  const Tensor& xv = node(x).value;
  const Tensor& wv = node(w).value;
  const Tensor& bv = node(b).value;
  if (xv.cols() != wv.cols())
    throw ShapeError("linear: input width " + std::to_string(xv.cols()) +
                     " does not match weight fan-in " + std::to_string(wv.cols()));
  if (bv.rank() != 1 || bv.numel() != wv.rows())
    throw ShapeError("linear: bias length does not match weight fan-out");
  const std::int64_t n = xv.rows(), m = wv.rows();
  Node out;
  out.op = Op::kLinear;
  out.inputs = {x, w, b};
  out.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
  out.value = Tensor({n, m});
  linalg::matmul_nt(xv.data(), n, xv.cols(), wv.data(), m, out.value.data(), false);
  double* o = out.value.data();
  const double* bp = bv.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) o[i * m + j] += bp[j];
  return push(std::move(out));
}

ValueId GradientRecord::matmul_nt(ValueId a, ValueId b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.cols() != bv.cols()) throw ShapeError("matmul_nt: inner dimensions do not match");
  Node out;
  out.op = Op::kMatmulNT;
  out.inputs = {a, b};
  out.needs_grad = node(a).needs_grad || node(b).needs_grad;
  out.value = Tensor({av.rows(), bv.rows()});
  linalg::matmul_nt(av.data(), av.rows(), av.cols(), bv.data(), bv.rows(),
                    out.value.data(), false);
  return push(std::move(out));
}

ValueId GradientRecord::add(ValueId a, ValueId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) throw ShapeError("add: operand shapes differ");
  Node out;
  out.op = Op::kAdd;
  out.inputs = {a, b};
  out.needs_grad = node(a).needs_grad || node(b).needs_grad;
  out.value = av;
  double* o = out.value.data();
  const double* p = bv.data();
  for (std::int64_t i = 0; i < av.numel(); ++i) o[i] += p[i];
  return push(std::move(out));
}

ValueId GradientRecord::sub(ValueId a, ValueId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) throw ShapeError("sub: operand shapes differ");
  Node out;
  out.op = Op::kSub;
  out.inputs = {a, b};
  out.needs_grad = node(a).needs_grad || node(b).needs_grad;
  out.value = av;
  double* o = out.value.data();
  const double* p = bv.data();
  for (std::int64_t i = 0; i < av.numel(); ++i) o[i] -= p[i];
  return push(std::move(out));
}

ValueId GradientRecord::mul(ValueId a, ValueId b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) throw ShapeError("mul: operand shapes differ");
  Node out;
  out.op = Op::kMul;
  out.inputs = {a, b};
  out.needs_grad = node(a).needs_grad || node(b).needs_grad;
  out.value = av;
  double* o = out.value.data();
  const double* p = bv.data();
  for (std::int64_t i = 0; i < av.numel(); ++i) o[i] *= p[i];
  return push(std::move(out));
}

ValueId GradientRecord::scale(ValueId a, double c) {
  Node out;
  out.op = Op::kScale;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.a = c;
  out.value = node(a).value;
  for (double& v : out.value.values()) v *= c;
  return push(std::move(out));
}

ValueId GradientRecord::add_scalar(ValueId a, double c) {
  Node out;
  out.op = Op::kAddScalar;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.a = c;
  out.value = node(a).value;
  for (double& v : out.value.values()) v += c;
  return push(std::move(out));
}

ValueId GradientRecord::silu(ValueId a) {
  Node out;
  out.op = Op::kSilu;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.value = node(a).value;
  for (double& v : out.value.values()) v *= sigma(v);
  return push(std::move(out));
}

ValueId GradientRecord::logistic(ValueId a) {
  Node out;
  out.op = Op::kLogistic;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.value = node(a).value;
  for (double& v : out.value.values()) v = sigma(v);
  return push(std::move(out));
}

ValueId GradientRecord::square(ValueId a) {
  Node out;
  out.op = Op::kSquare;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.value = node(a).value;
  for (double& v : out.value.values()) v *= v;
  return push(std::move(out));
}

ValueId GradientRecord::log(ValueId a) {
  Node out;
  out.op = Op::kLog;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.value = node(a).value;
  for (double& v : out.value.values()) {
    if (!(v > 0.0)) throw ValidationError("log requires strictly positive inputs");
    v = std::log(v);
  }
  return push(std::move(out));
}

ValueId GradientRecord::clamp(ValueId a, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("clamp bounds must satisfy lo < hi");
  Node out;
  out.op = Op::kClamp;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.a = lo;
  out.b = hi;
  out.value = node(a).value;
  for (double& v : out.value.values()) v = v < lo ? lo : (v > hi ? hi : v);
  return push(std::move(out));
}

ValueId GradientRecord::sum_all(ValueId a) {
  Node out;
  out.op = Op::kSumAll;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  double s = 0.0;
  for (double v : node(a).value.values()) s += v;
  out.value = Tensor::scalar(s);
  return push(std::move(out));
}

ValueId GradientRecord::concat_cols(std::span<const ValueId> parts) {
  if (parts.empty()) throw ValidationError("concat_cols requires at least one input");
  std::int64_t rows = -1, cols = 0;
  for (ValueId id : parts) {
    check_2d(id, "concat_cols");
    const Tensor& v = node(id).value;
    if (rows < 0) rows = v.rows();
    if (v.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += v.cols();
  }
  Node out;
  out.op = Op::kConcatCols;
  out.inputs.assign(parts.begin(), parts.end());
  out.value = Tensor({rows, cols});
  bool ng = false;
  std::int64_t off = 0;
  for (ValueId id : parts) {
    const Tensor& v = node(id).value;
    ng = ng || node(id).needs_grad;
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < v.cols(); ++j)
        out.value.at(i, off + j) = v.at(i, j);
    off += v.cols();
  }
  out.needs_grad = ng;
  return push(std::move(out));
}

ValueId GradientRecord::slice_cols(ValueId a, std::int64_t begin, std::int64_t end) {
  check_2d(a, "slice_cols");
  const Tensor& v = node(a).value;
  if (begin < 0 || end > v.cols() || begin >= end)
    throw ShapeError("slice_cols: window [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range");
  Node out;
  out.op = Op::kSliceCols;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.i0 = begin;
  out.i1 = end;
  out.value = Tensor({v.rows(), end - begin});
  for (std::int64_t i = 0; i < v.rows(); ++i)
    for (std::int64_t j = begin; j < end; ++j) out.value.at(i, j - begin) = v.at(i, j);
  return push(std::move(out));
}

ValueId GradientRecord::log_softmax_rows(ValueId a) {
  check_2d(a, "log_softmax_rows");
  Node out;
  out.op = Op::kLogSoftmaxRows;
  out.inputs = {a};
  out.needs_grad = node(a).needs_grad;
  out.value = node(a).value;
  const std::int64_t n = out.value.rows(), m = out.value.cols();
  double* o = out.value.data();
  for (std::int64_t i = 0; i < n; ++i) {
    double mx = o[i * m];
    for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, o[i * m + j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < m; ++j) s += std::exp(o[i * m + j] - mx);
    const double lse = mx + std::log(s);
    for (std::int64_t j = 0; j < m; ++j) o[i * m + j] -= lse;
  }
  return push(std::move(out));
}

Gradients GradientRecord::backpropagate(ValueId output, const Tensor& output_grad) {
  if (nodes_.empty()) throw ValidationError("backpropagate on an empty record");
  if (watched_->version() != version_at_trace_)
    throw StalenessError("gradient record is stale: watched parameters were mutated after tracing");
  const Node& out = node(output);
  if (!out.value.same_shape(output_grad))
    throw ShapeError("output gradient shape does not match the output value");

  Gradients result;
  result.flat.assign(static_cast<std::size_t>(watched_->total_scalars()), 0.0);
  if (!out.needs_grad) return result;

  std::vector<Tensor> grads(nodes_.size());
  std::vector<char> has_grad(nodes_.size(), 0);
  auto ensure = [&](ValueId id) -> Tensor& {
    auto u = static_cast<std::size_t>(id);
    if (!has_grad[u]) {
      grads[u] = Tensor::zeros(nodes_[u].value.shape());
      has_grad[u] = 1;
    }
    return grads[u];
  };
  ensure(output) = output_grad;

  for (ValueId id = output; id >= 0; --id) {
    const auto u = static_cast<std::size_t>(id);
    if (!has_grad[u] || !nodes_[u].needs_grad) continue;
    const Node& n = nodes_[u];
    const Tensor& g = grads[u];
    auto wants = [&](std::size_t slot) { return node(n.inputs[slot]).needs_grad; };

    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParam: {
        const auto& e = watched_->entry(n.entry);
        double* dst = result.flat.data() + e.flat_offset;
        const double* src = g.data();
        for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
        break;
      }
      case Op::kLinear: {
        const Tensor& xv = node(n.inputs[0]).value;
        const Tensor& wv = node(n.inputs[1]).value;
        const std::int64_t nb = xv.rows(), k = xv.cols(), m = wv.rows();
        if (wants(0))
          linalg::matmul_nn(g.data(), nb, m, wv.data(), k, ensure(n.inputs[0]).data(), true);
        if (wants(1))
          linalg::matmul_tn(g.data(), nb, m, xv.data(), k, ensure(n.inputs[1]).data(), true);
        if (wants(2)) {
          Tensor& db = ensure(n.inputs[2]);
          for (std::int64_t i = 0; i < nb; ++i)
            for (std::int64_t j = 0; j < m; ++j) db.at(j) += g.at(i, j);
        }
        break;
      }
      case Op::kMatmulNT: {
        const Tensor& av = node(n.inputs[0]).value;
        const Tensor& bv = node(n.inputs[1]).value;
        if (wants(0))
          linalg::matmul_nn(g.data(), av.rows(), bv.rows(), bv.data(), bv.cols(),
                            ensure(n.inputs[0]).data(), true);
        if (wants(1))
          linalg::matmul_tn(g.data(), av.rows(), bv.rows(), av.data(), av.cols(),
                            ensure(n.inputs[1]).data(), true);
        break;
      }
      case Op::kAdd: {
        for (std::size_t s = 0; s < 2; ++s)
          if (wants(s)) {
            double* d = ensure(n.inputs[s]).data();
            const double* gp = g.data();
            for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i];
          }
        break;
      }
      case Op::kSub: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i];
        }
        if (wants(1)) {
          double* d = ensure(n.inputs[1]).data();
          const double* gp = g.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] -= gp[i];
        }
        break;
      }
      case Op::kMul: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* bp = node(n.inputs[1]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i] * bp[i];
        }
        if (wants(1)) {
          double* d = ensure(n.inputs[1]).data();
          const double* gp = g.data();
          const double* ap = node(n.inputs[0]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i] * ap[i];
        }
        break;
      }
      case Op::kScale: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += n.a * gp[i];
        }
        break;
      }
      case Op::kAddScalar: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i];
        }
        break;
      }
      case Op::kSilu: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* xp = node(n.inputs[0]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double s = sigma(xp[i]);
            d[i] += gp[i] * (s + xp[i] * s * (1.0 - s));
          }
        }
        break;
      }
      case Op::kLogistic: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* sp = n.value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i)
            d[i] += gp[i] * sp[i] * (1.0 - sp[i]);
        }
        break;
      }
      case Op::kSquare: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* xp = node(n.inputs[0]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += 2.0 * xp[i] * gp[i];
        }
        break;
      }
      case Op::kLog: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* xp = node(n.inputs[0]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i] / xp[i];
        }
        break;
      }
      case Op::kClamp: {
        // subgradient convention: gradient passes on the open interval
        // (lo, hi), zero where the clamp is active or at the bounds
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double* gp = g.data();
          const double* xp = node(n.inputs[0]).value.data();
          for (std::int64_t i = 0; i < g.numel(); ++i)
            if (xp[i] > n.a && xp[i] < n.b) d[i] += gp[i];
        }
        break;
      }
      case Op::kSumAll: {
        if (wants(0)) {
          double* d = ensure(n.inputs[0]).data();
          const double gv = g.at(0);
          for (std::int64_t i = 0; i < node(n.inputs[0]).value.numel(); ++i) d[i] += gv;
        }
        break;
      }
      case Op::kConcatCols: {
        std::int64_t off = 0;
        for (ValueId in : n.inputs) {
          const Tensor& v = node(in).value;
          if (node(in).needs_grad) {
            Tensor& d = ensure(in);
            for (std::int64_t i = 0; i < v.rows(); ++i)
              for (std::int64_t j = 0; j < v.cols(); ++j)
                d.at(i, j) += g.at(i, off + j);
          }
          off += v.cols();
        }
        break;
      }
      case Op::kSliceCols: {
        if (wants(0)) {
          Tensor& d = ensure(n.inputs[0]);
          for (std::int64_t i = 0; i < g.rows(); ++i)
            for (std::int64_t j = 0; j < g.cols(); ++j)
              d.at(i, n.i0 + j) += g.at(i, j);
        }
        break;
      }
      case Op::kLogSoftmaxRows: {
        if (wants(0)) {
          Tensor& d = ensure(n.inputs[0]);
          const std::int64_t nr = g.rows(), m = g.cols();
          for (std::int64_t i = 0; i < nr; ++i) {
            double rs = 0.0;
            for (std::int64_t j = 0; j < m; ++j) rs += g.at(i, j);
            for (std::int64_t j = 0; j < m; ++j)
              d.at(i, j) += g.at(i, j) - std::exp(n.value.at(i, j)) * rs;
          }
        }
        break;
      }
    }
    // free the buffer early; everything upstream of id is already done
    if (id != output) {
      grads[u] = Tensor();
    }
  }
  return result;
}

}  // namespace fade
