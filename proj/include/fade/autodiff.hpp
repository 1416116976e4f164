#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fade/param_store.hpp"
#include "fade/tensor.hpp"

namespace fade {

using ValueId = std::int32_t;

// Flat gradient vector aligned with the flattened index of one ParameterStore.
struct Gradients {
  std::vector<double> flat;

  // view of the slice belonging to one named entry
  std::span<const double> for_entry(const ParameterStore& store, const std::string& name) const;
};

// Reverse-mode tape over tensor operations.
//
// A record watches exactly one ParameterStore: leaves created from that
// store are differentiable, parameters from any other store enter the
// trace as constants. Values are computed eagerly; backpropagate walks
// the trace once in reverse and accumulates into the flat gradient
// vector, so parameters never touched by the trace come out exactly 0.
class GradientRecord {
 public:
  explicit GradientRecord(const ParameterStore& watched);

  const ParameterStore& watched() const { return *watched_; }

  ValueId constant(Tensor v);
  ValueId param(const ParameterStore& store, const std::string& name);

  // y = x(n,k) * w(m,k)^T + b(m)
  ValueId linear(ValueId x, ValueId w, ValueId b);
  ValueId matmul_nt(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId add_scalar(ValueId a, double c);
  ValueId silu(ValueId a);
  ValueId logistic(ValueId a);
  ValueId square(ValueId a);
  ValueId log(ValueId a);
  ValueId clamp(ValueId a, double lo, double hi);
  ValueId sum_all(ValueId a);
  ValueId concat_cols(std::span<const ValueId> parts);
  ValueId slice_cols(ValueId a, std::int64_t begin, std::int64_t end);
  ValueId log_softmax_rows(ValueId a);

  const Tensor& value(ValueId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient of a scalar-weighted output w.r.t. the watched store.
  // May be called multiple times; each call re-walks the trace.
  Gradients backpropagate(ValueId output, const Tensor& output_grad);

 private:
  enum class Op : std::uint8_t {
    kConstant, kParam, kLinear, kMatmulNT, kAdd, kSub, kMul, kScale,
    kAddScalar, kSilu, kLogistic, kSquare, kLog, kClamp, kSumAll,
    kConcatCols, kSliceCols, kLogSoftmaxRows,
  };

  struct Node {
    Op op;
    bool needs_grad = false;
    std::vector<ValueId> inputs;
    Tensor value;
    double a = 0.0, b = 0.0;       // scalar payloads
    std::int64_t i0 = 0, i1 = 0;   // integer payloads
    std::size_t entry = 0;         // param leaf: entry index in watched store
  };

  ValueId push(Node node);
  const Node& node(ValueId id) const;
  void check_2d(ValueId id, const char* who) const;

  const ParameterStore* watched_;
  std::uint64_t version_at_trace_;
  std::vector<Node> nodes_;
  std::map<std::size_t, ValueId> param_leaves_;
};

}  // namespace fade
