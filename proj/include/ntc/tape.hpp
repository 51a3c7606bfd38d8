#ifndef NTC_TAPE_HPP
#define NTC_TAPE_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc {

// Reverse-mode autodiff over a flat tape of eagerly evaluated nodes.
// Node ids are append-ordered, so reverse id order is a reverse topological
// order of the DAG and the backward sweep visits each node exactly once.

struct ValueId {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

enum class OpKind : uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAbs,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kSoftplus,
  kSquare,
  kScale,            // x * attr
  kClampMin,         // max(x, attr); gradient passes where x > attr
  kSumAll,           // reduce to [1]
  kMatmul,           // [m x k] [k x n]
  kLinear,           // X[B x A], W[O x A], b[O] -> X W^T + b
  kGdn,              // r[B x U], beta[U], gamma[U x U]
  kLogisticMixBin,   // v[B], logits[C], locs[C], logscales[C] -> P(v-1/2 <= Y < v+1/2)
  kSoftRound,        // attr = temperature tau
  kStraightThrough,  // forward round-to-even, backward identity
  kSliceCol,         // X[B x D] -> column iattr as [B]
  kSliceRange,       // x[N] -> x[iattr : iattr+jattr]
  kReshape,          // same element count, new shape
};

class Tape {
 public:
  // Tracked input (parameter); participates in gradients.
  ValueId leaf(Tensor t);
  // Untracked input; blocks gradient flow.
  ValueId constant(Tensor t);

  ValueId add(ValueId a, ValueId b) { return binary(OpKind::kAdd, a, b); }
  ValueId sub(ValueId a, ValueId b) { return binary(OpKind::kSub, a, b); }
  ValueId mul(ValueId a, ValueId b) { return binary(OpKind::kMul, a, b); }
  ValueId div(ValueId a, ValueId b) { return binary(OpKind::kDiv, a, b); }
  ValueId neg(ValueId a) { return unary(OpKind::kNeg, a); }
  ValueId abs(ValueId a) { return unary(OpKind::kAbs, a); }
  ValueId exp(ValueId a) { return unary(OpKind::kExp, a); }
  ValueId log(ValueId a) { return unary(OpKind::kLog, a); }
  ValueId tanh(ValueId a) { return unary(OpKind::kTanh, a); }
  ValueId sigmoid(ValueId a) { return unary(OpKind::kSigmoid, a); }
  ValueId softplus(ValueId a) { return unary(OpKind::kSoftplus, a); }
  ValueId square(ValueId a) { return unary(OpKind::kSquare, a); }

  ValueId scale(ValueId a, double c);
  ValueId clamp_min(ValueId a, double floor);
  ValueId sum_all(ValueId a);
  ValueId matmul(ValueId a, ValueId b);
  ValueId linear(ValueId x, ValueId w, ValueId b);
  ValueId gdn(ValueId r, ValueId beta, ValueId gamma);
  ValueId logistic_mix_bin(ValueId v, ValueId logits, ValueId locs, ValueId logscales);
  ValueId soft_round(ValueId a, double tau);
  ValueId straight_through(ValueId a);
  ValueId slice_col(ValueId a, int64_t col);
  ValueId slice_range(ValueId a, int64_t start, int64_t len);
  ValueId reshape(ValueId a, Shape shape);

  const Tensor& value(ValueId id) const { return nodes_[static_cast<size_t>(id.idx)].value; }
  size_t node_count() const { return nodes_.size(); }

  // Gradients of a scalar loss with respect to the given nodes.
  std::vector<Tensor> gradients(ValueId loss, std::span<const ValueId> wrt) const;

 private:
  struct Node {
    OpKind op;
    ValueId a, b, c, d;
    Tensor value;
    double attr = 0.0;
    int64_t iattr = 0;
    int64_t jattr = 0;
    bool needs_grad = false;
  };

  ValueId unary(OpKind op, ValueId a);
  ValueId binary(OpKind op, ValueId a, ValueId b);
  ValueId push(Node n);
  const Node& node(ValueId id) const { return nodes_[static_cast<size_t>(id.idx)]; }

  std::vector<Node> nodes_;
};

// Scalar-valued differentiable function built on a tape from leaf inputs.
using ScalarFn = std::function<ValueId(Tape&, std::span<const ValueId>)>;

// Max over all coordinates of |analytic - central difference| /
// max(1, |analytic|, |numeric|).
double grad_check(const ScalarFn& f, std::span<const Tensor> point, double eps);

}  // namespace ntc

#endif
