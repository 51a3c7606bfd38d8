#include "ntc/tape.hpp"

#include <algorithm>
#include <cmath>

#include "ntc/quantizers.hpp"

namespace ntc {
namespace {

double softplus_stable(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
double sgn0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// Broadcast classes supported by binary elementwise ops: equal shapes, a
// leading batch dimension against a feature vector, or a scalar on either
// side. Nothing fancier; keeps the backward reductions obvious.
enum class Bcast { kSame, kRowVecB, kScalarA, kScalarB };

Bcast classify(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (a.size() == 1) return Bcast::kScalarA;
  if (b.size() == 1) return Bcast::kScalarB;
  if (a.ndim() == 2 && b.ndim() == 1 && a.cols() == b.dim(0)) return Bcast::kRowVecB;
  throw DimensionError("elementwise shapes not broadcast-compatible");
}

double apply_op(OpKind op, double x, double y) {
  switch (op) {
    case OpKind::kAdd: return x + y;
    case OpKind::kSub: return x - y;
    case OpKind::kMul: return x * y;
    case OpKind::kDiv: return x / y;
    default: break;
  }
  return 0;
}

}  // namespace

ValueId Tape::leaf(Tensor t) {
  Node n;
  n.op = OpKind::kLeaf;
  n.value = std::move(t);
  n.needs_grad = true;
  return push(std::move(n));
}

ValueId Tape::constant(Tensor t) {
  Node n;
  n.op = OpKind::kConstant;
  n.value = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

ValueId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return ValueId{static_cast<int32_t>(nodes_.size() - 1)};
}

ValueId Tape::unary(OpKind op, ValueId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  const double* xs = x.data();
  double* os = out.data();
  int64_t n = x.size();
  switch (op) {
    case OpKind::kNeg:
      for (int64_t i = 0; i < n; ++i) os[i] = -xs[i];
      break;
    case OpKind::kAbs:
      for (int64_t i = 0; i < n; ++i) os[i] = std::fabs(xs[i]);
      break;
    case OpKind::kExp:
      for (int64_t i = 0; i < n; ++i) os[i] = std::exp(xs[i]);
      break;
    case OpKind::kLog:
      for (int64_t i = 0; i < n; ++i) {
        if (xs[i] <= 0) throw DomainError("log of non-positive value");
        os[i] = std::log(xs[i]);
      }
      break;
    case OpKind::kTanh:
      for (int64_t i = 0; i < n; ++i) os[i] = std::tanh(xs[i]);
      break;
    case OpKind::kSigmoid:
      for (int64_t i = 0; i < n; ++i) os[i] = sigmoid_scalar(xs[i]);
      break;
    case OpKind::kSoftplus:
      for (int64_t i = 0; i < n; ++i) os[i] = softplus_stable(xs[i]);
      break;
    case OpKind::kSquare:
      for (int64_t i = 0; i < n; ++i) os[i] = xs[i] * xs[i];
      break;
    default: throw DomainError("bad unary op");
  }
  Node nd;
  nd.op = op;
  nd.a = a;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::binary(OpKind op, ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  Bcast bc = classify(x, y);
  Tensor out(bc == Bcast::kScalarA ? y.shape() : x.shape());
  const double* xs = x.data();
  const double* ys = y.data();
  double* os = out.data();
  int64_t n = out.size();
  switch (bc) {
    case Bcast::kSame:
      for (int64_t i = 0; i < n; ++i) os[i] = apply_op(op, xs[i], ys[i]);
      break;
    case Bcast::kScalarA:
      for (int64_t i = 0; i < n; ++i) os[i] = apply_op(op, xs[0], ys[i]);
      break;
    case Bcast::kScalarB:
      for (int64_t i = 0; i < n; ++i) os[i] = apply_op(op, xs[i], ys[0]);
      break;
    case Bcast::kRowVecB: {
      int64_t cols = x.cols();
      for (int64_t i = 0; i < n; ++i) os[i] = apply_op(op, xs[i], ys[i % cols]);
      break;
    }
  }
  Node nd;
  nd.op = op;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::scale(ValueId a, double c) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
  Node nd;
  nd.op = OpKind::kScale;
  nd.a = a;
  nd.attr = c;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::clamp_min(ValueId a, double floor) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], floor);
  Node nd;
  nd.op = OpKind::kClampMin;
  nd.a = a;
  nd.attr = floor;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::sum_all(ValueId a) {
  const Tensor& x = value(a);
  double s = 0;
  for (int64_t i = 0; i < x.size(); ++i) s += x[i];
  Node nd;
  nd.op = OpKind::kSumAll;
  nd.a = a;
  nd.value = Tensor::scalar(s);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.ndim() != 2 || y.ndim() != 2 || x.cols() != y.rows())
    throw DimensionError("matmul inner dimensions disagree");
  int64_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out({m, n});
  const double* xs = x.data();
  const double* ys = y.data();
  double* os = out.data();
  for (int64_t i = 0; i < m; ++i) {
    double* orow = os + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double xv = xs[i * k + p];
      const double* yrow = ys + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  Node nd;
  nd.op = OpKind::kMatmul;
  nd.a = a;
  nd.b = b;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::linear(ValueId xid, ValueId wid, ValueId bid) {
  const Tensor& x = value(xid);
  const Tensor& w = value(wid);
  const Tensor& b = value(bid);
  if (x.ndim() != 2 || w.ndim() != 2 || x.cols() != w.cols() || b.dim(0) != w.rows())
    throw DimensionError("linear layer shape mismatch");
  int64_t batch = x.rows(), in = x.cols(), out = w.rows();
  Tensor y({batch, out});
  const double* xs = x.data();
  const double* ws = w.data();
  const double* bs = b.data();
  double* ys = y.data();
  for (int64_t i = 0; i < batch; ++i) {
    const double* xrow = xs + i * in;
    double* yrow = ys + i * out;
    for (int64_t o = 0; o < out; ++o) {
      const double* wrow = ws + o * in;
      double acc = bs[o];
      for (int64_t p = 0; p < in; ++p) acc += xrow[p] * wrow[p];
      yrow[o] = acc;
    }
  }
  Node nd;
  nd.op = OpKind::kLinear;
  nd.a = xid;
  nd.b = wid;
  nd.c = bid;
  nd.value = std::move(y);
  nd.needs_grad = node(xid).needs_grad || node(wid).needs_grad || node(bid).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::gdn(ValueId rid, ValueId bid, ValueId gid) {
  const Tensor& r = value(rid);
  const Tensor& beta = value(bid);
  const Tensor& gamma = value(gid);
  if (r.ndim() != 2 || beta.ndim() != 1 || gamma.ndim() != 2)
    throw DimensionError("gdn expects r[B x U], beta[U], gamma[U x U]");
  int64_t units = r.cols();
  if (beta.dim(0) != units || gamma.rows() != units || gamma.cols() != units)
    throw DimensionError("gdn parameter shapes disagree with unit count");
  for (int64_t i = 0; i < units; ++i)
    if (!(beta[i] > 0)) throw NumericError("gdn beta must stay positive after reparameterization");
  int64_t batch = r.rows();
  Tensor v({batch, units});
  std::vector<double> absr(static_cast<size_t>(units));
  for (int64_t bi = 0; bi < batch; ++bi) {
    const double* rrow = r.data() + bi * units;
    double* vrow = v.data() + bi * units;
    for (int64_t j = 0; j < units; ++j) absr[static_cast<size_t>(j)] = std::fabs(rrow[j]);
    for (int64_t i = 0; i < units; ++i) {
      const double* grow = gamma.data() + i * units;
      double den = beta[i];
      for (int64_t j = 0; j < units; ++j) den += grow[j] * absr[static_cast<size_t>(j)];
      vrow[i] = rrow[i] / den;
    }
  }
  Node nd;
  nd.op = OpKind::kGdn;
  nd.a = rid;
  nd.b = bid;
  nd.c = gid;
  nd.value = std::move(v);
  nd.needs_grad = node(rid).needs_grad || node(bid).needs_grad || node(gid).needs_grad;
  return push(std::move(nd));
}

namespace {
constexpr double kMixScaleFloor = 1e-4;
constexpr double kMixMassFloor = 1e-12;
}  // namespace

ValueId Tape::logistic_mix_bin(ValueId vid, ValueId lid, ValueId mid, ValueId sid) {
  const Tensor& v = value(vid);
  const Tensor& logits = value(lid);
  const Tensor& locs = value(mid);
  const Tensor& lscales = value(sid);
  if (v.ndim() != 1 || logits.ndim() != 1 || !logits.same_shape(locs) || !logits.same_shape(lscales))
    throw DimensionError("logistic_mix_bin expects v[B] and per-component parameter vectors");
  int64_t batch = v.dim(0), comps = logits.dim(0);
  double lmax = logits[0];
  for (int64_t c = 1; c < comps; ++c) lmax = std::max(lmax, logits[c]);
  std::vector<double> w(static_cast<size_t>(comps)), sc(static_cast<size_t>(comps));
  double wsum = 0;
  for (int64_t c = 0; c < comps; ++c) {
    w[static_cast<size_t>(c)] = std::exp(logits[c] - lmax);
    wsum += w[static_cast<size_t>(c)];
    sc[static_cast<size_t>(c)] = kMixScaleFloor + std::exp(lscales[c]);
  }
  for (auto& x : w) x /= wsum;
  Tensor out({batch});
  for (int64_t i = 0; i < batch; ++i) {
    double mass = 0;
    for (int64_t c = 0; c < comps; ++c) {
      double s = sc[static_cast<size_t>(c)];
      double hi = sigmoid_scalar((v[i] + 0.5 - locs[c]) / s);
      double lo = sigmoid_scalar((v[i] - 0.5 - locs[c]) / s);
      mass += w[static_cast<size_t>(c)] * (hi - lo);
    }
    out[i] = std::max(mass, kMixMassFloor);
  }
  Node nd;
  nd.op = OpKind::kLogisticMixBin;
  nd.a = vid;
  nd.b = lid;
  nd.c = mid;
  nd.d = sid;
  nd.value = std::move(out);
  nd.needs_grad =
      node(vid).needs_grad || node(lid).needs_grad || node(mid).needs_grad || node(sid).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::soft_round(ValueId a, double tau) {
  if (!(tau > 0)) throw DomainError("soft_round temperature must be positive");
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = soft_round_scalar(x[i], tau);
  Node nd;
  nd.op = OpKind::kSoftRound;
  nd.a = a;
  nd.attr = tau;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::straight_through(ValueId a) {
  const Tensor& x = value(a);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = round_ties_even(x[i]);
  Node nd;
  nd.op = OpKind::kStraightThrough;
  nd.a = a;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::slice_col(ValueId a, int64_t col) {
  const Tensor& x = value(a);
  if (x.ndim() != 2 || col < 0 || col >= x.cols()) throw DimensionError("slice_col out of range");
  Tensor out({x.rows()});
  for (int64_t i = 0; i < x.rows(); ++i) out[i] = x.at(i, col);
  Node nd;
  nd.op = OpKind::kSliceCol;
  nd.a = a;
  nd.iattr = col;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::slice_range(ValueId a, int64_t start, int64_t len) {
  const Tensor& x = value(a);
  if (x.ndim() != 1 || start < 0 || len < 0 || start + len > x.dim(0))
    throw DimensionError("slice_range out of bounds");
  Tensor out({len});
  for (int64_t i = 0; i < len; ++i) out[i] = x[start + i];
  Node nd;
  nd.op = OpKind::kSliceRange;
  nd.a = a;
  nd.iattr = start;
  nd.jattr = len;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

ValueId Tape::reshape(ValueId a, Shape shape) {
  const Tensor& x = value(a);
  if (Tensor::count(shape) != x.size()) throw DimensionError("reshape changes element count");
  Tensor out(std::move(shape));
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i];
  Node nd;
  nd.op = OpKind::kReshape;
  nd.a = a;
  nd.value = std::move(out);
  nd.needs_grad = node(a).needs_grad;
  return push(std::move(nd));
}

std::vector<Tensor> Tape::gradients(ValueId loss, std::span<const ValueId> wrt) const {
  if (!loss.valid() || value(loss).size() != 1)
    throw DimensionError("backward pass requires a scalar loss");
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  auto grad_of = [&](ValueId id) -> Tensor& {
    size_t i = static_cast<size_t>(id.idx);
    if (!touched[i]) {
      grads[i] = Tensor(nodes_[i].value.shape());
      touched[i] = true;
    }
    return grads[i];
  };
  grad_of(loss)[0] = 1.0;

  for (int32_t idx = loss.idx; idx >= 0; --idx) {
    const Node& nd = nodes_[static_cast<size_t>(idx)];
    if (!touched[static_cast<size_t>(idx)] || !nd.needs_grad) continue;
    const Tensor& g = grads[static_cast<size_t>(idx)];
    auto want = [&](ValueId in) { return in.valid() && node(in).needs_grad; };

    switch (nd.op) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd:
      case OpKind::kSub:
      case OpKind::kMul:
      case OpKind::kDiv: {
        const Tensor& x = value(nd.a);
        const Tensor& y = value(nd.b);
        Bcast bc = classify(x, y);
        auto xval = [&](int64_t i) {
          return bc == Bcast::kScalarA ? x[0] : x[i];
        };
        auto yval = [&](int64_t i) {
          switch (bc) {
            case Bcast::kScalarB: return y[0];
            case Bcast::kRowVecB: return y[i % y.dim(0)];
            default: return y[i];
          }
        };
        auto add_to_x = [&](int64_t i, double v) {
          Tensor& gx = grad_of(nd.a);
          gx[bc == Bcast::kScalarA ? 0 : i] += v;
        };
        auto add_to_y = [&](int64_t i, double v) {
          Tensor& gy = grad_of(nd.b);
          switch (bc) {
            case Bcast::kScalarB: gy[0] += v; break;
            case Bcast::kRowVecB: gy[i % y.dim(0)] += v; break;
            default: gy[i] += v;
          }
        };
        int64_t n = g.size();
        bool wx = want(nd.a), wy = want(nd.b);
        for (int64_t i = 0; i < n; ++i) {
          double gi = g[i];
          if (gi == 0) continue;
          switch (nd.op) {
            case OpKind::kAdd:
              if (wx) add_to_x(i, gi);
              if (wy) add_to_y(i, gi);
              break;
            case OpKind::kSub:
              if (wx) add_to_x(i, gi);
              if (wy) add_to_y(i, -gi);
              break;
            case OpKind::kMul:
              if (wx) add_to_x(i, gi * yval(i));
              if (wy) add_to_y(i, gi * xval(i));
              break;
            case OpKind::kDiv: {
              double yv = yval(i);
              if (wx) add_to_x(i, gi / yv);
              if (wy) add_to_y(i, -gi * xval(i) / (yv * yv));
              break;
            }
            default: break;
          }
        }
        break;
      }
      case OpKind::kNeg:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
        }
        break;
      case OpKind::kAbs:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sgn0(x[i]);
        }
        break;
      case OpKind::kExp:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * nd.value[i];
        }
        break;
      case OpKind::kLog:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
        }
        break;
      case OpKind::kTanh:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - nd.value[i] * nd.value[i]);
        }
        break;
      case OpKind::kSigmoid:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * nd.value[i] * (1.0 - nd.value[i]);
        }
        break;
      case OpKind::kSoftplus:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid_scalar(x[i]);
        }
        break;
      case OpKind::kSquare:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * g[i] * x[i];
        }
        break;
      case OpKind::kScale:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * nd.attr;
        }
        break;
      case OpKind::kClampMin:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i)
            if (x[i] > nd.attr) gx[i] += g[i];
        }
        break;
      case OpKind::kSumAll:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          double gs = g[0];
          for (int64_t i = 0; i < gx.size(); ++i) gx[i] += gs;
        }
        break;
      case OpKind::kMatmul: {
        const Tensor& x = value(nd.a);
        const Tensor& y = value(nd.b);
        int64_t m = x.rows(), k = x.cols(), n = y.cols();
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);  // G * Y^T
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              const double* yrow = y.data() + p * n;
              const double* grow = g.data() + i * n;
              double acc = 0;
              for (int64_t j = 0; j < n; ++j) acc += grow[j] * yrow[j];
              gx.at(i, p) += acc;
            }
        }
        if (want(nd.b)) {
          Tensor& gy = grad_of(nd.b);  // X^T * G
          for (int64_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * n;
            for (int64_t p = 0; p < k; ++p) {
              double xv = x.at(i, p);
              if (xv == 0) continue;
              double* gyrow = gy.data() + p * n;
              for (int64_t j = 0; j < n; ++j) gyrow[j] += xv * grow[j];
            }
          }
        }
        break;
      }
      case OpKind::kLinear: {
        const Tensor& x = value(nd.a);
        const Tensor& w = value(nd.b);
        int64_t batch = x.rows(), in = x.cols(), out = w.rows();
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);  // G * W
          for (int64_t i = 0; i < batch; ++i) {
            const double* grow = g.data() + i * out;
            double* gxrow = gx.data() + i * in;
            for (int64_t o = 0; o < out; ++o) {
              double gv = grow[o];
              if (gv == 0) continue;
              const double* wrow = w.data() + o * in;
              for (int64_t p = 0; p < in; ++p) gxrow[p] += gv * wrow[p];
            }
          }
        }
        if (want(nd.b)) {
          Tensor& gw = grad_of(nd.b);  // G^T * X
          for (int64_t i = 0; i < batch; ++i) {
            const double* grow = g.data() + i * out;
            const double* xrow = x.data() + i * in;
            for (int64_t o = 0; o < out; ++o) {
              double gv = grow[o];
              if (gv == 0) continue;
              double* gwrow = gw.data() + o * in;
              for (int64_t p = 0; p < in; ++p) gwrow[p] += gv * xrow[p];
            }
          }
        }
        if (want(nd.c)) {
          Tensor& gb = grad_of(nd.c);
          for (int64_t i = 0; i < batch; ++i) {
            const double* grow = g.data() + i * out;
            for (int64_t o = 0; o < out; ++o) gb[o] += grow[o];
          }
        }
        break;
      }
      case OpKind::kGdn: {
        const Tensor& r = value(nd.a);
        const Tensor& beta = value(nd.b);
        const Tensor& gamma = value(nd.c);
        int64_t batch = r.rows(), units = r.cols();
        std::vector<double> absr(static_cast<size_t>(units)), den(static_cast<size_t>(units)),
            t(static_cast<size_t>(units));
        for (int64_t bi = 0; bi < batch; ++bi) {
          const double* rrow = r.data() + bi * units;
          const double* grow = g.data() + bi * units;
          for (int64_t j = 0; j < units; ++j) absr[static_cast<size_t>(j)] = std::fabs(rrow[j]);
          for (int64_t i = 0; i < units; ++i) {
            const double* garow = gamma.data() + i * units;
            double d = beta[i];
            for (int64_t j = 0; j < units; ++j) d += garow[j] * absr[static_cast<size_t>(j)];
            den[static_cast<size_t>(i)] = d;
            t[static_cast<size_t>(i)] = grow[i] * rrow[i] / (d * d);
          }
          if (want(nd.a)) {
            Tensor& gr = grad_of(nd.a);
            double* grout = gr.data() + bi * units;
            for (int64_t k = 0; k < units; ++k) {
              double acc = 0;
              for (int64_t i = 0; i < units; ++i)
                acc += t[static_cast<size_t>(i)] * gamma.at(i, k);
              grout[k] += grow[k] / den[static_cast<size_t>(k)] - sgn0(rrow[k]) * acc;
            }
          }
          if (want(nd.b)) {
            Tensor& gb = grad_of(nd.b);
            for (int64_t i = 0; i < units; ++i) gb[i] -= t[static_cast<size_t>(i)];
          }
          if (want(nd.c)) {
            Tensor& gg = grad_of(nd.c);
            for (int64_t i = 0; i < units; ++i) {
              double ti = t[static_cast<size_t>(i)];
              if (ti == 0) continue;
              double* ggrow = gg.data() + i * units;
              for (int64_t j = 0; j < units; ++j) ggrow[j] -= ti * absr[static_cast<size_t>(j)];
            }
          }
        }
        break;
      }
      case OpKind::kLogisticMixBin: {
        const Tensor& v = value(nd.a);
        const Tensor& logits = value(nd.b);
        const Tensor& locs = value(nd.c);
        const Tensor& lscales = value(nd.d);
        int64_t batch = v.dim(0), comps = logits.dim(0);
        double lmax = logits[0];
        for (int64_t c = 1; c < comps; ++c) lmax = std::max(lmax, logits[c]);
        std::vector<double> w(static_cast<size_t>(comps)), sc(static_cast<size_t>(comps));
        double wsum = 0;
        for (int64_t c = 0; c < comps; ++c) {
          w[static_cast<size_t>(c)] = std::exp(logits[c] - lmax);
          wsum += w[static_cast<size_t>(c)];
          sc[static_cast<size_t>(c)] = kMixScaleFloor + std::exp(lscales[c]);
        }
        for (auto& x : w) x /= wsum;
        for (int64_t i = 0; i < batch; ++i) {
          double gi = g[i];
          if (gi == 0) continue;
          if (nd.value[i] <= kMixMassFloor) continue;  // clamped: zero gradient
          double wm_sum = 0;
          std::vector<double> mc(static_cast<size_t>(comps));
          for (int64_t c = 0; c < comps; ++c) {
            double s = sc[static_cast<size_t>(c)];
            double zh = (v[i] + 0.5 - locs[c]) / s;
            double zl = (v[i] - 0.5 - locs[c]) / s;
            double Fh = sigmoid_scalar(zh), Fl = sigmoid_scalar(zl);
            double fh = Fh * (1 - Fh), fl = Fl * (1 - Fl);
            mc[static_cast<size_t>(c)] = Fh - Fl;
            wm_sum += w[static_cast<size_t>(c)] * (Fh - Fl);
            double wc = w[static_cast<size_t>(c)];
            if (want(nd.a)) grad_of(nd.a)[i] += gi * wc * (fh - fl) / s;
            if (want(nd.c)) grad_of(nd.c)[c] += gi * wc * (fl - fh) / s;
            if (want(nd.d))
              grad_of(nd.d)[c] += gi * wc * (-zh * fh + zl * fl) / s * (s - kMixScaleFloor);
          }
          if (want(nd.b)) {
            Tensor& gl = grad_of(nd.b);
            for (int64_t c = 0; c < comps; ++c)
              gl[c] += gi * w[static_cast<size_t>(c)] * (mc[static_cast<size_t>(c)] - wm_sum);
          }
        }
        break;
      }
      case OpKind::kSoftRound:
        if (want(nd.a)) {
          const Tensor& x = value(nd.a);
          Tensor& gx = grad_of(nd.a);
          double tau = nd.attr;
          if (tau < 1e-6) {
            for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
          } else {
            double denom = std::tanh(tau / 2);
            for (int64_t i = 0; i < g.size(); ++i) {
              double rho = x[i] - std::floor(x[i]) - 0.5;
              double th = std::tanh(tau * rho);
              gx[i] += g[i] * 0.5 * tau * (1.0 - th * th) / denom;
            }
          }
        }
        break;
      case OpKind::kStraightThrough:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        break;
      case OpKind::kSliceCol:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          int64_t cols = value(nd.a).cols();
          for (int64_t i = 0; i < g.size(); ++i) gx[i * cols + nd.iattr] += g[i];
        }
        break;
      case OpKind::kSliceRange:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[nd.iattr + i] += g[i];
        }
        break;
      case OpKind::kReshape:
        if (want(nd.a)) {
          Tensor& gx = grad_of(nd.a);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        break;
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (ValueId id : wrt) {
    size_t i = static_cast<size_t>(id.idx);
    if (touched[i])
      out.push_back(std::move(grads[i]));
    else
      out.push_back(Tensor(nodes_[i].value.shape()));
  }
  return out;
}

double grad_check(const ScalarFn& f, std::span<const Tensor> point, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("grad_check eps outside [1e-7, 1e-3]");

  auto eval = [&](std::span<const Tensor> at) {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(at.size());
    for (const Tensor& t : at) ids.push_back(tape.leaf(t));
    ValueId y = f(tape, ids);
    double v = tape.value(y)[0];
    if (!std::isfinite(v)) throw NumericError("non-finite value in grad_check evaluation");
    return v;
  };

  Tape tape;
  std::vector<ValueId> ids;
  for (const Tensor& t : point) ids.push_back(tape.leaf(t));
  ValueId y = f(tape, ids);
  if (!std::isfinite(tape.value(y)[0])) throw NumericError("non-finite value in grad_check evaluation");
  std::vector<Tensor> analytic = tape.gradients(y, ids);

  std::vector<Tensor> work(point.begin(), point.end());
  double worst = 0;
  for (size_t t = 0; t < work.size(); ++t) {
    for (int64_t i = 0; i < work[t].size(); ++i) {
      double orig = work[t][i];
      work[t][i] = orig + eps;
      double fp = eval(work);
      work[t][i] = orig - eps;
      double fm = eval(work);
      work[t][i] = orig;
      double numeric = (fp - fm) / (2 * eps);
      double a = analytic[t][i];
      double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ntc
