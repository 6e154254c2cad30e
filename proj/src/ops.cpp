#include "vtr/ops.hpp"

#include "vtr/gemm.hpp"

#include <cmath>
#include <cstring>
#include <utility>

namespace vtr::core {

namespace {

using i64 = std::int64_t;

bool g_finite_checks = true;

std::vector<i64> strides_of(const Shape& s) {
  std::vector<i64> st(s.size(), 1);
  for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d)
    st[static_cast<std::size_t>(d)] = st[static_cast<std::size_t>(d) + 1] * s[static_cast<std::size_t>(d) + 1];
  return st;
}

bool tape_wants(std::initializer_list<const Tensor*> ins) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->node()->requires_grad) return true;
  return false;
}

void record(Tensor& out, std::function<void(BackwardCtx&)> step) {
  out.node()->requires_grad = true;
  out.node()->is_leaf = false;
  Tape::current()->record(std::move(step));
}

struct AxisSplit {
  i64 outer, axis, inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit sp{1, s[static_cast<std::size_t>(axis)], 1};
  for (int d = 0; d < axis; ++d) sp.outer *= s[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) sp.inner *= s[d];
  return sp;
}

}  // namespace

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks_enabled(bool on) { g_finite_checks = on; }

void check_finite(const Tensor& t, const char* op_name) {
  if (!g_finite_checks) return;
  for (double v : t.vec()) {
    if (!std::isfinite(v)) {
      throw NumericError(detail::format_msg("non-finite value produced by ",
                                            op_name));
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  VTR_CHECK_SHAPE(a.shape() == b.shape(), "add: ", shape_str(a.shape()), " vs ",
                  shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape_wants({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (an->requires_grad) {
        std::vector<double>& ga = ctx.grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn->requires_grad) {
        std::vector<double>& gb = ctx.grad_of(bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  check_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  VTR_CHECK_SHAPE(a.shape() == b.shape(), "sub: ", shape_str(a.shape()), " vs ",
                  shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (tape_wants({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (an->requires_grad) {
        std::vector<double>& ga = ctx.grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn->requires_grad) {
        std::vector<double>& gb = ctx.grad_of(bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  check_finite(out, "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  VTR_CHECK_SHAPE(a.shape() == b.shape(), "mul: ", shape_str(a.shape()), " vs ",
                  shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape_wants({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (an->requires_grad) {
        std::vector<double>& ga = ctx.grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        std::vector<double>& gb = ctx.grad_of(bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * an->data[i];
      }
    });
  }
  check_finite(out, "mul");
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), c](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
    });
  }
  check_finite(out, "scale");
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor elem_exp(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = std::exp(a.data()[i]);
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * on->data[i];
    });
  }
  check_finite(out, "elem_exp");
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) {
    const double x = a.data()[i];
    const double u = kGeluC * (x + kGeluA * x * x * x);
    out.data()[i] = 0.5 * x * (1.0 + std::tanh(u));
  }
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double x = an->data[i];
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double th = std::tanh(u);
        const double dudx = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        const double dy = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dudx;
        ga[i] += go[i] * dy;
      }
    });
  }
  check_finite(out, "gelu");
  return out;
}

Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
  VTR_CHECK_SHAPE(s.size() == 1, "mul_scalar_tensor: scalar operand has shape ",
                  shape_str(s.shape()));
  const double sv = s.data()[0];
  Tensor out = Tensor::zeros(a.shape());
  const i64 n = a.size();
  for (i64 i = 0; i < n; ++i) out.data()[i] = a.data()[i] * sv;
  if (tape_wants({&a, &s})) {
    record(out, [an = a.node(), sn = s.node(), on = out.node(), sv](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (an->requires_grad) {
        std::vector<double>& ga = ctx.grad_of(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * sv;
      }
      if (sn->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * an->data[i];
        std::vector<double>& gs = ctx.grad_of(sn);
        gs[0] += acc;
      }
    });
  }
  check_finite(out, "mul_scalar_tensor");
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  VTR_CHECK_SHAPE(numel(shape) == a.size(), "reshape: ", shape_str(a.shape()),
                  " -> ", shape_str(shape));
  Tensor out = Tensor::from_data(std::move(shape), a.vec());
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

namespace {

// Maps each output flat offset of a permute to its input offset.
template <typename Fn>
void permute_walk(const Shape& out_shape, const std::vector<i64>& in_step, Fn&& fn) {
  const int r = static_cast<int>(out_shape.size());
  const i64 total = numel(out_shape);
  std::vector<i64> idx(static_cast<std::size_t>(r), 0);
  i64 in_off = 0;
  for (i64 o = 0; o < total; ++o) {
    fn(o, in_off);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[static_cast<std::size_t>(d)];
      in_off += in_step[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
      in_off -= in_step[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const std::size_t r = a.shape().size();
  VTR_CHECK_SHAPE(perm.size() == r, "permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    VTR_CHECK_SHAPE(p >= 0 && static_cast<std::size_t>(p) < r && !seen[static_cast<std::size_t>(p)],
                    "permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = a.shape()[static_cast<std::size_t>(perm[d])];
  const std::vector<i64> in_strides = strides_of(a.shape());
  std::vector<i64> step(r);
  for (std::size_t d = 0; d < r; ++d) step[d] = in_strides[static_cast<std::size_t>(perm[d])];

  Tensor out = Tensor::zeros(out_shape);
  permute_walk(out_shape, step, [&](i64 o, i64 in_off) { out.data()[o] = a.data()[in_off]; });
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), out_shape, step](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      permute_walk(out_shape, step, [&](i64 o, i64 in_off) { ga[in_off] += go[o]; });
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& a) {
  VTR_CHECK_SHAPE(a.dim() == 2, "transpose2d: got shape ", shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  VTR_CHECK_SHAPE(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  VTR_CHECK_SHAPE(axis >= 0 && static_cast<std::size_t>(axis) < s0.size(),
                  "concat: bad axis");
  i64 axis_total = 0;
  for (const Tensor& p : parts) {
    VTR_CHECK_SHAPE(p.shape().size() == s0.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != static_cast<std::size_t>(axis))
        VTR_CHECK_SHAPE(p.shape()[d] == s0[d], "concat: extent mismatch off-axis");
    }
    axis_total += p.extent(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  Tensor out = Tensor::zeros(out_shape);
  const AxisSplit sp = split_at(out_shape, axis);

  i64 axis_off = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    const i64 ap = p.extent(axis);
    for (i64 o = 0; o < sp.outer; ++o) {
      const double* src = p.data() + o * ap * sp.inner;
      double* dst = out.data() + (o * axis_total + axis_off) * sp.inner;
      std::memcpy(dst, src, static_cast<std::size_t>(ap * sp.inner) * sizeof(double));
    }
    axis_off += ap;
    if (Tape::current() && p.node()->requires_grad) any_grad = true;
  }
  if (Tape::current() && any_grad) {
    std::vector<std::shared_ptr<TensorNode>> pn;
    pn.reserve(parts.size());
    for (const Tensor& p : parts) pn.push_back(p.node());
    record(out, [pn = std::move(pn), on = out.node(), sp, axis_total](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      i64 axis_off = 0;
      for (const auto& n : pn) {
        const i64 ap = static_cast<i64>(n->data.size()) / (sp.outer * sp.inner);
        if (n->requires_grad) {
          std::vector<double>& gp = ctx.grad_of(n);
          for (i64 o = 0; o < sp.outer; ++o) {
            const double* src = go.data() + (o * axis_total + axis_off) * sp.inner;
            double* dst = gp.data() + o * ap * sp.inner;
            for (i64 t = 0; t < ap * sp.inner; ++t) dst[t] += src[t];
          }
        }
        axis_off += ap;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::int64_t from, std::int64_t to) {
  const Shape& s = a.shape();
  VTR_CHECK_SHAPE(axis >= 0 && static_cast<std::size_t>(axis) < s.size(), "slice: bad axis");
  VTR_CHECK_SHAPE(from >= 0 && from < to && to <= s[static_cast<std::size_t>(axis)],
                  "slice: bad range [", from, ",", to, ") on axis extent ",
                  s[static_cast<std::size_t>(axis)]);
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = to - from;
  Tensor out = Tensor::zeros(out_shape);
  const AxisSplit sp = split_at(s, axis);
  const i64 width = to - from;
  for (i64 o = 0; o < sp.outer; ++o) {
    const double* src = a.data() + (o * sp.axis + from) * sp.inner;
    double* dst = out.data() + o * width * sp.inner;
    std::memcpy(dst, src, static_cast<std::size_t>(width * sp.inner) * sizeof(double));
  }
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), sp, from, width](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (i64 o = 0; o < sp.outer; ++o) {
        const double* src = go.data() + o * width * sp.inner;
        double* dst = ga.data() + (o * sp.axis + from) * sp.inner;
        for (i64 t = 0; t < width * sp.inner; ++t) dst[t] += src[t];
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  VTR_CHECK_SHAPE(table.dim() == 2, "gather_rows: table must be 2D, got ",
                  shape_str(table.shape()));
  const i64 rows = table.extent(0);
  const i64 d = table.extent(1);
  for (int id : ids)
    VTR_CHECK_SHAPE(id >= 0 && id < rows, "gather_rows: id ", id, " out of range ", rows);
  Tensor out = Tensor::zeros({static_cast<i64>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + static_cast<i64>(i) * d, table.data() + ids[i] * d,
                static_cast<std::size_t>(d) * sizeof(double));
  if (tape_wants({&table})) {
    record(out, [tn = table.node(), on = out.node(), ids, d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& gt = ctx.grad_of(tn);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = go.data() + static_cast<i64>(i) * d;
        double* dst = gt.data() + ids[i] * d;
        for (i64 j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor repeat_rows(const Tensor& row, std::int64_t n) {
  const i64 d = row.size();
  VTR_CHECK_SHAPE(row.dim() <= 2, "repeat_rows: expected [D] or [1,D]");
  Tensor out = Tensor::zeros({n, d});
  for (i64 i = 0; i < n; ++i)
    std::memcpy(out.data() + i * d, row.data(), static_cast<std::size_t>(d) * sizeof(double));
  if (tape_wants({&row})) {
    record(out, [rn = row.node(), on = out.node(), n, d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& gr = ctx.grad_of(rn);
      for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < d; ++j) gr[static_cast<std::size_t>(j)] += go[static_cast<std::size_t>(i * d + j)];
    });
  }
  return out;
}

Tensor add_broadcast0(const Tensor& x, const Tensor& p) {
  VTR_CHECK_SHAPE(x.dim() >= 1, "add_broadcast0: rank 0 input");
  Shape rest(x.shape().begin() + 1, x.shape().end());
  VTR_CHECK_SHAPE(p.shape() == rest, "add_broadcast0: ", shape_str(p.shape()),
                  " does not match trailing shape of ", shape_str(x.shape()));
  const i64 b = x.extent(0);
  const i64 m = p.size();
  Tensor out = Tensor::zeros(x.shape());
  for (i64 i = 0; i < b; ++i)
    for (i64 t = 0; t < m; ++t) out.data()[i * m + t] = x.data()[i * m + t] + p.data()[t];
  if (tape_wants({&x, &p})) {
    record(out, [xn = x.node(), pn = p.node(), on = out.node(), b, m](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (xn->requires_grad) {
        std::vector<double>& gx = ctx.grad_of(xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (pn->requires_grad) {
        std::vector<double>& gp = ctx.grad_of(pn);
        for (i64 i = 0; i < b; ++i)
          for (i64 t = 0; t < m; ++t) gp[static_cast<std::size_t>(t)] += go[static_cast<std::size_t>(i * m + t)];
      }
    });
  }
  check_finite(out, "add_broadcast0");
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  VTR_CHECK_SHAPE(x.dim() >= 1 && b.dim() == 1 && b.size() == x.shape().back(),
                  "add_bias: bias ", shape_str(b.shape()), " vs input ",
                  shape_str(x.shape()));
  const i64 d = b.size();
  const i64 rows = x.size() / d;
  Tensor out = Tensor::zeros(x.shape());
  for (i64 r = 0; r < rows; ++r)
    for (i64 j = 0; j < d; ++j) out.data()[r * d + j] = x.data()[r * d + j] + b.data()[j];
  if (tape_wants({&x, &b})) {
    record(out, [xn = x.node(), bn = b.node(), on = out.node(), rows, d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (xn->requires_grad) {
        std::vector<double>& gx = ctx.grad_of(xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (bn->requires_grad) {
        std::vector<double>& gb = ctx.grad_of(bn);
        for (i64 r = 0; r < rows; ++r)
          for (i64 j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += go[static_cast<std::size_t>(r * d + j)];
      }
    });
  }
  check_finite(out, "add_bias");
  return out;
}

namespace {

struct MatmulDims {
  i64 m, k, n, batches;
  bool a_batched, b_batched;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  VTR_CHECK_SHAPE(a.dim() >= 2 && b.dim() >= 2, "matmul: inputs must be >= 2D");
  MatmulDims d{};
  d.m = a.shape()[a.shape().size() - 2];
  d.k = a.shape().back();
  const i64 k2 = b.shape()[b.shape().size() - 2];
  d.n = b.shape().back();
  VTR_CHECK_SHAPE(d.k == k2, "matmul: inner extents ", d.k, " vs ", k2, " (",
                  shape_str(a.shape()), " x ", shape_str(b.shape()), ")");
  Shape ab(a.shape().begin(), a.shape().end() - 2);
  Shape bb(b.shape().begin(), b.shape().end() - 2);
  VTR_CHECK_SHAPE(ab == bb || ab.empty() || bb.empty(),
                  "matmul: batch extents not broadcast-compatible: ",
                  shape_str(a.shape()), " x ", shape_str(b.shape()));
  d.a_batched = !ab.empty();
  d.b_batched = !bb.empty();
  d.batches = d.a_batched ? numel(ab) : numel(bb);
  if (ab.empty() && bb.empty()) d.batches = 1;
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape;
  if (d.a_batched) {
    out_shape.assign(a.shape().begin(), a.shape().end() - 2);
  } else if (d.b_batched) {
    out_shape.assign(b.shape().begin(), b.shape().end() - 2);
  }
  out_shape.push_back(d.m);
  out_shape.push_back(d.n);
  Tensor out = Tensor::zeros(out_shape);
  for (i64 ib = 0; ib < d.batches; ++ib) {
    const double* ap = a.data() + (d.a_batched ? ib * d.m * d.k : 0);
    const double* bp = b.data() + (d.b_batched ? ib * d.k * d.n : 0);
    gemm::nn(ap, bp, out.data() + ib * d.m * d.n, d.m, d.k, d.n);
  }
  if (tape_wants({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), on = out.node(), d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      if (an->requires_grad) {
        std::vector<double>& ga = ctx.grad_of(an);
        for (i64 ib = 0; ib < d.batches; ++ib) {
          const double* gop = go.data() + ib * d.m * d.n;
          const double* bp = bn->data.data() + (d.b_batched ? ib * d.k * d.n : 0);
          double* gap = ga.data() + (d.a_batched ? ib * d.m * d.k : 0);
          gemm::nt(gop, bp, gap, d.m, d.n, d.k);
        }
      }
      if (bn->requires_grad) {
        std::vector<double>& gb = ctx.grad_of(bn);
        for (i64 ib = 0; ib < d.batches; ++ib) {
          const double* gop = go.data() + ib * d.m * d.n;
          const double* ap = an->data.data() + (d.a_batched ? ib * d.m * d.k : 0);
          double* gbp = gb.data() + (d.b_batched ? ib * d.k * d.n : 0);
          gemm::tn(ap, gop, gbp, d.k, d.m, d.n);
        }
      }
    });
  }
  check_finite(out, "matmul");
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

Tensor softmax(const Tensor& a, int axis) {
  VTR_CHECK_SHAPE(axis >= 0 && static_cast<std::size_t>(axis) < a.shape().size(),
                  "softmax: bad axis ", axis, " for shape ", shape_str(a.shape()));
  const AxisSplit sp = split_at(a.shape(), axis);
  Tensor out = Tensor::zeros(a.shape());
  for (i64 o = 0; o < sp.outer; ++o) {
    for (i64 in = 0; in < sp.inner; ++in) {
      const i64 base = o * sp.axis * sp.inner + in;
      double mx = a.data()[base];
      for (i64 t = 1; t < sp.axis; ++t) mx = std::max(mx, a.data()[base + t * sp.inner]);
      double sum = 0.0;
      for (i64 t = 0; t < sp.axis; ++t) {
        const double e = std::exp(a.data()[base + t * sp.inner] - mx);
        out.data()[base + t * sp.inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (i64 t = 0; t < sp.axis; ++t) out.data()[base + t * sp.inner] *= inv;
    }
  }
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), sp](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (i64 o = 0; o < sp.outer; ++o) {
        for (i64 in = 0; in < sp.inner; ++in) {
          const i64 base = o * sp.axis * sp.inner + in;
          double dot = 0.0;
          for (i64 t = 0; t < sp.axis; ++t) {
            const i64 off = base + t * sp.inner;
            dot += go[static_cast<std::size_t>(off)] * on->data[static_cast<std::size_t>(off)];
          }
          for (i64 t = 0; t < sp.axis; ++t) {
            const i64 off = base + t * sp.inner;
            ga[static_cast<std::size_t>(off)] +=
                on->data[static_cast<std::size_t>(off)] * (go[static_cast<std::size_t>(off)] - dot);
          }
        }
      }
    });
  }
  check_finite(out, "softmax");
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  VTR_CHECK_SHAPE(x.dim() >= 1, "layer_norm: rank 0 input");
  const i64 d = x.shape().back();
  VTR_CHECK_SHAPE(gain.dim() == 1 && gain.size() == d && bias.dim() == 1 && bias.size() == d,
                  "layer_norm: gain/bias must be [", d, "]");
  const i64 rows = x.size() / d;
  Tensor out = Tensor::zeros(x.shape());
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double* yr = out.data() + r * d;
    double mean = 0.0;
    for (i64 j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (i64 j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (i64 j = 0; j < d; ++j)
      yr[j] = (xr[j] - mean) * inv * gain.data()[j] + bias.data()[j];
  }
  if (tape_wants({&x, &gain, &bias})) {
    record(out, [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                 rows, d, eps](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double> xhat(static_cast<std::size_t>(d));
      for (i64 r = 0; r < rows; ++r) {
        const double* xr = xn->data.data() + r * d;
        const double* gor = go.data() + r * d;
        double mean = 0.0;
        for (i64 j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (i64 j = 0; j < d; ++j) {
          const double c = xr[j] - mean;
          var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (i64 j = 0; j < d; ++j) xhat[static_cast<std::size_t>(j)] = (xr[j] - mean) * inv;

        if (gn->requires_grad) {
          std::vector<double>& gg = ctx.grad_of(gn);
          for (i64 j = 0; j < d; ++j)
            gg[static_cast<std::size_t>(j)] += gor[j] * xhat[static_cast<std::size_t>(j)];
        }
        if (bn->requires_grad) {
          std::vector<double>& gb = ctx.grad_of(bn);
          for (i64 j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += gor[j];
        }
        if (xn->requires_grad) {
          std::vector<double>& gx = ctx.grad_of(xn);
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (i64 j = 0; j < d; ++j) {
            const double dxh = gor[j] * gn->data[static_cast<std::size_t>(j)];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[static_cast<std::size_t>(j)];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          double* gxr = gx.data() + r * d;
          for (i64 j = 0; j < d; ++j) {
            const double dxh = gor[j] * gn->data[static_cast<std::size_t>(j)];
            gxr[j] += inv * (dxh - mean_dxhat - xhat[static_cast<std::size_t>(j)] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  check_finite(out, "layer_norm");
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  VTR_CHECK_SHAPE(x.dim() == 2, "l2_normalize_rows: expected 2D, got ",
                  shape_str(x.shape()));
  const i64 rows = x.extent(0), d = x.extent(1);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> norms(static_cast<std::size_t>(rows));
  for (i64 r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double s = 0.0;
    for (i64 j = 0; j < d; ++j) s += xr[j] * xr[j];
    const double nrm = std::sqrt(s);
    VTR_CHECK_NUMERIC(nrm > 0.0, "l2_normalize_rows: zero-norm row ", r);
    norms[static_cast<std::size_t>(r)] = nrm;
    for (i64 j = 0; j < d; ++j) out.data()[r * d + j] = xr[j] / nrm;
  }
  if (tape_wants({&x})) {
    record(out, [xn = x.node(), on = out.node(), norms, rows, d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& gx = ctx.grad_of(xn);
      for (i64 r = 0; r < rows; ++r) {
        const double* yr = on->data.data() + r * d;
        const double* gor = go.data() + r * d;
        double dot = 0.0;
        for (i64 j = 0; j < d; ++j) dot += gor[j] * yr[j];
        const double inv = 1.0 / norms[static_cast<std::size_t>(r)];
        double* gxr = gx.data() + r * d;
        for (i64 j = 0; j < d; ++j) gxr[j] += (gor[j] - yr[j] * dot) * inv;
      }
    });
  }
  check_finite(out, "l2_normalize_rows");
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.vec()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node()](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
    });
  }
  check_finite(out, "sum_all");
  return out;
}

Tensor mean_rows(const Tensor& a) {
  VTR_CHECK_SHAPE(a.dim() == 2, "mean_rows: expected 2D, got ", shape_str(a.shape()));
  const i64 rows = a.extent(0), d = a.extent(1);
  Tensor out = Tensor::zeros({d});
  for (i64 r = 0; r < rows; ++r)
    for (i64 j = 0; j < d; ++j) out.data()[j] += a.data()[r * d + j];
  const double inv = 1.0 / static_cast<double>(rows);
  for (i64 j = 0; j < d; ++j) out.data()[j] *= inv;
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), rows, d, inv](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (i64 r = 0; r < rows; ++r)
        for (i64 j = 0; j < d; ++j)
          ga[static_cast<std::size_t>(r * d + j)] += go[static_cast<std::size_t>(j)] * inv;
    });
  }
  check_finite(out, "mean_rows");
  return out;
}

Tensor rowwise_sum(const Tensor& a) {
  VTR_CHECK_SHAPE(a.dim() == 2, "rowwise_sum: expected 2D, got ", shape_str(a.shape()));
  const i64 rows = a.extent(0), d = a.extent(1);
  Tensor out = Tensor::zeros({rows});
  for (i64 r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (i64 j = 0; j < d; ++j) acc += a.data()[r * d + j];
    out.data()[r] = acc;
  }
  if (tape_wants({&a})) {
    record(out, [an = a.node(), on = out.node(), rows, d](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& ga = ctx.grad_of(an);
      for (i64 r = 0; r < rows; ++r)
        for (i64 j = 0; j < d; ++j)
          ga[static_cast<std::size_t>(r * d + j)] += go[static_cast<std::size_t>(r)];
    });
  }
  check_finite(out, "rowwise_sum");
  return out;
}

Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                              const std::vector<double>& weights,
                              bool normalize_by_weight_sum, bool* all_weights_zero) {
  VTR_CHECK_SHAPE(logits.dim() == 2, "weighted_cross_entropy: logits must be 2D");
  const i64 n = logits.extent(0), v = logits.extent(1);
  VTR_CHECK_SHAPE(static_cast<i64>(targets.size()) == n &&
                      static_cast<i64>(weights.size()) == n,
                  "weighted_cross_entropy: row count mismatch");
  double wsum = 0.0;
  for (i64 i = 0; i < n; ++i) {
    VTR_CHECK(weights[static_cast<std::size_t>(i)] >= 0.0, "negative loss weight");
    VTR_CHECK_SHAPE(targets[static_cast<std::size_t>(i)] >= 0 &&
                        targets[static_cast<std::size_t>(i)] < v,
                    "target id out of range");
    wsum += weights[static_cast<std::size_t>(i)];
  }
  if (all_weights_zero != nullptr) *all_weights_zero = false;
  const double denom = normalize_by_weight_sum ? wsum : static_cast<double>(n);
  if (normalize_by_weight_sum && wsum == 0.0) {
    if (all_weights_zero != nullptr) *all_weights_zero = true;
    return Tensor::scalar(0.0);
  }

  double loss = 0.0;
  for (i64 i = 0; i < n; ++i) {
    const double* row = logits.data() + i * v;
    double mx = row[0];
    for (i64 j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (i64 j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    loss += weights[static_cast<std::size_t>(i)] * (lse - row[targets[static_cast<std::size_t>(i)]]);
  }
  loss /= denom;
  Tensor out = Tensor::scalar(loss);
  if (tape_wants({&logits})) {
    record(out, [ln = logits.node(), on = out.node(), targets, weights, denom, n, v](BackwardCtx& ctx) {
      const std::vector<double>& go = ctx.grad_of(on);
      std::vector<double>& gl = ctx.grad_of(ln);
      for (i64 i = 0; i < n; ++i) {
        const double wi = weights[static_cast<std::size_t>(i)] / denom * go[0];
        if (wi == 0.0) continue;
        const double* row = ln->data.data() + i * v;
        double mx = row[0];
        for (i64 j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (i64 j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
        double* gr = gl.data() + i * v;
        for (i64 j = 0; j < v; ++j) gr[j] += wi * (std::exp(row[j] - mx) / sum);
        gr[targets[static_cast<std::size_t>(i)]] -= wi;
      }
    });
  }
  check_finite(out, "weighted_cross_entropy");
  return out;
}

Tensor causal_mask(std::int64_t n) {
  Tensor m = Tensor::zeros({n, n});
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j <= i; ++j) m.data()[i * n + j] = 1.0;
  return m;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& w, int heads, const Tensor* mask) {
  VTR_CHECK_SHAPE(q.dim() == 2 && k.dim() == 2 && v.dim() == 2,
                  "multi_head_attention: q/k/v must be 2D");
  const i64 nq = q.extent(0), d = q.extent(1);
  const i64 nk = k.extent(0);
  VTR_CHECK_SHAPE(k.extent(1) == d && v.extent(0) == nk && v.extent(1) == d,
                  "multi_head_attention: k/v shape mismatch");
  VTR_CHECK_SHAPE(d % heads == 0, "multi_head_attention: D=", d,
                  " not divisible by heads=", heads);
  const i64 hd = d / heads;

  Tensor mask_add;
  if (mask != nullptr) {
    VTR_CHECK_SHAPE(mask->dim() == 2 && mask->extent(0) == nq && mask->extent(1) == nk,
                    "multi_head_attention: mask must be [Nq,Nk]");
    mask_add = Tensor::zeros({nq, nk});
    for (i64 i = 0; i < nq; ++i) {
      bool any = false;
      for (i64 j = 0; j < nk; ++j) {
        const bool keep = mask->data()[i * nk + j] != 0.0;
        any = any || keep;
        mask_add.data()[i * nk + j] = keep ? 0.0 : -1e30;
      }
      VTR_CHECK(any, "multi_head_attention: fully-masked query row ", i);
    }
  }

  auto heads_first = [&](const Tensor& x, const Tensor& wp, const Tensor& bp, i64 s) {
    return permute(reshape(linear(x, wp, bp), {s, static_cast<i64>(heads), hd}), {1, 0, 2});
  };
  Tensor qh = heads_first(q, w.wq, w.bq, nq);   // [H,Nq,hd]
  Tensor kh = heads_first(k, w.wk, w.bk, nk);   // [H,Nk,hd]
  Tensor vh = heads_first(v, w.wv, w.bv, nk);   // [H,Nk,hd]

  Tensor scores = scale(matmul(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(hd)));
  if (mask != nullptr) scores = add_broadcast0(scores, mask_add);
  Tensor probs = softmax(scores, 2);
  Tensor ctx = matmul(probs, vh);                                   // [H,Nq,hd]
  Tensor merged = reshape(permute(ctx, {1, 0, 2}), {nq, d});        // [Nq,D]
  return linear(merged, w.wo, w.bo);
}

}  // namespace vtr::core
