#include "stgormer/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace stg::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const NdArray& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMap(a.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MutMap as_matrix(NdArray& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MutMap(a.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

/// Strides of `s` aligned to an output of rank `rank`, zero on broadcast axes.
std::vector<std::size_t> aligned_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> res(out.size(), 0);
  auto st = strides_of(s);
  const std::size_t shift = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) res[shift + i] = s[i] == 1 ? 0 : st[i];
  return res;
}

/// Calls f(out_index, a_index, b_index) over the broadcast output, in order.
template <class F>
void walk_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_numel(out);
  if (total == 0) return;
  const std::size_t r = out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = out[r - 1], la = sa[r - 1], lb = sb[r - 1];
  for (std::size_t o = 0; o < total; o += last) {
    std::size_t a = ia, b = ib;
    for (std::size_t k = 0; k < last; ++k, a += la, b += lb) f(o + k, a, b);
    // advance the outer counters
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

/// Sum a broadcast-shaped gradient back down to `target`.
NdArray reduce_to(const NdArray& g, const Shape& target) {
  if (g.shape() == target) return g;
  NdArray out(target, 0.0);
  auto st = aligned_strides(target, g.shape());
  std::vector<std::size_t> zero(g.rank(), 0);
  walk_broadcast(g.shape(), st, zero, [&](std::size_t o, std::size_t t, std::size_t) { out[t] += g[o]; });
  return out;
}

template <class F, class Ga, class Gb>
Var binary(const Var& a, const Var& b, const char* op, F f, Ga da, Gb db) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  NdArray out(out_shape);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  } else {
    auto sa = aligned_strides(a.shape(), out_shape);
    auto sb = aligned_strides(b.shape(), out_shape);
    walk_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = f(av[i], bv[j]); });
  }
  return make_result(std::move(out), {a, b}, op, [out_shape, da, db](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    const NdArray& g = n.grad;
    const auto& av = pa.value;
    const auto& bv = pb.value;
    if (av.shape() == bv.shape()) {
      if (pa.requires_grad) {
        auto& ga = pa.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(av[i], bv[i]);
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(av[i], bv[i]);
      }
      return;
    }
    auto sa = aligned_strides(av.shape(), out_shape);
    auto sb = aligned_strides(bv.shape(), out_shape);
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      walk_broadcast(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * da(av[i], bv[j]); });
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      walk_broadcast(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * db(av[i], bv[j]); });
    }
  });
}

template <class F, class D>
Var unary(const Var& x, const char* op, F f, D d) {
  NdArray out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, op, [d](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) gp[i] += n.grad[i] * d(p.value[i], n.value[i]);
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                [](double x, double) { return x; });
}

Var scale(const Var& a, double c) {
  return unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(const Var& x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var sin(const Var& x) {
  return unary(x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Var abs(const Var& x) {
  return unary(x, "abs", [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var floor(const Var& x) {
  NdArray out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::floor(x.value()[i]);
  return make_result(std::move(out), {x}, "floor", nullptr, /*differentiable=*/false);
}

Var sum(const Var& x) {
  const auto& v = x.value().values();
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result(NdArray::scalar(s), {x}, "sum", [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    const double g = n.grad[0];
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g;
  });
}

Var mean(const Var& x) {
  if (x.value().size() == 0) throw ShapeError("mean of empty array");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_leading(const Var& x) {
  if (x.value().rank() == 0) throw ShapeError("sum_leading on scalar");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.value().size() / d;
  NdArray out(Shape{d}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += x.value()[r * d + j];
  return make_result(std::move(out), {x}, "sum_leading", [rows, d](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += n.grad[j];
  });
}

Var matmul_last(const Var& x, const Var& w) {
  if (x.value().rank() == 0 || w.value().rank() != 2 || x.shape().back() != w.shape()[0])
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  const std::size_t in = w.shape()[0], out_dim = w.shape()[1];
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  NdArray out(out_shape);
  as_matrix(out, rows, out_dim).noalias() = as_matrix(x.value(), rows, in) * as_matrix(w.value(), in, out_dim);
  return make_result(std::move(out), {x, w}, "matmul", [rows, in, out_dim](Node& n) {
    Node& px = parent(n, 0);
    Node& pw = parent(n, 1);
    auto g = as_matrix(n.grad, rows, out_dim);
    if (px.requires_grad)
      as_matrix(px.grad_buffer(), rows, in).noalias() += g * as_matrix(pw.value, in, out_dim).transpose();
    if (pw.requires_grad)
      as_matrix(pw.grad_buffer(), in, out_dim).noalias() += as_matrix(px.value, rows, in).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (b.value().rank() != 1 || w.value().rank() != 2 || b.shape()[0] != w.shape()[1])
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " + shape_str(w.shape()));
  return add(matmul_last(x, w), b);
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.shape()[0] != b.shape()[0])
    throw ShapeError("bmm: " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t nb = transpose_b ? b.shape()[1] : b.shape()[2];
  const std::size_t kb = transpose_b ? b.shape()[2] : b.shape()[1];
  if (kb != k) throw ShapeError("bmm: inner extents differ: " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  NdArray out(Shape{batch, m, nb});
  for (std::size_t i = 0; i < batch; ++i) {
    auto am = as_matrix(a.value(), m, k, i * m * k);
    auto om = as_matrix(out, m, nb, i * m * nb);
    if (transpose_b)
      om.noalias() = am * as_matrix(b.value(), nb, k, i * nb * k).transpose();
    else
      om.noalias() = am * as_matrix(b.value(), k, nb, i * k * nb);
  }
  return make_result(std::move(out), {a, b}, "bmm", [batch, m, k, nb, transpose_b](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      auto g = as_matrix(n.grad, m, nb, i * m * nb);
      auto am = as_matrix(pa.value, m, k, i * m * k);
      if (transpose_b) {
        auto bm = as_matrix(pb.value, nb, k, i * nb * k);
        if (pa.requires_grad) as_matrix(pa.grad_buffer(), m, k, i * m * k).noalias() += g * bm;
        if (pb.requires_grad) as_matrix(pb.grad_buffer(), nb, k, i * nb * k).noalias() += g.transpose() * am;
      } else {
        auto bm = as_matrix(pb.value, k, nb, i * k * nb);
        if (pa.requires_grad) as_matrix(pa.grad_buffer(), m, k, i * m * k).noalias() += g * bm.transpose();
        if (pb.requires_grad) as_matrix(pb.grad_buffer(), k, nb, i * k * nb).noalias() += am.transpose() * g;
      }
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  NdArray y = stg::softmax(x.value(), axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.value().rank(); ++i) inner *= x.shape()[i];
  const std::size_t len = x.shape()[axis];
  return make_result(std::move(y), {x}, "softmax", [outer, inner, len](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    const auto& y = n.value;
    const auto& g = n.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gp[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.value().rank() == 0) throw ShapeError("layer_norm on scalar");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw ShapeError("layer_norm: affine parameters must have shape (" + std::to_string(d) + ")");
  const std::size_t rows = x.value().size() / d;
  NdArray out(x.shape());
  auto xhat = std::make_shared<NdArray>(x.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, "layer_norm", [xhat, rstd, rows, d](Node& n) {
    Node& px = parent(n, 0);
    Node& pg = parent(n, 1);
    Node& pb = parent(n, 2);
    const auto& g = n.grad;
    const auto& gam = pg.value;
    if (pg.requires_grad) {
      auto& gg = pg.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gam[j];
          s1 += dh;
          s2 += dh * (*xhat)[r * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[r * d + j] * gam[j];
          gx[r * d + j] += (*rstd)[r] * (dh - inv_d * s1 - (*xhat)[r * d + j] * inv_d * s2);
        }
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  NdArray out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, "reshape", [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += n.grad[i];
  });
}

namespace {

// out[permuted index] = in[index]; out axis i is input axis axes[i].
NdArray permute_values(const NdArray& in, const std::vector<std::size_t>& axes) {
  const std::size_t r = in.rank();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in.dim(axes[i]);
  auto in_st = strides_of(in.shape());
  std::vector<std::size_t> src_st(r);
  for (std::size_t i = 0; i < r; ++i) src_st[i] = in_st[axes[i]];
  NdArray out(out_shape);
  std::vector<std::size_t> zero(r, 0);
  walk_broadcast(out_shape, src_st, zero, [&](std::size_t o, std::size_t s, std::size_t) { out[o] = in[s]; });
  return out;
}

}  // namespace

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.value().rank();
  if (axes.size() != r) throw ShapeError("permute: axis count mismatch for " + shape_str(x.shape()));
  std::vector<std::size_t> inverse(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || inverse[axes[i]] != r) throw ShapeError("permute: invalid axis list");
    inverse[axes[i]] = i;
  }
  return make_result(permute_values(x.value(), axes), {x}, "permute", [inverse](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    NdArray back = permute_values(n.grad, inverse);
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += back[i];
  });
}

Var expand(const Var& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape) != shape)
    throw ShapeError("cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  NdArray out(shape);
  auto sx = aligned_strides(x.shape(), shape);
  std::vector<std::size_t> zero(shape.size(), 0);
  const auto& xv = x.value();
  walk_broadcast(shape, sx, zero, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xv[i]; });
  return make_result(std::move(out), {x}, "expand", [](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    p.accumulate(reduce_to(n.grad, p.value.shape()));
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat of scalars");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.empty()) throw ShapeError("concat of scalars");
    widths.push_back(s.back());
    total += s.back();
    s.pop_back();
    if (s != lead) throw ShapeError("concat: leading shapes differ");
  }
  const std::size_t rows = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  NdArray out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * total + col);
    col += widths[k];
  }
  return make_result(std::move(out), parts, "concat", [widths, rows, total](Node& n) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(n, k);
      if (p.requires_grad) {
        auto& gp = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += n.grad[r * total + col + j];
      }
      col += widths[k];
    }
  });
}

Var slice_last(const Var& x, std::size_t start, std::size_t length) {
  if (x.value().rank() == 0 || start + length > x.shape().back())
    throw ShapeError("slice out of range for " + shape_str(x.shape()));
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.value().size() / width;
  Shape out_shape = x.shape();
  out_shape.back() = length;
  NdArray out(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.value().data().data() + r * width + start, length, out.data().data() + r * length);
  return make_result(std::move(out), {x}, "slice", [rows, width, start, length](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < length; ++j) gp[r * width + start + j] += n.grad[r * length + j];
  });
}

Var gather(const Var& table, const std::vector<std::size_t>& rows, const Shape& out_prefix) {
  if (table.value().rank() == 0) throw ShapeError("gather from scalar");
  if (shape_numel(out_prefix) != rows.size()) throw ShapeError("gather: index count does not match output prefix");
  const std::size_t nrows = table.shape()[0];
  const std::size_t width = table.value().size() / nrows;
  for (std::size_t r : rows)
    if (r >= nrows) throw ShapeError("gather: row " + std::to_string(r) + " out of range");
  Shape out_shape = out_prefix;
  out_shape.insert(out_shape.end(), table.shape().begin() + 1, table.shape().end());
  NdArray out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(table.value().data().data() + rows[i] * width, width, out.data().data() + i * width);
  return make_result(std::move(out), {table}, "gather", [rows, width](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) gp[rows[i] * width + j] += n.grad[i * width + j];
  });
}

}  // namespace stg::ad
