#pragma once

#include <vector>

#include "stgormer/autograd.hpp"

// Differentiable primitives. Binary elementwise ops broadcast with
// right-aligned (numpy) semantics.
namespace stg::ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }

Var relu(const Var& x);
Var sin(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
/// Rounds down. Not differentiable: backward() through it raises.
Var floor(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
/// Sums over every axis except the last: [..., D] -> [D].
Var sum_leading(const Var& x);

/// y[..., j] = sum_i x[..., i] * w[i, j] + b[j]
Var linear(const Var& x, const Var& w, const Var& b);
Var matmul_last(const Var& x, const Var& w);
/// [B, M, K] x [B, K, N] -> [B, M, N]; with transpose_b the second operand is [B, N, K].
Var bmm(const Var& a, const Var& b, bool transpose_b = false);

Var softmax(const Var& x, std::size_t axis);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& axes);
Var expand(const Var& x, const Shape& shape);
Var concat_last(const std::vector<Var>& parts);
Var slice_last(const Var& x, std::size_t start, std::size_t length);
/// Row lookup: table [R, ...] indexed by `rows` -> out_prefix + table row shape.
Var gather(const Var& table, const std::vector<std::size_t>& rows, const Shape& out_prefix);

/// Broadcast result shape; throws ShapeError when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace stg::ad
