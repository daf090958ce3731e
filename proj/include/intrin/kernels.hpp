#pragma once
#include "intrin/tensor.hpp"
#include "intrin/threads.hpp"
#include <cstdint>
#include <vector>

// Raw tensor kernels. These implement forward math only; the tape (graph.hpp)
// records which of them ran. Binary ops broadcast with right-aligned
// dimension matching (a dim of 1 streams against any size).
namespace intrin::tk {

// ---- elementwise binary (broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor pow(const Tensor& a, const Tensor& b); // domain-checked
Tensor elem_max(const Tensor& a, const Tensor& b);

// Result shape of broadcasting a with b; throws on incompatibility.
std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                     const char* opname);
// Sum g down to `shape` (inverse of broadcast).
Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& shape);
Tensor broadcast_to(const Tensor& a, const std::vector<int64_t>& shape);

// ---- elementwise unary ----
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);       // domain-checked (a > 0)
Tensor sqrt(const Tensor& a);      // domain-checked (a >= 0)
Tensor sigmoid(const Tensor& a);   // numerically stable
Tensor softplus(const Tensor& a);  // numerically stable
Tensor max_const(const Tensor& a, double c);
Tensor leaky_relu(const Tensor& a, double slope);

// 0/1 masks (used as constant factors in backward rules; ties -> first arg)
Tensor mask_gt(const Tensor& a, double c);            // a > c
Tensor mask_ge_first(const Tensor& a, const Tensor& b); // a >= b, broadcast to out shape
Tensor mask_lt_complement(const Tensor& m);           // 1 - m

// ---- reductions ----
Tensor sum_all(const Tensor& a);   // -> [1]
Tensor sum_axes(const Tensor& a, const std::vector<int>& axes, bool keepdim);
Tensor vecnorm_lastdim(const Tensor& a, bool keepdim, double eps); // sqrt(sum x^2 + eps)

// ---- shape ----
Tensor reshape(const Tensor& a, const std::vector<int64_t>& shape); // -1 wildcard allowed
Tensor concat(const std::vector<const Tensor*>& parts, int axis);
Tensor slice(const Tensor& a, const std::vector<int64_t>& starts, const std::vector<int64_t>& sizes);
// place `g` into a zero tensor of shape `full` at `starts` (adjoint of slice)
Tensor unslice(const Tensor& g, const std::vector<int64_t>& full, const std::vector<int64_t>& starts);

// ---- scans along last axis ----
Tensor exclusive_cumsum(const Tensor& a);          // y_i = sum_{j<i} x_j
Tensor reverse_exclusive_cumsum(const Tensor& a);  // y_i = sum_{j>i} x_j

// ---- matmul: C[M,N] = opA(A) * opB(B), 2-D only ----
Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb);

// ---- conv2d: x[B,C,H,W], w[O,C,kh,kw], stride s, zero padding p ----
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor conv2d_dx(const Tensor& g, const Tensor& w, int stride, int pad, int64_t H, int64_t W);
Tensor conv2d_dw(const Tensor& x, const Tensor& g, int stride, int pad, int64_t kh, int64_t kw);

// ---- image resampling ----
// Affine sample of src[C,H,W]: out(y,x) = src(A*(x,y,1)) bilinear, out-of-range
// pixels read `fill[c]`. A = inverse map (output px -> source px), row-major 2x3
// acting on (x, y, 1).
Tensor affine_warp(const Tensor& src, const double A[6], const std::vector<double>& fill);
// Adjoint of the linear part (fill contributes no gradient to src).
Tensor affine_warp_adjoint(const Tensor& g, const double A[6], int64_t H, int64_t W);

Tensor bilinear_resize(const Tensor& src, int64_t out_h, int64_t out_w); // [C,H,W]
Tensor avg_downsample2(const Tensor& src);                               // [C,H,W] -> [C,H/2,W/2]

} // namespace intrin::tk
