#pragma once
#include "intrin/kernels.hpp"
#include "intrin/tensor.hpp"
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace intrin {

// A learnable tensor living outside any tape. Tapes reference it via leaf();
// backward passes accumulate into `grad`, so gradients from several tapes
// (e.g. per-chunk render graphs) combine naturally.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }
    void zero_grad() { grad = Tensor::zeros(value.shape); }
};

enum class Op : uint8_t {
    Leaf, Constant,
    Add, Sub, Mul, Div, Pow, ElemMax,
    Neg, Scale, AddConst, Sin, Cos, Exp, Log, Sqrt, Sigmoid, Softplus,
    MaxConst, LeakyRelu,
    SumAll, SumAxes, VecNorm,
    Broadcast, ReduceTo, Reshape, Concat, Slice, Unslice,
    ExclusiveCumsum, ReverseExclusiveCumsum,
    Matmul, Conv2d, Conv2dDx, Conv2dDw,
    AffineWarp, AffineWarpAdjoint,
};

const char* op_name(Op op);

class Tape;

// Lightweight handle to a tape node. val() and shape() return references
// into the tape's node storage: recording any further node may reallocate
// and invalidate them, so copy what must outlive the next op call.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    const std::vector<int64_t>& shape() const;
    double item() const { return val().item(); }
};

struct Node {
    Op op = Op::Constant;
    bool requires_grad = false;
    Tensor value;
    std::vector<int32_t> parents;
    std::vector<int64_t> i64s; // op-specific: axes, shapes, conv/stride params...
    std::vector<double> f64s;  // op-specific scalars: constants, warp matrix, fill
    Param* param = nullptr;    // Leaf only
};

// Reverse-mode tape. Nodes are appended in topological order (parents always
// have smaller ids). Two backward flavors:
//   backward()  — eager: gradients computed as plain tensors, accumulated into
//                 Param::grad for parameter leaves; optionally returned for
//                 chosen nodes. Used for the outermost loss pass.
//   grad()      — recording: the gradient computation itself is emitted onto
//                 the tape as new nodes, so the result is differentiable again
//                 (surface normals, Eikonal terms, the R1 penalty).
class Tape {
public:
    Var leaf(Param& p);
    Var input(Tensor t, bool requires_grad);
    Var constant(Tensor t);

    const Node& node(int32_t id) const { return nodes_[id]; }
    Node& node(int32_t id) { return nodes_[id]; }
    size_t size() const { return nodes_.size(); }

    Var record(Op op, std::vector<int32_t> parents, Tensor value,
               std::vector<int64_t> i64s = {}, std::vector<double> f64s = {});

    // Eager backward from seeds (var, cotangent). Accumulates into Param::grad
    // for every reachable parameter leaf and returns the gradients of `wanted`
    // (zeros when disconnected, per the dead-path contract).
    std::vector<Tensor> backward(std::span<const std::pair<Var, Tensor>> seeds,
                                 std::span<const Var> wanted);
    // Scalar-loss convenience: seed 1.0.
    std::vector<Tensor> backward_scalar(Var loss, std::span<const Var> wanted = {});
    // Full gradient map keyed by node id (testing/diagnostics; keeps all grads).
    std::vector<std::optional<Tensor>> backward_map(Var loss);

    // Recorded (differentiable) gradients of `out` w.r.t. each of `wrt`.
    // `out` need not be scalar if `seed` provides the cotangent. Unreachable
    // wrt entries come back as zero constants.
    std::vector<Var> grad(Var out, std::span<const Var> wrt, const Tensor* seed = nullptr);

private:
    std::vector<Node> nodes_;
};

// ---- op builders ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var pow(Var a, Var b);
Var elem_max(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var max_const(Var a, double c);
Var leaky_relu(Var a, double slope);

Var sum(Var a);                                            // -> [1]
Var sum(Var a, const std::vector<int>& axes, bool keepdim);
Var mean(Var a);
Var mean(Var a, const std::vector<int>& axes, bool keepdim);
Var vecnorm(Var a, bool keepdim = true, double eps = 1e-12); // last axis

Var broadcast(Var a, const std::vector<int64_t>& shape);
Var reduce_to(Var a, const std::vector<int64_t>& shape);
Var reshape(Var a, const std::vector<int64_t>& shape);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, const std::vector<int64_t>& starts, const std::vector<int64_t>& sizes);
Var unslice(Var a, const std::vector<int64_t>& full, const std::vector<int64_t>& starts);
Var exclusive_cumsum(Var a);
Var reverse_exclusive_cumsum(Var a);

Var matmul(Var a, Var b, bool ta = false, bool tb = false);
Var conv2d(Var x, Var w, int stride, int pad);
Var affine_warp(Var src, const double A[6], const std::vector<double>& fill);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

} // namespace intrin
