#include "intrin/graph.hpp"
#include <cmath>
#include <stdexcept>

namespace intrin {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Pow: return "pow";
        case Op::ElemMax: return "elem_max";
        case Op::Neg: return "neg";
        case Op::Scale: return "scale";
        case Op::AddConst: return "add_const";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sqrt: return "sqrt";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softplus: return "softplus";
        case Op::MaxConst: return "max_const";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::SumAll: return "sum";
        case Op::SumAxes: return "sum_axes";
        case Op::VecNorm: return "vecnorm";
        case Op::Broadcast: return "broadcast";
        case Op::ReduceTo: return "reduce_to";
        case Op::Reshape: return "reshape";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Unslice: return "unslice";
        case Op::ExclusiveCumsum: return "exclusive_cumsum";
        case Op::ReverseExclusiveCumsum: return "reverse_exclusive_cumsum";
        case Op::Matmul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::Conv2dDx: return "conv2d_dx";
        case Op::Conv2dDw: return "conv2d_dw";
        case Op::AffineWarp: return "affine_warp";
        case Op::AffineWarpAdjoint: return "affine_warp_adjoint";
    }
    return "?";
}

const Tensor& Var::val() const { return tape->node(id).value; }
const std::vector<int64_t>& Var::shape() const { return val().shape; }

Var Tape::record(Op op, std::vector<int32_t> parents, Tensor value, std::vector<int64_t> i64s,
                 std::vector<double> f64s) {
    Node n;
    n.op = op;
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.i64s = std::move(i64s);
    n.f64s = std::move(f64s);
    n.requires_grad = false;
    for (int32_t p : n.parents)
        if (nodes_[p].requires_grad) { n.requires_grad = true; break; }
    nodes_.push_back(std::move(n));
    return Var{this, (int32_t)nodes_.size() - 1};
}

Var Tape::leaf(Param& p) {
    Var v = record(Op::Leaf, {}, p.value);
    nodes_[v.id].requires_grad = p.trainable;
    nodes_[v.id].param = &p;
    return v;
}

Var Tape::input(Tensor t, bool requires_grad) {
    Var v = record(Op::Leaf, {}, std::move(t));
    nodes_[v.id].requires_grad = requires_grad;
    return v;
}

Var Tape::constant(Tensor t) { return record(Op::Constant, {}, std::move(t)); }

// ---------------- builders ----------------

static Tape* same_tape(Var a, Var b, const char* op) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": invalid operand");
    if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
    return a.tape;
}

Var add(Var a, Var b) {
    Tape* t = same_tape(a, b, "add");
    return t->record(Op::Add, {a.id, b.id}, tk::add(a.val(), b.val()));
}
Var sub(Var a, Var b) {
    Tape* t = same_tape(a, b, "sub");
    return t->record(Op::Sub, {a.id, b.id}, tk::sub(a.val(), b.val()));
}
Var mul(Var a, Var b) {
    Tape* t = same_tape(a, b, "mul");
    return t->record(Op::Mul, {a.id, b.id}, tk::mul(a.val(), b.val()));
}
Var div(Var a, Var b) {
    Tape* t = same_tape(a, b, "div");
    return t->record(Op::Div, {a.id, b.id}, tk::div(a.val(), b.val()));
}
Var pow(Var a, Var b) {
    Tape* t = same_tape(a, b, "pow");
    return t->record(Op::Pow, {a.id, b.id}, tk::pow(a.val(), b.val()));
}
Var elem_max(Var a, Var b) {
    Tape* t = same_tape(a, b, "elem_max");
    return t->record(Op::ElemMax, {a.id, b.id}, tk::elem_max(a.val(), b.val()));
}

Var neg(Var a) { return a.tape->record(Op::Neg, {a.id}, tk::neg(a.val())); }
Var scale(Var a, double c) { return a.tape->record(Op::Scale, {a.id}, tk::scale(a.val(), c), {}, {c}); }
Var add_const(Var a, double c) { return a.tape->record(Op::AddConst, {a.id}, tk::add_const(a.val(), c), {}, {c}); }
Var sin(Var a) { return a.tape->record(Op::Sin, {a.id}, tk::sin(a.val())); }
Var cos(Var a) { return a.tape->record(Op::Cos, {a.id}, tk::cos(a.val())); }
Var exp(Var a) { return a.tape->record(Op::Exp, {a.id}, tk::exp(a.val())); }
Var log(Var a) { return a.tape->record(Op::Log, {a.id}, tk::log(a.val())); }
Var sqrt(Var a) { return a.tape->record(Op::Sqrt, {a.id}, tk::sqrt(a.val())); }
Var sigmoid(Var a) { return a.tape->record(Op::Sigmoid, {a.id}, tk::sigmoid(a.val())); }
Var softplus(Var a) { return a.tape->record(Op::Softplus, {a.id}, tk::softplus(a.val())); }
Var max_const(Var a, double c) { return a.tape->record(Op::MaxConst, {a.id}, tk::max_const(a.val(), c), {}, {c}); }
Var leaky_relu(Var a, double slope) {
    return a.tape->record(Op::LeakyRelu, {a.id}, tk::leaky_relu(a.val(), slope), {}, {slope});
}

Var sum(Var a) { return a.tape->record(Op::SumAll, {a.id}, tk::sum_all(a.val())); }

Var sum(Var a, const std::vector<int>& axes, bool keepdim) {
    std::vector<int64_t> aux;
    aux.push_back(keepdim ? 1 : 0);
    int nd = (int)a.shape().size();
    for (int ax : axes) aux.push_back(ax < 0 ? ax + nd : ax);
    return a.tape->record(Op::SumAxes, {a.id}, tk::sum_axes(a.val(), axes, keepdim), std::move(aux));
}

Var mean(Var a) { return scale(sum(a), 1.0 / (double)a.val().numel()); }

Var mean(Var a, const std::vector<int>& axes, bool keepdim) {
    int64_t n = 1;
    int nd = (int)a.shape().size();
    for (int ax : axes) n *= a.shape()[ax < 0 ? ax + nd : ax];
    return scale(sum(a, axes, keepdim), 1.0 / (double)n);
}

Var vecnorm(Var a, bool keepdim, double eps) {
    Var v = a.tape->record(Op::VecNorm, {a.id}, tk::vecnorm_lastdim(a.val(), true, eps), {}, {eps});
    if (!keepdim) {
        auto s = v.shape();
        s.pop_back();
        if (s.empty()) s.push_back(1);
        v = reshape(v, s);
    }
    return v;
}

Var broadcast(Var a, const std::vector<int64_t>& shape) {
    if (a.shape() == shape) return a;
    return a.tape->record(Op::Broadcast, {a.id}, tk::broadcast_to(a.val(), shape));
}
Var reduce_to(Var a, const std::vector<int64_t>& shape) {
    if (a.shape() == shape) return a;
    return a.tape->record(Op::ReduceTo, {a.id}, tk::reduce_to_shape(a.val(), shape));
}
Var reshape(Var a, const std::vector<int64_t>& shape) {
    if (a.shape() == shape) return a;
    return a.tape->record(Op::Reshape, {a.id}, tk::reshape(a.val(), shape));
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: empty list");
    Tape* t = parts[0].tape;
    std::vector<const Tensor*> vs;
    std::vector<int32_t> ids;
    for (Var p : parts) {
        same_tape(parts[0], p, "concat");
        vs.push_back(&p.val());
        ids.push_back(p.id);
    }
    int nd = (int)parts[0].shape().size();
    int ax = axis < 0 ? axis + nd : axis;
    return t->record(Op::Concat, std::move(ids), tk::concat(vs, ax), {(int64_t)ax});
}

Var slice(Var a, const std::vector<int64_t>& starts, const std::vector<int64_t>& sizes) {
    std::vector<int64_t> aux = starts;
    aux.insert(aux.end(), sizes.begin(), sizes.end());
    return a.tape->record(Op::Slice, {a.id}, tk::slice(a.val(), starts, sizes), std::move(aux));
}

Var unslice(Var a, const std::vector<int64_t>& full, const std::vector<int64_t>& starts) {
    std::vector<int64_t> aux = starts;
    return a.tape->record(Op::Unslice, {a.id}, tk::unslice(a.val(), full, starts), std::move(aux));
}

Var exclusive_cumsum(Var a) {
    return a.tape->record(Op::ExclusiveCumsum, {a.id}, tk::exclusive_cumsum(a.val()));
}
Var reverse_exclusive_cumsum(Var a) {
    return a.tape->record(Op::ReverseExclusiveCumsum, {a.id}, tk::reverse_exclusive_cumsum(a.val()));
}

Var matmul(Var a, Var b, bool ta, bool tb) {
    Tape* t = same_tape(a, b, "matmul");
    return t->record(Op::Matmul, {a.id, b.id}, tk::matmul(a.val(), b.val(), ta, tb),
                     {ta ? 1 : 0, tb ? 1 : 0});
}

Var conv2d(Var x, Var w, int stride, int pad) {
    Tape* t = same_tape(x, w, "conv2d");
    return t->record(Op::Conv2d, {x.id, w.id}, tk::conv2d(x.val(), w.val(), stride, pad),
                     {(int64_t)stride, (int64_t)pad});
}

static Var conv2d_dx_var(Var g, Var w, int stride, int pad, int64_t H, int64_t W) {
    Tape* t = same_tape(g, w, "conv2d_dx");
    return t->record(Op::Conv2dDx, {g.id, w.id}, tk::conv2d_dx(g.val(), w.val(), stride, pad, H, W),
                     {(int64_t)stride, (int64_t)pad, H, W});
}

static Var conv2d_dw_var(Var x, Var g, int stride, int pad, int64_t kh, int64_t kw) {
    Tape* t = same_tape(x, g, "conv2d_dw");
    return t->record(Op::Conv2dDw, {x.id, g.id}, tk::conv2d_dw(x.val(), g.val(), stride, pad, kh, kw),
                     {(int64_t)stride, (int64_t)pad, kh, kw});
}

Var affine_warp(Var src, const double A[6], const std::vector<double>& fill) {
    std::vector<double> f64s(A, A + 6);
    f64s.insert(f64s.end(), fill.begin(), fill.end());
    return src.tape->record(Op::AffineWarp, {src.id}, tk::affine_warp(src.val(), A, fill), {}, std::move(f64s));
}

static Var affine_warp_adjoint_var(Var g, const double A[6], int64_t H, int64_t W) {
    std::vector<double> f64s(A, A + 6);
    return g.tape->record(Op::AffineWarpAdjoint, {g.id}, tk::affine_warp_adjoint(g.val(), A, H, W), {H, W},
                          std::move(f64s));
}

// ---------------- backward rules ----------------
//
// One rule set serves both backward flavors through a context type:
//   EagerCtx  — V = Tensor, primitives call the raw kernels.
//   RecordCtx — V = Var, primitives append nodes so gradients stay
//               differentiable (surface normals, Eikonal term, R1 penalty).
// Branch masks (max/leaky/elem_max) are functions of recorded *values* and
// enter as constants; their derivative is 0 almost everywhere, which is the
// documented subgradient convention (ties activate the first argument).
//
// RecordCtx appends to the node vector while rules run, so contexts never hold
// references into it: metadata is copied up front and values are fetched by id.

namespace {

struct NodeMeta {
    Op op;
    std::vector<int32_t> parents;
    std::vector<int64_t> i64s;
    std::vector<double> f64s;
    std::vector<int64_t> vshape;
};

static NodeMeta meta_of(const Node& n) {
    return NodeMeta{n.op, n.parents, n.i64s, n.f64s, n.value.shape};
}

struct EagerCtx {
    using V = Tensor;
    Tape& T;
    NodeMeta n;
    std::vector<std::pair<int, Tensor>> contrib;

    const Tensor& parent(int k) const { return T.node(n.parents[k]).value; }
    Tensor pval(int k) const { return T.node(n.parents[k]).value; }
    std::vector<int64_t> pshape(int k) const { return T.node(n.parents[k]).value.shape; }
    Tensor result_val_;
    const Tensor& result() const { return result_val_; }
    V constant(Tensor t) const { return t; }
    void acc(int k, V v) { contrib.emplace_back(k, std::move(v)); }

    V add(const V& a, const V& b) const { return tk::add(a, b); }
    V sub(const V& a, const V& b) const { return tk::sub(a, b); }
    V mul(const V& a, const V& b) const { return tk::mul(a, b); }
    V div(const V& a, const V& b) const { return tk::div(a, b); }
    V pow(const V& a, const V& b) const { return tk::pow(a, b); }
    V neg(const V& a) const { return tk::neg(a); }
    V scale(const V& a, double c) const { return tk::scale(a, c); }
    V add_const(const V& a, double c) const { return tk::add_const(a, c); }
    V sin(const V& a) const { return tk::sin(a); }
    V cos(const V& a) const { return tk::cos(a); }
    V log_guarded(const V& a) const { return tk::log(tk::max_const(a, 1e-300)); }
    V sigmoid(const V& a) const { return tk::sigmoid(a); }
    V max_const(const V& a, double c) const { return tk::max_const(a, c); }
    V broadcast(const V& a, const std::vector<int64_t>& s) const { return tk::broadcast_to(a, s); }
    V reduce_to(const V& a, const std::vector<int64_t>& s) const {
        return a.shape == s ? a : tk::reduce_to_shape(a, s);
    }
    V reshape(const V& a, const std::vector<int64_t>& s) const { return tk::reshape(a, s); }
    V slice(const V& a, const std::vector<int64_t>& st, const std::vector<int64_t>& sz) const {
        return tk::slice(a, st, sz);
    }
    V unslice(const V& a, const std::vector<int64_t>& full, const std::vector<int64_t>& st) const {
        return tk::unslice(a, full, st);
    }
    V cumsum_rev_excl(const V& a) const { return tk::reverse_exclusive_cumsum(a); }
    V cumsum_excl(const V& a) const { return tk::exclusive_cumsum(a); }
    V matmul(const V& a, const V& b, bool ta, bool tb) const { return tk::matmul(a, b, ta, tb); }
    V conv2d(const V& x, const V& w, int s, int p) const { return tk::conv2d(x, w, s, p); }
    V conv2d_dx(const V& g, const V& w, int s, int p, int64_t H, int64_t W) const {
        return tk::conv2d_dx(g, w, s, p, H, W);
    }
    V conv2d_dw(const V& x, const V& g, int s, int p, int64_t kh, int64_t kw) const {
        return tk::conv2d_dw(x, g, s, p, kh, kw);
    }
    V warp(const V& src, const double* A) const { return tk::affine_warp(src, A, {0.0}); }
    V warp_adjoint(const V& g, const double* A, int64_t H, int64_t W) const {
        return tk::affine_warp_adjoint(g, A, H, W);
    }
};

struct RecordCtx {
    using V = Var;
    Tape& T;
    NodeMeta n;
    int32_t id;
    std::vector<std::pair<int, Var>> contrib;

    Var parent(int k) const { return Var{&T, n.parents[k]}; }
    Tensor pval(int k) const { return T.node(n.parents[k]).value; }
    std::vector<int64_t> pshape(int k) const { return T.node(n.parents[k]).value.shape; }
    Var result() const { return Var{&T, id}; }
    V constant(Tensor t) const { return T.constant(std::move(t)); }
    void acc(int k, V v) { contrib.emplace_back(k, v); }

    V add(V a, V b) const { return intrin::add(a, b); }
    V sub(V a, V b) const { return intrin::sub(a, b); }
    V mul(V a, V b) const { return intrin::mul(a, b); }
    V div(V a, V b) const { return intrin::div(a, b); }
    V pow(V a, V b) const { return intrin::pow(a, b); }
    V neg(V a) const { return intrin::neg(a); }
    V scale(V a, double c) const { return intrin::scale(a, c); }
    V add_const(V a, double c) const { return intrin::add_const(a, c); }
    V sin(V a) const { return intrin::sin(a); }
    V cos(V a) const { return intrin::cos(a); }
    V log_guarded(V a) const { return intrin::log(intrin::max_const(a, 1e-300)); }
    V sigmoid(V a) const { return intrin::sigmoid(a); }
    V max_const(V a, double c) const { return intrin::max_const(a, c); }
    V broadcast(V a, const std::vector<int64_t>& s) const { return intrin::broadcast(a, s); }
    V reduce_to(V a, const std::vector<int64_t>& s) const { return intrin::reduce_to(a, s); }
    V reshape(V a, const std::vector<int64_t>& s) const { return intrin::reshape(a, s); }
    V slice(V a, const std::vector<int64_t>& st, const std::vector<int64_t>& sz) const {
        return intrin::slice(a, st, sz);
    }
    V unslice(V a, const std::vector<int64_t>& full, const std::vector<int64_t>& st) const {
        return intrin::unslice(a, full, st);
    }
    V cumsum_rev_excl(V a) const { return intrin::reverse_exclusive_cumsum(a); }
    V cumsum_excl(V a) const { return intrin::exclusive_cumsum(a); }
    V matmul(V a, V b, bool ta, bool tb) const { return intrin::matmul(a, b, ta, tb); }
    V conv2d(V x, V w, int s, int p) const { return intrin::conv2d(x, w, s, p); }
    V conv2d_dx(V g, V w, int s, int p, int64_t H, int64_t W) const { return conv2d_dx_var(g, w, s, p, H, W); }
    V conv2d_dw(V x, V g, int s, int p, int64_t kh, int64_t kw) const { return conv2d_dw_var(x, g, s, p, kh, kw); }
    V warp(V src, const double* A) const { return intrin::affine_warp(src, A, {0.0}); }
    V warp_adjoint(V g, const double* A, int64_t H, int64_t W) const {
        return affine_warp_adjoint_var(g, A, H, W);
    }
};

template <class C>
void vjp_dispatch(C& ctx, const typename C::V& g) {
    const NodeMeta& n = ctx.n;
    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::Add:
            ctx.acc(0, ctx.reduce_to(g, ctx.pshape(0)));
            ctx.acc(1, ctx.reduce_to(g, ctx.pshape(1)));
            break;
        case Op::Sub:
            ctx.acc(0, ctx.reduce_to(g, ctx.pshape(0)));
            ctx.acc(1, ctx.reduce_to(ctx.neg(g), ctx.pshape(1)));
            break;
        case Op::Mul:
            ctx.acc(0, ctx.reduce_to(ctx.mul(g, ctx.parent(1)), ctx.pshape(0)));
            ctx.acc(1, ctx.reduce_to(ctx.mul(g, ctx.parent(0)), ctx.pshape(1)));
            break;
        case Op::Div:
            ctx.acc(0, ctx.reduce_to(ctx.div(g, ctx.parent(1)), ctx.pshape(0)));
            ctx.acc(1, ctx.reduce_to(ctx.neg(ctx.div(ctx.mul(g, ctx.result()), ctx.parent(1))), ctx.pshape(1)));
            break;
        case Op::Pow: {
            // d/da a^b = b a^(b-1); base floored so the a->0+ edge stays finite
            auto bm1 = ctx.add_const(ctx.parent(1), -1.0);
            auto da = ctx.mul(g, ctx.mul(ctx.parent(1), ctx.pow(ctx.max_const(ctx.parent(0), 1e-12), bm1)));
            ctx.acc(0, ctx.reduce_to(da, ctx.pshape(0)));
            auto db = ctx.mul(g, ctx.mul(ctx.result(), ctx.log_guarded(ctx.parent(0))));
            ctx.acc(1, ctx.reduce_to(db, ctx.pshape(1)));
            break;
        }
        case Op::ElemMax: {
            Tensor m = tk::mask_ge_first(ctx.pval(0), ctx.pval(1));
            Tensor mc = tk::mask_lt_complement(m);
            auto mv = ctx.constant(std::move(m));
            ctx.acc(0, ctx.reduce_to(ctx.mul(g, mv), ctx.pshape(0)));
            ctx.acc(1, ctx.reduce_to(ctx.mul(g, ctx.constant(std::move(mc))), ctx.pshape(1)));
            break;
        }
        case Op::Neg:
            ctx.acc(0, ctx.neg(g));
            break;
        case Op::Scale:
            ctx.acc(0, ctx.scale(g, n.f64s[0]));
            break;
        case Op::AddConst:
            ctx.acc(0, g);
            break;
        case Op::Sin:
            ctx.acc(0, ctx.mul(g, ctx.cos(ctx.parent(0))));
            break;
        case Op::Cos:
            ctx.acc(0, ctx.neg(ctx.mul(g, ctx.sin(ctx.parent(0)))));
            break;
        case Op::Exp:
            ctx.acc(0, ctx.mul(g, ctx.result()));
            break;
        case Op::Log:
            ctx.acc(0, ctx.div(g, ctx.parent(0)));
            break;
        case Op::Sqrt:
            ctx.acc(0, ctx.scale(ctx.div(g, ctx.result()), 0.5));
            break;
        case Op::Sigmoid: {
            auto y = ctx.result();
            ctx.acc(0, ctx.mul(g, ctx.mul(y, ctx.add_const(ctx.neg(y), 1.0))));
            break;
        }
        case Op::Softplus:
            ctx.acc(0, ctx.mul(g, ctx.sigmoid(ctx.parent(0))));
            break;
        case Op::MaxConst: {
            Tensor m = tk::mask_ge_first(ctx.pval(0), Tensor::full({1}, n.f64s[0]));
            ctx.acc(0, ctx.mul(g, ctx.constant(std::move(m))));
            break;
        }
        case Op::LeakyRelu: {
            Tensor a = ctx.pval(0);
            Tensor m(a.shape);
            for (int64_t i = 0; i < a.numel(); i++) m.data[i] = a.data[i] >= 0.0 ? 1.0 : n.f64s[0];
            ctx.acc(0, ctx.mul(g, ctx.constant(std::move(m))));
            break;
        }
        case Op::SumAll:
            ctx.acc(0, ctx.broadcast(g, ctx.pshape(0)));
            break;
        case Op::SumAxes: {
            bool keepdim = n.i64s[0] != 0;
            auto ps = ctx.pshape(0);
            std::vector<int64_t> kshape = ps;
            for (size_t i = 1; i < n.i64s.size(); i++) kshape[n.i64s[i]] = 1;
            auto gk = keepdim ? g : ctx.reshape(g, kshape);
            ctx.acc(0, ctx.broadcast(gk, ps));
            break;
        }
        case Op::VecNorm: {
            // y = sqrt(sum x^2 + eps)  =>  dx = (g / y) * x
            auto gy = ctx.div(g, ctx.result());
            ctx.acc(0, ctx.mul(ctx.broadcast(gy, ctx.pshape(0)), ctx.parent(0)));
            break;
        }
        case Op::Broadcast:
            ctx.acc(0, ctx.reduce_to(g, ctx.pshape(0)));
            break;
        case Op::ReduceTo:
            ctx.acc(0, ctx.broadcast(g, ctx.pshape(0)));
            break;
        case Op::Reshape:
            ctx.acc(0, ctx.reshape(g, ctx.pshape(0)));
            break;
        case Op::Concat: {
            int ax = (int)n.i64s[0];
            std::vector<int64_t> starts(n.vshape.size(), 0), sizes = n.vshape;
            int64_t off = 0;
            for (size_t k = 0; k < n.parents.size(); k++) {
                auto ps = ctx.pshape((int)k);
                starts[ax] = off;
                sizes[ax] = ps[ax];
                ctx.acc((int)k, ctx.slice(g, starts, sizes));
                off += ps[ax];
            }
            break;
        }
        case Op::Slice: {
            auto full = ctx.pshape(0);
            std::vector<int64_t> starts(n.i64s.begin(), n.i64s.begin() + full.size());
            ctx.acc(0, ctx.unslice(g, full, starts));
            break;
        }
        case Op::Unslice: {
            std::vector<int64_t> starts(n.i64s.begin(), n.i64s.end());
            ctx.acc(0, ctx.slice(g, starts, ctx.pshape(0)));
            break;
        }
        case Op::ExclusiveCumsum:
            ctx.acc(0, ctx.cumsum_rev_excl(g));
            break;
        case Op::ReverseExclusiveCumsum:
            ctx.acc(0, ctx.cumsum_excl(g));
            break;
        case Op::Matmul: {
            bool ta = n.i64s[0] != 0, tb = n.i64s[1] != 0;
            auto a = ctx.parent(0), b = ctx.parent(1);
            if (!ta) ctx.acc(0, ctx.matmul(g, b, false, !tb));
            else ctx.acc(0, ctx.matmul(b, g, tb, true));
            if (!tb) ctx.acc(1, ctx.matmul(a, g, !ta, false));
            else ctx.acc(1, ctx.matmul(g, a, true, ta));
            break;
        }
        case Op::Conv2d: {
            int s = (int)n.i64s[0], p = (int)n.i64s[1];
            auto xs = ctx.pshape(0);
            auto ws = ctx.pshape(1);
            ctx.acc(0, ctx.conv2d_dx(g, ctx.parent(1), s, p, xs[2], xs[3]));
            ctx.acc(1, ctx.conv2d_dw(ctx.parent(0), g, s, p, ws[2], ws[3]));
            break;
        }
        case Op::Conv2dDx: {
            // value = Dx(go, w), linear in both; adjoint identities pair the
            // conv/Dx/Dw triple: <t,Dx(go,w)> = <C(t,w),go> = <Dw(t,go),w>
            int s = (int)n.i64s[0], p = (int)n.i64s[1];
            auto ws = ctx.pshape(1);
            ctx.acc(0, ctx.conv2d(g, ctx.parent(1), s, p));
            ctx.acc(1, ctx.conv2d_dw(g, ctx.parent(0), s, p, ws[2], ws[3]));
            break;
        }
        case Op::Conv2dDw: {
            int s = (int)n.i64s[0], p = (int)n.i64s[1];
            auto xs = ctx.pshape(0);
            ctx.acc(0, ctx.conv2d_dx(ctx.parent(1), g, s, p, xs[2], xs[3]));
            ctx.acc(1, ctx.conv2d(ctx.parent(0), g, s, p));
            break;
        }
        case Op::AffineWarp: {
            auto ss = ctx.pshape(0);
            ctx.acc(0, ctx.warp_adjoint(g, n.f64s.data(), ss[1], ss[2]));
            break;
        }
        case Op::AffineWarpAdjoint:
            ctx.acc(0, ctx.warp(g, n.f64s.data()));
            break;
    }
}

} // namespace

// ---------------- backward drivers ----------------

std::vector<Tensor> Tape::backward(std::span<const std::pair<Var, Tensor>> seeds,
                                   std::span<const Var> wanted) {
    if (seeds.empty()) throw std::invalid_argument("backward: no seeds");
    int32_t top = -1;
    for (auto& [v, t] : seeds) {
        if (v.tape != this) throw std::invalid_argument("backward: seed from another tape");
        if (t.shape != nodes_[v.id].value.shape)
            throw std::invalid_argument("backward: seed shape " + t.shape_str() + " != value shape " +
                                        nodes_[v.id].value.shape_str());
        top = std::max(top, v.id);
    }
    std::vector<std::optional<Tensor>> acc(top + 1);
    for (auto& [v, t] : seeds) {
        if (acc[v.id]) acc[v.id] = tk::add(*acc[v.id], t);
        else acc[v.id] = t;
    }
    std::vector<bool> keep(top + 1, false);
    for (Var w : wanted) {
        if (w.tape != this) throw std::invalid_argument("backward: wanted var from another tape");
        if (w.id <= top) keep[w.id] = true;
    }

    for (int32_t id = top; id >= 0; id--) {
        if (!acc[id]) continue;
        Node& n = nodes_[id];
        if (n.op == Op::Leaf) {
            if (n.param && n.param->trainable) {
                Tensor& pg = n.param->grad;
                const Tensor& g = *acc[id];
                for (int64_t i = 0; i < pg.numel(); i++) pg.data[i] += g.data[i];
            }
            if (!keep[id]) acc[id].reset();
            continue;
        }
        if (!n.requires_grad) {
            if (!keep[id]) acc[id].reset();
            continue;
        }
        EagerCtx ctx{*this, meta_of(n), {}, n.value};
        vjp_dispatch(ctx, *acc[id]);
        for (auto& [k, t] : ctx.contrib) {
            int32_t pid = n.parents[k];
            const Node& pn = nodes_[pid];
            bool into_param_leaf = pn.op == Op::Leaf && pn.param && pn.param->trainable;
            if (!pn.requires_grad && !keep[pid] && !into_param_leaf) continue;
            if (acc[pid]) acc[pid] = tk::add(*acc[pid], t);
            else acc[pid] = std::move(t);
        }
        if (!keep[id]) acc[id].reset(); // free as we go
    }

    std::vector<Tensor> out;
    out.reserve(wanted.size());
    for (Var w : wanted) {
        if (w.id <= top && acc[w.id]) out.push_back(*acc[w.id]);
        else out.push_back(Tensor::zeros(nodes_[w.id].value.shape));
    }
    return out;
}

std::vector<Tensor> Tape::backward_scalar(Var loss, std::span<const Var> wanted) {
    if (loss.val().numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.val().shape_str());
    std::pair<Var, Tensor> seed{loss, Tensor::full(loss.val().shape, 1.0)};
    return backward(std::span<const std::pair<Var, Tensor>>(&seed, 1), wanted);
}

std::vector<std::optional<Tensor>> Tape::backward_map(Var loss) {
    if (loss.val().numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.val().shape_str());
    std::vector<std::optional<Tensor>> acc(nodes_.size());
    acc[loss.id] = Tensor::full(loss.val().shape, 1.0);
    for (int32_t id = loss.id; id >= 0; id--) {
        if (!acc[id]) continue;
        Node& n = nodes_[id];
        if (n.op == Op::Leaf || n.op == Op::Constant) continue;
        EagerCtx ctx{*this, meta_of(n), {}, n.value};
        vjp_dispatch(ctx, *acc[id]);
        for (auto& [k, t] : ctx.contrib) {
            int32_t pid = n.parents[k];
            if (acc[pid]) acc[pid] = tk::add(*acc[pid], t);
            else acc[pid] = std::move(t);
        }
    }
    return acc;
}

std::vector<Var> Tape::grad(Var out, std::span<const Var> wrt, const Tensor* seed) {
    if (out.tape != this) throw std::invalid_argument("grad: output from another tape");
    if (!seed && out.val().numel() != 1)
        throw std::invalid_argument("grad: non-scalar output requires an explicit seed");
    if (seed && seed->shape != out.val().shape)
        throw std::invalid_argument("grad: seed shape " + seed->shape_str() + " != output shape " +
                                    out.val().shape_str());

    // active = ancestors(out) that can also reach some wrt going leafward
    std::vector<bool> anc(out.id + 1, false), reach(out.id + 1, false);
    {
        std::vector<int32_t> stack{out.id};
        anc[out.id] = true;
        while (!stack.empty()) {
            int32_t id = stack.back();
            stack.pop_back();
            for (int32_t p : nodes_[id].parents)
                if (!anc[p]) { anc[p] = true; stack.push_back(p); }
        }
        for (Var w : wrt) {
            if (w.tape != this) throw std::invalid_argument("grad: wrt from another tape");
            if (w.id <= out.id) reach[w.id] = true;
        }
        for (int32_t id = 0; id <= out.id; id++) {
            if (reach[id]) continue;
            for (int32_t p : nodes_[id].parents)
                if (reach[p]) { reach[id] = true; break; }
        }
    }

    std::vector<Var> acc(out.id + 1, Var{});
    acc[out.id] = seed ? constant(*seed) : constant(Tensor::full({1}, 1.0));

    for (int32_t id = out.id; id >= 0; id--) {
        if (!acc[id].valid() || !anc[id] || !reach[id]) continue;
        const Node& nref = nodes_[id];
        if (nref.op == Op::Leaf || nref.op == Op::Constant) continue;
        RecordCtx ctx{*this, meta_of(nref), id, {}};
        vjp_dispatch(ctx, acc[id]);
        for (auto& [k, v] : ctx.contrib) {
            int32_t pid = ctx.n.parents[k];
            if (!reach[pid]) continue;
            if (acc[pid].valid()) acc[pid] = add(acc[pid], v);
            else acc[pid] = v;
        }
    }

    std::vector<Var> res;
    res.reserve(wrt.size());
    for (Var w : wrt) {
        if (w.id <= out.id && acc[w.id].valid()) res.push_back(acc[w.id]);
        else res.push_back(constant(Tensor::zeros(nodes_[w.id].value.shape)));
    }
    return res;
}

} // namespace intrin
