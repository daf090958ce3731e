#include "intrin/kernels.hpp"
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace intrin {

static ThreadPool* g_pool = nullptr;
ThreadPool& global_pool() {
    if (!g_pool) g_pool = new ThreadPool(1);
    return *g_pool;
}
void set_global_threads(int n) { global_pool().resize(n); }

} // namespace intrin

namespace intrin::tk {

std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                     const char* opname) {
    int na = (int)a.size(), nb = (int)b.size(), n = std::max(na, nb);
    std::vector<int64_t> out(n);
    for (int i = 0; i < n; i++) {
        int64_t da = i < n - na ? 1 : a[i - (n - na)];
        int64_t db = i < n - nb ? 1 : b[i - (n - nb)];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument(std::string(opname) + ": incompatible shapes " + shape_to_string(a) +
                                        " and " + shape_to_string(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast dims, right-aligned against `out`.
static std::vector<int64_t> bcast_strides(const std::vector<int64_t>& s, const std::vector<int64_t>& out) {
    int ns = (int)s.size(), n = (int)out.size();
    if (ns > n)
        throw std::invalid_argument("broadcast strides: rank of " + shape_to_string(s) + " exceeds target " +
                                    shape_to_string(out));
    std::vector<int64_t> st(n, 0);
    int64_t acc = 1;
    for (int i = ns - 1; i >= 0; i--) { st[i + (n - ns)] = (s[i] == 1) ? 0 : acc; acc *= s[i]; }
    for (int i = 0; i < n; i++)
        if (i < n - ns) st[i] = 0;
    // zero out strides where out dim broadcast from 1
    for (int i = 0; i < n; i++) {
        int si = i - (n - ns);
        if (si >= 0 && s[si] == 1 && out[i] != 1) st[i] = 0;
    }
    return st;
}

template <class F>
static Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f) {
    if (a.shape == b.shape) {
        Tensor out(a.shape);
        const double* __restrict pa = a.ptr();
        const double* __restrict pb = b.ptr();
        double* __restrict po = out.ptr();
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; i++) po[i] = f(pa[i], pb[i]);
        return out;
    }
    // scalar fast paths only when the result legitimately takes the other
    // operand's shape (rank promotion must fall through to the general path)
    if (b.numel() == 1 && b.ndim() <= a.ndim()) {
        Tensor out(a.shape);
        double bv = b.data[0];
        const double* __restrict pa = a.ptr();
        double* __restrict po = out.ptr();
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; i++) po[i] = f(pa[i], bv);
        return out;
    }
    if (a.numel() == 1 && a.ndim() <= b.ndim()) {
        Tensor out(b.shape);
        double av = a.data[0];
        const double* __restrict pb = b.ptr();
        double* __restrict po = out.ptr();
        int64_t n = b.numel();
        for (int64_t i = 0; i < n; i++) po[i] = f(av, pb[i]);
        return out;
    }
    auto os = broadcast_shape(a.shape, b.shape, name);
    Tensor out(os);
    auto sa = bcast_strides(a.shape, os), sb = bcast_strides(b.shape, os);
    int nd = (int)os.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t n = out.numel(), oa = 0, ob = 0;
    for (int64_t i = 0; i < n; i++) {
        out.data[i] = f(a.data[oa], b.data[ob]);
        for (int d = nd - 1; d >= 0; d--) {
            idx[d]++; oa += sa[d]; ob += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0; oa -= sa[d] * os[d]; ob -= sb[d] * os[d];
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, "div", [](double x, double y) { return x / y; }); }
Tensor elem_max(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "elem_max", [](double x, double y) { return x >= y ? x : y; });
}

Tensor pow(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "pow", [](double x, double y) {
        if (x < 0.0 && y != std::floor(y))
            throw std::domain_error("pow: negative base " + std::to_string(x) + " with fractional exponent " +
                                    std::to_string(y));
        if (x == 0.0 && y < 0.0) throw std::domain_error("pow: zero base with negative exponent");
        return std::pow(x, y);
    });
}

Tensor reduce_to_shape(const Tensor& g, const std::vector<int64_t>& shape) {
    if (g.shape == shape) return g;
    Tensor out(shape, 0.0);
    auto st = bcast_strides(shape, g.shape);
    int nd = (int)g.shape.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t n = g.numel(), ot = 0;
    for (int64_t i = 0; i < n; i++) {
        out.data[ot] += g.data[i];
        for (int d = nd - 1; d >= 0; d--) {
            idx[d]++; ot += st[d];
            if (idx[d] < g.shape[d]) break;
            idx[d] = 0; ot -= st[d] * g.shape[d];
        }
    }
    return out;
}

Tensor broadcast_to(const Tensor& a, const std::vector<int64_t>& shape) {
    // validate
    broadcast_shape(a.shape, shape, "broadcast");
    auto os = broadcast_shape(a.shape, shape, "broadcast");
    if (os != shape)
        throw std::invalid_argument("broadcast: cannot broadcast " + shape_to_string(a.shape) + " to " +
                                    shape_to_string(shape));
    Tensor out(shape);
    auto sa = bcast_strides(a.shape, shape);
    int nd = (int)shape.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t n = out.numel(), oa = 0;
    for (int64_t i = 0; i < n; i++) {
        out.data[i] = a.data[oa];
        for (int d = nd - 1; d >= 0; d--) {
            idx[d]++; oa += sa[d];
            if (idx[d] < shape[d]) break;
            idx[d] = 0; oa -= sa[d] * shape[d];
        }
    }
    return out;
}

template <class F>
static Tensor unary_op(const Tensor& a, F f) {
    Tensor out(a.shape);
    const double* __restrict pa = a.ptr();
    double* __restrict po = out.ptr();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; i++) po[i] = f(pa[i]);
    return out;
}

Tensor neg(const Tensor& a) { return unary_op(a, [](double x) { return -x; }); }
Tensor scale(const Tensor& a, double c) { return unary_op(a, [c](double x) { return x * c; }); }
Tensor add_const(const Tensor& a, double c) { return unary_op(a, [c](double x) { return x + c; }); }
Tensor sin(const Tensor& a) { return unary_op(a, [](double x) { return std::sin(x); }); }
Tensor cos(const Tensor& a) { return unary_op(a, [](double x) { return std::cos(x); }); }
Tensor exp(const Tensor& a) { return unary_op(a, [](double x) { return std::exp(x); }); }

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) {
        if (x <= 0.0) throw std::domain_error("log: non-positive input " + std::to_string(x));
        return std::log(x);
    });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) {
        if (x < 0.0) throw std::domain_error("sqrt: negative input " + std::to_string(x));
        return std::sqrt(x);
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    });
}

Tensor softplus(const Tensor& a) {
    return unary_op(a, [](double x) {
        if (x > 30.0) return x;
        if (x < -30.0) return std::exp(x);
        return std::log1p(std::exp(x));
    });
}

Tensor max_const(const Tensor& a, double c) { return unary_op(a, [c](double x) { return x > c ? x : c; }); }
Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
}

Tensor mask_gt(const Tensor& a, double c) { return unary_op(a, [c](double x) { return x > c ? 1.0 : 0.0; }); }
Tensor mask_ge_first(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mask_ge", [](double x, double y) { return x >= y ? 1.0 : 0.0; });
}
Tensor mask_lt_complement(const Tensor& m) { return unary_op(m, [](double x) { return 1.0 - x; }); }

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return Tensor::scalar(s);
}

Tensor sum_axes(const Tensor& a, const std::vector<int>& axes, bool keepdim) {
    int nd = a.ndim();
    std::vector<bool> red(nd, false);
    for (int ax : axes) {
        int i = ax < 0 ? ax + nd : ax;
        if (i < 0 || i >= nd) throw std::invalid_argument("sum: axis out of range");
        red[i] = true;
    }
    std::vector<int64_t> oshape;
    for (int i = 0; i < nd; i++) {
        if (red[i]) { if (keepdim) oshape.push_back(1); }
        else oshape.push_back(a.shape[i]);
    }
    if (oshape.empty()) oshape.push_back(1);
    // target (keepdim layout) for stride mapping
    std::vector<int64_t> kshape(nd);
    for (int i = 0; i < nd; i++) kshape[i] = red[i] ? 1 : a.shape[i];
    Tensor out(oshape, 0.0);
    auto st = bcast_strides(kshape, a.shape);
    std::vector<int64_t> idx(nd, 0);
    int64_t n = a.numel(), ot = 0;
    for (int64_t i = 0; i < n; i++) {
        out.data[ot] += a.data[i];
        for (int d = nd - 1; d >= 0; d--) {
            idx[d]++; ot += st[d];
            if (idx[d] < a.shape[d]) break;
            idx[d] = 0; ot -= st[d] * a.shape[d];
        }
    }
    return out;
}

Tensor vecnorm_lastdim(const Tensor& a, bool keepdim, double eps) {
    int nd = a.ndim();
    int64_t last = a.shape[nd - 1], rows = a.numel() / last;
    std::vector<int64_t> os(a.shape.begin(), a.shape.end() - 1);
    if (keepdim) os.push_back(1);
    if (os.empty()) os.push_back(1);
    Tensor out(os);
    for (int64_t r = 0; r < rows; r++) {
        const double* p = a.ptr() + r * last;
        double s = eps;
        for (int64_t i = 0; i < last; i++) s += p[i] * p[i];
        out.data[r] = std::sqrt(s);
    }
    return out;
}

Tensor reshape(const Tensor& a, const std::vector<int64_t>& shape) {
    std::vector<int64_t> s = shape;
    int64_t known = 1, wild = -1;
    for (size_t i = 0; i < s.size(); i++) {
        if (s[i] == -1) {
            if (wild >= 0) throw std::invalid_argument("reshape: multiple -1 dims");
            wild = (int64_t)i;
        } else known *= s[i];
    }
    if (wild >= 0) s[wild] = a.numel() / known;
    if (shape_numel(s) != a.numel())
        throw std::invalid_argument("reshape: cannot reshape " + a.shape_str() + " to " + shape_to_string(shape));
    Tensor out = a;
    out.shape = s;
    return out;
}

Tensor concat(const std::vector<const Tensor*>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input list");
    int nd = parts[0]->ndim();
    if (axis < 0) axis += nd;
    std::vector<int64_t> os = parts[0]->shape;
    int64_t total = 0;
    for (auto* p : parts) {
        if (p->ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
        for (int d = 0; d < nd; d++)
            if (d != axis && p->shape[d] != os[d])
                throw std::invalid_argument("concat: shape mismatch " + p->shape_str() + " vs " +
                                            shape_to_string(os));
        total += p->shape[axis];
    }
    os[axis] = total;
    Tensor out(os);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; d++) outer *= os[d];
    for (int d = axis + 1; d < nd; d++) inner *= os[d];
    int64_t out_row = os[axis] * inner, off = 0;
    for (auto* p : parts) {
        int64_t prow = p->shape[axis] * inner;
        for (int64_t o = 0; o < outer; o++)
            std::memcpy(out.ptr() + o * out_row + off, p->ptr() + o * prow, sizeof(double) * prow);
        off += prow;
    }
    return out;
}

Tensor slice(const Tensor& a, const std::vector<int64_t>& starts, const std::vector<int64_t>& sizes) {
    int nd = a.ndim();
    if ((int)starts.size() != nd || (int)sizes.size() != nd)
        throw std::invalid_argument("slice: starts/sizes rank mismatch");
    for (int d = 0; d < nd; d++)
        if (starts[d] < 0 || sizes[d] < 0 || starts[d] + sizes[d] > a.shape[d])
            throw std::invalid_argument("slice: out of range on axis " + std::to_string(d));
    Tensor out(sizes);
    std::vector<int64_t> idx(nd, 0);
    int64_t n = out.numel();
    std::vector<int64_t> astr(nd);
    int64_t acc = 1;
    for (int d = nd - 1; d >= 0; d--) { astr[d] = acc; acc *= a.shape[d]; }
    for (int64_t i = 0; i < n; i++) {
        int64_t off = 0;
        for (int d = 0; d < nd; d++) off += (starts[d] + idx[d]) * astr[d];
        out.data[i] = a.data[off];
        for (int d = nd - 1; d >= 0; d--) {
            if (++idx[d] < sizes[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor unslice(const Tensor& g, const std::vector<int64_t>& full, const std::vector<int64_t>& starts) {
    Tensor out(full, 0.0);
    int nd = (int)full.size();
    std::vector<int64_t> idx(nd, 0), astr(nd);
    int64_t acc = 1;
    for (int d = nd - 1; d >= 0; d--) { astr[d] = acc; acc *= full[d]; }
    int64_t n = g.numel();
    for (int64_t i = 0; i < n; i++) {
        int64_t off = 0;
        for (int d = 0; d < nd; d++) off += (starts[d] + idx[d]) * astr[d];
        out.data[off] = g.data[i];
        for (int d = nd - 1; d >= 0; d--) {
            if (++idx[d] < g.shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor exclusive_cumsum(const Tensor& a) {
    int64_t last = a.shape.back(), rows = a.numel() / last;
    Tensor out(a.shape);
    for (int64_t r = 0; r < rows; r++) {
        const double* p = a.ptr() + r * last;
        double* q = out.ptr() + r * last;
        double s = 0.0;
        for (int64_t i = 0; i < last; i++) { q[i] = s; s += p[i]; }
    }
    return out;
}

Tensor reverse_exclusive_cumsum(const Tensor& a) {
    int64_t last = a.shape.back(), rows = a.numel() / last;
    Tensor out(a.shape);
    for (int64_t r = 0; r < rows; r++) {
        const double* p = a.ptr() + r * last;
        double* q = out.ptr() + r * last;
        double s = 0.0;
        for (int64_t i = last - 1; i >= 0; i--) { q[i] = s; s += p[i]; }
    }
    return out;
}

// ---- matmul ----

static void mm_nn(const double* __restrict A, const double* __restrict B, double* __restrict C,
                  int64_t M, int64_t K, int64_t N) {
    global_pool().parallel_chunks(M, 64, [&](int64_t, int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; i++) {
            const double* __restrict a = A + i * K;
            double* __restrict c = C + i * N;
            for (int64_t j = 0; j < N; j++) c[j] = 0.0;
            for (int64_t k = 0; k < K; k++) {
                double av = a[k];
                const double* __restrict b = B + k * N;
                for (int64_t j = 0; j < N; j++) c[j] += av * b[j];
            }
        }
    });
}

// C[M,K] = G[M,N] * B^T with B[K,N]; transpose the (small) B then run nn-style.
static void mm_nt(const double* __restrict G, const double* __restrict B, double* __restrict C,
                  int64_t M, int64_t N, int64_t K) {
    std::vector<double> BT((size_t)(N * K));
    for (int64_t k = 0; k < K; k++)
        for (int64_t j = 0; j < N; j++) BT[(size_t)(j * K + k)] = B[k * N + j];
    const double* __restrict bt = BT.data();
    global_pool().parallel_chunks(M, 64, [&](int64_t, int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; i++) {
            const double* __restrict g = G + i * N;
            double* __restrict c = C + i * K;
            for (int64_t k = 0; k < K; k++) c[k] = 0.0;
            for (int64_t j = 0; j < N; j++) {
                double gv = g[j];
                const double* __restrict brow = bt + j * K;
                for (int64_t k = 0; k < K; k++) c[k] += gv * brow[k];
            }
        }
    });
}

// C[K,N] = A^T * G with A[M,K], G[M,N]; accumulate rank-1 updates row-wise.
// Parallel version reduces per-chunk partials in chunk order (deterministic).
static void mm_tn(const double* __restrict A, const double* __restrict G, double* __restrict C,
                  int64_t M, int64_t K, int64_t N) {
    int64_t chunk = 1024;
    int64_t n_chunks = (M + chunk - 1) / chunk;
    if (global_pool().workers() == 1 || n_chunks == 1) {
        for (int64_t x = 0; x < K * N; x++) C[x] = 0.0;
        for (int64_t i = 0; i < M; i++) {
            const double* __restrict a = A + i * K;
            const double* __restrict g = G + i * N;
            for (int64_t k = 0; k < K; k++) {
                double av = a[k];
                double* __restrict c = C + k * N;
                for (int64_t j = 0; j < N; j++) c[j] += av * g[j];
            }
        }
        return;
    }
    std::vector<double> partial((size_t)(n_chunks * K * N), 0.0);
    global_pool().parallel_chunks(M, chunk, [&](int64_t ci, int64_t i0, int64_t i1) {
        double* __restrict P = partial.data() + ci * K * N;
        for (int64_t i = i0; i < i1; i++) {
            const double* __restrict a = A + i * K;
            const double* __restrict g = G + i * N;
            for (int64_t k = 0; k < K; k++) {
                double av = a[k];
                double* __restrict p = P + k * N;
                for (int64_t j = 0; j < N; j++) p[j] += av * g[j];
            }
        }
    });
    for (int64_t x = 0; x < K * N; x++) C[x] = 0.0;
    for (int64_t ci = 0; ci < n_chunks; ci++) {
        const double* __restrict P = partial.data() + ci * K * N;
        for (int64_t x = 0; x < K * N; x++) C[x] += P[x];
    }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw std::invalid_argument("matmul: expects 2-D operands, got " + a.shape_str() + " and " + b.shape_str());
    int64_t M = ta ? a.shape[1] : a.shape[0];
    int64_t K = ta ? a.shape[0] : a.shape[1];
    int64_t Kb = tb ? b.shape[1] : b.shape[0];
    int64_t N = tb ? b.shape[0] : b.shape[1];
    if (K != Kb)
        throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape_str() + (ta ? "^T" : "") +
                                    " * " + b.shape_str() + (tb ? "^T" : ""));
    Tensor out({M, N});
    if (!ta && !tb) mm_nn(a.ptr(), b.ptr(), out.ptr(), M, K, N);
    else if (!ta && tb) mm_nt(a.ptr(), b.ptr(), out.ptr(), M, K, N);
    else if (ta && !tb) mm_tn(a.ptr(), b.ptr(), out.ptr(), K, M, N); // kernel's M is the contraction dim
    else { // tt, rare; materialize both transposes and run the nn kernel
        Tensor at({a.shape[1], a.shape[0]});
        for (int64_t i = 0; i < a.shape[0]; i++)
            for (int64_t j = 0; j < a.shape[1]; j++) at.data[j * a.shape[0] + i] = a.data[i * a.shape[1] + j];
        Tensor bt_({b.shape[1], b.shape[0]});
        for (int64_t i = 0; i < b.shape[0]; i++)
            for (int64_t j = 0; j < b.shape[1]; j++) bt_.data[j * b.shape[0] + i] = b.data[i * b.shape[1] + j];
        mm_nn(at.ptr(), bt_.ptr(), out.ptr(), M, K, N);
    }
    return out;
}

// ---- conv2d ----

static void conv_shape_check(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw std::invalid_argument("conv2d: expects x[B,C,H,W], w[O,C,kh,kw], got " + x.shape_str() + " and " +
                                    w.shape_str());
    if (x.shape[1] != w.shape[1])
        throw std::invalid_argument("conv2d: channel mismatch, x " + x.shape_str() + " vs w " + w.shape_str());
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    conv_shape_check(x, w, stride, pad);
    int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int64_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    int64_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
    Tensor out({B, O, Ho, Wo}, 0.0);
    for (int64_t b = 0; b < B; b++)
        for (int64_t o = 0; o < O; o++) {
            double* __restrict op = out.ptr() + ((b * O + o) * Ho) * Wo;
            for (int64_t c = 0; c < C; c++) {
                const double* __restrict xp = x.ptr() + ((b * C + c) * H) * W;
                const double* __restrict wp = w.ptr() + ((o * C + c) * kh) * kw;
                for (int64_t i = 0; i < kh; i++)
                    for (int64_t j = 0; j < kw; j++) {
                        double wv = wp[i * kw + j];
                        for (int64_t oy = 0; oy < Ho; oy++) {
                            int64_t iy = oy * stride - pad + i;
                            if (iy < 0 || iy >= H) continue;
                            const double* __restrict xr = xp + iy * W;
                            double* __restrict orow = op + oy * Wo;
                            for (int64_t ox = 0; ox < Wo; ox++) {
                                int64_t ix = ox * stride - pad + j;
                                if (ix < 0 || ix >= W) continue;
                                orow[ox] += wv * xr[ix];
                            }
                        }
                    }
            }
        }
    return out;
}

Tensor conv2d_dx(const Tensor& g, const Tensor& w, int stride, int pad, int64_t H, int64_t W) {
    int64_t B = g.shape[0], O = g.shape[1], Ho = g.shape[2], Wo = g.shape[3];
    int64_t C = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    Tensor dx({B, C, H, W}, 0.0);
    for (int64_t b = 0; b < B; b++)
        for (int64_t o = 0; o < O; o++) {
            const double* __restrict gp = g.ptr() + ((b * O + o) * Ho) * Wo;
            for (int64_t c = 0; c < C; c++) {
                double* __restrict xp = dx.ptr() + ((b * C + c) * H) * W;
                const double* __restrict wp = w.ptr() + ((o * C + c) * kh) * kw;
                for (int64_t i = 0; i < kh; i++)
                    for (int64_t j = 0; j < kw; j++) {
                        double wv = wp[i * kw + j];
                        for (int64_t oy = 0; oy < Ho; oy++) {
                            int64_t iy = oy * stride - pad + i;
                            if (iy < 0 || iy >= H) continue;
                            double* __restrict xr = xp + iy * W;
                            const double* __restrict grow = gp + oy * Wo;
                            for (int64_t ox = 0; ox < Wo; ox++) {
                                int64_t ix = ox * stride - pad + j;
                                if (ix < 0 || ix >= W) continue;
                                xr[ix] += wv * grow[ox];
                            }
                        }
                    }
            }
        }
    return dx;
}

Tensor conv2d_dw(const Tensor& x, const Tensor& g, int stride, int pad, int64_t kh, int64_t kw) {
    int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int64_t O = g.shape[1], Ho = g.shape[2], Wo = g.shape[3];
    Tensor dw({O, C, kh, kw}, 0.0);
    for (int64_t b = 0; b < B; b++)
        for (int64_t o = 0; o < O; o++) {
            const double* __restrict gp = g.ptr() + ((b * O + o) * Ho) * Wo;
            for (int64_t c = 0; c < C; c++) {
                const double* __restrict xp = x.ptr() + ((b * C + c) * H) * W;
                double* __restrict wp = dw.ptr() + ((o * C + c) * kh) * kw;
                for (int64_t i = 0; i < kh; i++)
                    for (int64_t j = 0; j < kw; j++) {
                        double acc = 0.0;
                        for (int64_t oy = 0; oy < Ho; oy++) {
                            int64_t iy = oy * stride - pad + i;
                            if (iy < 0 || iy >= H) continue;
                            const double* __restrict xr = xp + iy * W;
                            const double* __restrict grow = gp + oy * Wo;
                            for (int64_t ox = 0; ox < Wo; ox++) {
                                int64_t ix = ox * stride - pad + j;
                                if (ix < 0 || ix >= W) continue;
                                acc += xr[ix] * grow[ox];
                            }
                        }
                        wp[i * kw + j] += acc;
                    }
            }
        }
    return dw;
}

// ---- resampling ----

Tensor affine_warp(const Tensor& src, const double A[6], const std::vector<double>& fill) {
    int64_t C = src.shape[0], H = src.shape[1], W = src.shape[2];
    Tensor out({C, H, W});
    for (int64_t c = 0; c < C; c++) {
        const double* __restrict sp = src.ptr() + c * H * W;
        double* __restrict op = out.ptr() + c * H * W;
        double fv = fill.size() == 1 ? fill[0] : fill[c];
        for (int64_t y = 0; y < H; y++)
            for (int64_t x = 0; x < W; x++) {
                double sx = A[0] * x + A[1] * y + A[2];
                double sy = A[3] * x + A[4] * y + A[5];
                int64_t x0 = (int64_t)std::floor(sx), y0 = (int64_t)std::floor(sy);
                double fx = sx - x0, fy = sy - y0;
                auto val = [&](int64_t yy, int64_t xx) {
                    return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? sp[yy * W + xx] : fv;
                };
                op[y * W + x] = (1 - fy) * ((1 - fx) * val(y0, x0) + fx * val(y0, x0 + 1)) +
                                fy * ((1 - fx) * val(y0 + 1, x0) + fx * val(y0 + 1, x0 + 1));
            }
    }
    return out;
}

Tensor affine_warp_adjoint(const Tensor& g, const double A[6], int64_t H, int64_t W) {
    int64_t C = g.shape[0], Ho = g.shape[1], Wo = g.shape[2];
    Tensor out({C, H, W}, 0.0);
    for (int64_t c = 0; c < C; c++) {
        double* __restrict sp = out.ptr() + c * H * W;
        const double* __restrict gp = g.ptr() + c * Ho * Wo;
        for (int64_t y = 0; y < Ho; y++)
            for (int64_t x = 0; x < Wo; x++) {
                double gv = gp[y * Wo + x];
                if (gv == 0.0) continue;
                double sx = A[0] * x + A[1] * y + A[2];
                double sy = A[3] * x + A[4] * y + A[5];
                int64_t x0 = (int64_t)std::floor(sx), y0 = (int64_t)std::floor(sy);
                double fx = sx - x0, fy = sy - y0;
                auto acc = [&](int64_t yy, int64_t xx, double w) {
                    if (yy >= 0 && yy < H && xx >= 0 && xx < W) sp[yy * W + xx] += w * gv;
                };
                acc(y0, x0, (1 - fy) * (1 - fx));
                acc(y0, x0 + 1, (1 - fy) * fx);
                acc(y0 + 1, x0, fy * (1 - fx));
                acc(y0 + 1, x0 + 1, fy * fx);
            }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& src, int64_t out_h, int64_t out_w) {
    int64_t C = src.shape[0], H = src.shape[1], W = src.shape[2];
    Tensor out({C, out_h, out_w});
    double ry = (double)H / out_h, rx = (double)W / out_w;
    for (int64_t c = 0; c < C; c++) {
        const double* __restrict sp = src.ptr() + c * H * W;
        double* __restrict op = out.ptr() + c * out_h * out_w;
        for (int64_t y = 0; y < out_h; y++)
            for (int64_t x = 0; x < out_w; x++) {
                double sy = (y + 0.5) * ry - 0.5, sx = (x + 0.5) * rx - 0.5;
                sy = std::clamp(sy, 0.0, (double)(H - 1));
                sx = std::clamp(sx, 0.0, (double)(W - 1));
                int64_t y0 = (int64_t)sy, x0 = (int64_t)sx;
                int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
                double fy = sy - y0, fx = sx - x0;
                op[y * out_w + x] = (1 - fy) * ((1 - fx) * sp[y0 * W + x0] + fx * sp[y0 * W + x1]) +
                                    fy * ((1 - fx) * sp[y1 * W + x0] + fx * sp[y1 * W + x1]);
            }
    }
    return out;
}

Tensor avg_downsample2(const Tensor& src) {
    int64_t C = src.shape[0], H = src.shape[1], W = src.shape[2];
    int64_t Ho = H / 2, Wo = W / 2;
    Tensor out({C, Ho, Wo});
    for (int64_t c = 0; c < C; c++) {
        const double* __restrict sp = src.ptr() + c * H * W;
        double* __restrict op = out.ptr() + c * Ho * Wo;
        for (int64_t y = 0; y < Ho; y++)
            for (int64_t x = 0; x < Wo; x++)
                op[y * Wo + x] = 0.25 * (sp[(2 * y) * W + 2 * x] + sp[(2 * y) * W + 2 * x + 1] +
                                         sp[(2 * y + 1) * W + 2 * x] + sp[(2 * y + 1) * W + 2 * x + 1]);
    }
    return out;
}

} // namespace intrin::tk
