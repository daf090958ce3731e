#include "intrin/nets.hpp"
#include <cmath>

namespace intrin {

Linear::Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, double w0) {
    double bound = std::sqrt(6.0 / (double)in) / w0;
    Tensor wt({out, in});
    for (auto& v : wt.data) v = rng.uniform(-bound, bound);
    Tensor bt({1, out});
    for (auto& v : bt.data) v = rng.uniform(-bound, bound);
    w = Param(name + ".w", std::move(wt));
    b = Param(name + ".b", std::move(bt));
}

Var Linear::operator()(Tape& t, Var x) {
    return matmul(x, t.leaf(w), false, true) + t.leaf(b);
}

void Linear::collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

SirenMlp SirenMlp::make(const std::string& name, int64_t in, int64_t width, int64_t out, int depth,
                        Rng& rng, double w0_first, double w0_hidden) {
    SirenMlp m;
    int64_t cur = in;
    for (int i = 0; i < depth; i++) {
        double w0 = i == 0 ? w0_first : w0_hidden;
        m.layers.emplace_back(name + ".h" + std::to_string(i), cur, width, rng, w0);
        m.omega.push_back(w0);
        cur = width;
    }
    m.layers.emplace_back(name + ".out", cur, out, rng, 1.0);
    return m;
}

Var SirenMlp::operator()(Tape& t, Var x) {
    Var h = x;
    for (size_t i = 0; i + 1 < layers.size(); i++) h = sin(scale(layers[i](t, h), omega[i]));
    return layers.back()(t, h);
}

void SirenMlp::collect(std::vector<Param*>& out) {
    for (auto& l : layers) l.collect(out);
}

Conv2dLayer::Conv2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t k, int stride,
                         int pad, Rng& rng)
    : stride(stride), pad(pad) {
    double bound = std::sqrt(6.0 / (double)(in_ch * k * k));
    Tensor wt({out_ch, in_ch, k, k});
    for (auto& v : wt.data) v = rng.uniform(-bound, bound);
    w = Param(name + ".w", std::move(wt));
    b = Param(name + ".b", Tensor({1, out_ch, 1, 1}, 0.0));
}

Var Conv2dLayer::operator()(Tape& t, Var x) {
    return conv2d(x, t.leaf(w), stride, pad) + t.leaf(b);
}

void Conv2dLayer::collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

Adam::Adam(const std::vector<Param*>& ps, double beta1, double beta2, double eps)
    : beta1(beta1), beta2(beta2), eps(eps) {
    for (Param* p : ps) slots.push_back({p, Tensor::zeros(p->value.shape), Tensor::zeros(p->value.shape)});
}

void Adam::step(double lr) {
    t++;
    double c1 = 1.0 - std::pow(beta1, (double)t);
    double c2 = 1.0 - std::pow(beta2, (double)t);
    for (auto& s : slots) {
        if (!s.p->trainable) continue;
        const double* __restrict g = s.p->grad.ptr();
        double* __restrict m = s.m.ptr();
        double* __restrict v = s.v.ptr();
        double* __restrict x = s.p->value.ptr();
        int64_t n = s.p->value.numel();
        for (int64_t i = 0; i < n; i++) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& s : slots) s.p->zero_grad();
}

bool Adam::grads_finite() const {
    for (auto& s : slots) {
        if (!s.p->trainable) continue;
        for (double g : s.p->grad.data)
            if (!std::isfinite(g)) return false;
    }
    return true;
}

} // namespace intrin
