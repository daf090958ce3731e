#include "intrin/fields.hpp"
#include <cmath>
#include <cstdio>

namespace intrin {

Tensor sample_latent(Rng& rng) {
    Tensor z({kLatentDim});
    for (auto& v : z.data) v = rng.normal();
    return z;
}

Tensor mean_latent(Rng& rng, int n) {
    Tensor m({kLatentDim}, 0.0);
    for (int i = 0; i < n; i++) {
        for (int64_t j = 0; j < kLatentDim; j++) m.data[j] += rng.normal();
    }
    for (auto& v : m.data) v /= (double)n;
    return m;
}

// The latent enters scaled by 1/sqrt(d) so its first-layer pre-activation
// variance matches the 3 spatial coordinates instead of drowning them
// (64 unit-variance channels vs 3 would otherwise dominate the sine layer).
static Var cond_input(Tape& t, Var x, Var z, int64_t latent_dim) {
    int64_t n = x.shape()[0];
    if (z.shape().size() != 2 || z.shape()[1] != latent_dim)
        throw std::invalid_argument("field: latent must be [*, " + std::to_string(latent_dim) + "]");
    Var zb = z.shape()[0] == n ? z : broadcast(z, {n, latent_dim});
    return concat({x, scale(zb, 1.0 / std::sqrt((double)latent_dim))}, 1);
}

SdfField SdfField::make(int64_t width, int depth, Rng& rng, int64_t latent_dim) {
    SdfField f;
    f.latent_dim = latent_dim;
    f.net = SirenMlp::make("sdf", 3 + latent_dim, width, 1, depth, rng);
    return f;
}

Var SdfField::operator()(Tape& t, Var x, Var z) { return net(t, cond_input(t, x, z, latent_dim)); }

std::pair<Var, Var> SdfField::with_gradient(Tape& t, Var x, Var z) {
    Var f = (*this)(t, x, z);
    // rows are independent, so seeding with ones gives per-point gradients
    Tensor seed = Tensor::full(f.shape(), 1.0);
    auto g = t.grad(f, std::vector<Var>{x}, &seed);
    return {f, g[0]};
}

void SdfField::collect(std::vector<Param*>& out) { net.collect(out); }

AlbedoField AlbedoField::make(int64_t width, int depth, Rng& rng, int64_t latent_dim) {
    AlbedoField f;
    f.latent_dim = latent_dim;
    f.net = SirenMlp::make("albedo", 3 + latent_dim, width, 3, depth, rng);
    return f;
}

Var AlbedoField::operator()(Tape& t, Var x, Var z) {
    return sigmoid(net(t, cond_input(t, x, z, latent_dim)));
}

void AlbedoField::collect(std::vector<Param*>& out) { net.collect(out); }

NormalResult unit_normals(Tape& t, Var grad_x) {
    Var nrm = vecnorm(grad_x, true, 1e-12);
    // flag using the raw norm; the eps pad inside vecnorm floors it at 1e-6
    const Tensor& g = grad_x.val();
    int64_t n = g.shape[0], d = g.shape[1];
    Tensor degen({n, 1}, 0.0);
    for (int64_t i = 0; i < n; i++) {
        double s = 0;
        for (int64_t k = 0; k < d; k++) s += g.data[i * d + k] * g.data[i * d + k];
        if (std::sqrt(s) <= 1e-8) degen.data[i] = 1.0;
    }
    return {div(grad_x, nrm), std::move(degen)};
}

Var eikonal_of(Tape& t, const std::function<Var(Tape&, Var)>& f, Var pts) {
    Var fv = f(t, pts);
    Tensor seed = Tensor::full(fv.shape(), 1.0);
    auto g = t.grad(fv, std::vector<Var>{pts}, &seed);
    Var dev = add_const(vecnorm(g[0], true, 1e-12), -1.0);
    return mean(dev * dev);
}

Var eikonal_loss(Tape& t, SdfField& field, Var z, Var pts) {
    return eikonal_of(t, [&](Tape& tt, Var x) { return field(tt, x, z); }, pts);
}

SpherePretrainReport sphere_init_pretrain(SdfField& field, double radius, int iters, Rng& rng,
                                          double lr, double tol) {
    std::vector<Param*> params;
    field.collect(params);
    Adam opt(params, 0.9, 0.999);

    // Half the points are cube-uniform, half radius-uniform along random
    // directions: volume sampling alone leaves the near-origin region so
    // starved (mass ~ r^2) that the center value never fits.
    const int64_t batch = 128;
    auto make_batch = [&](int64_t n, Tensor& x, Tensor& z, Tensor& target) {
        x = Tensor({n, 3});
        z = Tensor({n, field.latent_dim});
        target = Tensor({n, 1});
        for (int64_t i = 0; i < n; i++) {
            double r2 = 0;
            if (i % 2 == 0) {
                for (int64_t k = 0; k < 3; k++) {
                    double c = rng.uniform(-1.5, 1.5);
                    x.data[i * 3 + k] = c;
                    r2 += c * c;
                }
            } else {
                double d[3], dn = 0;
                for (auto& c : d) c = rng.normal();
                for (auto c : d) dn += c * c;
                dn = std::max(std::sqrt(dn), 1e-12);
                double r = rng.uniform(0.0, 1.5);
                for (int64_t k = 0; k < 3; k++) x.data[i * 3 + k] = r * d[k] / dn;
                r2 = r * r;
            }
            target.data[i] = std::sqrt(r2) - radius;
            for (int64_t k = 0; k < field.latent_dim; k++) z.data[i * field.latent_dim + k] = rng.normal();
        }
    };

    auto holdout_err = [&](int64_t n) {
        Tensor x, z, target;
        make_batch(n, x, z, target);
        Tape t;
        Var f = field(t, t.input(x, false), t.input(z, false));
        double s = 0;
        for (int64_t i = 0; i < n; i++) s += std::abs(f.val().data[i] - target.data[i]);
        return s / (double)n;
    };

    SpherePretrainReport rep;
    for (int it = 0; it < iters; it++) {
        Tensor x, z, target;
        make_batch(batch, x, z, target);
        Tape t;
        Var f = field(t, t.input(x, false), t.input(z, false));
        Var err = f - t.constant(target);
        Var loss = mean(err * err);
        opt.zero_grad();
        t.backward_scalar(loss);
        opt.step(lr);
        rep.steps = it + 1;
        // stop only with margin so batch noise cannot fake convergence
        if ((it + 1) % 25 == 0 && holdout_err(256) < 0.75 * tol) break;
    }
    rep.final_err = holdout_err(1024);
    rep.reached_tol = rep.final_err < tol;
    if (!rep.reached_tol)
        std::fprintf(stderr, "warning: sphere pretrain stopped at mean |err| %.4f after %d steps (tol %.3f)\n",
                     rep.final_err, rep.steps, tol);
    return rep;
}

} // namespace intrin
