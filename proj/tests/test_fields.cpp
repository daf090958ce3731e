#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "intrin/fields.hpp"
#include "intrin/grad_check.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace intrin;

TEST_CASE("latent samples are standard normal") {
    Rng rng(101, "latent");
    const int n = 10000;
    std::vector<double> mean(kLatentDim, 0.0), var(kLatentDim, 0.0);
    std::vector<Tensor> zs;
    zs.reserve(n);
    for (int i = 0; i < n; i++) zs.push_back(sample_latent(rng));
    for (auto& z : zs)
        for (int64_t j = 0; j < kLatentDim; j++) mean[j] += z.data[j];
    for (auto& m : mean) m /= n;
    for (auto& z : zs)
        for (int64_t j = 0; j < kLatentDim; j++) var[j] += (z.data[j] - mean[j]) * (z.data[j] - mean[j]);
    for (auto& v : var) v /= n;
    for (int64_t j = 0; j < kLatentDim; j++) {
        CHECK(std::abs(mean[j]) < 0.05);
        CHECK(var[j] > 0.9);
        CHECK(var[j] < 1.1);
    }

    Rng r1(7, "z"), r2(7, "z");
    Tensor a = sample_latent(r1), b = sample_latent(r2);
    for (int64_t j = 0; j < kLatentDim; j++) CHECK(a.data[j] == b.data[j]);
}

TEST_CASE("mean latent concentrates near zero") {
    Rng rng(103, "zbar");
    Tensor zbar = mean_latent(rng, 10000);
    for (int64_t j = 0; j < kLatentDim; j++) CHECK(std::abs(zbar.data[j]) < 0.05);
}

TEST_CASE("sine layer weights respect the init bound") {
    Rng rng(107, "init");
    auto mlp = SirenMlp::make("t", 67, 64, 1, 4, rng);
    // first layer: bound sqrt(6/67)/30; hidden: sqrt(6/64)/1
    double b0 = std::sqrt(6.0 / 67.0) / 30.0;
    double lo = 1e9, hi = -1e9;
    for (double v : mlp.layers[0].w.value.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        CHECK(std::abs(v) <= b0);
    }
    CHECK(lo < -0.5 * b0); // actually spread over the range
    CHECK(hi > 0.5 * b0);
    double b1 = std::sqrt(6.0 / 64.0);
    for (double v : mlp.layers[1].w.value.data) CHECK(std::abs(v) <= b1);
}

TEST_CASE("albedo output range is (0,1)^3 by construction") {
    Rng rng(109, "alb");
    auto alb = AlbedoField::make(32, 2, rng, 8);
    Tensor x({50, 3}), z({50, 8});
    for (auto& v : x.data) v = rng.uniform(-3, 3);
    for (auto& v : z.data) v = rng.normal() * 3.0;
    Tape t;
    Var out = alb(t, t.input(x, false), t.input(z, false));
    for (double v : out.val().data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("eikonal loss on analytic fields") {
    Rng rng(113, "eik");
    Tensor pts({64, 3});
    for (auto& v : pts.data) v = rng.uniform(-1.5, 1.5);

    SUBCASE("exact unit-sphere sdf gives zero") {
        Tape t;
        Var x = t.input(pts, false);
        Var loss = eikonal_of(t, [](Tape&, Var p) { return add_const(vecnorm(p), -1.0); }, x);
        CHECK(std::abs(loss.item()) < 1e-10);
    }
    SUBCASE("doubled field gives exactly one") {
        Tape t;
        Var x = t.input(pts, false);
        Var loss = eikonal_of(t, [](Tape&, Var p) { return scale(add_const(vecnorm(p), -1.0), 2.0); }, x);
        CHECK(loss.item() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("eikonal gradients w.r.t. network params match finite differences") {
    Rng rng(127, "eik_fd");
    auto field = SdfField::make(16, 2, rng, 4);
    std::vector<Param*> ps;
    field.collect(ps);
    Tensor pts({8, 3}), z({1, 4});
    for (auto& v : pts.data) v = rng.uniform(-1.2, 1.2);
    for (auto& v : z.data) v = rng.normal();
    auto make_loss = [&](Tape& t) {
        return eikonal_loss(t, field, t.input(z, false), t.input(pts, false));
    };
    CHECK(param_grad_check(make_loss, ps, 1e-5) < 1e-4);
}

TEST_CASE("unit normals: scale invariance and analytic sphere") {
    Rng rng(131, "nrm");
    Tensor pts({16, 3});
    for (int64_t i = 0; i < 16; i++) {
        double n = 0;
        for (int64_t k = 0; k < 3; k++) {
            pts.data[i * 3 + k] = rng.uniform(-1, 1);
            n += pts.data[i * 3 + k] * pts.data[i * 3 + k];
        }
        if (n < 0.04) pts.data[i * 3] += 0.5;
    }

    auto normals_of = [&](double c) {
        Tape t;
        Var x = t.input(pts, false);
        Var f = scale(add_const(vecnorm(x), -1.0), c);
        Tensor seed = Tensor::full(f.shape(), 1.0);
        auto g = t.grad(f, std::vector<Var>{x}, &seed);
        auto nr = unit_normals(t, g[0]);
        return nr.unit.val();
    };
    Tensor n1 = normals_of(1.0), n3 = normals_of(3.0);
    for (int64_t i = 0; i < n1.numel(); i++) CHECK(n1.data[i] == doctest::Approx(n3.data[i]).epsilon(1e-12));

    // for f = ||x|| - 1 the normal is x / ||x||
    for (int64_t i = 0; i < 16; i++) {
        double nn = std::sqrt(pts.data[i * 3] * pts.data[i * 3] + pts.data[i * 3 + 1] * pts.data[i * 3 + 1] +
                              pts.data[i * 3 + 2] * pts.data[i * 3 + 2]);
        for (int64_t k = 0; k < 3; k++)
            CHECK(n1.data[i * 3 + k] == doctest::Approx(pts.data[i * 3 + k] / nn).epsilon(1e-8));
        double un = 0;
        for (int64_t k = 0; k < 3; k++) un += n1.data[i * 3 + k] * n1.data[i * 3 + k];
        CHECK(std::abs(std::sqrt(un) - 1.0) < 1e-10);
    }
}

TEST_CASE("degenerate gradients are flagged") {
    Tape t;
    Tensor g({3, 3}, {0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1e-12, 0.0, 0.0});
    auto nr = unit_normals(t, t.input(g, false));
    CHECK(nr.degenerate.data[0] == 1.0);
    CHECK(nr.degenerate.data[1] == 0.0);
    CHECK(nr.degenerate.data[2] == 1.0);
}

TEST_CASE("sphere pretraining shapes the default field into a unit sphere") {
    Rng rng(999, "field_init");
    auto field = SdfField::make(64, 4, rng);
    Rng prng(999, "pretrain");
    auto rep = sphere_init_pretrain(field, 1.0, 2000, prng);
    CHECK(rep.reached_tol);
    CHECK(rep.final_err < 0.05);

    Rng zr(5, "zs");
    std::vector<Tensor> zs;
    for (int i = 0; i < 10; i++) zs.push_back(sample_latent(zr));

    auto eval_at = [&](double x, double y, double z, const Tensor& code) {
        Tape t;
        Tensor pt({1, 3}, {x, y, z});
        Tensor zc({1, kLatentDim});
        zc.data = code.data;
        return field(t, t.input(pt, false), t.input(zc, false)).item();
    };

    // sign structure: clearly negative inside, clearly positive outside.
    // (The exact value at the center stays biased toward zero: the distance
    // field has a cone tip there that the smooth network rounds off.)
    CHECK(eval_at(0, 0, 0, zs[0]) < -0.5);
    CHECK(eval_at(1.4, 0, 0, zs[0]) > 0.1);
    CHECK(eval_at(0, 0, -1.4, zs[1]) > 0.1);

    // z-insensitivity right after pretraining
    double m = 0, m2 = 0;
    for (auto& code : zs) {
        double v = eval_at(0.3, -0.2, 0.5, code);
        m += v;
        m2 += v * v;
    }
    m /= 10;
    CHECK(std::sqrt(std::max(0.0, m2 / 10 - m * m)) < 0.05);

    // root along random rays from the origin lands at radius 1 +- 0.05
    Rng rr(17, "rays");
    for (int k = 0; k < 5; k++) {
        double d[3], nn = 0;
        for (auto& c : d) c = rr.normal();
        for (auto& c : d) nn += c * c;
        nn = std::sqrt(nn);
        double lo = 0.2, hi = 1.45;
        for (int it = 0; it < 40; it++) {
            double mid = 0.5 * (lo + hi);
            double v = eval_at(mid * d[0] / nn, mid * d[1] / nn, mid * d[2] / nn, zs[0]);
            (v < 0 ? lo : hi) = mid;
        }
        CHECK(std::abs(0.5 * (lo + hi) - 1.0) < 0.05);
    }

    // eikonal residual is small after pretraining
    Rng pr(23, "eikpts");
    Tensor pts({128, 3});
    for (auto& v : pts.data) v = pr.uniform(-1.5, 1.5);
    Tensor zc({1, kLatentDim});
    zc.data = zs[0].data;
    Tape t;
    double eik = eikonal_loss(t, field, t.input(zc, false), t.input(pts, false)).item();
    CHECK(eik < 0.1);

    // network normal at (0,1,0) within 5 degrees of +y
    Tape t2;
    Tensor pt({1, 3}, {0.0, 1.0, 0.0});
    auto [f, g] = field.with_gradient(t2, t2.input(pt, false), t2.input(zc, false));
    auto nr = unit_normals(t2, g);
    const Tensor& nv = nr.unit.val();
    double cosang = nv.data[1];
    CHECK(cosang > std::cos(5.0 * M_PI / 180.0));
}
