#include "intrin/shading.hpp"
#include <cmath>

namespace intrin {

PhongParams PhongParams::make() {
    PhongParams p;
    p.kd_raw = Param("phong.kd", Tensor::scalar(std::log(std::expm1(1.0))));
    p.ka_raw = Param("phong.ka", Tensor::scalar(std::log(std::expm1(0.5))));
    p.ks_raw = Param("phong.ks", Tensor::scalar(-30.0));
    p.alpha_raw = Param("phong.alpha", Tensor::scalar(-30.0));
    return p;
}

void PhongParams::collect(std::vector<Param*>& out) {
    out.push_back(&kd_raw);
    out.push_back(&ka_raw);
    out.push_back(&ks_raw);
    out.push_back(&alpha_raw);
}

LightConfig LightConfig::from(double x, double y, double z) {
    double n = std::sqrt(x * x + y * y + z * z);
    if (n < 1e-12) throw std::invalid_argument("light direction must be nonzero");
    return {Tensor({3}, {x / n, y / n, z / n})};
}

Var dot_rows(Var a, Var b) {
    Var p = a * b; // broadcasts [1,3] against [N,3]
    return sum(p, {-1}, true);
}

Var reflect_dir(Tape& t, Var n, Var l) {
    Var d = dot_rows(n, l);
    return scale(n * d, 2.0) - l;
}

Var diffuse_shade(Tape& t, Var n, Var l, PhongParams& p) {
    return p.kd(t) * max_const(dot_rows(n, l), 0.0) + p.ka(t);
}

Var phong_radiance(Tape& t, Var albedo, Var n, Var l, Var v, PhongParams& p) {
    Var s = diffuse_shade(t, n, l, p);
    Var r = reflect_dir(t, n, l);
    Var spec_base = max_const(dot_rows(r, v), 0.0);
    const std::vector<int64_t> sb_shape = spec_base.shape(); // copied: alpha() records and may move nodes
    Var spec = p.ks(t) * pow(spec_base, broadcast(p.alpha(t), sb_shape));
    return s * albedo + spec;
}

} // namespace intrin
