#pragma once
#include "intrin/graph.hpp"

namespace intrin {

// Global learnable illumination scalars. Raw values pass through softplus so
// the effective gains and the shininess exponent stay non-negative; raw inits
// are chosen to hit the effective values k_d=1, k_a=0.5, k_s=0, alpha=0.
// (k_s and alpha start at softplus(-30) ~ 1e-13 — numerically zero but with
// live gradients, so they can still be learned.)
struct PhongParams {
    Param kd_raw, ka_raw, ks_raw, alpha_raw;

    static PhongParams make();
    Var kd(Tape& t) { return softplus(t.leaf(kd_raw)); }
    Var ka(Tape& t) { return softplus(t.leaf(ka_raw)); }
    Var ks(Tape& t) { return softplus(t.leaf(ks_raw)); }
    Var alpha(Tape& t) { return softplus(t.leaf(alpha_raw)); }
    void collect(std::vector<Param*>& out);
};

// Direction of (toward) the dominant light, unit-norm; fixed per scene.
struct LightConfig {
    Tensor l; // [3]
    static LightConfig from(double x, double y, double z); // normalizes
};

// rowwise dot product of [N,3] vars -> [N,1]
Var dot_rows(Var a, Var b);

// r = 2 (n.l) n - l, unit inputs -> unit output
Var reflect_dir(Tape& t, Var n, Var l);

// s = k_d max(n.l, 0) + k_a  -> [N,1]
Var diffuse_shade(Tape& t, Var n, Var l, PhongParams& p);

// c = s * albedo + k_s * max(r.v, 0)^alpha  -> [N,3]
// n, v [N,3]; l [1,3] or [N,3]; albedo [N,3]
Var phong_radiance(Tape& t, Var albedo, Var n, Var l, Var v, PhongParams& p);

} // namespace intrin
