#pragma once
#include "intrin/nets.hpp"
#include <functional>

namespace intrin {

constexpr int kLatentDim = 64;

// z ~ N(0, I_64)
Tensor sample_latent(Rng& rng);
// mean of n i.i.d. samples, used as the canonical inference code
Tensor mean_latent(Rng& rng, int n);

// Signed-distance field conditioned on a latent code by input concatenation:
// net([x ; z]) -> scalar. Gradients w.r.t. x are recorded on the tape so
// normals and the Eikonal term stay differentiable in the parameters.
struct SdfField {
    SirenMlp net;
    int64_t latent_dim = kLatentDim;

    static SdfField make(int64_t width, int depth, Rng& rng, int64_t latent_dim = kLatentDim);

    // x [N,3], z [N,d] or [1,d] (broadcast across points) -> f [N,1]
    Var operator()(Tape& t, Var x, Var z);
    // (f [N,1], df/dx [N,3]), both recorded
    std::pair<Var, Var> with_gradient(Tape& t, Var x, Var z);
    void collect(std::vector<Param*>& out);
};

// Albedo field: net([x ; z]) -> sigmoid -> (0,1)^3
struct AlbedoField {
    SirenMlp net;
    int64_t latent_dim = kLatentDim;

    static AlbedoField make(int64_t width, int depth, Rng& rng, int64_t latent_dim = kLatentDim);
    Var operator()(Tape& t, Var x, Var z); // [N,3],[.,d] -> [N,3]
    void collect(std::vector<Param*>& out);
};

// Unit normals from a spatial gradient [N,3]; rows with norm <= 1e-8 are
// flagged so the renderer can substitute the view-facing direction.
struct NormalResult {
    Var unit;          // [N,3]
    Tensor degenerate; // [N,1] 1.0 where the gradient vanished
};
NormalResult unit_normals(Tape& t, Var grad_x);

// mean over points of (||grad f||_2 - 1)^2 for any scalar field builder
Var eikonal_of(Tape& t, const std::function<Var(Tape&, Var)>& f, Var pts);
Var eikonal_loss(Tape& t, SdfField& field, Var z, Var pts);

// Regress f(x,z) -> ||x|| - radius over x in [-1.5,1.5]^3, z ~ N(0,I) until
// mean |err| < tol on a held-out batch or iters run out. Returns final error.
struct SpherePretrainReport {
    double final_err = 0.0;
    int steps = 0;
    bool reached_tol = false;
};
SpherePretrainReport sphere_init_pretrain(SdfField& field, double radius, int iters, Rng& rng,
                                          double lr = 1e-4, double tol = 0.05);

} // namespace intrin
