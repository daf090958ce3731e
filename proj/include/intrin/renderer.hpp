#pragma once
#include "intrin/camera.hpp"
#include "intrin/fields.hpp"
#include "intrin/shading.hpp"
#include <functional>

namespace intrin {

// Sharpness of the surface-density falloff, stored in log space and passed
// through a [0.01, 1e4] clamp so optimizer steps can never drive it to a
// degenerate value.
struct NeusScale {
    Param log_s;
    static NeusScale make(double s0 = 10.0);
    Var s(Tape& t);
    double value() const;
    void collect(std::vector<Param*>& out);
};

// phi_s(x) = s e^{-sx} / (1+e^{-sx})^2, evaluated in the overflow-free
// symmetric form. The density the weight construction below integrates.
double logistic_density(double x, double s);

// Discrete surface-crossing weights from per-sample SDF values along each
// ray: opacity alpha_i = max((cdf(f_i) - cdf(f_{i+1})) / cdf(f_i), 0) with
// cdf(x) = sigmoid(s x), composited front-to-back. sdf [R,S] -> [R,S-1].
// `depths` [R,S] must be sorted ascending per ray (validation only).
Var neus_weights(Tape& t, Var sdf, const Tensor& depths, Var s);
// same computation on plain values (coarse pass)
Tensor neus_weights_eager(const Tensor& sdf, const Tensor& depths, double s);

// Inverse-CDF draws of `n` extra depths per ray from the piecewise-constant
// section distribution proportional to (weights + eps); returns the coarse
// depths merged with the draws, sorted strictly ascending: [R, S+n].
// All-zero weight rows degrade to uniform draws via the eps floor.
Tensor importance_resample(const Tensor& coarse_weights, const Tensor& coarse_depths,
                           int n, Rng& rng, double eps = 1e-5);

// What the renderer needs from a scene object: a signed-distance evaluation
// carrying its spatial gradient, and an albedo. Network fields bind their
// latent code here; the synthetic-scene generator supplies closed-form
// shapes through the same interface.
struct FieldBundle {
    // pts [N,3] -> f [N,1]; cheap path for the non-differentiated coarse pass
    std::function<Var(Tape&, Var)> sdf_value;
    // pts [N,3] -> (f [N,1], df/dx [N,3]), both on the tape
    std::function<std::pair<Var, Var>(Tape&, Var)> sdf_with_grad;
    // pts [N,3] -> albedo [N,3]
    std::function<Var(Tape&, Var)> albedo;

    static FieldBundle of(SdfField& sdf, AlbedoField& albedo, const Tensor& z);
    // latent as a live tape variable so gradients reach z (inversion); every
    // closure must then run on the tape that owns `z`
    static FieldBundle of(SdfField& sdf, AlbedoField& albedo, Var z);
};

struct RenderConfig {
    int64_t res = 32;          // crop rendered at res x res
    int n_coarse = 16;
    int n_importance = 4;
    bool jitter = false;       // stratified in-stratum noise (training)
    double clip_radius = 1.5;  // ray interval sphere around the object
    double mask_eps = 1e-4;    // depth normalizer floor
    int64_t rows_per_chunk = 4; // rng-stream granularity and eager chunk size
};

// One batch of rays rendered on a tape. rgb is premultiplied by mask
// (background compositing happens downstream); depth is distance along the
// unit-norm ray, normalized by max(mask, mask_eps).
struct RayRender {
    Var rgb;       // [R,3]
    Var mask;      // [R,1]
    Var depth;     // [R,1]
    Var albedo;    // [R,3] weight-averaged surface albedo (unshaded)
    Tensor points; // [R*(S-1),3] object-frame shade points (constants)
};

// Differentiable render of object-frame rays from a shared origin. `l_obj`
// is the light direction already rotated into the object frame. Consumes
// `rng` sequentially: per ray, n_coarse jitter draws (only when cfg.jitter),
// then per ray, n_importance inverse-CDF draws.
RayRender render_rays(Tape& t, const FieldBundle& fields, const Vec3& origin_obj,
                      const Tensor& dirs_obj, const Vec3& l_obj, PhongParams& phong,
                      NeusScale& scale, const RenderConfig& cfg, Rng& rng);

struct CropRender {
    Var rgb;       // [res*res, 3], row-major over the crop grid
    Var mask;      // [res*res, 1]
    Var depth;     // [res*res, 1]
    Var albedo;    // [res*res, 3] weight-averaged albedo
    Tensor points; // all shade points, for Eikonal reuse
    CropRect rect; // square full-frame window that was rendered
};

// Render the square crop covering the projected unit sphere at res x res.
// Rays are processed in fixed row chunks, each with its own rng stream
// derived from (seed, chunk index), so a chunk can be re-rendered bit-exactly
// in isolation (the chunked-backward path) regardless of which other chunks
// run. The full result is the in-order concatenation of the chunks.
CropRender render_crop(Tape& t, const FieldBundle& fields, const PoseSample& pose,
                       const LightConfig& light, PhongParams& phong, NeusScale& scale,
                       const Camera& cam, const RenderConfig& cfg, uint64_t seed);

struct CropImages {
    Tensor rgb;    // [res*res, 3]
    Tensor mask;   // [res*res, 1]
    Tensor depth;  // [res*res, 1]
    Tensor albedo; // [res*res, 3]
    CropRect rect;
};

// Same pixels as render_crop (bit-identical values for the same seed), but
// evaluated chunk-by-chunk on throwaway tapes: bounded memory, no gradients.
CropImages render_crop_eager(const FieldBundle& fields, const PoseSample& pose,
                             const LightConfig& light, PhongParams& phong, NeusScale& scale,
                             const Camera& cam, const RenderConfig& cfg, uint64_t seed);

// Chunk geometry shared by render_crop and the chunked-backward path:
// chunk c covers grid rows [c*rows_per_chunk, min((c+1)*rows_per_chunk, res)).
int64_t render_chunk_count(const RenderConfig& cfg);
// object-frame directions for one chunk of the crop grid over `rect`
Tensor chunk_dirs_obj(const PoseSample& pose, const Camera& cam, const CropRect& rect,
                      const RenderConfig& cfg, int64_t chunk);
// the rng stream chunk `c` consumes inside render_crop(seed)
Rng chunk_rng(uint64_t seed, int64_t chunk);

} // namespace intrin
