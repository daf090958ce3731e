#pragma once

#include "intrin/renderer.hpp"
#include "intrin/scene.hpp"

#include <vector>

namespace intrin {

// [res*res, C] renderer rows -> a [C, res, res] image tensor
Tensor rows_to_chw_image(const Tensor& rows, int64_t res);

// Closed orbit around the object: n_frames poses stepping the azimuth by
// 360/n_frames degrees from az0, plus a closing pose wrapped back to az0, so
// front() and back() are bit-identical (n_frames + 1 entries total).
std::vector<PoseSample> azimuth_sweep(double az0_deg, double el_deg, double ip_deg, double dist,
                                      double lat_x, double lat_y, int n_frames);

// Deterministic, jitter-free render of one view. The config's jitter flag is
// ignored (forced off), so no rng state is consumed.
CropImages novel_view(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                      const PoseSample& pose, const LightConfig& light, const Camera& cam,
                      const RenderConfig& cfg);
std::vector<CropImages> novel_views(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                                    const std::vector<PoseSample>& poses, const LightConfig& light,
                                    const Camera& cam, const RenderConfig& cfg);

// Same view under each light; only the light changes between renders.
std::vector<CropImages> relight(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                                const PoseSample& pose, const std::vector<LightConfig>& lights,
                                const Camera& cam, const RenderConfig& cfg);

// Renders along the straight latent path z(t) = (1-t) z_a + t z_b at
// t = 0, 1/(steps-1), ..., 1, with pose and light fixed. steps >= 2.
std::vector<CropImages> interpolate_latents(SdfField& sdf, AlbedoField& albedo, PhongParams& phong,
                                            NeusScale& neus, const Tensor& z_a, const Tensor& z_b,
                                            int steps, const PoseSample& pose,
                                            const LightConfig& light, const Camera& cam,
                                            const RenderConfig& cfg);

// Camera-frame unit normals of the rendered surface as [3,res,res]: for each
// pixel with mask > 0.5, the SDF gradient at the expected-depth point along
// the pixel ray, normalized and rotated back to the camera frame; zero
// elsewhere (and where the gradient vanishes).
Tensor surface_normals_cam(const FieldBundle& fields, const PoseSample& pose, const Camera& cam,
                           const CropImages& im, int64_t res);

// ---------------------------------------------------------------------------
// GAN inversion
// ---------------------------------------------------------------------------

struct InvertConfig {
    int n_latent_avg = 10000; // samples averaged into the starting latent
    int n_poses = 1000;       // prior poses ranked by reconstruction error
    int top_k = 5;            // candidates refined
    int refine_steps = 2000;  // Adam steps on z per candidate
    double refine_lr = 4e-3;
    uint64_t seed = 1;
    RenderConfig render;      // res must match the target crop
};

struct InversionCandidate {
    PoseSample pose;
    double pre_error = 0.0;  // reconstruction proxy at the averaged latent
    double post_error = 0.0; // best proxy seen along the refinement trajectory
};

// final error = min over the refined candidates of the best error along each
// trajectory (the start included), so it never exceeds the best unrefined
// candidate.
struct InversionResult {
    PoseSample pose;
    Tensor z; // [1,latent_dim]
    double error = 0.0;
    std::vector<InversionCandidate> table; // the refined candidates, ranked order
};

// Recovers (pose, z) for a premultiplied target crop [3,res,res] with mask
// [1,res,res]: average n_latent_avg latents, rank n_poses prior samples by
// recon_proxy_error at that latent, then refine z with Adam (masked MSE
// objective, pose frozen) for each of the top_k candidates, scoring every
// visited z by the proxy error. Deterministic given cfg.seed.
InversionResult invert(SdfField& sdf, AlbedoField& albedo, PhongParams& phong, NeusScale& neus,
                       const Tensor& target_rgb, const Tensor& target_mask, const PosePrior& prior,
                       const LightConfig& light, const Camera& cam, const InvertConfig& cfg);

} // namespace intrin
