#include "intrin/inference.hpp"
#include "intrin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace intrin {

Tensor rows_to_chw_image(const Tensor& rows, int64_t res) {
    if (rows.ndim() != 2 || rows.dim(0) != res * res)
        throw std::invalid_argument("rows_to_chw_image: expected [res*res, C] rows");
    int64_t ch = rows.dim(1);
    Tensor out({ch, res, res});
    for (int64_t i = 0; i < res * res; ++i)
        for (int64_t c = 0; c < ch; ++c) out.ptr()[c * res * res + i] = rows.ptr()[i * ch + c];
    return out;
}

std::vector<PoseSample> azimuth_sweep(double az0_deg, double el_deg, double ip_deg, double dist,
                                      double lat_x, double lat_y, int n_frames) {
    if (n_frames < 1) throw std::invalid_argument("azimuth_sweep: n_frames must be >= 1");
    std::vector<PoseSample> out;
    for (int i = 0; i <= n_frames; ++i) {
        // wrap so the closing frame's azimuth equals the opening one exactly
        double az = std::fmod(az0_deg + 360.0 * (double)i / (double)n_frames, 360.0);
        out.push_back(pose_from_angles(az, el_deg, ip_deg, dist, lat_x, lat_y));
    }
    return out;
}

CropImages novel_view(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                      const PoseSample& pose, const LightConfig& light, const Camera& cam,
                      const RenderConfig& cfg) {
    RenderConfig rc = cfg;
    rc.jitter = false;
    return render_crop_eager(fields, pose, light, phong, neus, cam, rc, /*seed=*/0);
}

std::vector<CropImages> novel_views(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                                    const std::vector<PoseSample>& poses, const LightConfig& light,
                                    const Camera& cam, const RenderConfig& cfg) {
    std::vector<CropImages> out;
    out.reserve(poses.size());
    for (const PoseSample& p : poses) out.push_back(novel_view(fields, phong, neus, p, light, cam, cfg));
    return out;
}

std::vector<CropImages> relight(const FieldBundle& fields, PhongParams& phong, NeusScale& neus,
                                const PoseSample& pose, const std::vector<LightConfig>& lights,
                                const Camera& cam, const RenderConfig& cfg) {
    std::vector<CropImages> out;
    out.reserve(lights.size());
    for (const LightConfig& l : lights) out.push_back(novel_view(fields, phong, neus, pose, l, cam, cfg));
    return out;
}

std::vector<CropImages> interpolate_latents(SdfField& sdf, AlbedoField& albedo, PhongParams& phong,
                                            NeusScale& neus, const Tensor& z_a, const Tensor& z_b,
                                            int steps, const PoseSample& pose,
                                            const LightConfig& light, const Camera& cam,
                                            const RenderConfig& cfg) {
    if (steps < 2) throw std::invalid_argument("interpolate_latents: steps must be >= 2");
    if (z_a.shape != z_b.shape)
        throw std::invalid_argument("interpolate_latents: latent shapes differ");
    std::vector<CropImages> out;
    for (int i = 0; i < steps; ++i) {
        double t = (double)i / (double)(steps - 1);
        Tensor z = z_a;
        for (int64_t j = 0; j < z.numel(); ++j)
            z.ptr()[j] = (1.0 - t) * z_a.ptr()[j] + t * z_b.ptr()[j];
        out.push_back(novel_view(FieldBundle::of(sdf, albedo, z), phong, neus, pose, light, cam, cfg));
    }
    return out;
}

Tensor surface_normals_cam(const FieldBundle& fields, const PoseSample& pose, const Camera& cam,
                           const CropImages& im, int64_t res) {
    Tensor out = Tensor::zeros({3, res, res});
    Tensor dirs = crop_ray_dirs(cam, im.rect, res); // camera frame, unit rows
    std::vector<int64_t> px;
    std::vector<double> pts;
    for (int64_t i = 0; i < res * res; ++i) {
        if (im.mask.ptr()[i] <= 0.5) continue;
        Vec3 d_cam{dirs.ptr()[i * 3], dirs.ptr()[i * 3 + 1], dirs.ptr()[i * 3 + 2]};
        Vec3 d_obj = pose.rotate(d_cam);
        double t = im.depth.ptr()[i];
        for (int k = 0; k < 3; ++k) pts.push_back(pose.trans[(size_t)k] + t * d_obj[(size_t)k]);
        px.push_back(i);
    }
    const int64_t n = (int64_t)px.size();
    for (int64_t lo = 0; lo < n; lo += 4096) {
        int64_t m = std::min<int64_t>(4096, n - lo);
        Tensor chunk({m, 3});
        std::memcpy(chunk.ptr(), pts.data() + lo * 3, (size_t)(m * 3) * sizeof(double));
        Tape t;
        auto fg = fields.sdf_with_grad(t, t.constant(std::move(chunk)));
        const Tensor& g = fg.second.val();
        for (int64_t r = 0; r < m; ++r) {
            Vec3 go{g.ptr()[r * 3], g.ptr()[r * 3 + 1], g.ptr()[r * 3 + 2]};
            double nn = std::sqrt(go[0] * go[0] + go[1] * go[1] + go[2] * go[2]);
            if (nn <= 1e-12) continue;
            Vec3 n_cam = pose.rotate_back({go[0] / nn, go[1] / nn, go[2] / nn});
            int64_t i = px[(size_t)(lo + r)];
            for (int64_t c = 0; c < 3; ++c) out.ptr()[c * res * res + i] = n_cam[(size_t)c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// GAN inversion
// ---------------------------------------------------------------------------

namespace {

double proxy_of_rows(const Tensor& rgb_rows, int64_t res, const Tensor& target_chw,
                     const Tensor& mask_chw) {
    return recon_proxy_error(rows_to_chw_image(rgb_rows, res), target_chw, mask_chw);
}

} // namespace

InversionResult invert(SdfField& sdf, AlbedoField& albedo, PhongParams& phong, NeusScale& neus,
                       const Tensor& target_rgb, const Tensor& target_mask, const PosePrior& prior,
                       const LightConfig& light, const Camera& cam, const InvertConfig& cfg) {
    const int64_t res = cfg.render.res;
    if (target_rgb.shape != std::vector<int64_t>{3, res, res} ||
        target_mask.shape != std::vector<int64_t>{1, res, res})
        throw std::invalid_argument("invert: target must be [3,res,res] with a [1,res,res] mask");
    if (cfg.n_latent_avg < 1 || cfg.n_poses < 1 || cfg.top_k < 1 || cfg.refine_steps < 0)
        throw std::invalid_argument("invert: counts must be positive");
    RenderConfig rc = cfg.render;
    rc.jitter = false;
    const int64_t d = sdf.latent_dim;

    // starting latent: mean of n i.i.d. standard-normal samples
    Tensor z_bar = Tensor::zeros({1, d});
    {
        Rng zr(cfg.seed, "invert_zbar");
        for (int i = 0; i < cfg.n_latent_avg; ++i)
            for (int64_t j = 0; j < d; ++j) z_bar.ptr()[j] += zr.normal();
        for (int64_t j = 0; j < d; ++j) z_bar.ptr()[j] /= (double)cfg.n_latent_avg;
    }

    // rank prior poses by the reconstruction proxy at the averaged latent
    Rng pr(cfg.seed, "invert_poses");
    std::vector<PoseSample> poses;
    std::vector<double> errs;
    FieldBundle fb_bar = FieldBundle::of(sdf, albedo, z_bar);
    for (int i = 0; i < cfg.n_poses; ++i) {
        PoseSample pose = sample_pose(prior, pr);
        CropImages im = render_crop_eager(fb_bar, pose, light, phong, neus, cam, rc, 0);
        poses.push_back(pose);
        errs.push_back(proxy_of_rows(im.rgb, res, target_rgb, target_mask));
    }
    std::vector<int> order((size_t)cfg.n_poses);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return errs[(size_t)a] < errs[(size_t)b]; });
    const int k = std::min<int>(cfg.top_k, cfg.n_poses);

    // masked-MSE objective pieces shared by every candidate
    Tensor target_rows({res * res, 3});
    Tensor mask_rows({res * res, 1});
    double mask_n = 0;
    for (int64_t i = 0; i < res * res; ++i) {
        for (int64_t c = 0; c < 3; ++c)
            target_rows.ptr()[i * 3 + c] = target_rgb.ptr()[c * res * res + i];
        double m = target_mask.ptr()[i] > 0.5 ? 1.0 : 0.0;
        mask_rows.ptr()[i] = m;
        mask_n += m;
    }
    if (mask_n == 0) throw std::invalid_argument("invert: empty target mask");

    InversionResult result;
    result.error = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
        const PoseSample& pose = poses[(size_t)order[(size_t)c]];
        InversionCandidate cand;
        cand.pose = pose;
        cand.pre_error = errs[(size_t)order[(size_t)c]];
        cand.post_error = std::numeric_limits<double>::infinity();
        Tensor best_z = z_bar;

        Param zp("z", z_bar);
        Adam opt({&zp}, 0.9, 0.999);
        for (int step = 0; step <= cfg.refine_steps; ++step) {
            Tape t;
            Var z_in = t.leaf(zp);
            FieldBundle fb = FieldBundle::of(sdf, albedo, z_in);
            CropRender crr = render_crop(t, fb, pose, light, phong, neus, cam, rc, 0);
            double e = proxy_of_rows(crr.rgb.val(), res, target_rgb, target_mask);
            if (e < cand.post_error) {
                cand.post_error = e;
                best_z = zp.value;
            }
            if (step == cfg.refine_steps) break; // final visit is score-only
            Var diff = crr.rgb - t.constant(target_rows);
            Var loss = scale(sum(diff * diff * t.constant(mask_rows)), 1.0 / (3.0 * mask_n));
            opt.zero_grad();
            t.backward_scalar(loss);
            if (!opt.grads_finite()) break;
            opt.step(cfg.refine_lr);
        }
        if (cand.post_error < result.error) {
            result.error = cand.post_error;
            result.pose = pose;
            result.z = best_z;
        }
        result.table.push_back(std::move(cand));
    }
    return result;
}

} // namespace intrin
