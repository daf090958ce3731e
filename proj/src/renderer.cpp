#include "intrin/renderer.hpp"
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace intrin {

NeusScale NeusScale::make(double s0) {
    if (s0 <= 0.0) throw std::invalid_argument("density scale must be positive");
    NeusScale n;
    n.log_s = Param("neus_log_s", Tensor::scalar(std::log(s0)));
    return n;
}

Var NeusScale::s(Tape& t) {
    Var raw = exp(t.leaf(log_s));
    Var lo = max_const(raw, 0.01);
    return neg(max_const(neg(lo), -1e4));
}

double NeusScale::value() const {
    return std::clamp(std::exp(log_s.value.item()), 0.01, 1e4);
}

void NeusScale::collect(std::vector<Param*>& out) { out.push_back(&log_s); }

double logistic_density(double x, double s) {
    if (s <= 0.0) throw std::invalid_argument("logistic_density needs s > 0");
    double e = std::exp(-std::abs(s * x)); // symmetric in sx; never overflows
    double d = 1.0 + e;
    return s * e / (d * d);
}

static void check_sorted(const Tensor& depths) {
    int64_t s = depths.dim(-1), rows = depths.numel() / s;
    const double* p = depths.ptr();
    for (int64_t r = 0; r < rows; r++)
        for (int64_t i = 1; i < s; i++)
            if (p[r * s + i] < p[r * s + i - 1])
                throw std::invalid_argument("sample depths must be sorted ascending");
}

Var neus_weights(Tape& t, Var sdf, const Tensor& depths, Var s) {
    const auto& sh = sdf.shape();
    if (sh.size() != 2 || sh[1] < 2)
        throw std::invalid_argument("neus_weights expects sdf [R,S] with S >= 2");
    if (depths.shape != sh)
        throw std::invalid_argument("neus_weights: depths shape " + depths.shape_str() +
                                    " does not match sdf " + shape_to_string(sh));
    check_sorted(depths);
    int64_t R = sh[0], S = sh[1];
    Var cdf = sigmoid(s * sdf);
    Var c0 = slice(cdf, {0, 0}, {R, S - 1});
    Var c1 = slice(cdf, {0, 1}, {R, S - 1});
    // cap alpha just below 1 so log(1 - alpha) stays finite and the
    // telescoping sum of weights cannot exceed 1
    Var alpha = neg(max_const(neg(max_const((c0 - c1) / max_const(c0, 1e-15), 0.0)),
                              -(1.0 - 1e-7)));
    // transmittance via log-space exclusive prefix product
    Var keep = add_const(neg(alpha), 1.0);
    Var trans = exp(exclusive_cumsum(log(keep)));
    return alpha * trans;
}

Tensor neus_weights_eager(const Tensor& sdf, const Tensor& depths, double s) {
    if (sdf.ndim() != 2 || sdf.dim(1) < 2)
        throw std::invalid_argument("neus_weights expects sdf [R,S] with S >= 2");
    if (depths.shape != sdf.shape)
        throw std::invalid_argument("neus_weights: depths/sdf shape mismatch");
    check_sorted(depths);
    int64_t R = sdf.dim(0), S = sdf.dim(1);
    Tensor out({R, S - 1});
    const double* f = sdf.ptr();
    double* w = out.ptr();
    for (int64_t r = 0; r < R; r++) {
        double trans = 1.0;
        for (int64_t i = 0; i < S - 1; i++) {
            double a0 = 1.0 / (1.0 + std::exp(-s * f[r * S + i]));
            double a1 = 1.0 / (1.0 + std::exp(-s * f[r * S + i + 1]));
            double alpha = std::min(std::max((a0 - a1) / std::max(a0, 1e-15), 0.0),
                                    1.0 - 1e-7);
            w[r * (S - 1) + i] = alpha * trans;
            trans *= 1.0 - alpha;
        }
    }
    return out;
}

Tensor importance_resample(const Tensor& coarse_weights, const Tensor& coarse_depths,
                           int n, Rng& rng, double eps) {
    if (coarse_depths.ndim() != 2 || coarse_weights.ndim() != 2 ||
        coarse_weights.dim(0) != coarse_depths.dim(0) ||
        coarse_weights.dim(1) != coarse_depths.dim(1) - 1)
        throw std::invalid_argument("importance_resample expects weights [R,S-1], depths [R,S]");
    if (n < 0 || eps <= 0.0) throw std::invalid_argument("importance_resample: bad n or eps");
    if (!coarse_weights.all_finite())
        throw std::invalid_argument("importance_resample: non-finite weights");
    check_sorted(coarse_depths);

    int64_t R = coarse_depths.dim(0), S = coarse_depths.dim(1);
    Tensor out({R, S + n});
    const double* w = coarse_weights.ptr();
    const double* d = coarse_depths.ptr();
    std::vector<double> cdf((size_t)(S - 1));
    std::vector<double> draws((size_t)n);
    for (int64_t r = 0; r < R; r++) {
        double total = 0.0;
        for (int64_t i = 0; i < S - 1; i++) { total += w[r * (S - 1) + i] + eps; cdf[i] = total; }
        for (int k = 0; k < n; k++) {
            double u = rng.uniform() * total;
            int64_t bin = (int64_t)(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            bin = std::min(bin, S - 2);
            double lo_mass = bin == 0 ? 0.0 : cdf[bin - 1];
            double frac = (u - lo_mass) / (cdf[bin] - lo_mass);
            draws[k] = d[r * S + bin] + frac * (d[r * S + bin + 1] - d[r * S + bin]);
        }
        std::sort(draws.begin(), draws.end());
        // in-order merge of the two sorted lists
        double* q = out.ptr() + r * (S + n);
        int64_t i = 0, k = 0, m = 0;
        while (i < S || k < n) {
            if (k >= n || (i < S && d[r * S + i] <= draws[k])) q[m++] = d[r * S + i++];
            else q[m++] = draws[k++];
        }
        for (int64_t j = 1; j < S + n; j++) // strictness for downstream section widths
            if (q[j] <= q[j - 1]) q[j] = std::nextafter(q[j - 1], 1e300);
    }
    return out;
}

RayRender render_rays(Tape& t, const FieldBundle& fields, const Vec3& origin_obj,
                      const Tensor& dirs_obj, const Vec3& l_obj, PhongParams& phong,
                      NeusScale& scale, const RenderConfig& cfg, Rng& rng) {
    if (dirs_obj.ndim() != 2 || dirs_obj.dim(1) != 3)
        throw std::invalid_argument("render_rays expects dirs [R,3]");
    int64_t R = dirs_obj.dim(0);
    int64_t N = cfg.n_coarse, S = cfg.n_coarse + cfg.n_importance;
    if (N < 2) throw std::invalid_argument("render_rays needs at least 2 coarse samples");
    const double* dir = dirs_obj.ptr();

    // per-ray interval with the clip sphere; misses get a placeholder interval
    // and are zeroed through `hit` at the end
    Tensor hit({R, 1});
    Tensor coarse_d({R, N});
    double far = std::sqrt(origin_obj[0] * origin_obj[0] + origin_obj[1] * origin_obj[1] +
                           origin_obj[2] * origin_obj[2]);
    for (int64_t r = 0; r < R; r++) {
        Vec3 dv = {dir[3 * r], dir[3 * r + 1], dir[3 * r + 2]};
        double t0, t1;
        bool h = ray_sphere_interval(origin_obj, dv, {0, 0, 0}, cfg.clip_radius, t0, t1);
        hit.ptr()[r] = h ? 1.0 : 0.0;
        if (!h) { t0 = std::max(far - 0.1, 0.0); t1 = far + 0.1; }
        for (int64_t k = 0; k < N; k++) {
            double j = cfg.jitter ? rng.uniform() : 0.5;
            coarse_d.ptr()[r * N + k] = t0 + ((double)k + j) / (double)N * (t1 - t0);
        }
    }

    auto points_at = [&](const Tensor& depths, int64_t cols) {
        int64_t C = depths.dim(1);
        Tensor pts({R * cols, 3});
        for (int64_t r = 0; r < R; r++)
            for (int64_t k = 0; k < cols; k++) {
                double tv = depths.ptr()[r * C + k];
                for (int j = 0; j < 3; j++)
                    pts.ptr()[(r * cols + k) * 3 + j] = origin_obj[j] + tv * dir[3 * r + j];
            }
        return pts;
    };

    // coarse pass: values only, on a throwaway tape
    Tensor coarse_w;
    {
        Tape tc;
        Var fc = fields.sdf_value(tc, tc.constant(points_at(coarse_d, N)));
        Tensor fv = fc.val();
        fv.shape = {R, N};
        coarse_w = neus_weights_eager(fv, coarse_d, scale.value());
    }
    Tensor depths = importance_resample(coarse_w, coarse_d, cfg.n_importance, rng);

    // differentiable pass over the merged samples
    Tensor all_pts = points_at(depths, S);
    Var pts_v = t.constant(all_pts);
    auto [f, g] = fields.sdf_with_grad(t, pts_v);
    Var w = neus_weights(t, reshape(f, {R, S}), depths, scale.s(t)); // [R,S-1]

    // shading happens at the front point of each section
    Var g_shade = reshape(slice(reshape(g, {R, S, 3}), {0, 0, 0}, {R, S - 1, 3}), {R * (S - 1), 3});
    auto nr = unit_normals(t, g_shade);

    Tensor shade_pts({R * (S - 1), 3});
    Tensor view({R * (S - 1), 3});      // toward the camera: -d
    Tensor sub_n({R * (S - 1), 3});     // camera-facing stand-in normal where degenerate
    Tensor keep_n({R * (S - 1), 1});
    Tensor shade_depth({R, S - 1});
    for (int64_t r = 0; r < R; r++)
        for (int64_t k = 0; k < S - 1; k++) {
            int64_t i = r * (S - 1) + k;
            shade_depth.ptr()[r * (S - 1) + k] = depths.ptr()[r * S + k];
            double flag = nr.degenerate.ptr()[i];
            keep_n.ptr()[i] = 1.0 - flag;
            for (int j = 0; j < 3; j++) {
                shade_pts.ptr()[3 * i + j] = all_pts.ptr()[(r * S + k) * 3 + j];
                view.ptr()[3 * i + j] = -dir[3 * r + j];
                sub_n.ptr()[3 * i + j] = flag * -dir[3 * r + j];
            }
        }
    Var n_eff = nr.unit * t.constant(keep_n) + t.constant(sub_n);

    Var alb = fields.albedo(t, t.constant(shade_pts));
    Tensor l_row({1, 3}, {l_obj[0], l_obj[1], l_obj[2]});
    Var rad = phong_radiance(t, alb, n_eff, t.constant(l_row), t.constant(view), phong); // [R(S-1),3]

    Var w3 = reshape(w, {R, S - 1, 1});
    Var rgb = sum(reshape(rad, {R, S - 1, 3}) * w3, {1}, false); // [R,3]
    Var mask = sum(w, {1}, true);                                // [R,1]
    Var depth = sum(w * t.constant(shade_depth), {1}, true) / max_const(mask, cfg.mask_eps);
    Var alb_avg = sum(reshape(alb, {R, S - 1, 3}) * w3, {1}, false) / max_const(mask, cfg.mask_eps);

    Var hit_v = t.constant(hit);
    RayRender out;
    out.rgb = rgb * hit_v;
    out.mask = mask * hit_v;
    out.depth = depth * hit_v;
    out.albedo = alb_avg * hit_v;
    out.points = std::move(shade_pts);
    return out;
}

FieldBundle FieldBundle::of(SdfField& sdf, AlbedoField& albedo, const Tensor& z) {
    if (z.ndim() != 2 || z.dim(0) != 1 || z.dim(1) != (int64_t)sdf.latent_dim)
        throw std::invalid_argument("field latent must be [1,latent_dim], got " + z.shape_str());
    FieldBundle b;
    b.sdf_value = [&sdf, z](Tape& t, Var pts) {
        return sdf(t, pts, t.constant(z));
    };
    b.sdf_with_grad = [&sdf, z](Tape& t, Var pts) {
        return sdf.with_gradient(t, pts, t.constant(z));
    };
    b.albedo = [&albedo, z](Tape& t, Var pts) {
        return albedo(t, pts, t.constant(z));
    };
    return b;
}

FieldBundle FieldBundle::of(SdfField& sdf, AlbedoField& albedo, Var z) {
    const std::vector<int64_t> zs = z.shape();
    if (zs.size() != 2 || zs[0] != 1 || zs[1] != (int64_t)sdf.latent_dim)
        throw std::invalid_argument("field latent variable must be [1,latent_dim]");
    FieldBundle b;
    b.sdf_value = [&sdf, z](Tape& t, Var pts) { return sdf(t, pts, z); };
    b.sdf_with_grad = [&sdf, z](Tape& t, Var pts) { return sdf.with_gradient(t, pts, z); };
    b.albedo = [&albedo, z](Tape& t, Var pts) { return albedo(t, pts, z); };
    return b;
}

int64_t render_chunk_count(const RenderConfig& cfg) {
    if (cfg.rows_per_chunk <= 0) throw std::invalid_argument("rows_per_chunk must be positive");
    return (cfg.res + cfg.rows_per_chunk - 1) / cfg.rows_per_chunk;
}

Tensor chunk_dirs_obj(const PoseSample& pose, const Camera& cam, const CropRect& rect,
                      const RenderConfig& cfg, int64_t chunk) {
    int64_t y_lo = chunk * cfg.rows_per_chunk;
    int64_t y_hi = std::min(y_lo + cfg.rows_per_chunk, cfg.res);
    return pose.rotate_rows(crop_ray_dirs_rows(cam, rect, cfg.res, y_lo, y_hi));
}

Rng chunk_rng(uint64_t seed, int64_t chunk) { return Rng(seed, "render_chunk", (uint64_t)chunk); }

CropRender render_crop(Tape& t, const FieldBundle& fields, const PoseSample& pose,
                       const LightConfig& light, PhongParams& phong, NeusScale& scale,
                       const Camera& cam, const RenderConfig& cfg, uint64_t seed) {
    CropRect rect = square_window(crop_window(pose, cam));
    Vec3 l_obj = pose.rotate({light.l.data[0], light.l.data[1], light.l.data[2]});
    std::vector<Var> rgbs, masks, depths, albs;
    std::vector<Tensor> pts;
    int64_t chunks = render_chunk_count(cfg);
    for (int64_t c = 0; c < chunks; c++) {
        Rng rng = chunk_rng(seed, c);
        Tensor dirs = chunk_dirs_obj(pose, cam, rect, cfg, c);
        RayRender rr = render_rays(t, fields, pose.trans, dirs, l_obj, phong, scale, cfg, rng);
        rgbs.push_back(rr.rgb);
        masks.push_back(rr.mask);
        depths.push_back(rr.depth);
        albs.push_back(rr.albedo);
        pts.push_back(std::move(rr.points));
    }
    CropRender out;
    out.rgb = chunks == 1 ? rgbs[0] : concat(rgbs, 0);
    out.mask = chunks == 1 ? masks[0] : concat(masks, 0);
    out.depth = chunks == 1 ? depths[0] : concat(depths, 0);
    out.albedo = chunks == 1 ? albs[0] : concat(albs, 0);
    int64_t total = 0;
    for (auto& p : pts) total += p.dim(0);
    out.points = Tensor({total, 3});
    double* q = out.points.ptr();
    for (auto& p : pts) {
        std::copy(p.data.begin(), p.data.end(), q);
        q += p.numel();
    }
    out.rect = rect;
    return out;
}

CropImages render_crop_eager(const FieldBundle& fields, const PoseSample& pose,
                             const LightConfig& light, PhongParams& phong, NeusScale& scale,
                             const Camera& cam, const RenderConfig& cfg, uint64_t seed) {
    CropRect rect = square_window(crop_window(pose, cam));
    Vec3 l_obj = pose.rotate({light.l.data[0], light.l.data[1], light.l.data[2]});
    CropImages out;
    out.rgb = Tensor({cfg.res * cfg.res, 3});
    out.mask = Tensor({cfg.res * cfg.res, 1});
    out.depth = Tensor({cfg.res * cfg.res, 1});
    out.albedo = Tensor({cfg.res * cfg.res, 3});
    out.rect = rect;
    int64_t row = 0;
    int64_t chunks = render_chunk_count(cfg);
    for (int64_t c = 0; c < chunks; c++) {
        Rng rng = chunk_rng(seed, c);
        Tensor dirs = chunk_dirs_obj(pose, cam, rect, cfg, c);
        Tape t;
        RayRender rr = render_rays(t, fields, pose.trans, dirs, l_obj, phong, scale, cfg, rng);
        int64_t n = dirs.dim(0);
        std::copy(rr.rgb.val().data.begin(), rr.rgb.val().data.end(), out.rgb.ptr() + row * 3);
        std::copy(rr.mask.val().data.begin(), rr.mask.val().data.end(), out.mask.ptr() + row);
        std::copy(rr.depth.val().data.begin(), rr.depth.val().data.end(), out.depth.ptr() + row);
        std::copy(rr.albedo.val().data.begin(), rr.albedo.val().data.end(), out.albedo.ptr() + row * 3);
        row += n;
    }
    return out;
}

} // namespace intrin
