#include "intrin/scene.hpp"

#include "intrin/kernels.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace intrin {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Instance segmentation
// ---------------------------------------------------------------------------

static void check_mask_shape(const Tensor& m, const char* who) {
    if (m.ndim() != 3 || m.dim(0) != 1)
        throw std::invalid_argument(std::string(who) + " expects a [1,H,W] mask, got " + m.shape_str());
}

std::vector<InstanceMask> connected_components(const Tensor& fg, int64_t min_area) {
    check_mask_shape(fg, "connected_components");
    int64_t H = fg.dim(1), W = fg.dim(2);
    if (min_area < 0) min_area = std::max<int64_t>(1, H * W / 1000);

    std::vector<int32_t> label((size_t)(H * W), -1);
    const double* p = fg.ptr();
    auto is_fg = [&](int64_t y, int64_t x) { return p[y * W + x] > 0.5; };

    std::vector<InstanceMask> comps;
    int32_t next = 0;
    std::deque<std::pair<int64_t, int64_t>> queue;
    for (int64_t sy = 0; sy < H; sy++)
        for (int64_t sx = 0; sx < W; sx++) {
            if (!is_fg(sy, sx) || label[sy * W + sx] >= 0) continue;
            InstanceMask m;
            m.mask = Tensor::zeros({1, H, W});
            m.x0 = m.x1 = sx;
            m.y0 = m.y1 = sy;
            label[sy * W + sx] = next;
            queue.push_back({sy, sx});
            while (!queue.empty()) {
                auto [y, x] = queue.front();
                queue.pop_front();
                m.mask.ptr()[y * W + x] = 1.0;
                m.area++;
                m.x0 = std::min(m.x0, x); m.x1 = std::max(m.x1, x);
                m.y0 = std::min(m.y0, y); m.y1 = std::max(m.y1, y);
                for (int64_t dy = -1; dy <= 1; dy++)
                    for (int64_t dx = -1; dx <= 1; dx++) {
                        int64_t ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        if (!is_fg(ny, nx) || label[ny * W + nx] >= 0) continue;
                        label[ny * W + nx] = next;
                        queue.push_back({ny, nx});
                    }
            }
            m.x1++; m.y1++; // half-open
            next++;
            if (m.area >= min_area) comps.push_back(std::move(m));
        }

    if (comps.empty())
        throw std::runtime_error("connected_components: no component reaches the minimum area of " +
                                 std::to_string(min_area) + " px");
    std::stable_sort(comps.begin(), comps.end(),
                     [](const InstanceMask& a, const InstanceMask& b) { return a.area > b.area; });
    return comps;
}

Tensor foreground_from_border(const Tensor& rgb, double threshold) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("foreground_from_border expects [3,H,W], got " + rgb.shape_str());
    int64_t H = rgb.dim(1), W = rgb.dim(2);
    if (H < 3 || W < 3) throw std::invalid_argument("foreground_from_border: image too small");

    double med[3];
    std::vector<double> vals;
    for (int c = 0; c < 3; c++) {
        vals.clear();
        const double* pc = rgb.ptr() + c * H * W;
        for (int64_t x = 0; x < W; x++) { vals.push_back(pc[x]); vals.push_back(pc[(H - 1) * W + x]); }
        for (int64_t y = 1; y < H - 1; y++) { vals.push_back(pc[y * W]); vals.push_back(pc[y * W + W - 1]); }
        size_t mid = vals.size() / 2;
        std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
        med[c] = vals[mid];
    }

    Tensor out = Tensor::zeros({1, H, W});
    for (int64_t i = 0; i < H * W; i++) {
        double d2 = 0;
        for (int c = 0; c < 3; c++) {
            double d = rgb.ptr()[c * H * W + i] - med[c];
            d2 += d * d;
        }
        out.ptr()[i] = std::sqrt(d2) > threshold ? 1.0 : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Crop extraction
// ---------------------------------------------------------------------------

CropSet extract_crops(const Tensor& rgb, const std::vector<InstanceMask>& masks,
                      int64_t train_res) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("extract_crops expects rgb [3,H,W], got " + rgb.shape_str());
    if (masks.empty()) throw std::invalid_argument("extract_crops: need at least one mask");
    if (train_res < 2) throw std::invalid_argument("extract_crops: train_res must be >= 2");
    int64_t H = rgb.dim(1), W = rgb.dim(2);

    int64_t side = 0;
    for (const auto& m : masks) {
        check_mask_shape(m.mask, "extract_crops");
        if (m.mask.dim(1) != H || m.mask.dim(2) != W)
            throw std::invalid_argument("extract_crops: mask size does not match the image");
        side = std::max({side, m.x1 - m.x0, m.y1 - m.y0});
    }
    if (side < 1) throw std::invalid_argument("extract_crops: empty bounding boxes");

    CropSet out;
    out.crop_side = side;
    out.res = train_res;
    for (const auto& m : masks) {
        int64_t cx = (m.x0 + m.x1) / 2, cy = (m.y0 + m.y1) / 2;
        int64_t wx = cx - side / 2, wy = cy - side / 2;
        Tensor img = Tensor::zeros({3, side, side});
        Tensor msk = Tensor::zeros({1, side, side});
        for (int64_t y = 0; y < side; y++) {
            int64_t sy = wy + y;
            if (sy < 0 || sy >= H) continue; // zero padding outside the frame
            for (int64_t x = 0; x < side; x++) {
                int64_t sx = wx + x;
                if (sx < 0 || sx >= W) continue;
                double mv = m.mask.ptr()[sy * W + sx];
                msk.ptr()[y * side + x] = mv;
                for (int c = 0; c < 3; c++)
                    img.ptr()[(c * side + y) * side + x] = rgb.ptr()[(c * H + sy) * W + sx] * mv;
            }
        }
        out.img.push_back(side == train_res ? std::move(img)
                                            : tk::bilinear_resize(img, train_res, train_res));
        out.mask.push_back(side == train_res ? std::move(msk)
                                             : tk::bilinear_resize(msk, train_res, train_res));
    }
    return out;
}

Tensor composite_background(const Tensor& crop, const Tensor& mask,
                            const std::array<double, 3>& color) {
    if (crop.ndim() != 3 || crop.dim(0) != 3)
        throw std::invalid_argument("composite_background expects crop [3,H,W], got " + crop.shape_str());
    check_mask_shape(mask, "composite_background");
    if (mask.dim(1) != crop.dim(1) || mask.dim(2) != crop.dim(2))
        throw std::invalid_argument("composite_background: mask size does not match the crop");
    int64_t n = crop.dim(1) * crop.dim(2);
    Tensor out(crop.shape);
    for (int c = 0; c < 3; c++)
        for (int64_t i = 0; i < n; i++)
            out.ptr()[c * n + i] = crop.ptr()[c * n + i] + (1.0 - mask.ptr()[i]) * color[c];
    return out;
}

// ---------------------------------------------------------------------------
// Analytic assets
// ---------------------------------------------------------------------------

// largest distance from the origin to the asset surface; must stay <= 1 so
// the projected-unit-sphere crop window always covers the object
static double asset_extent(const AssetSpec& s) {
    switch (s.kind) {
        case AssetKind::Sphere: return s.radius;
        case AssetKind::Ellipsoid:
            return s.radius * std::max({s.axes[0], s.axes[1], s.axes[2]});
        case AssetKind::Peanut: return s.radius * (s.lobe_offset + s.lobe_radius);
    }
    throw std::logic_error("asset_extent: unknown kind");
}

static void validate_asset(const AssetSpec& s) {
    if (!(s.radius > 0.0)) throw std::invalid_argument("asset radius must be positive");
    if (s.kind == AssetKind::Ellipsoid)
        for (double a : s.axes)
            if (!(a > 0.0)) throw std::invalid_argument("ellipsoid semi-axes must be positive");
    if (s.kind == AssetKind::Peanut && (!(s.lobe_radius > 0.0) || s.lobe_offset < 0.0))
        throw std::invalid_argument("peanut lobes must have positive radius and non-negative offset");
    if (asset_extent(s) > 1.0 + 1e-12)
        throw std::invalid_argument("asset extends outside the unit sphere the crop window assumes");
    if (s.albedo_amp < 0.0 || s.albedo_amp >= 0.5)
        throw std::invalid_argument("albedo amplitude must lie in [0, 0.5) to keep albedo in (0,1)");
}

double analytic_sdf(const AssetSpec& s, const Vec3& p) {
    switch (s.kind) {
        case AssetKind::Sphere:
            return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - s.radius;
        case AssetKind::Ellipsoid: {
            double a0 = s.radius * s.axes[0], a1 = s.radius * s.axes[1], a2 = s.radius * s.axes[2];
            double q0 = p[0] / a0, q1 = p[1] / a1, q2 = p[2] / a2;
            double m = std::min({a0, a1, a2});
            return (std::sqrt(q0 * q0 + q1 * q1 + q2 * q2) - 1.0) * m;
        }
        case AssetKind::Peanut: {
            double c = s.lobe_offset * s.radius, r = s.lobe_radius * s.radius;
            double d1 = std::sqrt((p[0] - c) * (p[0] - c) + p[1] * p[1] + p[2] * p[2]) - r;
            double d2 = std::sqrt((p[0] + c) * (p[0] + c) + p[1] * p[1] + p[2] * p[2]) - r;
            return std::min(d1, d2);
        }
    }
    throw std::logic_error("analytic_sdf: unknown kind");
}

Vec3 analytic_normal(const AssetSpec& s, const Vec3& p) {
    Vec3 g{0, 0, 1};
    switch (s.kind) {
        case AssetKind::Sphere: g = p; break;
        case AssetKind::Ellipsoid: {
            double a0 = s.radius * s.axes[0], a1 = s.radius * s.axes[1], a2 = s.radius * s.axes[2];
            g = {p[0] / (a0 * a0), p[1] / (a1 * a1), p[2] / (a2 * a2)};
            break;
        }
        case AssetKind::Peanut: {
            double c = s.lobe_offset * s.radius;
            double d1 = (p[0] - c) * (p[0] - c) + p[1] * p[1] + p[2] * p[2];
            double d2 = (p[0] + c) * (p[0] + c) + p[1] * p[1] + p[2] * p[2];
            g = {p[0] - (d1 <= d2 ? c : -c), p[1], p[2]};
            break;
        }
    }
    double n = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    if (n < 1e-12) return {0, 0, 1};
    return {g[0] / n, g[1] / n, g[2] / n};
}

Vec3 analytic_albedo(const AssetSpec& s, const Vec3& p) {
    Vec3 a;
    for (int c = 0; c < 3; c++) a[c] = 0.5 + s.albedo_amp * std::sin(s.albedo_freq[c] * p[c]);
    return a;
}

FieldBundle analytic_bundle(const AssetSpec& spec) {
    validate_asset(spec);
    auto sdf_ops = [spec](Tape& t, Var p) -> Var {
        switch (spec.kind) {
            case AssetKind::Sphere:
                return add_const(vecnorm(p), -spec.radius);
            case AssetKind::Ellipsoid: {
                double a0 = spec.radius * spec.axes[0], a1 = spec.radius * spec.axes[1],
                       a2 = spec.radius * spec.axes[2];
                Var q = p * t.constant(Tensor({1, 3}, {1.0 / a0, 1.0 / a1, 1.0 / a2}));
                return scale(add_const(vecnorm(q), -1.0), std::min({a0, a1, a2}));
            }
            case AssetKind::Peanut: {
                double c = spec.lobe_offset * spec.radius, r = spec.lobe_radius * spec.radius;
                Var d1 = add_const(vecnorm(p + t.constant(Tensor({1, 3}, {-c, 0, 0}))), -r);
                Var d2 = add_const(vecnorm(p + t.constant(Tensor({1, 3}, {c, 0, 0}))), -r);
                return neg(elem_max(neg(d1), neg(d2))); // exact union min(d1, d2)
            }
        }
        throw std::logic_error("analytic_bundle: unknown kind");
    };
    FieldBundle b;
    b.sdf_value = sdf_ops;
    b.sdf_with_grad = [sdf_ops](Tape& t, Var p) {
        Var f = sdf_ops(t, p);
        Tensor seed = Tensor::full(f.shape(), 1.0);
        Var g = t.grad(f, std::vector<Var>{p}, &seed)[0];
        return std::make_pair(f, g);
    };
    b.albedo = [spec](Tape& t, Var p) -> Var {
        Tensor freq({1, 3}, {spec.albedo_freq[0], spec.albedo_freq[1], spec.albedo_freq[2]});
        return add_const(scale(sin(p * t.constant(freq)), spec.albedo_amp), 0.5);
    };
    return b;
}

// ---------------------------------------------------------------------------
// Synthetic scene generation
// ---------------------------------------------------------------------------

static PhongParams phong_from_effective(double kd, double ka) {
    auto inv_softplus = [](double v) { return std::log(std::exp(v) - 1.0); };
    PhongParams p = PhongParams::make(); // ks and alpha stay at their ~0 defaults
    p.kd_raw.value = Tensor({1}, {inv_softplus(kd)});
    p.ka_raw.value = Tensor({1}, {inv_softplus(ka)});
    return p;
}

// square crop side of a probe instance centered on the ray through pixel
// (u, v) at camera-axis distance z
static int64_t probe_side(const Camera& cam, double u, double v, double z) {
    double f = cam.focal_px();
    Vec3 c = {z * (u - cam.cx()) / f, z * (v - cam.cy()) / f, z};
    PoseSample probe;
    probe.trans = {-c[0], -c[1], -c[2]}; // identity rotation: t = -R c = -c
    CropRect r = square_window(crop_window(probe, cam));
    return r.width();
}

static bool rects_overlap(const CropRect& a, const CropRect& b) {
    return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

SynthScene synth_scene_generate(const SynthConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("synth_scene_generate: need k >= 1 instances");
    if (cfg.image_size < 32) throw std::invalid_argument("synth_scene_generate: image too small");
    if (cfg.radius_jitter < 0.0 || cfg.radius_jitter >= 1.0)
        throw std::invalid_argument("radius jitter must lie in [0,1)");
    cfg.prior.validate_ranges();
    validate_asset(cfg.asset);
    if (asset_extent(cfg.asset) * (1.0 + cfg.radius_jitter) > 1.0 + 1e-12)
        throw std::invalid_argument("radius jitter can push the asset outside the unit sphere");
    if (cfg.gt_kd < 0.0 || cfg.gt_ka < 0.0 ||
        (cfg.gt_kd + cfg.gt_ka) * (0.5 + cfg.asset.albedo_amp) > 1.0 + 1e-9)
        throw std::invalid_argument("ground-truth shading would clip above 1");

    Camera cam{cfg.fov_deg, cfg.image_size, cfg.image_size};

    // grid layout: g x g cells, sized for the worst-case crop at the nearest
    // allowed distance seen from the frame corner
    int64_t g = (int64_t)std::ceil(std::sqrt((double)cfg.k));
    int64_t cell = cfg.image_size / g;
    int64_t side_max = probe_side(cam, 0.5, 0.5, cfg.prior.dist_lo);
    if (side_max + 2 > cell)
        throw std::invalid_argument(
            "grid overflow: " + std::to_string(cfg.k) + " instances of crop side " +
            std::to_string(side_max) + " px do not fit " + std::to_string(cell) + " px cells");
    double jit = std::max(0.0, 0.5 * (double)(cell - side_max) - 1.0);
    double off = 0.5 * (double)(cfg.image_size - g * cell);

    SynthScene scene;
    scene.cam = cam;
    scene.cfg = cfg;
    Rng bg_rng(cfg.seed, "synth_bg");
    for (int c = 0; c < 3; c++) scene.bg[c] = bg_rng.uniform();

    PhongParams phong = phong_from_effective(cfg.gt_kd, cfg.gt_ka);
    NeusScale neus = NeusScale::make(cfg.neus_s);
    LightConfig light = LightConfig::from(cfg.light[0], cfg.light[1], cfg.light[2]);
    double f = cam.focal_px();

    scene.image = Tensor({3, cfg.image_size, cfg.image_size});
    for (int c = 0; c < 3; c++)
        std::fill(scene.image.ptr() + c * cfg.image_size * cfg.image_size,
                  scene.image.ptr() + (c + 1) * cfg.image_size * cfg.image_size, scene.bg[c]);

    for (int64_t k = 0; k < cfg.k; k++) {
        Rng rng(cfg.seed, "synth_inst", (uint64_t)k);
        SynthInstance inst;
        inst.pose = sample_pose(cfg.prior, rng);
        inst.radius_factor = cfg.radius_jitter > 0.0
                                 ? rng.uniform(1.0 - cfg.radius_jitter, 1.0 + cfg.radius_jitter)
                                 : 1.0;
        inst.render_seed = Rng(cfg.seed, "synth_render", (uint64_t)k).next_u64();

        // keep the sampled rotation and axial distance, recenter laterally on
        // the jittered cell center's pixel ray
        double z = inst.pose.object_center_cam()[2];
        int64_t gy = k / g, gx = k % g;
        double u = off + ((double)gx + 0.5) * (double)cell + rng.uniform(-jit, jit);
        double v = off + ((double)gy + 0.5) * (double)cell + rng.uniform(-jit, jit);
        Vec3 c_cam = {z * (u - cam.cx()) / f, z * (v - cam.cy()) / f, z};
        Vec3 rc = inst.pose.rotate(c_cam);
        inst.pose.trans = {-rc[0], -rc[1], -rc[2]};

        AssetSpec spec_k = cfg.asset;
        spec_k.radius *= inst.radius_factor;
        FieldBundle bundle = analytic_bundle(spec_k);

        inst.rect = square_window(crop_window(inst.pose, cam));
        int64_t s = inst.rect.width();
        if (inst.rect.x0 < 0 || inst.rect.y0 < 0 || inst.rect.x1 > cfg.image_size ||
            inst.rect.y1 > cfg.image_size)
            throw std::logic_error("internal: instance crop left the frame");

        RenderConfig rcfg;
        rcfg.res = s;
        rcfg.n_coarse = (int)cfg.n_coarse;
        rcfg.n_importance = (int)cfg.n_importance;
        rcfg.jitter = false;
        CropImages im = render_crop_eager(bundle, inst.pose, light, phong, neus, cam, rcfg,
                                          inst.render_seed);

        inst.rgb = Tensor({3, s, s});
        inst.mask = Tensor({1, s, s});
        inst.depth = Tensor({1, s, s});
        inst.albedo = Tensor({3, s, s});
        inst.normal_cam = Tensor::zeros({3, s, s});
        Tensor dirs_cam = crop_ray_dirs(cam, inst.rect, s);
        for (int64_t i = 0; i < s * s; i++) {
            for (int c = 0; c < 3; c++) {
                inst.rgb.ptr()[c * s * s + i] = im.rgb.ptr()[i * 3 + c];
                inst.albedo.ptr()[c * s * s + i] = im.albedo.ptr()[i * 3 + c];
            }
            inst.mask.ptr()[i] = im.mask.ptr()[i];
            inst.depth.ptr()[i] = im.depth.ptr()[i];
            if (im.mask.ptr()[i] > 0.5) {
                Vec3 d_cam = {dirs_cam.ptr()[i * 3], dirs_cam.ptr()[i * 3 + 1],
                              dirs_cam.ptr()[i * 3 + 2]};
                Vec3 d_obj = inst.pose.rotate(d_cam);
                double td = im.depth.ptr()[i];
                Vec3 p = {inst.pose.trans[0] + td * d_obj[0], inst.pose.trans[1] + td * d_obj[1],
                          inst.pose.trans[2] + td * d_obj[2]};
                Vec3 n_cam = inst.pose.rotate_back(analytic_normal(spec_k, p));
                for (int c = 0; c < 3; c++) inst.normal_cam.ptr()[c * s * s + i] = n_cam[c];
            }
        }

        // composite over the background color at the instance's rect
        int64_t is = cfg.image_size;
        for (int64_t y = 0; y < s; y++)
            for (int64_t x = 0; x < s; x++) {
                double mv = inst.mask.ptr()[y * s + x];
                for (int c = 0; c < 3; c++)
                    scene.image.ptr()[(c * is + inst.rect.y0 + y) * is + inst.rect.x0 + x] =
                        inst.rgb.ptr()[(c * s + y) * s + x] + (1.0 - mv) * scene.bg[c];
            }

        scene.items.push_back(std::move(inst));
    }

    for (size_t a = 0; a < scene.items.size(); a++)
        for (size_t b = a + 1; b < scene.items.size(); b++)
            if (rects_overlap(scene.items[a].rect, scene.items[b].rect))
                throw std::logic_error("internal: grid produced overlapping instance crops");
    return scene;
}

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

static json asset_to_json(const AssetSpec& a) {
    const char* kind = a.kind == AssetKind::Sphere      ? "sphere"
                       : a.kind == AssetKind::Ellipsoid ? "ellipsoid"
                                                        : "peanut";
    return json{{"kind", kind},
                {"radius", a.radius},
                {"axes", a.axes},
                {"lobe_offset", a.lobe_offset},
                {"lobe_radius", a.lobe_radius},
                {"albedo_freq", a.albedo_freq},
                {"albedo_amp", a.albedo_amp}};
}

static AssetSpec asset_from_json(const json& j) {
    AssetSpec a;
    std::string kind = j.at("kind");
    if (kind == "sphere") a.kind = AssetKind::Sphere;
    else if (kind == "ellipsoid") a.kind = AssetKind::Ellipsoid;
    else if (kind == "peanut") a.kind = AssetKind::Peanut;
    else throw std::invalid_argument("unknown asset kind '" + kind + "'");
    a.radius = j.at("radius");
    a.axes = j.at("axes");
    a.lobe_offset = j.at("lobe_offset");
    a.lobe_radius = j.at("lobe_radius");
    a.albedo_freq = j.at("albedo_freq");
    a.albedo_amp = j.at("albedo_amp");
    return a;
}

static json prior_to_json(const PosePrior& p) {
    return json{{"kind", p.kind == PosePrior::Kind::Sphere ? "sphere" : "plane"},
                {"azimuth", {p.az_lo, p.az_hi}},
                {"elevation", {p.el_lo, p.el_hi}},
                {"in_plane", {p.ip_lo, p.ip_hi}},
                {"distance", {p.dist_lo, p.dist_hi}},
                {"lateral", {p.lat_lo, p.lat_hi}}};
}

static PosePrior prior_from_json(const json& j) {
    PosePrior p;
    std::string kind = j.at("kind");
    if (kind == "sphere") p.kind = PosePrior::Kind::Sphere;
    else if (kind == "plane") p.kind = PosePrior::Kind::Plane;
    else throw std::invalid_argument("unknown prior kind '" + kind + "'");
    auto pair = [&](const char* key, double& lo, double& hi) {
        auto v = j.at(key);
        lo = v.at(0); hi = v.at(1);
    };
    pair("azimuth", p.az_lo, p.az_hi);
    pair("elevation", p.el_lo, p.el_hi);
    pair("in_plane", p.ip_lo, p.ip_hi);
    pair("distance", p.dist_lo, p.dist_hi);
    pair("lateral", p.lat_lo, p.lat_hi);
    p.validate_ranges();
    return p;
}

void save_synth_scene(const SynthScene& scene, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "gt");
    int64_t is = scene.cfg.image_size;

    write_png((fs::path(dir) / "scene.png").string(), float_to_image(scene.image));

    json meta;
    meta["image_size"] = is;
    meta["fov_deg"] = scene.cfg.fov_deg;
    meta["k"] = scene.cfg.k;
    meta["background"] = scene.bg;
    meta["light"] = scene.cfg.light;
    meta["gt_kd"] = scene.cfg.gt_kd;
    meta["gt_ka"] = scene.cfg.gt_ka;
    meta["neus_s"] = scene.cfg.neus_s;
    meta["n_coarse"] = scene.cfg.n_coarse;
    meta["n_importance"] = scene.cfg.n_importance;
    meta["seed"] = scene.cfg.seed;
    meta["radius_jitter"] = scene.cfg.radius_jitter;
    meta["depth_unit"] = 0.001; // pgm sample value = depth / depth_unit
    meta["asset"] = asset_to_json(scene.cfg.asset);
    meta["prior"] = prior_to_json(scene.cfg.prior);

    for (size_t k = 0; k < scene.items.size(); k++) {
        const SynthInstance& inst = scene.items[k];
        int64_t s = inst.rect.width();
        std::string ks = std::to_string(k);

        // full-frame mask: crop placed at its rect
        Tensor full = Tensor::zeros({1, is, is});
        for (int64_t y = 0; y < s; y++)
            for (int64_t x = 0; x < s; x++)
                full.ptr()[(inst.rect.y0 + y) * is + inst.rect.x0 + x] = inst.mask.ptr()[y * s + x];
        write_png((fs::path(dir) / ("mask_" + ks + ".png")).string(), float_to_image(full));

        std::ofstream pf(fs::path(dir) / "gt" / ("pose_" + ks + ".txt"));
        if (!pf) throw std::runtime_error("cannot write pose file for instance " + ks);
        char buf[512];
        for (int r = 0; r < 3; r++) {
            snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", inst.pose.rot[3 * r],
                     inst.pose.rot[3 * r + 1], inst.pose.rot[3 * r + 2], inst.pose.trans[r]);
            pf << buf;
        }
        pf.close();

        std::vector<uint16_t> dpx((size_t)(s * s));
        for (int64_t i = 0; i < s * s; i++) {
            double d = inst.depth.ptr()[i] * 1000.0;
            if (d < 0.0 || d > 65535.0)
                throw std::runtime_error("depth exceeds the 16-bit pgm scale at unit 0.001");
            dpx[(size_t)i] = (uint16_t)std::lround(d);
        }
        write_pgm16((fs::path(dir) / "gt" / ("depth_" + ks + ".pgm")).string(), dpx, s, s);

        Tensor nrm(inst.normal_cam.shape);
        for (int64_t i = 0; i < nrm.numel(); i++)
            nrm.ptr()[i] = 0.5 * (inst.normal_cam.ptr()[i] + 1.0);
        write_png((fs::path(dir) / "gt" / ("normal_" + ks + ".png")).string(), float_to_image(nrm));
        write_png((fs::path(dir) / "gt" / ("albedo_" + ks + ".png")).string(),
                  float_to_image(inst.albedo));
    }

    std::ofstream mf(fs::path(dir) / "gt" / "meta.json");
    if (!mf) throw std::runtime_error("cannot write " + dir + "/gt/meta.json");
    mf << meta.dump(2) << "\n";
}

LoadedScene load_scene_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    LoadedScene out;
    out.image = image_to_float(read_png((fs::path(dir) / "scene.png").string()));
    if (out.image.dim(0) == 1) { // promote gray scenes to rgb
        Tensor rgb({3, out.image.dim(1), out.image.dim(2)});
        for (int c = 0; c < 3; c++)
            std::copy(out.image.ptr(), out.image.ptr() + out.image.numel(),
                      rgb.ptr() + c * out.image.numel());
        out.image = std::move(rgb);
    }
    out.cam.height = out.image.dim(1);
    out.cam.width = out.image.dim(2);

    for (int64_t k = 0;; k++) {
        fs::path mp = fs::path(dir) / ("mask_" + std::to_string(k) + ".png");
        if (!fs::exists(mp)) break;
        Tensor m = image_to_float(read_png(mp.string()));
        if (m.dim(0) != 1) throw std::runtime_error("mask " + mp.string() + " must be grayscale");
        if (m.dim(1) != out.image.dim(1) || m.dim(2) != out.image.dim(2))
            throw std::runtime_error("mask " + mp.string() + " does not match the scene size");
        out.masks.push_back(std::move(m));
    }

    fs::path meta_path = fs::path(dir) / "gt" / "meta.json";
    if (fs::exists(meta_path)) {
        std::ifstream mf(meta_path);
        json meta = json::parse(mf);
        out.cam.fov_deg = meta.at("fov_deg");
        out.light = meta.at("light");
        if (meta.contains("prior")) {
            out.prior = prior_from_json(meta.at("prior"));
            out.has_prior = true;
        }
    }
    return out;
}

} // namespace intrin
