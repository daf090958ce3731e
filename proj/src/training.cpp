#include "intrin/training.hpp"
#include "intrin/renderer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace intrin {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config i/o

json cfg_to_json(const TrainConfig& c) {
    json j;
    j["res"] = c.res;
    j["lambda_reg"] = c.lambda_reg;
    j["lambda_eik"] = c.lambda_eik;
    j["lambda_pose"] = c.lambda_pose;
    j["lambda_mask"] = c.lambda_mask;
    j["lr_gen"] = c.lr_gen;
    j["lr_disc"] = c.lr_disc;
    j["batch"] = c.batch;
    j["iters"] = c.iters;
    j["seed"] = c.seed;
    j["sdf_width"] = c.sdf_width;
    j["sdf_depth"] = c.sdf_depth;
    j["alb_width"] = c.alb_width;
    j["alb_depth"] = c.alb_depth;
    j["latent_dim"] = c.latent_dim;
    j["n_coarse"] = c.n_coarse;
    j["n_importance"] = c.n_importance;
    j["fov_deg"] = c.fov_deg;
    j["sphere_init_iters"] = c.sphere_init_iters;
    return j;
}

TrainConfig cfg_from_json(const json& j) {
    TrainConfig c;
    c.res = j.at("res").get<int64_t>();
    c.lambda_reg = j.at("lambda_reg").get<double>();
    c.lambda_eik = j.at("lambda_eik").get<double>();
    c.lambda_pose = j.at("lambda_pose").get<double>();
    c.lambda_mask = j.at("lambda_mask").get<double>();
    c.lr_gen = j.at("lr_gen").get<double>();
    c.lr_disc = j.at("lr_disc").get<double>();
    c.batch = j.at("batch").get<int64_t>();
    c.iters = j.at("iters").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
    c.sdf_width = j.at("sdf_width").get<int64_t>();
    c.sdf_depth = j.at("sdf_depth").get<int>();
    c.alb_width = j.at("alb_width").get<int64_t>();
    c.alb_depth = j.at("alb_depth").get<int>();
    c.latent_dim = j.at("latent_dim").get<int64_t>();
    c.n_coarse = j.at("n_coarse").get<int>();
    c.n_importance = j.at("n_importance").get<int>();
    c.fov_deg = j.at("fov_deg").get<double>();
    c.sphere_init_iters = j.at("sphere_init_iters").get<int>();
    return c;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

json prior_to_json(const PosePrior& p) {
    json j;
    j["kind"] = p.kind == PosePrior::Kind::Sphere ? "sphere" : "plane";
    j["az"] = {p.az_lo, p.az_hi};
    j["el"] = {p.el_lo, p.el_hi};
    j["ip"] = {p.ip_lo, p.ip_hi};
    j["dist"] = {p.dist_lo, p.dist_hi};
    j["lat"] = {p.lat_lo, p.lat_hi};
    return j;
}

PosePrior prior_from_json(const json& j) {
    PosePrior p;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "sphere")
        p.kind = PosePrior::Kind::Sphere;
    else if (kind == "plane")
        p.kind = PosePrior::Kind::Plane;
    else
        throw std::runtime_error("pose prior kind must be 'sphere' or 'plane', got '" + kind + "'");
    auto pair = [&](const char* key, double& lo, double& hi) {
        const json& a = j.at(key);
        lo = a.at(0).get<double>();
        hi = a.at(1).get<double>();
    };
    pair("az", p.az_lo, p.az_hi);
    pair("el", p.el_lo, p.el_hi);
    pair("ip", p.ip_lo, p.ip_hi);
    pair("dist", p.dist_lo, p.dist_hi);
    pair("lat", p.lat_lo, p.lat_hi);
    p.validate_ranges();
    return p;
}

// ----------------------------------------------------------- tensor shuffles

// [res*res, C] row-major rows -> [C, res, res]
Tensor rows_to_chw_eager(const Tensor& rows, int64_t res) {
    int64_t ch = rows.shape[1];
    Tensor out({ch, res, res});
    const double* src = rows.ptr();
    double* dst = out.ptr();
    for (int64_t i = 0; i < res * res; ++i)
        for (int64_t c = 0; c < ch; ++c) dst[c * res * res + i] = src[i * ch + c];
    return out;
}

// stack same-shape [C,H,W] crops -> [B,C,H,W]
Tensor stack_chw_eager(const std::vector<Tensor>& crops) {
    if (crops.empty()) throw std::invalid_argument("stack_chw_eager: empty batch");
    const auto& s = crops[0].shape;
    int64_t per = crops[0].numel();
    Tensor out({(int64_t)crops.size(), s[0], s[1], s[2]});
    for (size_t b = 0; b < crops.size(); ++b) {
        if (crops[b].shape != s) throw std::invalid_argument("stack_chw_eager: shape mismatch");
        std::memcpy(out.ptr() + (int64_t)b * per, crops[b].ptr(), (size_t)per * sizeof(double));
    }
    return out;
}

Models make_models(const TrainConfig& cfg) {
    Rng rng(cfg.seed, "model_init");
    return Models::make(cfg, rng);
}

// ------------------------------------------------------------ binary helpers

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

uint32_t get_u32(const std::string& s, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (uint32_t)(unsigned char)s[off + i] << (8 * i);
    return v;
}

uint64_t get_u64(const std::string& s, size_t off) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)(unsigned char)s[off + i] << (8 * i);
    return v;
}

double get_f64(const std::string& s, size_t off) {
    uint64_t bits = get_u64(s, off);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

constexpr char kCkptMagic[9] = "INTRINCK";
constexpr uint32_t kCkptVersion = 1;

json shapes_json(std::vector<Param*>& ps) {
    json arr = json::array();
    for (Param* p : ps) arr.push_back({p->name, p->value.shape});
    return arr;
}

} // namespace

// --------------------------------------------------------------- TrainConfig

void TrainConfig::validate() const {
    if (res < 16 || res % 16 != 0)
        throw std::invalid_argument("train config: res must be a positive multiple of 16");
    if (lambda_reg < 0 || lambda_eik < 0 || lambda_pose < 0 || lambda_mask < 0)
        throw std::invalid_argument("train config: loss weights must be >= 0");
    if (!(lr_gen > 0) || !(lr_disc > 0))
        throw std::invalid_argument("train config: learning rates must be > 0");
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (iters < 0) throw std::invalid_argument("train config: iters must be >= 0");
    if (sdf_width < 1 || alb_width < 1 || sdf_depth < 1 || alb_depth < 1)
        throw std::invalid_argument("train config: network widths and depths must be >= 1");
    if (latent_dim < 1) throw std::invalid_argument("train config: latent_dim must be >= 1");
    if (n_coarse < 2) throw std::invalid_argument("train config: n_coarse must be >= 2");
    if (n_importance < 0) throw std::invalid_argument("train config: n_importance must be >= 0");
    if (!(fov_deg > 0) || !(fov_deg < 180))
        throw std::invalid_argument("train config: fov_deg must be in (0, 180)");
    if (sphere_init_iters < 0)
        throw std::invalid_argument("train config: sphere_init_iters must be >= 0");
}

uint64_t TrainConfig::hash() const { return fnv1a64(cfg_to_json(*this).dump()); }

// ---------------------------------------------------------------- LossReport

bool LossReport::finite() const {
    return std::isfinite(adv) && std::isfinite(mask) && std::isfinite(pose) &&
           std::isfinite(eikonal) && std::isfinite(r1);
}

std::string LossReport::line(int64_t step) const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "step=%" PRId64 " adv=%.17g mask=%.17g pose=%.17g eikonal=%.17g r1=%.17g", step,
                  adv, mask, pose, eikonal, r1);
    return buf;
}

void append_loss_log(const std::string& path, int64_t step, const LossReport& report) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cannot open loss log for append: " + path);
    f << report.line(step) << '\n';
    if (!f) throw std::runtime_error("write failed on loss log: " + path);
}

// -------------------------------------------------------------------- Models

Models Models::make(const TrainConfig& cfg, Rng& rng) {
    Models m;
    m.sdf = SdfField::make(cfg.sdf_width, cfg.sdf_depth, rng, cfg.latent_dim);
    m.albedo = AlbedoField::make(cfg.alb_width, cfg.alb_depth, rng, cfg.latent_dim);
    m.phong = PhongParams::make();
    m.neus = NeusScale::make();
    m.disc_img = ImageDiscriminator::make(cfg.res, rng);
    m.disc_mask = MaskDiscriminator::make(cfg.res, rng);
    return m;
}

std::vector<Param*> Models::gen_params() {
    std::vector<Param*> ps;
    sdf.collect(ps);
    albedo.collect(ps);
    phong.collect(ps);
    neus.collect(ps);
    return ps;
}

std::vector<Param*> Models::disc_params() {
    std::vector<Param*> ps;
    disc_img.collect(ps);
    disc_mask.collect(ps);
    return ps;
}

// ------------------------------------------------------------------- Trainer

Trainer::Trainer(const TrainConfig& c, const PosePrior& p, const std::array<double, 3>& l,
                 const Camera& cm)
    : cfg(c), prior(p), light_cam(l), cam(cm), models(make_models(c)),
      opt_gen(models.gen_params(), 0.0, 0.99), opt_disc(models.disc_params(), 0.0, 0.99) {}

std::unique_ptr<Trainer> Trainer::make(const TrainConfig& cfg, const PosePrior& prior,
                                       const std::array<double, 3>& light, const Camera& cam,
                                       bool pretrain) {
    cfg.validate();
    prior.validate_ranges();
    double ln = std::sqrt(light[0] * light[0] + light[1] * light[1] + light[2] * light[2]);
    if (!(ln > 0)) throw std::invalid_argument("trainer: light direction must be nonzero");
    std::unique_ptr<Trainer> tr(new Trainer(cfg, prior, light, cam));
    if (pretrain && cfg.sphere_init_iters > 0) {
        Rng pr(cfg.seed, "sphere_init");
        sphere_init_pretrain(tr->models.sdf, 0.8, cfg.sphere_init_iters, pr);
    }
    return tr;
}

LossReport Trainer::train_step(const CropSet& crops) {
    if (crops.img.empty()) throw std::invalid_argument("train_step: empty crop set");
    if (crops.res != cfg.res)
        throw std::invalid_argument("train_step: crop resolution does not match config res");
    const int64_t B = cfg.batch;
    const int64_t res = cfg.res;
    const int64_t step = step_index;

    RenderConfig rcfg;
    rcfg.res = res;
    rcfg.n_coarse = cfg.n_coarse;
    rcfg.n_importance = cfg.n_importance;
    rcfg.jitter = true;

    LightConfig light = LightConfig::from(light_cam[0], light_cam[1], light_cam[2]);
    const Vec3 l_cam{light.l.ptr()[0], light.l.ptr()[1], light.l.ptr()[2]};

    Rng bg_rng(cfg.seed, "bg", (uint64_t)step);
    const std::array<double, 3> bg{bg_rng.uniform(), bg_rng.uniform(), bg_rng.uniform()};
    const std::vector<double> bg_fill{bg[0], bg[1], bg[2]};
    const std::vector<double> zero_fill{0.0};
    const AugmentParams aug;

    const bool use_pose = cfg.lambda_pose > 0;
    const bool use_mask = cfg.lambda_mask > 0;

    // --- per-slot sampling and detached fake renders -------------------------
    struct Slot {
        Tensor z;
        PoseSample pose;
        uint64_t render_seed = 0;
        AugmentTransform tf;
        CropImages im;
    };
    std::vector<Slot> slots((size_t)B);
    std::vector<Tensor> fake_imgs, fake_masks;
    std::vector<Mat3> fake_rots;
    for (int64_t b = 0; b < B; ++b) {
        Slot& s = slots[(size_t)b];
        Rng zr(cfg.seed, "z", (uint64_t)step, (uint64_t)b);
        s.z = Tensor({1, cfg.latent_dim});
        for (int64_t i = 0; i < cfg.latent_dim; ++i) s.z.ptr()[i] = zr.normal();
        Rng pr(cfg.seed, "pose", (uint64_t)step, (uint64_t)b);
        s.pose = sample_pose(prior, pr);
        s.render_seed = Rng(cfg.seed, "render", (uint64_t)step, (uint64_t)b).next_u64();
        Rng ar(cfg.seed, "aug_fake", (uint64_t)step, (uint64_t)b);
        s.tf = sample_augment(aug, ar, res);

        FieldBundle fb = FieldBundle::of(models.sdf, models.albedo, s.z);
        s.im = render_crop_eager(fb, s.pose, light, models.phong, models.neus, cam, rcfg,
                                 s.render_seed);

        Tensor rgb_chw = rows_to_chw_eager(s.im.rgb, res);
        Tensor mask_chw = rows_to_chw_eager(s.im.mask, res);
        Tensor comp = composite_background(rgb_chw, mask_chw, bg);
        fake_imgs.push_back(augment_eager(comp, s.tf, bg_fill));
        fake_masks.push_back(augment_eager(mask_chw, s.tf, zero_fill));
        fake_rots.push_back(s.pose.rot);
    }
    Tensor fake_img_batch = stack_chw_eager(fake_imgs);
    Tensor fake_mask_batch = stack_chw_eager(fake_masks);

    // --- real batch: sample with replacement, composite, augment -------------
    Rng idx_rng(cfg.seed, "real", (uint64_t)step);
    std::vector<Tensor> real_imgs, real_masks;
    for (int64_t b = 0; b < B; ++b) {
        int64_t i = idx_rng.uniform_int((int64_t)crops.img.size());
        Rng ar(cfg.seed, "aug_real", (uint64_t)step, (uint64_t)b);
        AugmentTransform tf = sample_augment(aug, ar, res);
        Tensor comp = composite_background(crops.img[(size_t)i], crops.mask[(size_t)i], bg);
        real_imgs.push_back(augment_eager(comp, tf, bg_fill));
        real_masks.push_back(augment_eager(crops.mask[(size_t)i], tf, zero_fill));
    }
    Tensor real_img_batch = stack_chw_eager(real_imgs);
    Tensor real_mask_batch = stack_chw_eager(real_masks);

    LossReport report;

    // --- phase A: discriminators on detached fakes ---------------------------
    opt_disc.zero_grad();
    opt_gen.zero_grad();
    {
        Tape td;
        auto img_logits = [this](Tape& t, Var x) { return models.disc_img.logits(t, x); };
        auto mask_logits = [this](Tape& t, Var x) { return models.disc_mask.logits(t, x); };

        AdvLosses img_adv = adversarial_losses(td, img_logits, real_img_batch,
                                               td.constant(fake_img_batch), /*with_r1=*/true);
        Var d_total = img_adv.d_loss + scale(img_adv.r1, cfg.lambda_reg);

        double pose_val = 0.0;
        if (use_pose) {
            auto lp = models.disc_img.logits_pose(td, td.constant(fake_img_batch));
            Var pt = pose_loss(td, lp.second, embed_rows(fake_rots));
            d_total = d_total + scale(pt, cfg.lambda_pose);
            pose_val = pt.val().item();
        }

        double mask_d_val = 0.0;
        if (use_mask) {
            AdvLosses mask_adv = adversarial_losses(td, mask_logits, real_mask_batch,
                                                    td.constant(fake_mask_batch),
                                                    /*with_r1=*/false);
            d_total = d_total + scale(mask_adv.d_loss, cfg.lambda_mask);
            mask_d_val = mask_adv.d_loss.val().item();
        }

        double d_val = d_total.val().item();
        double d_img_val = img_adv.d_loss.val().item();
        double r1_val = img_adv.r1.val().item();
        if (!std::isfinite(d_val)) {
            std::ostringstream msg;
            msg << "non-finite discriminator loss at step " << step << ": d_img=" << d_img_val
                << " r1=" << r1_val << " pose=" << pose_val << " d_mask=" << mask_d_val;
            throw std::runtime_error(msg.str());
        }
        td.backward_scalar(d_total);
        if (opt_disc.grads_finite()) {
            opt_disc.step(cfg.lr_disc);
        } else {
            ++skip_count;
            std::fprintf(stderr, "step %" PRId64 ": non-finite discriminator gradients, skipped\n",
                         step);
        }
        report.r1 = cfg.lambda_reg * r1_val;
        report.pose = cfg.lambda_pose * pose_val;
    }

    // --- phase B: generator through replayed render chunks -------------------
    opt_gen.zero_grad();
    std::vector<Tensor> rgb_grads((size_t)B), mask_grads((size_t)B);
    {
        Tape tg;
        Var bg_c = tg.constant(Tensor({3, 1, 1}, {bg[0], bg[1], bg[2]}));
        std::vector<Var> inputs;
        std::vector<Var> img_crops, mask_crops;
        for (int64_t b = 0; b < B; ++b) {
            Slot& s = slots[(size_t)b];
            Var rgb_in = tg.input(s.im.rgb, /*requires_grad=*/true);
            Var mask_in = tg.input(s.im.mask, /*requires_grad=*/true);
            inputs.push_back(rgb_in);
            inputs.push_back(mask_in);
            Var img_chw = rows_to_chw(rgb_in, res);
            Var mask_chw = rows_to_chw(mask_in, res);
            Var comp = img_chw + add_const(neg(mask_chw), 1.0) * bg_c;
            img_crops.push_back(augment(tg, comp, s.tf, bg_fill));
            mask_crops.push_back(augment(tg, mask_chw, s.tf, zero_fill));
        }
        auto img_logits = [this](Tape& t, Var x) { return models.disc_img.logits(t, x); };
        Var g_img = generator_adv_loss(tg, img_logits, stack_batch(img_crops));
        Var g_total = g_img;
        double g_mask_val = 0.0;
        if (use_mask) {
            auto mask_logits = [this](Tape& t, Var x) { return models.disc_mask.logits(t, x); };
            Var g_mask = generator_adv_loss(tg, mask_logits, stack_batch(mask_crops));
            g_total = g_total + scale(g_mask, cfg.lambda_mask);
            g_mask_val = g_mask.val().item();
        }
        double g_img_val = g_img.val().item();
        if (!std::isfinite(g_total.val().item())) {
            std::ostringstream msg;
            msg << "non-finite generator loss at step " << step << ": g_img=" << g_img_val
                << " g_mask=" << g_mask_val;
            throw std::runtime_error(msg.str());
        }
        // gradients w.r.t. the rendered pixels; the D parameters also pick up
        // grads here, but phase A of the next step re-zeros them
        std::vector<Tensor> gs = tg.backward_scalar(g_total, inputs);
        for (int64_t b = 0; b < B; ++b) {
            rgb_grads[(size_t)b] = std::move(gs[(size_t)(2 * b)]);
            mask_grads[(size_t)b] = std::move(gs[(size_t)(2 * b + 1)]);
        }
        report.adv = g_img_val;
        report.mask = cfg.lambda_mask * g_mask_val;
    }

    // replay each render chunk and seed it with the matching pixel gradients
    const int64_t nchunks = render_chunk_count(rcfg);
    std::vector<Tensor> slot_points((size_t)B); // ray shade points, for eikonal
    for (int64_t b = 0; b < B; ++b) {
        Slot& s = slots[(size_t)b];
        FieldBundle fb = FieldBundle::of(models.sdf, models.albedo, s.z);
        Vec3 l_obj = s.pose.rotate(l_cam);
        std::vector<Tensor> pts_parts;
        for (int64_t c = 0; c < nchunks; ++c) {
            Tape tc;
            Rng crng = chunk_rng(s.render_seed, c);
            Tensor dirs = chunk_dirs_obj(s.pose, cam, s.im.rect, rcfg, c);
            RayRender rr = render_rays(tc, fb, s.pose.trans, dirs, l_obj, models.phong,
                                       models.neus, rcfg, crng);
            int64_t y_lo = c * rcfg.rows_per_chunk;
            int64_t y_hi = std::min(y_lo + rcfg.rows_per_chunk, res);
            int64_t rows = (y_hi - y_lo) * res;
            Tensor srgb({rows, 3}), smask({rows, 1});
            std::memcpy(srgb.ptr(), rgb_grads[(size_t)b].ptr() + y_lo * res * 3,
                        (size_t)(rows * 3) * sizeof(double));
            std::memcpy(smask.ptr(), mask_grads[(size_t)b].ptr() + y_lo * res,
                        (size_t)rows * sizeof(double));
            std::vector<std::pair<Var, Tensor>> seeds{{rr.rgb, std::move(srgb)},
                                                      {rr.mask, std::move(smask)}};
            tc.backward(seeds, {});
            pts_parts.push_back(std::move(rr.points));
        }
        int64_t total = 0;
        for (const Tensor& p : pts_parts) total += p.shape[0];
        Tensor all({total, 3});
        int64_t off = 0;
        for (const Tensor& p : pts_parts) {
            std::memcpy(all.ptr() + off * 3, p.ptr(), (size_t)p.numel() * sizeof(double));
            off += p.shape[0];
        }
        slot_points[(size_t)b] = std::move(all);
    }

    // --- eikonal: ray shade points plus an equal count of uniform points -----
    if (cfg.lambda_eik > 0) {
        double eik_sum = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            const Tensor& ray_pts = slot_points[(size_t)b];
            int64_t n_ray = ray_pts.shape[0];
            Rng er(cfg.seed, "eik", (uint64_t)step, (uint64_t)b);
            Tensor pts({2 * n_ray, 3});
            std::memcpy(pts.ptr(), ray_pts.ptr(), (size_t)ray_pts.numel() * sizeof(double));
            for (int64_t i = 0; i < n_ray * 3; ++i)
                pts.ptr()[n_ray * 3 + i] = er.uniform(-1.5, 1.5);
            int64_t n_total = 2 * n_ray;
            double slot_mean = 0.0;
            for (int64_t lo = 0; lo < n_total; lo += 4096) {
                int64_t n = std::min<int64_t>(4096, n_total - lo);
                Tensor chunk({n, 3});
                std::memcpy(chunk.ptr(), pts.ptr() + lo * 3, (size_t)(n * 3) * sizeof(double));
                Tape te;
                Var el = eikonal_loss(te, models.sdf, te.constant(slots[(size_t)b].z),
                                      te.constant(std::move(chunk)));
                double frac = (double)n / (double)n_total;
                slot_mean += el.val().item() * frac;
                const std::vector<int64_t> el_shape = el.shape();
                std::vector<std::pair<Var, Tensor>> seeds{
                    {el, Tensor::full(el_shape, cfg.lambda_eik * frac / (double)B)}};
                te.backward(seeds, {});
            }
            eik_sum += slot_mean;
        }
        report.eikonal = cfg.lambda_eik * eik_sum / (double)B;
    }

    if (opt_gen.grads_finite()) {
        opt_gen.step(cfg.lr_gen);
    } else {
        ++skip_count;
        std::fprintf(stderr, "step %" PRId64 ": non-finite generator gradients, skipped\n", step);
    }

    ++step_index;
    return report;
}

// --------------------------------------------------------------- checkpoints

void Trainer::save_checkpoint(const std::string& path) const {
    Models& m = const_cast<Models&>(models);
    std::vector<Param*> gen_ps = m.gen_params();
    std::vector<Param*> disc_ps = m.disc_params();

    json meta;
    meta["version"] = kCkptVersion;
    meta["config"] = cfg_to_json(cfg);
    {
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016" PRIx64, cfg.hash());
        meta["config_hash"] = hex;
    }
    meta["prior"] = prior_to_json(prior);
    meta["light"] = {light_cam[0], light_cam[1], light_cam[2]};
    meta["camera"] = {{"fov_deg", cam.fov_deg}, {"height", cam.height}, {"width", cam.width}};
    meta["step"] = step_index;
    meta["skip"] = skip_count;
    meta["adam_t"] = {{"gen", opt_gen.t}, {"disc", opt_disc.t}};
    meta["shapes"] = {{"gen", shapes_json(gen_ps)}, {"disc", shapes_json(disc_ps)}};
    std::string meta_str = meta.dump();

    std::string out;
    out.append(kCkptMagic, 8);
    put_u32(out, kCkptVersion);
    put_u64(out, (uint64_t)meta_str.size());
    out += meta_str;
    auto put_tensor = [&out](const Tensor& t) {
        for (int64_t i = 0; i < t.numel(); ++i) put_f64(out, t.ptr()[i]);
    };
    for (Param* p : gen_ps) put_tensor(p->value);
    for (Param* p : disc_ps) put_tensor(p->value);
    for (const Adam::Slot& s : opt_gen.slots) {
        put_tensor(s.m);
        put_tensor(s.v);
    }
    for (const Adam::Slot& s : opt_disc.slots) {
        put_tensor(s.m);
        put_tensor(s.v);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for write: " + path);
    f.write(out.data(), (std::streamsize)out.size());
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const std::string& path,
                                                  const TrainConfig* expect, bool force) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();

    if (buf.size() < 20 || std::memcmp(buf.data(), kCkptMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    uint32_t version = get_u32(buf, 8);
    if (version != kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint64_t meta_len = get_u64(buf, 12);
    if (20 + meta_len > buf.size())
        throw std::runtime_error("truncated checkpoint header: " + path);
    json meta = json::parse(buf.substr(20, meta_len));

    TrainConfig cfg = cfg_from_json(meta.at("config"));
    {
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016" PRIx64, cfg.hash());
        if (meta.at("config_hash").get<std::string>() != hex)
            throw std::runtime_error("checkpoint config hash does not match its stored config");
    }
    if (expect && expect->hash() != cfg.hash() && !force) {
        std::ostringstream msg;
        msg << "checkpoint config mismatch: stored hash " << std::hex << cfg.hash()
            << " vs requested " << expect->hash() << " (pass force to use the stored config)";
        throw std::runtime_error(msg.str());
    }

    PosePrior prior = prior_from_json(meta.at("prior"));
    std::array<double, 3> light{meta.at("light").at(0).get<double>(),
                                meta.at("light").at(1).get<double>(),
                                meta.at("light").at(2).get<double>()};
    Camera cam;
    cam.fov_deg = meta.at("camera").at("fov_deg").get<double>();
    cam.height = meta.at("camera").at("height").get<int64_t>();
    cam.width = meta.at("camera").at("width").get<int64_t>();

    std::unique_ptr<Trainer> tr = Trainer::make(cfg, prior, light, cam, /*pretrain=*/false);
    std::vector<Param*> gen_ps = tr->models.gen_params();
    std::vector<Param*> disc_ps = tr->models.disc_params();

    auto check_shapes = [&meta](const char* key, std::vector<Param*>& ps) {
        const json& arr = meta.at("shapes").at(key);
        if (arr.size() != ps.size())
            throw std::runtime_error("checkpoint parameter count mismatch");
        for (size_t i = 0; i < ps.size(); ++i) {
            std::string name = arr.at(i).at(0).get<std::string>();
            std::vector<int64_t> dims = arr.at(i).at(1).get<std::vector<int64_t>>();
            if (name != ps[i]->name || dims != ps[i]->value.shape)
                throw std::runtime_error("checkpoint parameter layout mismatch at " + name);
        }
    };
    check_shapes("gen", gen_ps);
    check_shapes("disc", disc_ps);

    int64_t doubles = 0;
    for (Param* p : gen_ps) doubles += p->value.numel();
    for (Param* p : disc_ps) doubles += p->value.numel();
    doubles *= 3; // value + adam m + adam v for every parameter
    size_t expected = 20 + (size_t)meta_len + (size_t)doubles * 8;
    if (buf.size() != expected) {
        std::ostringstream msg;
        msg << "truncated checkpoint: expected " << expected << " bytes, got " << buf.size();
        throw std::runtime_error(msg.str());
    }

    size_t off = 20 + (size_t)meta_len;
    auto read_tensor = [&buf, &off](Tensor& t) {
        for (int64_t i = 0; i < t.numel(); ++i) {
            t.ptr()[i] = get_f64(buf, off);
            off += 8;
        }
    };
    for (Param* p : gen_ps) read_tensor(p->value);
    for (Param* p : disc_ps) read_tensor(p->value);
    for (Adam::Slot& s : tr->opt_gen.slots) {
        read_tensor(s.m);
        read_tensor(s.v);
    }
    for (Adam::Slot& s : tr->opt_disc.slots) {
        read_tensor(s.m);
        read_tensor(s.v);
    }

    tr->opt_gen.t = meta.at("adam_t").at("gen").get<int64_t>();
    tr->opt_disc.t = meta.at("adam_t").at("disc").get<int64_t>();
    tr->step_index = meta.at("step").get<int64_t>();
    tr->skip_count = meta.at("skip").get<int64_t>();
    return tr;
}

} // namespace intrin
