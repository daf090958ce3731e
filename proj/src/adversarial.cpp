#include "intrin/adversarial.hpp"
#include "intrin/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace intrin {

// ---------------- discriminators ----------------

DiscBackbone DiscBackbone::make(const std::string& name, int64_t res, int64_t in_ch, Rng& rng) {
    if (res < 16 || res % 16 != 0)
        throw std::invalid_argument("discriminator resolution must be a positive multiple of 16, got " +
                                    std::to_string(res));
    DiscBackbone b;
    b.res = res;
    int64_t chans[5] = {in_ch, 32, 64, 128, 256};
    for (int i = 0; i < 4; i++)
        b.convs.emplace_back(name + ".conv" + std::to_string(i), chans[i], chans[i + 1], 4, 2, 1, rng);
    int64_t side = res / 16;
    b.feat_dim = 256 * side * side;
    return b;
}

Var DiscBackbone::operator()(Tape& t, Var x) {
    const std::vector<int64_t> s = x.shape(); // copied: recording below reallocates nodes
    int64_t in_ch = convs[0].w.value.shape[1];
    if (s.size() != 4 || s[1] != in_ch || s[2] != res || s[3] != res)
        throw std::invalid_argument("discriminator expects [B," + std::to_string(in_ch) + "," +
                                    std::to_string(res) + "," + std::to_string(res) + "] crops, got " +
                                    x.val().shape_str());
    Var h = x;
    for (auto& c : convs) h = leaky_relu(c(t, h), 0.2);
    return reshape(h, {s[0], feat_dim});
}

void DiscBackbone::collect(std::vector<Param*>& out) {
    for (auto& c : convs) c.collect(out);
}

ImageDiscriminator ImageDiscriminator::make(int64_t res, Rng& rng) {
    ImageDiscriminator d;
    d.backbone = DiscBackbone::make("disc_img", res, 3, rng);
    d.head_real = Linear("disc_img.real", d.backbone.feat_dim, 1, rng, 1.0);
    d.head_pose = Linear("disc_img.pose", d.backbone.feat_dim, 6, rng, 1.0);
    return d;
}

Var ImageDiscriminator::logits(Tape& t, Var x) { return head_real(t, backbone(t, x)); }

std::pair<Var, Var> ImageDiscriminator::logits_pose(Tape& t, Var x) {
    Var f = backbone(t, x);
    return {head_real(t, f), head_pose(t, f)};
}

void ImageDiscriminator::collect(std::vector<Param*>& out) {
    backbone.collect(out);
    head_real.collect(out);
    head_pose.collect(out);
}

MaskDiscriminator MaskDiscriminator::make(int64_t res, Rng& rng) {
    MaskDiscriminator d;
    d.backbone = DiscBackbone::make("disc_mask", res, 1, rng);
    d.head_real = Linear("disc_mask.real", d.backbone.feat_dim, 1, rng, 1.0);
    return d;
}

Var MaskDiscriminator::logits(Tape& t, Var x) { return head_real(t, backbone(t, x)); }

void MaskDiscriminator::collect(std::vector<Param*>& out) {
    backbone.collect(out);
    head_real.collect(out);
}

// ---------------- augmentation ----------------

AugmentTransform sample_augment(const AugmentParams& p, Rng& rng, int64_t res) {
    if (p.scale_lo <= 0.0 || p.scale_hi < p.scale_lo || p.trans_frac < 0.0)
        throw std::invalid_argument("bad augmentation ranges");
    AugmentTransform tf;
    tf.scale = rng.log_uniform(p.scale_lo, p.scale_hi);
    tf.tx = rng.uniform(-p.trans_frac, p.trans_frac) * (double)res;
    tf.ty = rng.uniform(-p.trans_frac, p.trans_frac) * (double)res;
    return tf;
}

// The warp kernel maps output pixels to source coordinates, so the matrix is
// the inverse of "zoom by s about the center, then shift by (tx, ty)".
static void inverse_map(const AugmentTransform& tf, int64_t H, int64_t W, double A[6]) {
    if (tf.scale <= 0.0) throw std::invalid_argument("augmentation scale must be positive");
    double cx = 0.5 * (double)(W - 1), cy = 0.5 * (double)(H - 1);
    A[0] = 1.0 / tf.scale;
    A[1] = 0.0;
    A[2] = cx - (cx + tf.tx) / tf.scale;
    A[3] = 0.0;
    A[4] = 1.0 / tf.scale;
    A[5] = cy - (cy + tf.ty) / tf.scale;
}

static void check_crop_fill(const std::vector<int64_t>& s, const std::vector<double>& fill) {
    if (s.size() != 3) throw std::invalid_argument("augment expects a [C,H,W] crop");
    if (fill.size() != 1 && (int64_t)fill.size() != s[0])
        throw std::invalid_argument("augment fill must have 1 or C values");
}

Var augment(Tape& t, Var crop, const AugmentTransform& tf, const std::vector<double>& fill) {
    check_crop_fill(crop.shape(), fill);
    double A[6];
    inverse_map(tf, crop.shape()[1], crop.shape()[2], A);
    return affine_warp(crop, A, fill);
}

Tensor augment_eager(const Tensor& crop, const AugmentTransform& tf, const std::vector<double>& fill) {
    check_crop_fill(crop.shape, fill);
    double A[6];
    inverse_map(tf, crop.shape[1], crop.shape[2], A);
    return tk::affine_warp(crop, A, fill);
}

// ---------------- crop packing ----------------

Var rows_to_chw(Var rows, int64_t res) {
    const std::vector<int64_t> s = rows.shape();
    if (s.size() != 2 || s[0] != res * res)
        throw std::invalid_argument("expected [res*res, C] pixel rows, got " + rows.val().shape_str());
    int64_t C = s[1];
    std::vector<Var> planes;
    planes.reserve(C);
    for (int64_t c = 0; c < C; c++)
        planes.push_back(reshape(slice(rows, {0, c}, {s[0], 1}), {1, res, res}));
    return C == 1 ? planes[0] : concat(planes, 0);
}

Var stack_batch(const std::vector<Var>& crops) {
    if (crops.empty()) throw std::invalid_argument("empty crop batch");
    const std::vector<int64_t> s0 = crops[0].shape();
    if (s0.size() != 3) throw std::invalid_argument("stack_batch expects [C,H,W] crops");
    std::vector<Var> rows;
    rows.reserve(crops.size());
    for (const Var& c : crops) {
        if (c.shape() != s0) throw std::invalid_argument("stack_batch: mismatched crop shapes");
        rows.push_back(reshape(c, {1, s0[0], s0[1], s0[2]}));
    }
    return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

// ---------------- rotation embedding ----------------

std::array<double, 6> gram_schmidt_embed(const Mat3& R) {
    // first two columns of the row-major matrix
    return {R[0], R[3], R[6], R[1], R[4], R[7]};
}

Mat3 rotation_from_embed(const std::array<double, 6>& e) {
    Vec3 a = {e[0], e[1], e[2]}, b = {e[3], e[4], e[5]};
    auto norm = [](const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); };
    double na = norm(a);
    if (na < 1e-12) throw std::invalid_argument("degenerate 6D embedding: first column is zero");
    Vec3 b1 = {a[0] / na, a[1] / na, a[2] / na};
    double d = b1[0] * b[0] + b1[1] * b[1] + b1[2] * b[2];
    Vec3 r = {b[0] - d * b1[0], b[1] - d * b1[1], b[2] - d * b1[2]};
    double nr = norm(r);
    if (nr < 1e-12) throw std::invalid_argument("degenerate 6D embedding: columns are collinear");
    Vec3 b2 = {r[0] / nr, r[1] / nr, r[2] / nr};
    Vec3 b3 = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
               b1[0] * b2[1] - b1[1] * b2[0]};
    return {b1[0], b2[0], b3[0], b1[1], b2[1], b3[1], b1[2], b2[2], b3[2]};
}

Tensor embed_rows(const std::vector<Mat3>& rots) {
    Tensor out({(int64_t)rots.size(), 6});
    for (size_t i = 0; i < rots.size(); i++) {
        auto e = gram_schmidt_embed(rots[i]);
        std::copy(e.begin(), e.end(), out.ptr() + 6 * i);
    }
    return out;
}

// ---------------- losses ----------------

Var pose_loss(Tape& t, Var pred, const Tensor& true_embed) {
    const std::vector<int64_t> s = pred.shape();
    if (s.size() != 2 || s[1] != 6 || s != true_embed.shape)
        throw std::invalid_argument("pose_loss expects matching [B,6] predictions and embeddings");
    if (s[0] < 1) throw std::invalid_argument("pose_loss: empty batch");
    Var d = pred - t.constant(true_embed);
    return scale(sum(d * d), 1.0 / (double)s[0]);
}

static void check_logits(const Var& l, int64_t batch, const char* who) {
    const auto& s = l.shape();
    if (s.size() != 2 || s[0] != batch || s[1] != 1)
        throw std::invalid_argument(std::string(who) + ": discriminator must emit [B,1] logits, got " +
                                    l.val().shape_str());
}

AdvLosses adversarial_losses(Tape& t, const std::function<Var(Tape&, Var)>& logits,
                             const Tensor& real, Var fake, bool with_r1) {
    if (real.shape.size() != 4 || fake.shape().size() != 4)
        throw std::invalid_argument("adversarial_losses expects [B,C,H,W] crop batches");
    int64_t br = real.shape[0], bf = fake.shape()[0];
    if (br < 1 || bf < 1) throw std::invalid_argument("adversarial_losses: empty batch");

    Var real_in = t.input(real, /*requires_grad=*/true);
    Var d_real = logits(t, real_in);
    Var d_fake = logits(t, fake);
    check_logits(d_real, br, "adversarial_losses");
    check_logits(d_fake, bf, "adversarial_losses");

    AdvLosses out;
    out.d_loss = mean(softplus(d_fake)) + mean(softplus(neg(d_real)));
    out.g_loss = mean(softplus(neg(d_fake)));

    if (with_r1) {
        // batch entries are independent, so one ones-seeded pass gives every
        // per-sample input gradient at once
        Tensor seed = Tensor::full(d_real.shape(), 1.0);
        Var g = t.grad(d_real, std::vector<Var>{real_in}, &seed)[0];
        out.r1 = scale(sum(g * g), 1.0 / (double)br);
    } else {
        out.r1 = t.constant(Tensor({1}, {0.0}));
    }
    return out;
}

Var generator_adv_loss(Tape& t, const std::function<Var(Tape&, Var)>& logits, Var fake) {
    if (fake.shape().size() != 4 || fake.shape()[0] < 1)
        throw std::invalid_argument("generator_adv_loss expects a non-empty [B,C,H,W] batch");
    Var d_fake = logits(t, fake);
    check_logits(d_fake, fake.shape()[0], "generator_adv_loss");
    return mean(softplus(neg(d_fake)));
}

} // namespace intrin
