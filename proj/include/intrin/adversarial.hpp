#pragma once
#include "intrin/camera.hpp"
#include "intrin/nets.hpp"

#include <array>
#include <functional>

namespace intrin {

// Shared discriminator backbone: four 4x4 stride-2 convolutions widening
// 32 -> 64 -> 128 -> 256, leaky slope 0.2 after each, flattened to a feature
// row per sample. Input [B, in_ch, res, res] with res a multiple of 16.
struct DiscBackbone {
    std::vector<Conv2dLayer> convs;
    int64_t res = 0, feat_dim = 0;

    static DiscBackbone make(const std::string& name, int64_t res, int64_t in_ch, Rng& rng);
    Var operator()(Tape& t, Var x); // [B, in_ch, res, res] -> [B, feat_dim]
    void collect(std::vector<Param*>& out);
};

// Image discriminator: realness logit plus a 6-vector pose head. The pose
// head only ever sees generated crops (their pose is known); real crops have
// no pose label.
struct ImageDiscriminator {
    DiscBackbone backbone;
    Linear head_real, head_pose;

    static ImageDiscriminator make(int64_t res, Rng& rng);
    Var logits(Tape& t, Var x);                      // [B,1]
    std::pair<Var, Var> logits_pose(Tape& t, Var x); // {[B,1], [B,6]}
    void collect(std::vector<Param*>& out);
};

// Mask discriminator: same backbone at one input channel, logit head only.
struct MaskDiscriminator {
    DiscBackbone backbone;
    Linear head_real;

    static MaskDiscriminator make(int64_t res, Rng& rng);
    Var logits(Tape& t, Var x); // [B,1]
    void collect(std::vector<Param*>& out);
};

// Crop augmentation: zoom about the crop center (log-uniform scale) followed
// by a shift (uniform, as a fraction of the crop side), always applied --
// probability 1, no adaptive schedule.
struct AugmentParams {
    double scale_lo = 0.8, scale_hi = 1.25;
    double trans_frac = 0.125;
};

struct AugmentTransform {
    double scale = 1.0, tx = 0.0, ty = 0.0; // tx, ty in pixels
};

// Draw order is scale, tx, ty so separate streams stay comparable.
AugmentTransform sample_augment(const AugmentParams& p, Rng& rng, int64_t res);

// Apply to a [C,H,W] crop; out-of-frame pixels read `fill` (one value per
// channel, or a single shared value): the background color for image crops,
// zero for mask crops. Applying the SAME transform to an image and its mask
// keeps the pair registered.
Var augment(Tape& t, Var crop, const AugmentTransform& tf, const std::vector<double>& fill);
Tensor augment_eager(const Tensor& crop, const AugmentTransform& tf, const std::vector<double>& fill);

// Renderer output is one row per pixel (row-major over the crop); the
// discriminators want channel planes. [res*res, C] -> [C, res, res].
Var rows_to_chw(Var rows, int64_t res);
// [C,H,W] crops -> one [B,C,H,W] batch.
Var stack_batch(const std::vector<Var>& crops);

// 6D rotation embedding: the first two columns of R, concatenated.
std::array<double, 6> gram_schmidt_embed(const Mat3& R);
// Orthonormalize the two embedded columns and complete with their cross
// product; exact inverse of the embedding on rotations.
Mat3 rotation_from_embed(const std::array<double, 6>& e);
Tensor embed_rows(const std::vector<Mat3>& rots); // [N,6]

// Mean over the batch of the squared distance between the predicted 6-vector
// and the embedding of the true rotation. pred [B,6], true_embed [B,6].
Var pose_loss(Tape& t, Var pred, const Tensor& true_embed);

// Non-saturating BCE written with f(t) = softplus(t) = log(1 + e^t):
//   discriminator loss  E[f(D(fake))] + E[f(-D(real))]
//   generator loss      E[f(-D(fake))]
//   r1                  mean over reals of || d D / d image ||^2 (unweighted;
//                       the trainer applies lambda_reg, discriminator only)
struct AdvLosses {
    Var d_loss, g_loss, r1; // scalars [1]
};

// `logits` maps a crop batch [B,C,H,W] to realness logits [B,1]. `real` is a
// plain tensor (recorded internally as a differentiable input so the r1 term
// can reach it); `fake` may be a generator subgraph or a constant. Pass
// `with_r1 = false` to skip the gradient-penalty graph (r1 comes back as a
// zero constant); the mask branch trains without it.
AdvLosses adversarial_losses(Tape& t, const std::function<Var(Tape&, Var)>& logits,
                             const Tensor& real, Var fake, bool with_r1 = true);

// The generator-side term alone (no real batch needed).
Var generator_adv_loss(Tape& t, const std::function<Var(Tape&, Var)>& logits, Var fake);

} // namespace intrin
