#pragma once

#include "intrin/adversarial.hpp"
#include "intrin/scene.hpp"

#include <memory>
#include <string>

namespace intrin {

struct TrainConfig {
    int64_t res = 32;          // crop/render resolution, multiple of 16
    double lambda_reg = 10.0;  // R1 gradient penalty weight (image D only)
    double lambda_eik = 10.0;  // eikonal weight
    double lambda_pose = 1.0;  // pose-regression weight on fakes
    double lambda_mask = 0.1;  // mask-discriminator weight
    double lr_gen = 2e-5;
    double lr_disc = 1e-4;
    int64_t batch = 8;
    int64_t iters = 2000;
    uint64_t seed = 1;

    // architecture knobs, desk-scale defaults
    int64_t sdf_width = 64;
    int sdf_depth = 4;
    int64_t alb_width = 64;
    int alb_depth = 3;
    int64_t latent_dim = 64;
    int n_coarse = 16;
    int n_importance = 4;
    double fov_deg = 10.0;
    int sphere_init_iters = 400; // SDF warm start toward a sphere before the GAN phase

    void validate() const;  // lambdas >= 0, lrs > 0, res multiple of 16, ...
    uint64_t hash() const;  // FNV-1a over the canonical field serialization
};

// The four generator loss terms and the R1 penalty, each stored with its
// lambda already applied, so the report is exactly the step's objective
// decomposition. `adv` and the D-phase terms come from the same step.
struct LossReport {
    double adv = 0.0;     // generator image-adversarial term
    double mask = 0.0;    // lambda_mask * generator mask-adversarial term
    double pose = 0.0;    // lambda_pose * pose regression on fakes
    double eikonal = 0.0; // lambda_eik * mean (|grad f| - 1)^2
    double r1 = 0.0;      // lambda_reg * R1 penalty on the image D
    bool finite() const;
    std::string line(int64_t step) const; // "step=N adv=... mask=... ..."
};

void append_loss_log(const std::string& path, int64_t step, const LossReport& report);

// Everything the objective trains: generator side (SDF theta, albedo psi,
// Phong scalars, sharpness s) and both discriminators.
struct Models {
    SdfField sdf;
    AlbedoField albedo;
    PhongParams phong;
    NeusScale neus;
    ImageDiscriminator disc_img;
    MaskDiscriminator disc_mask;

    static Models make(const TrainConfig& cfg, Rng& rng);
    std::vector<Param*> gen_params();
    std::vector<Param*> disc_params();
};

// One training run: models, optimizers, and the scene-wide constants (pose
// prior, light, camera). Not movable once built - the Adam states hold
// pointers into `models`.
struct Trainer {
    TrainConfig cfg;
    PosePrior prior;
    std::array<double, 3> light_cam{0, 0, -1};
    Camera cam;
    Models models;
    Adam opt_gen, opt_disc;
    int64_t step_index = 0; // completed steps
    int64_t skip_count = 0; // updates dropped due to non-finite gradients

    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    // `pretrain` runs the sphere warm start; loading a checkpoint skips it.
    static std::unique_ptr<Trainer> make(const TrainConfig& cfg, const PosePrior& prior,
                                         const std::array<double, 3>& light, const Camera& cam,
                                         bool pretrain = true);

    // One alternating GAN iteration over a batch of real crops:
    //   (a) discriminators on detached fake renders vs sampled real crops,
    //       both composited over one shared random background and augmented;
    //   (b) generator via re-derived image gradients replayed chunk-by-chunk
    //       through the renderer, plus the eikonal term on the ray sample
    //       points and an equal number of uniform points in [-1.5,1.5]^3.
    // All randomness is a pure function of (cfg.seed, step_index, slot), so
    // a resumed run continues bit-exactly. Throws on a non-finite loss with
    // a per-term dump; non-finite gradients skip the update and count.
    LossReport train_step(const CropSet& crops);

    void save_checkpoint(const std::string& path) const;
    // `expect`: config the caller wants; a hash mismatch with the stored
    // config is an error unless `force` (stored config then wins).
    static std::unique_ptr<Trainer> load_checkpoint(const std::string& path,
                                                    const TrainConfig* expect = nullptr,
                                                    bool force = false);

  private:
    Trainer(const TrainConfig& c, const PosePrior& p, const std::array<double, 3>& l,
            const Camera& cm);
};

} // namespace intrin
