#pragma once

#include "intrin/image_io.hpp"
#include "intrin/renderer.hpp"

#include <array>
#include <string>
#include <vector>

namespace intrin {

// ---------------------------------------------------------------------------
// Instance segmentation
// ---------------------------------------------------------------------------

struct InstanceMask {
    Tensor mask;              // [1,H,W], values in {0,1}
    int64_t x0 = 0, y0 = 0;   // tight bounding box, half-open [x0,x1) x [y0,y1)
    int64_t x1 = 0, y1 = 0;
    int64_t area = 0;         // foreground pixel count
};

// 8-connected components of fg > 0.5. Components below min_area are dropped
// and the rest are returned in descending area order. min_area < 0 selects
// the default of 0.1% of the image pixels. Throws if nothing survives.
std::vector<InstanceMask> connected_components(const Tensor& fg, int64_t min_area = -1);

// Fallback segmentation when no mask is provided: a pixel is foreground when
// its color distance from the per-channel median of the 1px image border
// exceeds `threshold` (L2 over channels, values in [0,1]).
Tensor foreground_from_border(const Tensor& rgb, double threshold = 0.12);

// ---------------------------------------------------------------------------
// Crop extraction
// ---------------------------------------------------------------------------

struct CropSet {
    std::vector<Tensor> img;  // K crops [3,res,res], zero outside the mask
    std::vector<Tensor> mask; // K crops [1,res,res]
    int64_t crop_side = 0;    // shared square side in scene pixels, pre-resample
    int64_t res = 0;          // training resolution after bilinear resampling
};

// Square crops of I*M_k centered on each bounding box, side = max bbox side
// over all instances; regions outside the image are zero-padded. Both the
// masked image and the mask are bilinearly resampled to train_res.
CropSet extract_crops(const Tensor& rgb, const std::vector<InstanceMask>& masks,
                      int64_t train_res);

// out = crop + (1 - mask) * color, per channel. crop [3,H,W] premultiplied by
// its mask, mask [1,H,W] in [0,1].
Tensor composite_background(const Tensor& crop, const Tensor& mask,
                            const std::array<double, 3>& color);

// ---------------------------------------------------------------------------
// Analytic assets
// ---------------------------------------------------------------------------

enum class AssetKind { Sphere, Ellipsoid, Peanut };

// Textured SDF primitive used for synthetic ground truth. All shapes fit in
// the unit sphere at radius = 1. Peanut is the union of two offset spheres.
struct AssetSpec {
    AssetKind kind = AssetKind::Sphere;
    double radius = 1.0;                            // overall scale, must stay <= 1
    std::array<double, 3> axes = {1.0, 0.72, 0.55}; // ellipsoid semi-axes as fractions of radius
    double lobe_offset = 0.4;                       // peanut: sphere centers at +-offset*radius on x
    double lobe_radius = 0.6;                       // peanut: per-lobe radius as fraction of radius
    std::array<double, 3> albedo_freq = {2.1, 3.3, 4.7}; // per-channel sin frequency
    double albedo_amp = 0.42;                       // texture contrast, keeps values in (0,1)
};

// Differentiable field evaluations of the asset, same interface the learned
// networks use, so the renderer needs no special path for ground truth.
FieldBundle analytic_bundle(const AssetSpec& spec);

// Eager point evaluations for test oracles and ground-truth map generation.
double analytic_sdf(const AssetSpec& spec, const Vec3& p);
Vec3 analytic_normal(const AssetSpec& spec, const Vec3& p); // normalized SDF gradient
Vec3 analytic_albedo(const AssetSpec& spec, const Vec3& p);

// ---------------------------------------------------------------------------
// Synthetic scene generation
// ---------------------------------------------------------------------------

struct SynthConfig {
    int64_t image_size = 384; // square scene image
    int64_t k = 6;            // instance count
    double fov_deg = 10.0;
    AssetSpec asset;
    double radius_jitter = 0.0; // per-instance radius factor drawn from [1-j, 1+j]
    PosePrior prior = PosePrior::plane_default();
    std::array<double, 3> light = {-0.5, 0.3, -0.81}; // camera-frame direction, normalized on use
    double gt_kd = 0.7;  // ground-truth Phong diffuse weight
    double gt_ka = 0.3;  // ground-truth Phong ambient (kd+ka <= 1 keeps radiance unclipped)
    double neus_s = 200.0; // sharpness used for the ground-truth renders
    int64_t n_coarse = 24;
    int64_t n_importance = 8;
    uint64_t seed = 7;
};

struct SynthInstance {
    PoseSample pose;
    double radius_factor = 1.0; // applied to asset.radius for this instance
    uint64_t render_seed = 0;
    CropRect rect;          // native-resolution placement in the scene image
    Tensor rgb;             // [3,s,s] premultiplied crop, s = rect side
    Tensor mask;            // [1,s,s]
    Tensor depth;           // [1,s,s] camera-frame ray depth, 0 where no hit
    Tensor normal_cam;      // [3,s,s] camera-frame unit normals, 0 where no hit
    Tensor albedo;          // [3,s,s] weight-averaged surface albedo
};

struct SynthScene {
    Tensor image;           // [3,H,W] composited over the background color
    std::vector<SynthInstance> items;
    Camera cam;
    SynthConfig cfg;
    std::array<double, 3> bg = {0, 0, 0};
};

// Renders K instances of the asset with the volume renderer's own forward
// model at ground-truth parameters, placed on a non-overlapping grid with
// per-cell lateral jitter. Throws on grid overflow (K too large for the
// image size at the prior's minimum distance).
SynthScene synth_scene_generate(const SynthConfig& cfg);

// Dataset layout: scene.png, mask_k.png, gt/pose_k.txt (12 numbers, row-major
// 3x4 [R|t]), gt/depth_k.pgm (16-bit, value = round(depth*1000)),
// gt/normal_k.png ([-1,1] mapped to [0,255]), gt/albedo_k.png, gt/meta.json
// (camera, light, background, seeds, asset and render parameters).
void save_synth_scene(const SynthScene& scene, const std::string& dir);

struct LoadedScene {
    Tensor image;               // [3,H,W] in [0,1]
    std::vector<Tensor> masks;  // [1,H,W] binary
    Camera cam;
    std::array<double, 3> light = {0, 0, -1};
    PosePrior prior;
    bool has_prior = false;
};

// Reads scene.png, mask_k.png for consecutive k, and scene parameters from
// gt/meta.json when present.
LoadedScene load_scene_dir(const std::string& dir);

} // namespace intrin
