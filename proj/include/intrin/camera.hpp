#pragma once
#include "intrin/rng.hpp"
#include "intrin/tensor.hpp"
#include <array>

namespace intrin {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>; // row-major

// Pinhole camera fixed at the origin, x right, y down, z forward (the image
// plane convention: pixel y grows downward). Principal point at the frame
// center; focal length derived from the vertical field of view.
struct Camera {
    double fov_deg = 10.0;
    int64_t height = 256, width = 256; // full-frame pixels
    double focal_px() const;
    double cx() const { return 0.5 * (double)width; }
    double cy() const { return 0.5 * (double)height; }
};

// Rigid transform x_obj = R x_cam + t taking camera-frame points into the
// canonical object frame. Rays start at the camera origin, so in the object
// frame the ray origin is t and directions are R d.
struct PoseSample {
    Mat3 rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 trans{0, 0, 0};

    Vec3 rotate(const Vec3& v_cam) const;          // R v
    Vec3 rotate_back(const Vec3& v_obj) const;     // R^T v
    Vec3 object_center_cam() const;                // -R^T t
    Tensor rotate_rows(const Tensor& dirs) const;  // [N,3] cam -> obj
    double max_orthonormal_dev() const;            // ||R^T R - I||_inf
};

// Pose distribution: viewing angles (degrees), object distance along the
// camera axis, and lateral offset applied to both image axes. `Sphere`
// describes instances spread over viewpoints around the object; `Plane`
// describes instances spread across a surface seen from a narrow range of
// directions. Both sample the same parameterization; the kind selects the
// default ranges and documents intent.
struct PosePrior {
    enum class Kind { Sphere, Plane };
    Kind kind = Kind::Sphere;
    double az_lo = 0.0, az_hi = 360.0;     // azimuth about the object's +z
    double el_lo = 45.0, el_hi = 45.0;     // elevation above the x-y plane
    double ip_lo = 0.0, ip_hi = 0.0;       // roll about the viewing axis
    double dist_lo = 12.0, dist_hi = 12.0; // object distance
    double lat_lo = 0.0, lat_hi = 0.0;     // lateral offset, each image axis

    static PosePrior sphere_default();
    static PosePrior plane_default();

    void validate_ranges() const; // any hi < lo -> error
    // worst-case check that the unit sphere stays inside the frustum
    void check_visibility(const Camera& cam) const;
};

PoseSample sample_pose(const PosePrior& prior, Rng& rng);

// Deterministic pose construction from explicit view parameters: azimuth,
// elevation, in-plane roll (degrees), axial distance, and the lateral offset
// of the object center on both image axes. sample_pose draws its parameters
// and delegates here.
PoseSample pose_from_angles(double az_deg, double el_deg, double ip_deg, double dist,
                            double lat_x, double lat_y);

// Axis-aligned pixel rectangle, half-open [x0,x1) x [y0,y1) in full-frame
// coordinates. Not clamped to the frame; callers that read real pixels clamp.
struct CropRect {
    int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int64_t width() const { return x1 - x0; }
    int64_t height() const { return y1 - y0; }
};

// Exact bounding box of the projected unit sphere centered at the object
// origin, conservatively rounded outward to whole pixels. The silhouette is a
// conic; its extremes come from the dual conic's axis-aligned tangent lines.
CropRect crop_window(const PoseSample& pose, const Camera& cam);

// Centered square cover of `r` (side = max extent), for isotropic crops.
CropRect square_window(const CropRect& r);

// Normalized camera-frame directions through the pixel centers of a res x res
// grid spanning `rect`; row-major [res*res, 3], row index = y * res + x.
Tensor crop_ray_dirs(const Camera& cam, const CropRect& rect, int64_t res);
// the grid rows [y_lo, y_hi) of the same res x res grid
Tensor crop_ray_dirs_rows(const Camera& cam, const CropRect& rect, int64_t res,
                          int64_t y_lo, int64_t y_hi);

// Intersection interval of the ray o + t d (unit d) with the sphere
// |x - c| = radius, clipped to t >= 0. False when the ray misses.
bool ray_sphere_interval(const Vec3& o, const Vec3& d, const Vec3& c, double radius,
                         double& t0, double& t1);

} // namespace intrin
