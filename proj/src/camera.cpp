#include "intrin/camera.hpp"
#include <cmath>
#include <stdexcept>
#include <string>

namespace intrin {

static constexpr double kDeg = M_PI / 180.0;

double Camera::focal_px() const {
    if (fov_deg <= 0.0 || fov_deg >= 180.0)
        throw std::invalid_argument("camera fov must be in (0, 180) degrees");
    return 0.5 * (double)height / std::tan(0.5 * fov_deg * kDeg);
}

Vec3 PoseSample::rotate(const Vec3& v) const {
    return {rot[0] * v[0] + rot[1] * v[1] + rot[2] * v[2],
            rot[3] * v[0] + rot[4] * v[1] + rot[5] * v[2],
            rot[6] * v[0] + rot[7] * v[1] + rot[8] * v[2]};
}

Vec3 PoseSample::rotate_back(const Vec3& v) const {
    return {rot[0] * v[0] + rot[3] * v[1] + rot[6] * v[2],
            rot[1] * v[0] + rot[4] * v[1] + rot[7] * v[2],
            rot[2] * v[0] + rot[5] * v[1] + rot[8] * v[2]};
}

Vec3 PoseSample::object_center_cam() const {
    Vec3 c = rotate_back(trans);
    return {-c[0], -c[1], -c[2]};
}

Tensor PoseSample::rotate_rows(const Tensor& dirs) const {
    if (dirs.ndim() != 2 || dirs.dim(1) != 3)
        throw std::invalid_argument("rotate_rows expects [N,3], got " + dirs.shape_str());
    Tensor out(dirs.shape);
    const double* p = dirs.ptr();
    double* q = out.ptr();
    for (int64_t i = 0; i < dirs.dim(0); i++) {
        Vec3 v = rotate({p[3 * i], p[3 * i + 1], p[3 * i + 2]});
        q[3 * i] = v[0]; q[3 * i + 1] = v[1]; q[3 * i + 2] = v[2];
    }
    return out;
}

double PoseSample::max_orthonormal_dev() const {
    double dev = 0.0;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) {
            double s = 0.0;
            for (int k = 0; k < 3; k++) s += rot[3 * k + i] * rot[3 * k + j];
            dev = std::max(dev, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    return dev;
}

PosePrior PosePrior::sphere_default() {
    PosePrior p;
    p.kind = Kind::Sphere;
    p.az_lo = 0.0; p.az_hi = 360.0;
    p.el_lo = 45.0; p.el_hi = 45.0;
    p.ip_lo = 0.0; p.ip_hi = 0.0;
    p.dist_lo = 12.0; p.dist_hi = 12.0;
    p.lat_lo = 0.0; p.lat_hi = 0.0;
    return p;
}

PosePrior PosePrior::plane_default() {
    PosePrior p;
    p.kind = Kind::Plane;
    p.az_lo = 0.0; p.az_hi = 360.0;
    p.el_lo = 55.0; p.el_hi = 65.0;
    p.ip_lo = -10.0; p.ip_hi = 10.0;
    // far enough that the lateral spread stays inside the narrow frustum
    p.dist_lo = 40.0; p.dist_hi = 50.0;
    p.lat_lo = -2.4; p.lat_hi = 2.4;
    return p;
}

void PosePrior::validate_ranges() const {
    auto bad = [](double lo, double hi) { return hi < lo; };
    if (bad(az_lo, az_hi) || bad(el_lo, el_hi) || bad(ip_lo, ip_hi) ||
        bad(dist_lo, dist_hi) || bad(lat_lo, lat_hi))
        throw std::invalid_argument("pose prior has an empty range (hi < lo)");
    if (dist_lo <= 1.0)
        throw std::invalid_argument("pose prior distance must exceed the unit sphere radius");
}

void PosePrior::check_visibility(const Camera& cam) const {
    validate_ranges();
    double f = cam.focal_px();
    double tan_v = 0.5 * (double)cam.height / f;
    double tan_h = 0.5 * (double)cam.width / f;
    // worst case: nearest distance, largest lateral offset
    double z = dist_lo;
    double l = std::max(std::abs(lat_lo), std::abs(lat_hi));
    auto inside = [&](double tan_half) {
        // signed distance from (l, z) to the frustum side plane must cover
        // the unit sphere: z*sin - l*cos >= 1 with tan = tan_half
        double c = 1.0 / std::sqrt(1.0 + tan_half * tan_half);
        double s = tan_half * c;
        return z * s - l * c >= 1.0;
    };
    if (z <= 1.0 || !inside(tan_v) || !inside(tan_h))
        throw std::invalid_argument(
            "pose prior can place the unit sphere outside the camera frustum "
            "(distance " + std::to_string(dist_lo) + ", lateral " + std::to_string(l) + ")");
}

static Vec3 vnorm(const Vec3& v) {
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}
static Vec3 vcross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

PoseSample pose_from_angles(double az_deg, double el_deg, double ip_deg, double dist,
                            double lat_x, double lat_y) {
    double az = az_deg * kDeg;
    double el = el_deg * kDeg;
    double ip = ip_deg * kDeg;
    double lx = lat_x, ly = lat_y;

    // camera sits toward u from the object; looks back along f = -u
    Vec3 u = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    Vec3 fwd = {-u[0], -u[1], -u[2]};
    Vec3 up_hint = {0, 0, 1};
    Vec3 r = vcross(fwd, up_hint);
    double rn = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    if (rn < 1e-9) r = vcross(fwd, Vec3{1, 0, 0}); // straight up/down view
    r = vnorm(r);
    Vec3 d = vcross(fwd, r); // camera-down in the object frame

    double cr = std::cos(ip), sr = std::sin(ip);
    Vec3 r2 = {cr * r[0] + sr * d[0], cr * r[1] + sr * d[1], cr * r[2] + sr * d[2]};
    Vec3 d2 = {cr * d[0] - sr * r[0], cr * d[1] - sr * r[1], cr * d[2] - sr * r[2]};

    PoseSample ps;
    // columns are the images of the camera axes
    ps.rot = {r2[0], d2[0], fwd[0],
              r2[1], d2[1], fwd[1],
              r2[2], d2[2], fwd[2]};
    // object center in the camera frame: (lx, ly, dist)
    Vec3 c = ps.rotate({lx, ly, dist});
    ps.trans = {-c[0], -c[1], -c[2]};
    return ps;
}

PoseSample sample_pose(const PosePrior& prior, Rng& rng) {
    prior.validate_ranges();
    double az = rng.uniform(prior.az_lo, prior.az_hi);
    double el = rng.uniform(prior.el_lo, prior.el_hi);
    double ip = rng.uniform(prior.ip_lo, prior.ip_hi);
    double dist = rng.uniform(prior.dist_lo, prior.dist_hi);
    double lx = rng.uniform(prior.lat_lo, prior.lat_hi);
    double ly = rng.uniform(prior.lat_lo, prior.lat_hi);
    return pose_from_angles(az, el, ip, dist, lx, ly);
}

CropRect crop_window(const PoseSample& pose, const Camera& cam) {
    Vec3 c = pose.object_center_cam();
    double cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
    if (c[2] <= 1.0)
        throw std::invalid_argument("unit sphere not strictly in front of the camera");
    if (cc <= 1.0)
        throw std::invalid_argument("camera inside the unit sphere");

    // silhouette directions m satisfy m^T Q m = 0 with Q = c c^T - (|c|^2 - 1) I;
    // axis-aligned tangents come from the dual conic adj(Q)
    double k = cc - 1.0;
    double Q[9] = {c[0] * c[0] - k, c[0] * c[1],     c[0] * c[2],
                   c[1] * c[0],     c[1] * c[1] - k, c[1] * c[2],
                   c[2] * c[0],     c[2] * c[1],     c[2] * c[2] - k};
    auto cof = [&](int i, int j) {
        int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
        return Q[3 * r0 + c0] * Q[3 * r1 + c1] - Q[3 * r0 + c1] * Q[3 * r1 + c0];
    };
    // adj = cofactor transpose, but Q is symmetric so adj is too
    double A00 = cof(0, 0), A11 = cof(1, 1), A22 = cof(2, 2);
    double A02 = cof(2, 0), A12 = cof(2, 1);

    auto extremes = [&](double a_ii, double a_i2, double& lo, double& hi) {
        // tangent lines (1,0,-u) resp. (0,1,-v): a22 u^2 - 2 a_i2 u + a_ii = 0
        double disc = a_i2 * a_i2 - a_ii * A22;
        if (disc < 0.0 || A22 == 0.0)
            throw std::invalid_argument("degenerate sphere projection");
        double s = std::sqrt(disc);
        lo = (a_i2 - s) / A22;
        hi = (a_i2 + s) / A22;
        if (lo > hi) std::swap(lo, hi);
    };
    double u_lo, u_hi, v_lo, v_hi;
    extremes(A00, A02, u_lo, u_hi);
    extremes(A11, A12, v_lo, v_hi);

    double f = cam.focal_px();
    CropRect r;
    r.x0 = (int64_t)std::floor(f * u_lo + cam.cx());
    r.x1 = (int64_t)std::floor(f * u_hi + cam.cx()) + 1;
    r.y0 = (int64_t)std::floor(f * v_lo + cam.cy());
    r.y1 = (int64_t)std::floor(f * v_hi + cam.cy()) + 1;
    return r;
}

CropRect square_window(const CropRect& r) {
    int64_t side = std::max(r.width(), r.height());
    CropRect s;
    s.x0 = r.x0 - (side - r.width()) / 2;
    s.y0 = r.y0 - (side - r.height()) / 2;
    s.x1 = s.x0 + side;
    s.y1 = s.y0 + side;
    return s;
}

Tensor crop_ray_dirs_rows(const Camera& cam, const CropRect& rect, int64_t res,
                          int64_t y_lo, int64_t y_hi) {
    if (res <= 0 || rect.width() <= 0 || rect.height() <= 0)
        throw std::invalid_argument("empty crop or non-positive resolution");
    if (y_lo < 0 || y_hi > res || y_hi <= y_lo)
        throw std::invalid_argument("ray grid row range out of bounds");
    double f = cam.focal_px();
    Tensor out({(y_hi - y_lo) * res, 3});
    double* q = out.ptr();
    for (int64_t iy = y_lo; iy < y_hi; iy++) {
        double py = (double)rect.y0 + ((double)iy + 0.5) * (double)rect.height() / (double)res;
        for (int64_t ix = 0; ix < res; ix++) {
            double px = (double)rect.x0 + ((double)ix + 0.5) * (double)rect.width() / (double)res;
            Vec3 d = vnorm({(px - cam.cx()) / f, (py - cam.cy()) / f, 1.0});
            int64_t i = (iy - y_lo) * res + ix;
            q[3 * i] = d[0]; q[3 * i + 1] = d[1]; q[3 * i + 2] = d[2];
        }
    }
    return out;
}

Tensor crop_ray_dirs(const Camera& cam, const CropRect& rect, int64_t res) {
    return crop_ray_dirs_rows(cam, rect, res, 0, res);
}

bool ray_sphere_interval(const Vec3& o, const Vec3& d, const Vec3& c, double radius,
                         double& t0, double& t1) {
    Vec3 oc = {o[0] - c[0], o[1] - c[1], o[2] - c[2]};
    double b = oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2];
    double q = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - radius * radius;
    double disc = b * b - q;
    if (disc <= 0.0) return false;
    double s = std::sqrt(disc);
    t0 = -b - s;
    t1 = -b + s;
    if (t1 <= 0.0) return false;
    t0 = std::max(t0, 0.0);
    return true;
}

} // namespace intrin
