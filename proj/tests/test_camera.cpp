#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "intrin/camera.hpp"
#include <cmath>

using namespace intrin;

TEST_CASE("pinhole geometry: focal, principal point, ray directions") {
    Camera cam; // fov 10, 256x256
    double f = cam.focal_px();
    CHECK(f == doctest::Approx(128.0 / std::tan(5.0 * M_PI / 180.0)).epsilon(1e-12));

    // full-frame grid at native resolution: center ray is the optical axis
    CropRect full{0, 0, cam.width, cam.height};
    Tensor dirs = crop_ray_dirs(cam, full, 256);
    for (int64_t i = 0; i < dirs.dim(0); i++) {
        double n = 0;
        for (int j = 0; j < 3; j++) n += dirs.ptr()[3 * i + j] * dirs.ptr()[3 * i + j];
        REQUIRE(std::abs(n - 1.0) < 1e-12);
    }
    // pixel centers straddle the principal point; the four central pixels
    // are symmetric about the axis
    auto at = [&](int64_t y, int64_t x, int j) { return dirs.ptr()[3 * (y * 256 + x) + j]; };
    CHECK(at(127, 127, 0) == doctest::Approx(-at(127, 128, 0)).epsilon(1e-12));
    CHECK(at(127, 127, 1) == doctest::Approx(-at(128, 127, 1)).epsilon(1e-12));
    // top edge ray elevation equals half the vertical fov (pixel-center inset)
    double expect = -(cam.cy() - 0.5) / f;
    CHECK(at(0, 128, 1) / at(0, 128, 2) == doctest::Approx(expect).epsilon(1e-12));

    // row-range variant agrees with the full grid
    Tensor rows = crop_ray_dirs_rows(cam, full, 256, 10, 14);
    for (int64_t i = 0; i < rows.numel(); i++)
        REQUIRE(rows.ptr()[i] == dirs.ptr()[10 * 256 * 3 + i]);

    CHECK_THROWS_AS(crop_ray_dirs(cam, CropRect{5, 5, 5, 9}, 8), std::invalid_argument);
    CHECK_THROWS_AS(crop_ray_dirs_rows(cam, full, 16, 8, 8), std::invalid_argument);
}

TEST_CASE("pose transforms: rotate, inverse, object center") {
    Rng rng(31, "pose");
    PosePrior prior = PosePrior::sphere_default();
    prior.el_lo = 10.0; prior.el_hi = 80.0;
    prior.ip_lo = -30.0; prior.ip_hi = 30.0;
    PoseSample p = sample_pose(prior, rng);

    Vec3 v = {0.3, -1.2, 0.7};
    Vec3 w = p.rotate_back(p.rotate(v));
    for (int j = 0; j < 3; j++) CHECK(w[j] == doctest::Approx(v[j]).epsilon(1e-12));

    Tensor rows({2, 3}, {1, 0, 0, 0.3, -1.2, 0.7});
    Tensor r = p.rotate_rows(rows);
    Vec3 e0 = p.rotate({1, 0, 0});
    for (int j = 0; j < 3; j++) CHECK(r.ptr()[j] == doctest::Approx(e0[j]).epsilon(1e-14));

    // on-axis prior puts the object straight ahead at the sampled distance
    Rng rng2(32, "pose");
    PoseSample q = sample_pose(PosePrior::sphere_default(), rng2);
    Vec3 c = q.object_center_cam();
    CHECK(std::abs(c[0]) < 1e-12);
    CHECK(std::abs(c[1]) < 1e-12);
    CHECK(c[2] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("sampled poses are orthonormal and respect fixed elevation") {
    PosePrior prior = PosePrior::sphere_default(); // elevation fixed 45
    Rng rng(7, "poses");
    double max_dev = 0.0, max_ang_err = 0.0;
    for (int i = 0; i < 1000; i++) {
        PoseSample p = sample_pose(prior, rng);
        max_dev = std::max(max_dev, p.max_orthonormal_dev());
        // object->camera direction in the object frame (camera at -R^T t + ... )
        Vec3 c = p.object_center_cam();
        double n = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
        Vec3 cam_pos = p.rotate({-c[0] / n, -c[1] / n, -c[2] / n}); // unit, object frame
        double cosang = std::abs(cam_pos[2]);
        max_ang_err = std::max(max_ang_err, std::abs(std::acos(cosang) - 45.0 * M_PI / 180.0));
    }
    CHECK(max_dev < 1e-9);
    CHECK(max_ang_err < 1e-6);

    // determinant +1 (no reflections)
    Rng rng2(8, "det");
    PosePrior spread = PosePrior::sphere_default();
    spread.el_lo = -80.0; spread.el_hi = 89.0;
    spread.ip_lo = 0.0; spread.ip_hi = 360.0;
    for (int i = 0; i < 100; i++) {
        PoseSample p = sample_pose(spread, rng2);
        const auto& m = p.rot;
        double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
        REQUIRE(det == doctest::Approx(1.0).epsilon(1e-9));
    }

    // straight-down view exercises the degenerate up-hint fallback
    PosePrior top = PosePrior::sphere_default();
    top.el_lo = top.el_hi = 90.0;
    Rng rng3(9, "top");
    PoseSample p = sample_pose(top, rng3);
    CHECK(p.max_orthonormal_dev() < 1e-9);
}

TEST_CASE("degenerate prior repeats one pose; bad ranges are rejected") {
    PosePrior prior = PosePrior::sphere_default(); // all ranges already points except azimuth
    prior.az_lo = prior.az_hi = 120.0;
    Rng r1(5, "a"), r2(99, "b");
    PoseSample a = sample_pose(prior, r1);
    PoseSample b = sample_pose(prior, r2);
    for (int i = 0; i < 9; i++) REQUIRE(a.rot[i] == b.rot[i]);
    for (int i = 0; i < 3; i++) REQUIRE(a.trans[i] == b.trans[i]);

    PosePrior bad = PosePrior::sphere_default();
    bad.az_lo = 10.0; bad.az_hi = 5.0;
    Rng rng(1, "c");
    CHECK_THROWS_AS(sample_pose(bad, rng), std::invalid_argument);

    PosePrior close = PosePrior::sphere_default();
    close.dist_lo = close.dist_hi = 0.5; // inside the unit sphere
    CHECK_THROWS_AS(sample_pose(close, rng), std::invalid_argument);
}

TEST_CASE("visibility check accepts the defaults and rejects too-close priors") {
    Camera cam;
    PosePrior ok = PosePrior::sphere_default();
    CHECK_NOTHROW(ok.check_visibility(cam));
    CHECK_NOTHROW(PosePrior::plane_default().check_visibility(cam));

    PosePrior close = PosePrior::sphere_default();
    close.dist_lo = close.dist_hi = 8.0; // 8 sin(5 deg) = 0.70 < 1: sphere pokes out
    CHECK_THROWS_AS(close.check_visibility(cam), std::invalid_argument);

    PosePrior wide = PosePrior::sphere_default();
    wide.lat_lo = -2.0; wide.lat_hi = 2.0; // at distance 12 there is no lateral room
    CHECK_THROWS_AS(wide.check_visibility(cam), std::invalid_argument);
}

// dense oracle: project many unit-sphere surface points and take their bbox
static void dense_bbox(const PoseSample& pose, const Camera& cam, int n, double& x_lo,
                       double& x_hi, double& y_lo, double& y_hi) {
    Vec3 c = pose.object_center_cam();
    double f = cam.focal_px();
    x_lo = y_lo = 1e30; x_hi = y_hi = -1e30;
    Rng rng(424242, "sphere_pts");
    for (int i = 0; i < n; i++) {
        Vec3 g = {rng.normal(), rng.normal(), rng.normal()};
        double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        double px = c[0] + g[0] / gn, py = c[1] + g[1] / gn, pz = c[2] + g[2] / gn;
        double u = f * px / pz + cam.cx(), v = f * py / pz + cam.cy();
        x_lo = std::min(x_lo, u); x_hi = std::max(x_hi, u);
        y_lo = std::min(y_lo, v); y_hi = std::max(y_hi, v);
    }
}

TEST_CASE("crop window matches the dense projection oracle within one pixel") {
    Camera cam;
    Rng rng(77, "win");
    PosePrior prior = PosePrior::sphere_default();
    prior.el_lo = -60.0; prior.el_hi = 85.0;
    prior.dist_lo = 11.7; prior.dist_hi = 14.0;
    prior.lat_lo = -0.15; prior.lat_hi = 0.15;
    for (int trial = 0; trial < 12; trial++) {
        PoseSample pose = sample_pose(prior, rng);
        CropRect r = crop_window(pose, cam);
        double x_lo, x_hi, y_lo, y_hi;
        dense_bbox(pose, cam, 10000, x_lo, x_hi, y_lo, y_hi);
        // conservative: rect covers the dense bbox...
        REQUIRE((double)r.x0 <= x_lo); REQUIRE((double)r.x1 >= x_hi);
        REQUIRE((double)r.y0 <= y_lo); REQUIRE((double)r.y1 >= y_hi);
        // ...and is within one pixel of tight on every side
        REQUIRE(x_lo - (double)r.x0 < 1.0 + 1e-9); REQUIRE((double)r.x1 - x_hi < 1.0 + 1e-9);
        REQUIRE(y_lo - (double)r.y0 < 1.0 + 1e-9); REQUIRE((double)r.y1 - y_hi < 1.0 + 1e-9);
    }
}

TEST_CASE("crop window: symmetric when centered, shrinks ~2x at double distance") {
    Camera cam;
    PoseSample pose; // identity rotation
    pose.trans = {0, 0, -12}; // object center at camera-frame (0,0,12)
    CropRect r = crop_window(pose, cam);
    CHECK(std::abs((double)(r.x0 + r.x1) / 2.0 - cam.cx()) <= 1.0);
    CHECK(std::abs((double)(r.y0 + r.y1) / 2.0 - cam.cy()) <= 1.0);

    // exact (unrounded) widths via the dense oracle at two distances
    double ax_lo, ax_hi, ay_lo, ay_hi, bx_lo, bx_hi, by_lo, by_hi;
    dense_bbox(pose, cam, 10000, ax_lo, ax_hi, ay_lo, ay_hi);
    PoseSample far_pose;
    far_pose.trans = {0, 0, -24};
    dense_bbox(far_pose, cam, 10000, bx_lo, bx_hi, by_lo, by_hi);
    double ratio = (ax_hi - ax_lo) / (bx_hi - bx_lo);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));
    CropRect rf = crop_window(far_pose, cam);
    double rect_ratio = (double)r.width() / (double)rf.width();
    CHECK(rect_ratio == doctest::Approx(2.0).epsilon(0.08)); // rounding adds a little slop

    PoseSample behind;
    behind.trans = {0, 0, 12}; // center at (0,0,-12)
    CHECK_THROWS_AS(crop_window(behind, cam), std::invalid_argument);
    PoseSample inside;
    inside.trans = {0, 0, -0.5};
    CHECK_THROWS_AS(crop_window(inside, cam), std::invalid_argument);
}

TEST_CASE("square window covers and centers its input rect") {
    CropRect r{10, 40, 30, 90}; // 20 x 50
    CropRect s = square_window(r);
    CHECK(s.width() == 50);
    CHECK(s.height() == 50);
    CHECK(s.x0 <= r.x0); CHECK(s.x1 >= r.x1);
    CHECK(s.y0 <= r.y0); CHECK(s.y1 >= r.y1);
    CHECK(std::abs((s.x0 + s.x1) - (r.x0 + r.x1)) <= 1);
    CropRect sq{3, 4, 8, 9};
    CropRect s2 = square_window(sq);
    CHECK(s2.x0 == 3); CHECK(s2.x1 == 8); CHECK(s2.y0 == 4); CHECK(s2.y1 == 9);
}

TEST_CASE("ray-sphere intervals: hit, miss, tangent-behind") {
    double t0, t1;
    REQUIRE(ray_sphere_interval({0, 0, 0}, {0, 0, 1}, {0, 0, 12}, 1.5, t0, t1));
    CHECK(t0 == doctest::Approx(10.5).epsilon(1e-12));
    CHECK(t1 == doctest::Approx(13.5).epsilon(1e-12));

    CHECK_FALSE(ray_sphere_interval({0, 0, 0}, {0, 0, 1}, {0, 2.0, 12}, 1.5, t0, t1));
    CHECK_FALSE(ray_sphere_interval({0, 0, 0}, {0, 0, -1}, {0, 0, 12}, 1.5, t0, t1));

    // origin inside the sphere: interval clipped at zero
    REQUIRE(ray_sphere_interval({0, 0, 12.2}, {0, 0, 1}, {0, 0, 12}, 1.5, t0, t1));
    CHECK(t0 == 0.0);
    CHECK(t1 == doctest::Approx(1.3).epsilon(1e-12));
}
