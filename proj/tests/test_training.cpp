#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "intrin/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace intrin;
namespace fs = std::filesystem;

namespace {

// Full-frame instance masks straight from the generator's placements, so the
// tests do not depend on the segmentation path.
std::vector<InstanceMask> masks_of(const SynthScene& sc) {
    int64_t h = sc.image.shape[1], w = sc.image.shape[2];
    std::vector<InstanceMask> out;
    for (const SynthInstance& it : sc.items) {
        InstanceMask m;
        m.mask = Tensor::zeros({1, h, w});
        int64_t s = it.rect.width();
        m.x0 = w;
        m.y0 = h;
        for (int64_t y = 0; y < s; ++y)
            for (int64_t x = 0; x < s; ++x) {
                if (it.mask.ptr()[y * s + x] <= 0.5) continue;
                int64_t gy = it.rect.y0 + y, gx = it.rect.x0 + x;
                if (gy < 0 || gy >= h || gx < 0 || gx >= w) continue;
                m.mask.ptr()[gy * w + gx] = 1.0;
                m.x0 = std::min(m.x0, gx);
                m.y0 = std::min(m.y0, gy);
                m.x1 = std::max(m.x1, gx + 1);
                m.y1 = std::max(m.y1, gy + 1);
                ++m.area;
            }
        out.push_back(std::move(m));
    }
    return out;
}

SynthConfig tiny_scene_cfg(uint64_t seed) {
    SynthConfig c;
    c.image_size = 160;
    c.k = 4;
    c.n_coarse = 12;
    c.n_importance = 4;
    c.seed = seed;
    return c;
}

TrainConfig tiny_train_cfg(uint64_t seed) {
    TrainConfig c;
    c.res = 16;
    c.batch = 2;
    c.sdf_width = 32;
    c.sdf_depth = 3;
    c.alb_width = 32;
    c.alb_depth = 2;
    c.latent_dim = 16;
    c.n_coarse = 8;
    c.n_importance = 2;
    c.sphere_init_iters = 50;
    c.seed = seed;
    return c;
}

struct Fixture {
    SynthScene scene;
    CropSet crops;
    Fixture(uint64_t scene_seed, int64_t res) : scene(synth_scene_generate(tiny_scene_cfg(scene_seed))) {
        crops = extract_crops(scene.image, masks_of(scene), res);
    }
};

std::unique_ptr<Trainer> tiny_trainer(const Fixture& fx, const TrainConfig& cfg) {
    return Trainer::make(cfg, fx.scene.cfg.prior, fx.scene.cfg.light, fx.scene.cam);
}

bool params_equal(std::vector<Param*> a, std::vector<Param*> b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i]->value.shape != b[i]->value.shape) return false;
        if (std::memcmp(a[i]->value.ptr(), b[i]->value.ptr(),
                        (size_t)a[i]->value.numel() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::vector<Tensor> snapshot(std::vector<Param*> ps) {
    std::vector<Tensor> out;
    for (Param* p : ps) out.push_back(p->value);
    return out;
}

bool any_nonzero_grad(const std::vector<Param*>& ps) {
    for (Param* p : ps)
        for (int64_t i = 0; i < p->grad.numel(); ++i)
            if (p->grad.ptr()[i] != 0.0) return true;
    return false;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("adam drives a quadratic to its minimum") {
    Param x("x", Tensor({1}, {1.0}));
    Adam opt({&x}, 0.0, 0.99);
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        x.grad.ptr()[0] = 2.0 * x.value.ptr()[0];
        opt.step(0.1);
    }
    CHECK(opt.t == 200);
    CHECK(std::abs(x.value.ptr()[0]) < 1e-3);
}

TEST_CASE("adam leaves parameters alone on zero gradients") {
    Param x("x", Tensor({2, 2}, {0.3, -1.2, 4.0, 0.0}));
    Tensor before = x.value;
    Adam opt({&x}, 0.0, 0.99);
    opt.zero_grad();
    opt.step(1e-2);
    CHECK(opt.t == 1);
    CHECK(std::memcmp(before.ptr(), x.value.ptr(), 4 * sizeof(double)) == 0);
}

TEST_CASE("training config validation and hashing") {
    TrainConfig c = tiny_train_cfg(3);
    c.validate();
    uint64_t h = c.hash();
    CHECK(h == c.hash()); // stable
    TrainConfig d = c;
    d.lambda_eik = c.lambda_eik + 1;
    CHECK(d.hash() != h);

    TrainConfig bad = c;
    bad.res = 24; // not a multiple of 16
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.lambda_mask = -0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.lr_gen = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("loss report carries exactly the five objective terms") {
    LossReport r;
    r.adv = 0.5;
    r.mask = 0.125;
    r.pose = 2.0;
    r.eikonal = 0.25;
    r.r1 = 1.5;
    std::string line = r.line(17);
    std::istringstream ss(line);
    std::vector<std::string> keys;
    std::string tok;
    while (ss >> tok) {
        size_t eq = tok.find('=');
        REQUIRE(eq != std::string::npos);
        keys.push_back(tok.substr(0, eq));
    }
    const std::vector<std::string> want{"step", "adv", "mask", "pose", "eikonal", "r1"};
    CHECK(keys == want);
    CHECK(line.find("step=17") == 0);
    CHECK(line.find("adv=0.5") != std::string::npos);

    fs::path log = fs::temp_directory_path() / "intrin_loss_log_test.txt";
    fs::remove(log);
    append_loss_log(log.string(), 0, r);
    append_loss_log(log.string(), 1, r);
    std::ifstream f(log);
    std::string l0, l1;
    REQUIRE(std::getline(f, l0));
    REQUIRE(std::getline(f, l1));
    CHECK(l0 == r.line(0));
    CHECK(l1 == r.line(1));
    fs::remove(log);
}

TEST_CASE("identical seeds give bit-identical training") {
    Fixture fx(41, 16);
    TrainConfig cfg = tiny_train_cfg(5);
    auto a = tiny_trainer(fx, cfg);
    auto b = tiny_trainer(fx, cfg);
    for (int i = 0; i < 3; ++i) {
        LossReport ra = a->train_step(fx.crops);
        LossReport rb = b->train_step(fx.crops);
        CHECK(ra.adv == rb.adv);
        CHECK(ra.mask == rb.mask);
        CHECK(ra.pose == rb.pose);
        CHECK(ra.eikonal == rb.eikonal);
        CHECK(ra.r1 == rb.r1);
    }
    CHECK(params_equal(a->models.gen_params(), b->models.gen_params()));
    CHECK(params_equal(a->models.disc_params(), b->models.disc_params()));
    CHECK(a->step_index == 3);
    CHECK(a->skip_count == b->skip_count);
}

TEST_CASE("zero mask weight sends no gradient to the mask discriminator") {
    Fixture fx(43, 16);
    TrainConfig cfg = tiny_train_cfg(9);
    cfg.lambda_mask = 0.0;
    auto tr = tiny_trainer(fx, cfg);
    std::vector<Param*> mask_ps;
    tr->models.disc_mask.collect(mask_ps);
    std::vector<Tensor> before = snapshot(mask_ps);
    for (int i = 0; i < 2; ++i) {
        LossReport r = tr->train_step(fx.crops);
        CHECK(r.mask == 0.0);
        for (Param* p : mask_ps)
            for (int64_t j = 0; j < p->grad.numel(); ++j) CHECK(p->grad.ptr()[j] == 0.0);
    }
    for (size_t i = 0; i < mask_ps.size(); ++i)
        CHECK(std::memcmp(before[i].ptr(), mask_ps[i]->value.ptr(),
                          (size_t)before[i].numel() * sizeof(double)) == 0);
}

TEST_CASE("doubling the eikonal weight exactly doubles its reported term") {
    Fixture fx(47, 16);
    TrainConfig ca = tiny_train_cfg(11);
    TrainConfig cb = ca;
    cb.lambda_eik = 2.0 * ca.lambda_eik;
    auto a = tiny_trainer(fx, ca);
    auto b = tiny_trainer(fx, cb);
    LossReport ra = a->train_step(fx.crops);
    LossReport rb = b->train_step(fx.crops);
    CHECK(ra.eikonal > 0.0);
    CHECK(rb.eikonal == 2.0 * ra.eikonal);
    // the weight only scales the regularizer, the other terms are untouched
    CHECK(ra.adv == rb.adv);
    CHECK(ra.r1 == rb.r1);
}

TEST_CASE("every trained parameter sees a nonzero gradient within 100 steps") {
    Fixture fx(53, 16);
    TrainConfig cfg = tiny_train_cfg(13);
    auto tr = tiny_trainer(fx, cfg);

    std::vector<Param*> sdf_ps, alb_ps, neus_ps, img_ps, mask_ps;
    tr->models.sdf.collect(sdf_ps);
    tr->models.albedo.collect(alb_ps);
    tr->models.neus.collect(neus_ps);
    tr->models.disc_img.collect(img_ps);
    tr->models.disc_mask.collect(mask_ps);
    struct Group {
        const char* name;
        std::vector<Param*> ps;
        bool seen = false;
    };
    std::vector<Group> groups{
        {"sdf", sdf_ps, false},
        {"albedo", alb_ps, false},
        {"phong_kd", {&tr->models.phong.kd_raw}, false},
        {"phong_ka", {&tr->models.phong.ka_raw}, false},
        {"phong_ks", {&tr->models.phong.ks_raw}, false},
        {"phong_alpha", {&tr->models.phong.alpha_raw}, false},
        {"neus_s", neus_ps, false},
        {"disc_img", img_ps, false},
        {"disc_mask", mask_ps, false},
    };
    for (int step = 0; step < 100; ++step) {
        tr->train_step(fx.crops);
        bool all = true;
        for (Group& g : groups) {
            if (!g.seen) g.seen = any_nonzero_grad(g.ps);
            all = all && g.seen;
        }
        if (all) break;
    }
    for (Group& g : groups) {
        INFO("group ", g.name);
        CHECK(g.seen);
    }
}

TEST_CASE("checkpoint save-load-save writes identical bytes") {
    Fixture fx(59, 16);
    TrainConfig cfg = tiny_train_cfg(17);
    cfg.sphere_init_iters = 10;
    auto tr = tiny_trainer(fx, cfg);
    tr->train_step(fx.crops);
    tr->train_step(fx.crops);

    fs::path dir = fs::temp_directory_path() / "intrin_ckpt_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path ck1 = dir / "a.ckpt", ck2 = dir / "b.ckpt";
    tr->save_checkpoint(ck1.string());
    auto loaded = Trainer::load_checkpoint(ck1.string());
    CHECK(loaded->step_index == tr->step_index);
    CHECK(loaded->skip_count == tr->skip_count);
    CHECK(loaded->opt_gen.t == tr->opt_gen.t);
    CHECK(loaded->opt_disc.t == tr->opt_disc.t);
    CHECK(loaded->cfg.hash() == tr->cfg.hash());
    CHECK(params_equal(loaded->models.gen_params(), tr->models.gen_params()));
    CHECK(params_equal(loaded->models.disc_params(), tr->models.disc_params()));
    loaded->save_checkpoint(ck2.string());
    CHECK(read_file(ck1) == read_file(ck2));
    fs::remove_all(dir);
}

TEST_CASE("truncated checkpoint reports expected and actual byte counts") {
    Fixture fx(61, 16);
    TrainConfig cfg = tiny_train_cfg(19);
    cfg.sphere_init_iters = 0;
    auto tr = tiny_trainer(fx, cfg);

    fs::path dir = fs::temp_directory_path() / "intrin_ckpt_trunc";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path ck = dir / "t.ckpt";
    tr->save_checkpoint(ck.string());
    std::string bytes = read_file(ck);
    size_t full = bytes.size();
    size_t cut = full - 17;
    {
        std::ofstream f(ck, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), (std::streamsize)cut);
    }
    try {
        Trainer::load_checkpoint(ck.string());
        FAIL("load of a truncated checkpoint succeeded");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find(std::to_string(full)) != std::string::npos);
        CHECK(msg.find(std::to_string(cut)) != std::string::npos);
    }

    // garbage magic is rejected outright
    {
        std::ofstream f(ck, std::ios::binary | std::ios::trunc);
        f << "NOTACKPTxxxxxxxxxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_WITH_AS(Trainer::load_checkpoint(ck.string()), doctest::Contains("magic"),
                         std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("config hash mismatch on load requires force") {
    Fixture fx(67, 16);
    TrainConfig cfg = tiny_train_cfg(23);
    cfg.sphere_init_iters = 0;
    auto tr = tiny_trainer(fx, cfg);
    fs::path dir = fs::temp_directory_path() / "intrin_ckpt_hash";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path ck = dir / "h.ckpt";
    tr->save_checkpoint(ck.string());

    TrainConfig other = cfg;
    other.lambda_eik = cfg.lambda_eik * 3;
    CHECK_THROWS_WITH_AS(Trainer::load_checkpoint(ck.string(), &other),
                         doctest::Contains("mismatch"), std::runtime_error);
    auto forced = Trainer::load_checkpoint(ck.string(), &other, /*force=*/true);
    CHECK(forced->cfg.hash() == cfg.hash()); // the stored config wins
    auto same = Trainer::load_checkpoint(ck.string(), &cfg);
    CHECK(same->cfg.hash() == cfg.hash());
    fs::remove_all(dir);
}

TEST_CASE("a resumed run reproduces uninterrupted training bit-exactly") {
    Fixture fx(71, 16);
    TrainConfig cfg = tiny_train_cfg(29);
    auto a = tiny_trainer(fx, cfg);
    for (int i = 0; i < 5; ++i) a->train_step(fx.crops);

    fs::path dir = fs::temp_directory_path() / "intrin_ckpt_resume";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path ck = dir / "r.ckpt";
    a->save_checkpoint(ck.string());
    auto b = Trainer::load_checkpoint(ck.string(), &cfg);

    std::vector<LossReport> ra, rb;
    for (int i = 0; i < 10; ++i) ra.push_back(a->train_step(fx.crops));
    for (int i = 0; i < 10; ++i) rb.push_back(b->train_step(fx.crops));
    for (int i = 0; i < 10; ++i) {
        CHECK(ra[(size_t)i].adv == rb[(size_t)i].adv);
        CHECK(ra[(size_t)i].eikonal == rb[(size_t)i].eikonal);
        CHECK(ra[(size_t)i].r1 == rb[(size_t)i].r1);
    }
    CHECK(a->step_index == 15);
    CHECK(b->step_index == 15);
    CHECK(params_equal(a->models.gen_params(), b->models.gen_params()));
    CHECK(params_equal(a->models.disc_params(), b->models.disc_params()));
    fs::remove_all(dir);
}

TEST_CASE("five hundred steps shrink the generator adversarial loss") {
    // median over three seeds of the late-run adversarial term vs its value at
    // step 0 (measured right after the first discriminator update); the late
    // value averages the last 10 steps to smooth per-step GAN noise
    Fixture fx(73, 16);
    std::vector<double> first, late;
    for (uint64_t seed : {101ull, 202ull, 303ull}) {
        TrainConfig cfg = tiny_train_cfg(seed);
        cfg.iters = 500;
        auto tr = tiny_trainer(fx, cfg);
        double step0 = 0.0, tail = 0.0;
        for (int64_t i = 0; i < cfg.iters; ++i) {
            LossReport r = tr->train_step(fx.crops);
            if (i == 0) step0 = r.adv;
            if (i >= cfg.iters - 10) tail += r.adv;
        }
        first.push_back(step0);
        late.push_back(tail / 10.0);
    }
    auto median3 = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[1];
    };
    CHECK(median3(late) < median3(first));
}
