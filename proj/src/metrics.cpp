#include "intrin/metrics.hpp"
#include "intrin/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace intrin {

namespace {

void check_image(const Tensor& t, const char* who) {
    if (t.shape.size() != 3 || t.shape[0] < 1 || t.shape[1] < 1 || t.shape[2] < 1)
        throw std::invalid_argument(std::string(who) + ": expected a [C,H,W] tensor");
}

void check_pair(const Tensor& a, const Tensor& b, const Tensor& mask, const char* who) {
    check_image(a, who);
    check_image(b, who);
    check_image(mask, who);
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(who) + ": image shapes differ");
    if (mask.shape[0] != 1 || mask.shape[1] != a.shape[1] || mask.shape[2] != a.shape[2])
        throw std::invalid_argument(std::string(who) + ": mask must be [1,H,W] matching the images");
}

int64_t mask_count(const Tensor& mask) {
    int64_t n = 0;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask.ptr()[i] > 0.5) ++n;
    return n;
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const double* gaussian_window() {
    static std::vector<double> w = [] {
        std::vector<double> k((size_t)kWin * kWin);
        double sum = 0;
        for (int dy = 0; dy < kWin; ++dy)
            for (int dx = 0; dx < kWin; ++dx) {
                double y = dy - kWin / 2, x = dx - kWin / 2;
                double v = std::exp(-(x * x + y * y) / (2 * kSigma * kSigma));
                k[(size_t)(dy * kWin + dx)] = v;
                sum += v;
            }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w.data();
}

} // namespace

double si_depth_mse(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_pair(pred, gt, mask, "si_depth_mse");
    if (pred.shape[0] != 1)
        throw std::invalid_argument("si_depth_mse: depth maps must be single-channel");
    std::vector<double> d;
    for (int64_t i = 0; i < mask.numel(); ++i) {
        if (mask.ptr()[i] <= 0.5) continue;
        double p = pred.ptr()[i], g = gt.ptr()[i];
        if (!(p > 0) || !(g > 0))
            throw std::invalid_argument("si_depth_mse: non-positive depth under the mask");
        d.push_back(std::log(p) - std::log(g));
    }
    if (d.empty()) throw std::invalid_argument("si_depth_mse: empty mask");
    double m = 0;
    for (double v : d) m += v;
    m /= (double)d.size();
    double var = 0;
    for (double v : d) var += (v - m) * (v - m);
    return var / (double)d.size();
}

double psnr(const Tensor& a, const Tensor& b, const Tensor& mask) {
    check_pair(a, b, mask, "psnr");
    int64_t ch = a.shape[0], hw = a.shape[1] * a.shape[2];
    double se = 0;
    int64_t n = 0;
    for (int64_t i = 0; i < hw; ++i) {
        if (mask.ptr()[i] <= 0.5) continue;
        for (int64_t c = 0; c < ch; ++c) {
            double d = a.ptr()[c * hw + i] - b.ptr()[c * hw + i];
            se += d * d;
        }
        ++n;
    }
    if (n == 0) throw std::invalid_argument("psnr: empty mask");
    double mse = se / (double)(n * ch);
    if (mse < 1e-10) return 99.0;
    return std::min(10.0 * std::log10(1.0 / mse), 99.0);
}

double ssim(const Tensor& a, const Tensor& b, const Tensor& mask) {
    check_pair(a, b, mask, "ssim");
    int64_t ch = a.shape[0], h = a.shape[1], w = a.shape[2];
    const double* win = gaussian_window();
    const int r = kWin / 2;
    double total = 0;
    int64_t centers = 0;
    for (int64_t cy = 0; cy < h; ++cy)
        for (int64_t cx = 0; cx < w; ++cx) {
            if (mask.ptr()[cy * w + cx] <= 0.5) continue;
            // collect the masked in-image support once, shared by all channels
            double wsum = 0;
            std::array<double, (size_t)kWin * kWin> wv{};
            std::array<int64_t, (size_t)kWin * kWin> idx{};
            int np = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int64_t y = cy + dy, x = cx + dx;
                    if (y < 0 || y >= h || x < 0 || x >= w) continue;
                    if (mask.ptr()[y * w + x] <= 0.5) continue;
                    double g = win[(dy + r) * kWin + (dx + r)];
                    wv[(size_t)np] = g;
                    idx[(size_t)np] = y * w + x;
                    wsum += g;
                    ++np;
                }
            for (int64_t c = 0; c < ch; ++c) {
                const double* pa = a.ptr() + c * h * w;
                const double* pb = b.ptr() + c * h * w;
                double ma = 0, mb = 0;
                for (int i = 0; i < np; ++i) {
                    double g = wv[(size_t)i] / wsum;
                    ma += g * pa[idx[(size_t)i]];
                    mb += g * pb[idx[(size_t)i]];
                }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < np; ++i) {
                    double g = wv[(size_t)i] / wsum;
                    double da = pa[idx[(size_t)i]] - ma, db = pb[idx[(size_t)i]] - mb;
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
                total += (2 * ma * mb + kC1) * (2 * cov + kC2) /
                         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            }
            ++centers;
        }
    if (centers == 0) throw std::invalid_argument("ssim: empty mask");
    return total / (double)(centers * ch);
}

double normal_angle_error(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_pair(pred, gt, mask, "normal_angle_error");
    if (pred.shape[0] != 3)
        throw std::invalid_argument("normal_angle_error: normal maps must be [3,H,W]");
    int64_t hw = pred.shape[1] * pred.shape[2];
    double sum = 0;
    int64_t n = 0;
    for (int64_t i = 0; i < hw; ++i) {
        if (mask.ptr()[i] <= 0.5) continue;
        double dot = 0;
        for (int64_t c = 0; c < 3; ++c) dot += pred.ptr()[c * hw + i] * gt.ptr()[c * hw + i];
        dot = std::max(-1.0, std::min(1.0, dot));
        sum += std::acos(dot) * 180.0 / M_PI;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("normal_angle_error: empty mask");
    return sum / (double)n;
}

SiAlbedo si_albedo_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_pair(pred, gt, mask, "si_albedo_metrics");
    if (pred.shape[0] != 3)
        throw std::invalid_argument("si_albedo_metrics: albedo maps must be [3,H,W]");
    int64_t hw = pred.shape[1] * pred.shape[2];
    if (mask_count(mask) == 0) throw std::invalid_argument("si_albedo_metrics: empty mask");
    SiAlbedo out;
    Tensor scaled = pred;
    for (int64_t c = 0; c < 3; ++c) {
        double num = 0, den = 0;
        for (int64_t i = 0; i < hw; ++i) {
            if (mask.ptr()[i] <= 0.5) continue;
            num += pred.ptr()[c * hw + i] * gt.ptr()[c * hw + i];
            den += pred.ptr()[c * hw + i] * pred.ptr()[c * hw + i];
        }
        if (den == 0)
            throw std::invalid_argument("si_albedo_metrics: prediction is zero under the mask");
        out.scale[(size_t)c] = num / den;
        for (int64_t i = 0; i < hw; ++i) {
            double v = pred.ptr()[c * hw + i] * out.scale[(size_t)c];
            scaled.ptr()[c * hw + i] = std::max(0.0, std::min(1.0, v));
        }
    }
    out.psnr = psnr(scaled, gt, mask);
    out.ssim = ssim(scaled, gt, mask);
    return out;
}

double recon_proxy_error(const Tensor& a, const Tensor& b, const Tensor& mask) {
    check_pair(a, b, mask, "recon_proxy_error");
    auto one_scale = [](const Tensor& x, const Tensor& y, const Tensor& m) {
        int64_t ch = x.shape[0], hw = x.shape[1] * x.shape[2];
        double l1 = 0;
        int64_t n = 0;
        for (int64_t i = 0; i < hw; ++i) {
            if (m.ptr()[i] <= 0.5) continue;
            for (int64_t c = 0; c < ch; ++c)
                l1 += std::abs(x.ptr()[c * hw + i] - y.ptr()[c * hw + i]);
            ++n;
        }
        l1 /= (double)(n * ch);
        return 0.5 * l1 + 0.5 * (1.0 - ssim(x, y, m));
    };
    double full = one_scale(a, b, mask);
    int64_t h2 = a.shape[1] / 2, w2 = a.shape[2] / 2;
    if (h2 < 1 || w2 < 1) return full;
    // zero the background before downsampling so pixels outside the mask can
    // never bleed into the half-scale comparison
    int64_t ch = a.shape[0], hw = a.shape[1] * a.shape[2];
    Tensor af = a, bf = b;
    for (int64_t i = 0; i < hw; ++i)
        if (mask.ptr()[i] <= 0.5)
            for (int64_t c = 0; c < ch; ++c) af.ptr()[c * hw + i] = bf.ptr()[c * hw + i] = 0.0;
    Tensor a2 = tk::bilinear_resize(af, h2, w2);
    Tensor b2 = tk::bilinear_resize(bf, h2, w2);
    Tensor m2 = tk::bilinear_resize(mask, h2, w2);
    for (int64_t i = 0; i < m2.numel(); ++i) m2.ptr()[i] = m2.ptr()[i] > 0.5 ? 1.0 : 0.0;
    if (mask_count(m2) == 0) return full;
    return 0.5 * (full + one_scale(a2, b2, m2));
}

} // namespace intrin
