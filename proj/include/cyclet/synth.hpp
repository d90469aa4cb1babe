#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/image.hpp"
#include "cyclet/manifest.hpp"
#include "cyclet/rng.hpp"

namespace cyclet {

// --- color space helpers (h in degrees, s/v in [0,1], rgb in [0,255]) ---

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = std::fmod(h, 360.0);
    if (h < 0) h += 360.0;
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    switch (int(hp)) {
        case 0: r1 = c; g1 = x; break;
        case 1: r1 = x; g1 = c; break;
        case 2: g1 = c; b1 = x; break;
        case 3: g1 = x; b1 = c; break;
        case 4: r1 = x; b1 = c; break;
        default: r1 = c; b1 = x; break;
    }
    const double m = v - c;
    r = (r1 + m) * 255.0;
    g = (g1 + m) * 255.0;
    b = (b1 + m) * 255.0;
}

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    r /= 255.0;
    g /= 255.0;
    b /= 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx == 0.0 ? 0.0 : d / mx;
    if (d == 0.0) h = 0.0;
    else if (mx == r) h = 60.0 * std::fmod((g - b) / d, 6.0);
    else if (mx == g) h = 60.0 * ((b - r) / d + 2.0);
    else h = 60.0 * ((r - g) / d + 4.0);
    if (h < 0) h += 360.0;
}

// --- synthetic dataset ---

// Target-domain perturbation: hue rotation, additive brightness, gaussian
// pixel noise. All three at 0 leaves the image untouched bit for bit.
struct DomainShift {
    double hue_shift_deg = 0.0;
    double brightness_bias = 0.0;
    double noise_sigma = 0.0;
};

struct SynthSpec {
    int num_classes = 10;
    int train_per_class = 100;
    int val_per_class = 20; // unlabeled pool, target domain
    int test_per_class = 20;
    int image_side = 64;
    DomainShift shift{18.0, 25.0, 8.0}; // applied to val and test splits only
    std::uint64_t seed = 42;
};

inline std::uint8_t clamp_u8(double v) {
    return std::uint8_t(std::clamp(long(std::lround(v)), 0L, 255L));
}

// The shift parameters are per-image maxima: each image draws one severity
// factor in [0,1] that scales all three components together, the way lighting
// quality varies photo to photo. Lightly shifted images stay close to the
// source domain while heavily shifted ones become genuinely hard, so model
// confidence on the shifted pool correlates with label quality — the property
// confidence-thresholded pseudo-labeling relies on.
inline void apply_domain_shift(Image& img, const DomainShift& shift, Rng& rng) {
    const std::size_t n = img.px.size();
    const bool any = shift.hue_shift_deg != 0.0 || shift.brightness_bias != 0.0 ||
                     shift.noise_sigma > 0.0;
    if (!any) return; // zero shift is a bit-exact identity: no draws, no rewrite
    const double severity = rng.uniform01();
    if (shift.hue_shift_deg != 0.0) {
        const double hue = shift.hue_shift_deg * severity;
        for (std::size_t i = 0; i < n; i += 3) {
            double h, s, v, r, g, b;
            rgb_to_hsv(img.px[i], img.px[i + 1], img.px[i + 2], h, s, v);
            hsv_to_rgb(h + hue, s, v, r, g, b);
            img.px[i] = clamp_u8(r);
            img.px[i + 1] = clamp_u8(g);
            img.px[i + 2] = clamp_u8(b);
        }
    }
    if (shift.brightness_bias != 0.0) {
        const double bias = shift.brightness_bias * severity;
        for (std::size_t i = 0; i < n; ++i)
            img.px[i] = clamp_u8(double(img.px[i]) + bias);
    }
    if (shift.noise_sigma > 0.0) {
        // Quadratic in severity: light images stay readable while the worst
        // ones are destroyed outright, giving the pool a genuinely
        // unlabelable tail.
        const double sigma = shift.noise_sigma * severity * severity;
        for (std::size_t i = 0; i < n; ++i)
            img.px[i] = clamp_u8(double(img.px[i]) + rng.normal() * sigma);
    }
}

// One textured class instance. The class fixes a hue anchor and one of eight
// pattern families; instance parameters (phase, period, tone, ...) come from
// the per-image stream so every image is distinct but reproducible.
inline Image render_class_instance(int cls, int num_classes, int side, Rng& rng) {
    if (cls < 0 || cls >= num_classes) throw ConfigError("render: class out of range");
    const double scale = side / 64.0;
    const double hue = 360.0 * cls / num_classes + rng.uniform(-8.0, 8.0);
    double ar, ag, ab, br, bg, bb;
    hsv_to_rgb(hue, rng.uniform(0.65, 0.95), rng.uniform(0.75, 0.95), ar, ag, ab);
    hsv_to_rgb(hue + rng.uniform(-10.0, 10.0), rng.uniform(0.45, 0.75), rng.uniform(0.22, 0.40),
               br, bg, bb);

    const int fam = cls % 8;
    // pattern parameters, drawn once per image
    double period = std::max(2.0, rng.uniform(6.0, 14.0) * scale);
    const double phase = rng.uniform(0.0, 1.0);
    const double theta = 0.785398 + rng.uniform(-0.26, 0.26); // diag angle
    const int cell = std::max(3, int(std::lround(rng.uniform(5.0, 12.0) * scale)));
    const int cox = int(rng.uniform_int(std::uint64_t(cell)));
    const int coy = int(rng.uniform_int(std::uint64_t(cell)));
    const double spacing = std::max(4.0, rng.uniform(10.0, 18.0) * scale);
    const double radius = spacing * rng.uniform(0.26, 0.42);
    const double dox = rng.uniform(0.0, spacing);
    const double doy = rng.uniform(0.0, spacing);
    const double cx = side / 2.0 + rng.uniform(-side / 8.0, side / 8.0);
    const double cy = side / 2.0 + rng.uniform(-side / 8.0, side / 8.0);
    const double ring_period = std::max(3.0, rng.uniform(8.0, 16.0) * scale);
    const double grad_angle = rng.uniform(0.0, 6.283185);
    const int n_blobs = 3 + int(rng.uniform_int(4));
    std::vector<double> bx(n_blobs), by(n_blobs), bs(n_blobs);
    for (int i = 0; i < n_blobs; ++i) {
        bx[i] = rng.uniform(0.0, double(side));
        by[i] = rng.uniform(0.0, double(side));
        bs[i] = rng.uniform(side * 0.08, side * 0.16);
    }

    auto frac = [](double x) { return x - std::floor(x); };
    Image img(side, side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            double w = 0.0;
            switch (fam) {
                case 0: w = frac(y / period + phase) < 0.5 ? 1.0 : 0.0; break;
                case 1: w = frac(x / period + phase) < 0.5 ? 1.0 : 0.0; break;
                case 2: {
                    const double u = x * std::cos(theta) + y * std::sin(theta);
                    w = frac(u / period + phase) < 0.5 ? 1.0 : 0.0;
                    break;
                }
                case 3: w = (((x + cox) / cell + (y + coy) / cell) % 2 == 0) ? 1.0 : 0.0; break;
                case 4: {
                    const double gx = std::round((x - dox) / spacing) * spacing + dox;
                    const double gy = std::round((y - doy) / spacing) * spacing + doy;
                    const double d = std::hypot(x - gx, y - gy);
                    w = d < radius ? 1.0 : 0.0;
                    break;
                }
                case 5: {
                    const double d = std::hypot(x - cx, y - cy);
                    w = frac(d / ring_period + phase) < 0.5 ? 1.0 : 0.0;
                    break;
                }
                case 6: {
                    const double u = (x - side / 2.0) * std::cos(grad_angle) +
                                     (y - side / 2.0) * std::sin(grad_angle);
                    w = std::clamp(u / side + 0.5, 0.0, 1.0);
                    break;
                }
                default: {
                    double acc = 0.0;
                    for (int i = 0; i < n_blobs; ++i) {
                        const double d2 = (x - bx[i]) * (x - bx[i]) + (y - by[i]) * (y - by[i]);
                        acc += std::exp(-d2 / (2.0 * bs[i] * bs[i]));
                    }
                    w = std::clamp(acc, 0.0, 1.0);
                    break;
                }
            }
            // mild intrinsic noise so train images within a class vary
            img.at(x, y, 0) = clamp_u8(br + w * (ar - br) + rng.normal() * 3.0);
            img.at(x, y, 1) = clamp_u8(bg + w * (ag - bg) + rng.normal() * 3.0);
            img.at(x, y, 2) = clamp_u8(bb + w * (ab - bb) + rng.normal() * 3.0);
        }
    }
    return img;
}

struct SynthResult {
    std::filesystem::path train_csv, val_csv, test_csv;
    int train_count = 0, val_count = 0, test_count = 0;
};

// Writes out_dir/{train,val,test}/class_XX/img_XXXX.ppm plus one manifest per
// split. Train keeps source-domain images with labels; val is the shifted
// unlabeled pool; test is shifted and labeled. Byte-identical across re-runs
// with the same spec.
inline SynthResult generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
    if (spec.train_per_class < 1 || spec.val_per_class < 1 || spec.test_per_class < 1)
        throw ConfigError("synth: per-class counts must be positive");
    if (spec.image_side < 8) throw ConfigError("synth: image_side must be >= 8");
    if (spec.shift.noise_sigma < 0) throw ConfigError("synth: noise_sigma must be >= 0");

    const char* split_names[3] = {"train", "val", "test"};
    const int per_class[3] = {spec.train_per_class, spec.val_per_class, spec.test_per_class};

    SynthResult res;
    for (int split = 0; split < 3; ++split) {
        DatasetManifest m;
        m.root = out_dir;
        m.num_classes = spec.num_classes;
        for (int cls = 0; cls < spec.num_classes; ++cls) {
            char dir_buf[64];
            std::snprintf(dir_buf, sizeof dir_buf, "%s/class_%02d", split_names[split], cls);
            std::filesystem::create_directories(out_dir / dir_buf);
            for (int inst = 0; inst < per_class[split]; ++inst) {
                Rng rng = stream_rng(spec.seed, StreamTag::synth, std::uint64_t(split),
                                     (std::uint64_t(cls) << 32) | std::uint64_t(inst));
                Image img = render_class_instance(cls, spec.num_classes, spec.image_side, rng);
                if (split != 0) apply_domain_shift(img, spec.shift, rng);
                char name_buf[96];
                std::snprintf(name_buf, sizeof name_buf, "%s/img_%04d.ppm", dir_buf, inst);
                write_ppm(out_dir / name_buf, img);
                ManifestEntry e;
                e.path = name_buf;
                e.label = split == 1 ? kUnlabeled : cls; // val is the unlabeled pool
                m.entries.push_back(std::move(e));
            }
        }
        const auto csv = out_dir / (std::string(split_names[split]) + ".csv");
        save_manifest(csv, m);
        if (split == 0) { res.train_csv = csv; res.train_count = int(m.entries.size()); }
        else if (split == 1) { res.val_csv = csv; res.val_count = int(m.entries.size()); }
        else { res.test_csv = csv; res.test_count = int(m.entries.size()); }
    }
    return res;
}

} // namespace cyclet
