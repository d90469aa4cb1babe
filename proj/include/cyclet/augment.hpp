#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/image.hpp"
#include "cyclet/rng.hpp"

namespace cyclet {

// Weak/strong policy: draw p ~ U[0,1); p below the flip threshold applies a
// horizontal flip, p above the strong threshold applies a random n-op chain,
// anything in between leaves the image alone.
struct AugPolicy {
    double flip_threshold = 0.3;
    double strong_threshold = 0.7;
    int n = 2; // chain length for the strong branch
    int m = 5; // shared magnitude, 0..10
};

inline void validate(const AugPolicy& p) {
    if (!(p.flip_threshold >= 0.0 && p.flip_threshold <= p.strong_threshold && p.strong_threshold <= 1.0))
        throw ConfigError("augment: need 0 <= flip_threshold <= strong_threshold <= 1");
    if (p.n < 1) throw ConfigError("augment: n must be >= 1");
    if (p.m < 0 || p.m > 10) throw ConfigError("augment: m must be in [0,10]");
}

enum class AugBranch { flip, identity, strong };

enum class AugOpKind { auto_contrast, brightness, color, contrast, rotate };

inline const char* aug_op_name(AugOpKind k) {
    switch (k) {
        case AugOpKind::auto_contrast: return "AutoContrast";
        case AugOpKind::brightness: return "Brightness";
        case AugOpKind::color: return "Color";
        case AugOpKind::contrast: return "Contrast";
        default: return "Rotate";
    }
}

struct AugOp {
    AugOpKind kind = AugOpKind::auto_contrast;
    double factor = 1.0;    // blend factor for Brightness/Color/Contrast
    double angle_deg = 0.0; // Rotate only
};

struct AugDecision {
    double p = 0.0;
    AugBranch branch = AugBranch::identity;
    std::vector<AugOp> ops; // strong branch only
};

namespace detail {

// Magnitude m maps to a blend factor 1 +- (m/10)*0.9, clamped to [0.1, 1.9],
// and to a rotation of +-(m/10)*30 degrees, clamped to [-30, 30].
inline AugOp draw_op(int m, Rng& rng) {
    AugOp op;
    op.kind = AugOpKind(rng.uniform_int(5));
    const double t = double(m) / 10.0;
    switch (op.kind) {
        case AugOpKind::auto_contrast:
            break;
        case AugOpKind::rotate: {
            const double sign = rng.coin() ? 1.0 : -1.0;
            op.angle_deg = std::clamp(sign * t * 30.0, -30.0, 30.0);
            break;
        }
        default: {
            const double sign = rng.coin() ? 1.0 : -1.0;
            op.factor = std::clamp(1.0 + sign * t * 0.9, 0.1, 1.9);
            break;
        }
    }
    return op;
}

} // namespace detail

inline AugDecision decide(const AugPolicy& policy, Rng& rng) {
    validate(policy);
    AugDecision d;
    d.p = rng.uniform01();
    if (d.p < policy.flip_threshold) {
        d.branch = AugBranch::flip;
    } else if (d.p > policy.strong_threshold) {
        d.branch = AugBranch::strong;
        d.ops.reserve(std::size_t(policy.n));
        for (int i = 0; i < policy.n; ++i) d.ops.push_back(detail::draw_op(policy.m, rng));
    } else {
        d.branch = AugBranch::identity;
    }
    return d;
}

inline Image flip_horizontal(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

namespace detail {

inline std::uint8_t to_u8(double v) {
    return std::uint8_t(std::clamp(long(std::lround(v)), 0L, 255L));
}

inline void channel_means(const Image& img, double mean[3]) {
    double acc[3] = {0, 0, 0};
    for (std::size_t i = 0; i < img.px.size(); i += 3)
        for (int c = 0; c < 3; ++c) acc[c] += img.px[i + c];
    const double n = double(img.px.size() / 3);
    for (int c = 0; c < 3; ++c) mean[c] = acc[c] / n;
}

} // namespace detail

// Per-channel min/max stretch to the full [0,255] range. A channel that is
// already full-range (or constant) is left unchanged.
inline Image auto_contrast(const Image& img) {
    Image out = img;
    for (int c = 0; c < 3; ++c) {
        int lo = 255, hi = 0;
        for (std::size_t i = c; i < img.px.size(); i += 3) {
            lo = std::min(lo, int(img.px[i]));
            hi = std::max(hi, int(img.px[i]));
        }
        if (lo == 0 && hi == 255) continue;
        if (lo == hi) continue;
        // divide last so exact halves (e.g. 127.5) survive to the rounding step
        for (std::size_t i = c; i < img.px.size(); i += 3)
            out.px[i] = detail::to_u8(double((int(img.px[i]) - lo) * 255) / double(hi - lo));
    }
    return out;
}

// Blend toward black: out = factor * img. factor 1 is the identity.
inline Image adjust_brightness(const Image& img, double factor) {
    Image out(img.width, img.height);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = detail::to_u8(factor * img.px[i]);
    return out;
}

// Blend between the grayscale (luma) version and the original.
inline Image adjust_color(const Image& img, double factor) {
    Image out(img.width, img.height);
    for (std::size_t i = 0; i < img.px.size(); i += 3) {
        const double luma = 0.299 * img.px[i] + 0.587 * img.px[i + 1] + 0.114 * img.px[i + 2];
        for (int c = 0; c < 3; ++c)
            out.px[i + c] = detail::to_u8(luma + factor * (img.px[i + c] - luma));
    }
    return out;
}

// Blend between the per-channel mean image and the original; factor 0
// collapses every pixel to the channel mean.
inline Image adjust_contrast(const Image& img, double factor) {
    double mean[3];
    detail::channel_means(img, mean);
    Image out(img.width, img.height);
    for (std::size_t i = 0; i < img.px.size(); i += 3)
        for (int c = 0; c < 3; ++c)
            out.px[i + c] = detail::to_u8(mean[c] + factor * (img.px[i + c] - mean[c]));
    return out;
}

// Rotate about the image center with nearest-neighbor sampling; pixels that
// map outside the source are filled with the channel means.
inline Image rotate(const Image& img, double angle_deg) {
    double mean[3];
    detail::channel_means(img, mean);
    const std::uint8_t fill[3] = {detail::to_u8(mean[0]), detail::to_u8(mean[1]),
                                  detail::to_u8(mean[2])};
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // inverse mapping: rotate destination coords back into the source
            const double dx = x - cx, dy = y - cy;
            const int sx0 = int(std::lround(cs * dx + sn * dy + cx));
            const int sy0 = int(std::lround(-sn * dx + cs * dy + cy));
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = (sx0 >= 0 && sx0 < img.width && sy0 >= 0 && sy0 < img.height)
                                      ? img.at(sx0, sy0, c)
                                      : fill[c];
        }
    }
    return out;
}

inline Image apply_op(const Image& img, const AugOp& op) {
    switch (op.kind) {
        case AugOpKind::auto_contrast: return auto_contrast(img);
        case AugOpKind::brightness: return adjust_brightness(img, op.factor);
        case AugOpKind::color: return adjust_color(img, op.factor);
        case AugOpKind::contrast: return adjust_contrast(img, op.factor);
        default: return rotate(img, op.angle_deg);
    }
}

inline Image apply(const Image& img, const AugDecision& d) {
    switch (d.branch) {
        case AugBranch::flip: return flip_horizontal(img);
        case AugBranch::identity: return img;
        default: {
            Image out = img;
            for (const auto& op : d.ops) out = apply_op(out, op);
            return out;
        }
    }
}

// Standalone strong-chain entry point: sample n ops at magnitude m and fold
// them over the image.
inline Image rand_aug(const Image& img, int n, int m, Rng& rng) {
    if (n < 1) throw ConfigError("rand_aug: n must be >= 1");
    if (m < 0 || m > 10) throw ConfigError("rand_aug: m must be in [0,10]");
    Image out = img;
    for (int i = 0; i < n; ++i) out = apply_op(out, detail::draw_op(m, rng));
    return out;
}

} // namespace cyclet
