#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "cyclet/error.hpp"
#include "cyclet/image.hpp"
#include "cyclet/rng.hpp"
#include "cyclet/tensor.hpp"

namespace cyclet {

// Bilinear resample to side x side. Sample positions use the half-pixel
// convention src = (dst + 0.5) * scale - 0.5 so content is not shifted.
inline Image resize_bilinear(const Image& img, int side) {
    if (side <= 0) throw ShapeError("resize: side must be positive");
    if (img.width == side && img.height == side) return img;
    Image out(side, side);
    const float sx = float(img.width) / float(side);
    const float sy = float(img.height) / float(side);
    for (int y = 0; y < side; ++y) {
        float fy = (float(y) + 0.5f) * sy - 0.5f;
        fy = std::clamp(fy, 0.0f, float(img.height - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = fy - float(y0);
        for (int x = 0; x < side; ++x) {
            float fx = (float(x) + 0.5f) * sx - 0.5f;
            fx = std::clamp(fx, 0.0f, float(img.width - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = fx - float(x0);
            for (int c = 0; c < 3; ++c) {
                const float top = float(img.at(x0, y0, c)) * (1.0f - wx) + float(img.at(x1, y0, c)) * wx;
                const float bot = float(img.at(x0, y1, c)) * (1.0f - wx) + float(img.at(x1, y1, c)) * wx;
                const float v = top * (1.0f - wy) + bot * wy;
                out.at(x, y, c) = std::uint8_t(std::clamp(long(std::lround(v)), 0L, 255L));
            }
        }
    }
    return out;
}

inline Image crop(const Image& img, int ox, int oy, int side) {
    if (side <= 0) throw ShapeError("crop: side must be positive");
    if (ox < 0 || oy < 0 || ox + side > img.width || oy + side > img.height)
        throw ShapeError("crop: window [" + std::to_string(ox) + "," + std::to_string(oy) +
                         "]+" + std::to_string(side) + " exceeds image " +
                         std::to_string(img.width) + "x" + std::to_string(img.height));
    Image out(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(ox + x, oy + y, c);
    return out;
}

inline Image center_crop(const Image& img, int side) {
    return crop(img, (img.width - side) / 2, (img.height - side) / 2, side);
}

inline Image random_crop(const Image& img, int side, Rng& rng) {
    if (side > img.width || side > img.height)
        throw ShapeError("random_crop: side exceeds image dimensions");
    const int ox = int(rng.uniform_int(std::uint64_t(img.width - side + 1)));
    const int oy = int(rng.uniform_int(std::uint64_t(img.height - side + 1)));
    return crop(img, ox, oy, side);
}

// Map [0,255] to [-1,1]: v/127.5 - 1. Output layout is CHW.
inline void normalize_into(const Image& img, float* dst) {
    const std::size_t plane = std::size_t(img.width) * img.height;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t i = std::size_t(y) * img.width + x;
            for (int c = 0; c < 3; ++c)
                dst[std::size_t(c) * plane + i] = float(img.at(x, y, c)) / 127.5f - 1.0f;
        }
}

inline Tensor normalize_chw(const Image& img) {
    Tensor t({3, img.height, img.width});
    normalize_into(img, t.v.data());
    return t;
}

enum class CropMode { center, random };

// Full deterministic pipeline: resize -> crop -> normalize.
// Random crops draw offsets from `rng`; center mode ignores it.
inline Tensor preprocess(const Image& img, int resize_side, int crop_side, CropMode mode, Rng* rng = nullptr) {
    if (crop_side > resize_side) throw ShapeError("preprocess: crop side exceeds resize side");
    const Image resized = resize_bilinear(img, resize_side);
    if (mode == CropMode::random) {
        if (!rng) throw ShapeError("preprocess: random crop requires an rng");
        return normalize_chw(random_crop(resized, crop_side, *rng));
    }
    return normalize_chw(center_crop(resized, crop_side));
}

} // namespace cyclet
