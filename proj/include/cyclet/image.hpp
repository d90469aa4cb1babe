#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cyclet/error.hpp"

namespace cyclet {

// H x W x 3 raster, integer [0,255] space, row-major RGB triples.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> px;

    Image() = default;
    Image(int w, int h) : width(w), height(h), px(std::size_t(w) * h * 3, 0) {
        if (w <= 0 || h <= 0) throw DataError("image dimensions must be positive");
    }

    std::uint8_t& at(int x, int y, int c) { return px[(std::size_t(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return px[(std::size_t(y) * width + x) * 3 + c]; }
};

inline bool operator==(const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height && a.px == b.px;
}

namespace detail {

inline int ppm_token(std::istream& in, const std::string& path) {
    // skip whitespace and '#' comments
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw DataError(path + ": malformed PPM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

} // namespace detail

struct PpmHeader {
    int width = 0, height = 0;
};

inline PpmHeader read_ppm_header(std::istream& in, const std::string& path) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw DataError(path + ": not a binary PPM (P6) file");
    PpmHeader h;
    h.width = detail::ppm_token(in, path);
    h.height = detail::ppm_token(in, path);
    const int maxval = detail::ppm_token(in, path);
    if (h.width <= 0 || h.height <= 0) throw DataError(path + ": non-positive PPM dimensions");
    if (maxval != 255) throw DataError(path + ": unsupported PPM maxval " + std::to_string(maxval));
    return h;
}

inline PpmHeader read_ppm_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    return read_ppm_header(in, path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    const PpmHeader h = read_ppm_header(in, path.string());
    Image img(h.width, h.height);
    in.read(reinterpret_cast<char*>(img.px.data()), std::streamsize(img.px.size()));
    if (in.gcount() != std::streamsize(img.px.size()))
        throw DataError(path.string() + ": truncated pixel data");
    return img;
}

// Canonical form: "P6\n<w> <h>\n255\n" + raw RGB; byte-identical re-runs.
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()), std::streamsize(img.px.size()));
    if (!out) throw DataError(path.string() + ": write failed");
}

} // namespace cyclet
