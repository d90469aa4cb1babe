#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "cyclet/error.hpp"
#include "cyclet/models.hpp"

namespace cyclet {

// Checkpoint layout (little-endian throughout):
//   magic "CYCLETCK", version u32
//   model config: kind str, num_classes i32, input_side i32,
//                 width_multiplier f64, blocks_per_stage i32, hidden_units i32
//   param_count u32, then per parameter:
//     name str, group str, ndim u32, dims i32[ndim], raw f32 data
// Strings are u32 length + bytes. Weights round-trip bit-exactly.

namespace detail {

inline constexpr char kCkptMagic[8] = {'C', 'Y', 'C', 'L', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void wr_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
}
inline void wr_u32(std::ostream& out, std::uint32_t v) { wr_bytes(out, &v, 4); }
inline void wr_i32(std::ostream& out, std::int32_t v) { wr_bytes(out, &v, 4); }
inline void wr_f64(std::ostream& out, double v) { wr_bytes(out, &v, 8); }
inline void wr_str(std::ostream& out, const std::string& s) {
    wr_u32(out, std::uint32_t(s.size()));
    wr_bytes(out, s.data(), s.size());
}

inline void rd_bytes(std::istream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) throw DataError(path + ": truncated checkpoint");
}
inline std::uint32_t rd_u32(std::istream& in, const std::string& path) {
    std::uint32_t v;
    rd_bytes(in, &v, 4, path);
    return v;
}
inline std::int32_t rd_i32(std::istream& in, const std::string& path) {
    std::int32_t v;
    rd_bytes(in, &v, 4, path);
    return v;
}
inline double rd_f64(std::istream& in, const std::string& path) {
    double v;
    rd_bytes(in, &v, 8, path);
    return v;
}
inline std::string rd_str(std::istream& in, const std::string& path) {
    const std::uint32_t n = rd_u32(in, path);
    if (n > (1u << 20)) throw DataError(path + ": implausible string length in checkpoint");
    std::string s(n, '\0');
    rd_bytes(in, s.data(), n, path);
    return s;
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    using namespace detail;
    wr_bytes(out, kCkptMagic, 8);
    wr_u32(out, kCkptVersion);
    const ModelConfig& c = model.config();
    wr_str(out, c.kind);
    wr_i32(out, c.num_classes);
    wr_i32(out, c.input_side);
    wr_f64(out, c.width_multiplier);
    wr_i32(out, c.blocks_per_stage);
    wr_i32(out, c.hidden_units);
    wr_u32(out, std::uint32_t(model.params().size()));
    for (const NamedParam& p : model.params()) {
        wr_str(out, p.name);
        wr_str(out, p.group);
        wr_u32(out, std::uint32_t(p.t.ndim()));
        for (int d : p.t.shape) wr_i32(out, d);
        wr_bytes(out, p.t.v.data(), p.t.v.size() * sizeof(float));
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

inline std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open checkpoint");
    using namespace detail;
    const std::string ps = path.string();

    char magic[8];
    rd_bytes(in, magic, 8, ps);
    if (std::memcmp(magic, kCkptMagic, 8) != 0) throw DataError(ps + ": bad checkpoint magic");
    const std::uint32_t version = rd_u32(in, ps);
    if (version != kCkptVersion)
        throw DataError(ps + ": unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    cfg.kind = rd_str(in, ps);
    cfg.num_classes = rd_i32(in, ps);
    cfg.input_side = rd_i32(in, ps);
    cfg.width_multiplier = rd_f64(in, ps);
    cfg.blocks_per_stage = rd_i32(in, ps);
    cfg.hidden_units = rd_i32(in, ps);

    std::unique_ptr<Model> model;
    try {
        model = build_model(cfg, 0); // weights are overwritten below
    } catch (const ConfigError& e) {
        throw DataError(ps + ": checkpoint config invalid: " + e.what());
    }

    const std::uint32_t count = rd_u32(in, ps);
    if (count != model->params().size())
        throw DataError(ps + ": checkpoint has " + std::to_string(count) + " parameters, model needs " +
                        std::to_string(model->params().size()));

    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = rd_str(in, ps);
        const std::string group = rd_str(in, ps);
        const std::uint32_t ndim = rd_u32(in, ps);
        if (ndim > 8) throw DataError(ps + ": implausible parameter rank");
        std::vector<int> dims(ndim);
        for (auto& d : dims) d = rd_i32(in, ps);
        NamedParam* p = nullptr;
        try {
            p = &model->find_param(name);
        } catch (const ShapeError&) {
            throw DataError(ps + ": unexpected parameter '" + name + "' in checkpoint");
        }
        if (!seen.insert(name).second) throw DataError(ps + ": duplicate parameter '" + name + "'");
        if (p->group != group) throw DataError(ps + ": group mismatch for '" + name + "'");
        if (p->t.shape != dims) throw DataError(ps + ": shape mismatch for '" + name + "'");
        rd_bytes(in, p->t.v.data(), p->t.v.size() * sizeof(float), ps);
    }
    return model;
}

} // namespace cyclet
