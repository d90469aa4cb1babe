#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/graph.hpp"
#include "cyclet/optim.hpp"
#include "cyclet/rng.hpp"

namespace cyclet {

struct ModelConfig {
    std::string kind = "teacher"; // "teacher" | "student"
    int num_classes = 10;
    int input_side = 56;          // must be a multiple of 8 (both nets downsample x8)
    double width_multiplier = 1.0;
    int blocks_per_stage = 2; // teacher only
    int hidden_units = 128;   // student head only
};

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.kind == b.kind && a.num_classes == b.num_classes && a.input_side == b.input_side &&
           a.width_multiplier == b.width_multiplier && a.blocks_per_stage == b.blocks_per_stage &&
           a.hidden_units == b.hidden_units;
}

inline void validate(const ModelConfig& c) {
    if (c.kind != "teacher" && c.kind != "student")
        throw ConfigError("model: unknown kind '" + c.kind + "'");
    if (c.num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (c.input_side < 8 || c.input_side % 8 != 0)
        throw ConfigError("model: input_side must be a positive multiple of 8, got " +
                          std::to_string(c.input_side));
    if (!(c.width_multiplier > 0.0)) throw ConfigError("model: width_multiplier must be > 0");
    if (c.blocks_per_stage < 1) throw ConfigError("model: blocks_per_stage must be >= 1");
    if (c.hidden_units < 1) throw ConfigError("model: hidden_units must be >= 1");
}

// Channel count under a width multiplier, floored so tiny multipliers still
// leave a usable network.
inline int scaled_channels(int base, double width_multiplier) {
    return std::max(4, int(std::lround(base * width_multiplier)));
}

// Base class: owns named parameters partitioned into "backbone" and "head"
// freeze groups and knows how to rebuild its forward graph on demand.
class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }
    virtual ~Model() = default;

    const ModelConfig& config() const { return cfg_; }

    // Appends the forward pass for `x` [N,3,S,S] to `g`, returns the logits node.
    virtual NodeId logits(Graph& g, NodeId x) = 0;

    void set_trainable(bool backbone, bool head) {
        backbone_trainable_ = backbone;
        head_trainable_ = head;
    }
    bool backbone_trainable() const { return backbone_trainable_; }
    bool head_trainable() const { return head_trainable_; }

    // Freeze-unit views with the current trainable flags; order is stable.
    std::vector<ParamGroup> groups() {
        ParamGroup backbone{"backbone", backbone_trainable_, {}};
        ParamGroup head{"head", head_trainable_, {}};
        for (NamedParam& p : params_) (p.group == "backbone" ? backbone : head).params.push_back(&p);
        return {backbone, head};
    }

    std::deque<NamedParam>& params() { return params_; }
    const std::deque<NamedParam>& params() const { return params_; }

    NamedParam& find_param(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("model: no parameter named '" + name + "'");
        return *it->second;
    }

    std::size_t weight_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.t.size();
        return n;
    }

protected:
    // fan_in == 0 marks a bias (zero-initialized).
    NamedParam& add_param(const std::string& name, const std::string& group,
                          std::vector<int> shape, int fan_in) {
        params_.push_back(NamedParam{name, group, Tensor(std::move(shape))});
        NamedParam& p = params_.back();
        index_[name] = &p;
        fan_in_.push_back(fan_in);
        return p;
    }

    // He-uniform for weights (limit sqrt(6/fan_in)), zeros for biases. Each
    // parameter gets its own stream keyed by registration index.
    void init_params(std::uint64_t seed) {
        std::size_t idx = 0;
        for (NamedParam& p : params_) {
            const int fan_in = fan_in_[idx];
            if (fan_in > 0) {
                Rng rng = stream_rng(seed, StreamTag::init, idx, 0);
                const float limit = float(std::sqrt(6.0 / double(fan_in)));
                for (float& w : p.t.v) w = rng.uniformf(-limit, limit);
            }
            ++idx;
        }
    }

    NodeId pnode(Graph& g, const std::string& name) {
        NamedParam& p = find_param(name);
        const bool tr = p.group == "backbone" ? backbone_trainable_ : head_trainable_;
        return g.param(p.t, tr);
    }

    NodeId conv(Graph& g, NodeId x, const std::string& base, int stride, int pad) {
        return g.conv2d(x, pnode(g, base + ".W"), pnode(g, base + ".b"), stride, pad);
    }

    ModelConfig cfg_;
    std::deque<NamedParam> params_; // deque: stable addresses for the name index
    std::map<std::string, NamedParam*> index_;
    std::vector<int> fan_in_;
    bool backbone_trainable_ = true;
    bool head_trainable_ = true;
};

// Four-stage residual CNN. Stem conv + 2x2 max-pool, stage strides 1/2/2/1,
// so the spatial extent shrinks by 8 before global average pooling.
class TeacherNet : public Model {
public:
    TeacherNet(ModelConfig cfg, std::uint64_t seed) : Model(std::move(cfg)) {
        if (cfg_.kind != "teacher") throw ConfigError("TeacherNet: config kind must be 'teacher'");
        const int base[4] = {32, 64, 128, 256};
        const int stage_stride[4] = {1, 2, 2, 1};
        int chn[4];
        for (int s = 0; s < 4; ++s) chn[s] = scaled_channels(base[s], cfg_.width_multiplier);

        add_param("backbone.stem.conv.W", "backbone", {chn[0], 3, 3, 3}, 3 * 9);
        add_param("backbone.stem.conv.b", "backbone", {chn[0]}, 0);

        int prev = chn[0];
        for (int s = 0; s < 4; ++s) {
            for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
                ResBlock blk;
                blk.base = "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
                blk.in = prev;
                blk.out = chn[s];
                blk.stride = b == 0 ? stage_stride[s] : 1;
                blk.proj = !(blk.stride == 1 && blk.in == blk.out);
                add_param(blk.base + ".conv1.W", "backbone", {blk.out, blk.in, 3, 3}, blk.in * 9);
                add_param(blk.base + ".conv1.b", "backbone", {blk.out}, 0);
                add_param(blk.base + ".conv2.W", "backbone", {blk.out, blk.out, 3, 3}, blk.out * 9);
                add_param(blk.base + ".conv2.b", "backbone", {blk.out}, 0);
                if (blk.proj) {
                    add_param(blk.base + ".proj.W", "backbone", {blk.out, blk.in, 1, 1}, blk.in);
                    add_param(blk.base + ".proj.b", "backbone", {blk.out}, 0);
                }
                blocks_.push_back(std::move(blk));
                prev = chn[s];
            }
        }
        add_param("head.fc.W", "head", {prev, cfg_.num_classes}, prev);
        add_param("head.fc.b", "head", {cfg_.num_classes}, 0);
        init_params(seed);
    }

    NodeId logits(Graph& g, NodeId x) override {
        NodeId h = conv(g, x, "backbone.stem.conv", 1, 1);
        h = g.relu(h);
        h = g.max_pool2d(h, 2, 2);
        for (const ResBlock& blk : blocks_) {
            NodeId main = conv(g, h, blk.base + ".conv1", blk.stride, 1);
            main = g.relu(main);
            main = conv(g, main, blk.base + ".conv2", 1, 1);
            const NodeId skip = blk.proj ? conv(g, h, blk.base + ".proj", blk.stride, 0) : h;
            h = g.relu(g.add(main, skip));
        }
        h = g.global_avg_pool(h);
        return g.dense(h, pnode(g, "head.fc.W"), pnode(g, "head.fc.b"));
    }

private:
    struct ResBlock {
        std::string base;
        int in = 0, out = 0, stride = 1;
        bool proj = false;
    };
    std::vector<ResBlock> blocks_;
};

// Compact student: strided stem + five inverted-residual blocks (expand x4,
// depthwise 3x3, linear projection), then GAP and a two-layer head.
class StudentNet : public Model {
public:
    StudentNet(ModelConfig cfg, std::uint64_t seed) : Model(std::move(cfg)) {
        if (cfg_.kind != "student") throw ConfigError("StudentNet: config kind must be 'student'");
        const int plan_in[5] = {16, 16, 24, 24, 32};
        const int plan_out[5] = {16, 24, 24, 32, 32};
        const int plan_stride[5] = {1, 2, 1, 2, 1};

        const int stem = scaled_channels(16, cfg_.width_multiplier);
        add_param("backbone.stem.conv.W", "backbone", {stem, 3, 3, 3}, 3 * 9);
        add_param("backbone.stem.conv.b", "backbone", {stem}, 0);

        for (int i = 0; i < 5; ++i) {
            InvBlock blk;
            blk.base = "backbone.block" + std::to_string(i + 1);
            blk.in = scaled_channels(plan_in[i], cfg_.width_multiplier);
            blk.out = scaled_channels(plan_out[i], cfg_.width_multiplier);
            blk.expanded = blk.in * 4;
            blk.stride = plan_stride[i];
            blk.skip = blk.stride == 1 && blk.in == blk.out;
            add_param(blk.base + ".expand.W", "backbone", {blk.expanded, blk.in}, blk.in);
            add_param(blk.base + ".expand.b", "backbone", {blk.expanded}, 0);
            add_param(blk.base + ".depthwise.W", "backbone", {blk.expanded, 3, 3}, 9);
            add_param(blk.base + ".depthwise.b", "backbone", {blk.expanded}, 0);
            add_param(blk.base + ".project.W", "backbone", {blk.out, blk.expanded}, blk.expanded);
            add_param(blk.base + ".project.b", "backbone", {blk.out}, 0);
            blocks_.push_back(std::move(blk));
        }
        const int feat = blocks_.back().out;
        add_param("head.fc1.W", "head", {feat, cfg_.hidden_units}, feat);
        add_param("head.fc1.b", "head", {cfg_.hidden_units}, 0);
        add_param("head.fc2.W", "head", {cfg_.hidden_units, cfg_.num_classes}, cfg_.hidden_units);
        add_param("head.fc2.b", "head", {cfg_.num_classes}, 0);
        init_params(seed);
    }

    NodeId logits(Graph& g, NodeId x) override {
        NodeId h = conv(g, x, "backbone.stem.conv", 2, 1);
        h = g.relu(h);
        for (const InvBlock& blk : blocks_) {
            NodeId e = g.pointwise_conv2d(h, pnode(g, blk.base + ".expand.W"),
                                          pnode(g, blk.base + ".expand.b"));
            e = g.relu(e);
            e = g.depthwise_conv2d(e, pnode(g, blk.base + ".depthwise.W"),
                                   pnode(g, blk.base + ".depthwise.b"), blk.stride, 1);
            e = g.relu(e);
            NodeId p = g.pointwise_conv2d(e, pnode(g, blk.base + ".project.W"),
                                          pnode(g, blk.base + ".project.b"));
            h = blk.skip ? g.add(p, h) : p;
        }
        h = g.global_avg_pool(h);
        h = g.dense(h, pnode(g, "head.fc1.W"), pnode(g, "head.fc1.b"));
        h = g.relu(h);
        return g.dense(h, pnode(g, "head.fc2.W"), pnode(g, "head.fc2.b"));
    }

private:
    struct InvBlock {
        std::string base;
        int in = 0, out = 0, expanded = 0, stride = 1;
        bool skip = false;
    };
    std::vector<InvBlock> blocks_;
};

inline std::unique_ptr<Model> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    if (cfg.kind == "teacher") return std::make_unique<TeacherNet>(cfg, seed);
    return std::make_unique<StudentNet>(cfg, seed);
}

// Forward a normalized batch [N,3,S,S] through the model, softmax the logits.
inline Tensor predict_probs(Model& model, const Tensor& batch) {
    if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != model.config().input_side ||
        batch.dim(3) != model.config().input_side)
        throw ShapeError("predict: expected batch [N,3," + std::to_string(model.config().input_side) +
                         "," + std::to_string(model.config().input_side) + "], got " +
                         shape_str(batch.shape));
    Graph g;
    const NodeId x = g.input(batch);
    const NodeId probs = g.softmax(model.logits(g, x));
    return g.value(probs);
}

} // namespace cyclet
