#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cyclet/augment.hpp"
#include "cyclet/error.hpp"
#include "cyclet/eval.hpp"
#include "cyclet/manifest.hpp"
#include "cyclet/models.hpp"
#include "cyclet/optim.hpp"
#include "cyclet/preprocess.hpp"
#include "cyclet/ssda.hpp"
#include "cyclet/util.hpp"

namespace cyclet {

// ---------------------------------------------------------------------------
// training data: images resized once up front, cropped/augmented per epoch
// ---------------------------------------------------------------------------

struct TrainExample {
    Image resized;
    int label = 0;
    Provenance provenance = Provenance::original;
};

struct TrainData {
    std::vector<TrainExample> examples;
    int num_classes = 0;
};

inline TrainData load_train_data(const DatasetManifest& m, int resize_side) {
    if (m.entries.empty()) throw DataError("train data: empty manifest");
    TrainData data;
    data.num_classes = m.num_classes;
    data.examples.resize(m.entries.size());
    parallel_for(int(m.entries.size()), [&](int i) {
        const ManifestEntry& e = m.entries[std::size_t(i)];
        if (e.label == kUnlabeled)
            throw DataError("train data: unlabeled row '" + e.path + "'");
        data.examples[std::size_t(i)].resized = resize_bilinear(read_ppm(m.resolve(e)), resize_side);
        data.examples[std::size_t(i)].label = e.label;
        data.examples[std::size_t(i)].provenance = e.provenance;
    });
    return data;
}

// ---------------------------------------------------------------------------
// one epoch of optimization
// ---------------------------------------------------------------------------

// Order per example: random crop (integer space) -> optional augmentation
// policy -> normalize. The example stream is keyed by (seed, epoch, dataset
// index) so results do not depend on batch size or worker count.
inline double train_epoch(Model& model, const TrainData& data, AdamW& opt, double lr,
                          int global_epoch, std::uint64_t seed, int batch_size,
                          const std::optional<AugPolicy>& policy) {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (data.examples.empty()) throw DataError("train: no examples");
    if (model.config().num_classes != data.num_classes)
        throw ShapeError("train: model/data class count mismatch");
    const int side = model.config().input_side;
    const int total = int(data.examples.size());

    std::vector<int> order(static_cast<std::size_t>(total), 0);
    for (int i = 0; i < total; ++i) order[std::size_t(i)] = i;
    Rng shuffle = stream_rng(seed, StreamTag::shuffle, std::uint64_t(global_epoch), 0);
    for (int i = total - 1; i > 0; --i)
        std::swap(order[std::size_t(i)], order[std::size_t(shuffle.uniform_int(std::uint64_t(i) + 1))]);

    const auto groups = model.groups();
    double loss_sum = 0.0;
    for (int begin = 0; begin < total; begin += batch_size) {
        const int n = std::min(batch_size, total - begin);
        Tensor batch({n, 3, side, side});
        std::vector<int> labels(static_cast<std::size_t>(n), 0);
        const std::size_t stride = std::size_t(3) * side * side;
        parallel_for(n, [&](int i) {
            const int idx = order[std::size_t(begin + i)];
            const TrainExample& ex = data.examples[std::size_t(idx)];
            Rng rng = example_rng(seed, global_epoch, std::uint64_t(idx));
            Image img = random_crop(ex.resized, side, rng);
            if (policy) img = apply(img, decide(*policy, rng));
            normalize_into(img, batch.v.data() + std::size_t(i) * stride);
            labels[std::size_t(i)] = ex.label;
        });
        Graph g;
        const NodeId x = g.input(std::move(batch));
        const NodeId loss = g.softmax_cross_entropy(model.logits(g, x), labels);
        zero_grads(groups);
        g.backward(loss);
        opt.step(groups, lr);
        loss_sum += double(g.value(loss).v[0]) * n;
    }
    return loss_sum / double(total);
}

// ---------------------------------------------------------------------------
// stages and schedules
// ---------------------------------------------------------------------------

struct StageConfig {
    std::string name; // Exploitation | Exploration | Stabilization
    int epochs = 0;
    std::vector<std::string> trainable_groups;
};

// Canonical freeze sets: head-only for the bookend stages, everything for
// Exploration.
inline std::vector<std::string> canonical_groups(const std::string& stage_name) {
    if (stage_name == "Exploitation" || stage_name == "Stabilization")
        return {"head"};
    if (stage_name == "Exploration") return {"backbone", "head"};
    throw ConfigError("stage: unknown stage name '" + stage_name + "'");
}

inline StageConfig make_stage(const std::string& name, int epochs) {
    return StageConfig{name, epochs, canonical_groups(name)};
}

inline void validate(const StageConfig& s) {
    const auto canon = canonical_groups(s.name); // throws on unknown name
    if (s.epochs < 1) throw ConfigError("stage " + s.name + ": epochs must be >= 1");
    for (const auto& g : s.trainable_groups)
        if (g != "backbone" && g != "head")
            throw ConfigError("stage " + s.name + ": unknown group name '" + g + "'");
    if (s.trainable_groups != canon)
        throw ConfigError("stage " + s.name + ": trainable groups must be exactly its canonical set");
}

struct CycleSchedule {
    std::vector<StageConfig> stages;
    LrSchedule lr;
    AdamWConfig opt;
    int batch_size = 32;
    int resize_side = 40; // images are pre-resized to this, cropped to the model side
    std::optional<AugPolicy> policy;
};

inline CycleSchedule default_cycle_schedule() {
    CycleSchedule s;
    s.stages = {make_stage("Exploitation", 10), make_stage("Exploration", 30),
                make_stage("Stabilization", 10)};
    s.policy = AugPolicy{};
    return s;
}

// ---------------------------------------------------------------------------
// logging
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0; // global, spans stage boundaries
    std::string stage;
    double lr = 0.0;
    double train_loss = 0.0;
    double top1 = std::nan(""); // NaN when no eval manifest was supplied
    double top3 = std::nan("");
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::vector<std::string> warnings;
};

inline void save_train_log(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "epoch,stage,lr,train_loss,top1,top3\n";
    char buf[160];
    for (const auto& r : log.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.8g,%.8g,", r.epoch, r.stage.c_str(), r.lr,
                      r.train_loss);
        out << buf;
        if (std::isnan(r.top1)) out << ',';
        else {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.top1, r.top3);
            out << buf;
        }
        out << '\n';
    }
    for (const auto& w : log.warnings) out << "# warning: " << w << '\n';
}

// ---------------------------------------------------------------------------
// the three-stage cycle
// ---------------------------------------------------------------------------

using StageCallback = std::function<void(int stage_index, const StageConfig&, Model&)>;

inline void apply_stage_freeze(Model& model, const StageConfig& stage) {
    bool backbone = false, head = false;
    for (const auto& g : stage.trainable_groups) {
        backbone = backbone || g == "backbone";
        head = head || g == "head";
    }
    model.set_trainable(backbone, head);
}

// Runs the configured stages back to back with one optimizer and one global
// epoch counter, so moments and the LR staircase carry across boundaries.
inline TrainLog cycle_train(Model& model, const TrainData& data, const CycleSchedule& sched,
                            std::uint64_t seed, const DatasetManifest* eval_manifest = nullptr,
                            const StageCallback& on_stage_end = {}) {
    if (sched.stages.empty()) throw ConfigError("cycle: no stages configured");
    for (const auto& s : sched.stages) validate(s);
    if (sched.policy) validate(*sched.policy);

    AdamW opt(sched.opt);
    TrainLog log;
    int global_epoch = 0;
    for (int si = 0; si < int(sched.stages.size()); ++si) {
        const StageConfig& stage = sched.stages[std::size_t(si)];
        apply_stage_freeze(model, stage);
        for (int e = 0; e < stage.epochs; ++e) {
            const double lr = sched.lr.lr_at(global_epoch);
            const double loss = train_epoch(model, data, opt, lr, global_epoch, seed,
                                            sched.batch_size, sched.policy);
            EpochRecord rec{global_epoch, stage.name, lr, loss, std::nan(""), std::nan("")};
            if (eval_manifest) {
                const Metrics m = evaluate(model, *eval_manifest, sched.resize_side, sched.batch_size);
                rec.top1 = m.top1;
                rec.top3 = m.top3;
            }
            log.epochs.push_back(std::move(rec));
            ++global_epoch;
        }
        if (on_stage_end) on_stage_end(si, stage, model);
    }
    model.set_trainable(true, true);
    return log;
}

// ---------------------------------------------------------------------------
// teacher pipeline: supervised phase, self-curation, refinement phase
// ---------------------------------------------------------------------------

struct TeacherPipelineConfig {
    int epochs_labeled = 10;
    int epochs_pseudo = 10;
    double tau = 0.9;
    LrSchedule lr;
    AdamWConfig opt;
    int batch_size = 32;
    int resize_side = 64;
    std::string refine_data = "pseudo"; // "pseudo" | "combined"
};

struct TeacherPipelineResult {
    TrainLog log;
    CurationReport report;
    DatasetManifest pseudo;
    bool phase_b_skipped = false;
};

inline TeacherPipelineResult train_teacher_pipeline(Model& teacher, const DatasetManifest& labeled,
                                                    const DatasetManifest& unlabeled,
                                                    const TeacherPipelineConfig& cfg,
                                                    std::uint64_t seed,
                                                    const DatasetManifest* eval_manifest = nullptr) {
    if (cfg.epochs_labeled < 1) throw ConfigError("teacher: epochs_labeled must be >= 1");
    if (cfg.epochs_pseudo < 1) throw ConfigError("teacher: epochs_pseudo must be >= 1");
    if (cfg.refine_data != "pseudo" && cfg.refine_data != "combined")
        throw ConfigError("teacher: refine_data must be 'pseudo' or 'combined', got '" +
                          cfg.refine_data + "'");

    TeacherPipelineResult res;
    AdamW opt(cfg.opt);
    teacher.set_trainable(true, true);
    int global_epoch = 0;

    auto run_phase = [&](const TrainData& data, int epochs, const char* phase_name) {
        for (int e = 0; e < epochs; ++e) {
            const double lr = cfg.lr.lr_at(global_epoch);
            const double loss =
                train_epoch(teacher, data, opt, lr, global_epoch, seed, cfg.batch_size, std::nullopt);
            EpochRecord rec{global_epoch, phase_name, lr, loss, std::nan(""), std::nan("")};
            if (eval_manifest) {
                const Metrics m = evaluate(teacher, *eval_manifest, cfg.resize_side, cfg.batch_size);
                rec.top1 = m.top1;
                rec.top3 = m.top3;
            }
            res.log.epochs.push_back(std::move(rec));
            ++global_epoch;
        }
    };

    const TrainData labeled_data = load_train_data(labeled, cfg.resize_side);
    run_phase(labeled_data, cfg.epochs_labeled, "labeled");

    const CurationResult cur = curate(teacher, unlabeled, cfg.tau, cfg.resize_side, cfg.batch_size);
    res.report = cur.report;
    res.pseudo = cur.pseudo;

    if (cur.report.accepted == 0) {
        res.phase_b_skipped = true;
        char buf[96];
        std::snprintf(buf, sizeof buf, "refinement skipped: 0 of %d pool images cleared tau=%.3f",
                      cur.report.total, cfg.tau);
        res.log.warnings.emplace_back(buf);
        return res;
    }

    const DatasetManifest refine_manifest =
        cfg.refine_data == "pseudo" ? cur.pseudo : merge(labeled, cur.pseudo);
    const TrainData refine_data = load_train_data(refine_manifest, cfg.resize_side);
    run_phase(refine_data, cfg.epochs_pseudo, "pseudo");
    return res;
}

} // namespace cyclet
