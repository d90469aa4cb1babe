#pragma once

// Experiment orchestration: the command implementations behind the CLI.
// Every command takes a RunConfig, reads/writes artifacts under cfg.run.out,
// and returns its results so tests can drive the pipeline in-process.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cyclet/checkpoint.hpp"
#include "cyclet/config.hpp"
#include "cyclet/cycle.hpp"
#include "cyclet/eval.hpp"
#include "cyclet/ssda.hpp"
#include "cyclet/synth.hpp"

namespace cyclet {

namespace fs_ = std::filesystem;

// Teacher and student draw their init/shuffle/example streams from disjoint
// seeds so the two trainings never consume correlated randomness.
inline std::uint64_t teacher_seed(std::uint64_t run_seed) {
    return hash_combine(run_seed, 0x7ea2c8e11ull);
}
inline std::uint64_t student_seed(std::uint64_t run_seed) {
    return hash_combine(run_seed, 0x57d3e47ull);
}

inline fs_::path ensure_dir(const fs_::path& p) {
    fs_::create_directories(p);
    return p;
}

// Every command snapshots the effective config into its run directory so a
// finished run is self-describing.
inline fs_::path snapshot_config(const RunConfig& cfg) {
    const fs_::path out = ensure_dir(cfg.run.out);
    save_config(out / "config.ini", cfg);
    return out;
}

// --- gen-data ----------------------------------------------------------------

inline SynthResult cmd_gen_data(const RunConfig& cfg) {
    validate(cfg);
    snapshot_config(cfg);
    return generate_synthetic(synth_spec(cfg), cfg.dataset.root);
}

// --- shared loading helpers ---------------------------------------------------

inline DatasetManifest load_split(const RunConfig& cfg, const std::string& split) {
    return load_manifest(fs_::path(cfg.dataset.root) / (split + ".csv"), cfg.dataset.num_classes);
}

inline void save_curation_report(const fs_::path& path, const CurationReport& r) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write curation report: " + path.string());
    out << "total,accepted,acceptance_rate,mean_confidence,per_class\n";
    out << r.total << "," << r.accepted << "," << r.acceptance_rate << "," << r.mean_confidence
        << ",";
    for (std::size_t i = 0; i < r.per_class.size(); ++i)
        out << (i ? ";" : "") << r.per_class[i];
    out << "\n";
}

// --- train-teacher -------------------------------------------------------------

struct TeacherRunResult {
    TeacherPipelineResult pipeline;
    Metrics test_metrics;
    fs_::path checkpoint;
};

inline TeacherRunResult cmd_train_teacher(const RunConfig& cfg) {
    validate(cfg);
    const fs_::path out = snapshot_config(cfg);
    const fs_::path dir = ensure_dir(out / "teacher");

    const DatasetManifest train_m = load_split(cfg, "train");
    const DatasetManifest pool_m = load_split(cfg, "val");
    const DatasetManifest test_m = load_split(cfg, "test");

    const std::uint64_t seed = teacher_seed(cfg.run.seed);
    auto model = build_model(teacher_model_config(cfg), seed);

    TeacherRunResult res;
    res.pipeline = train_teacher_pipeline(*model, train_m, pool_m, teacher_pipeline_config(cfg), seed);
    res.checkpoint = dir / "teacher.ckpt";
    save_checkpoint(res.checkpoint, *model);
    save_train_log(dir / "log.csv", res.pipeline.log);
    save_curation_report(dir / "curation.csv", res.pipeline.report);
    if (!res.pipeline.phase_b_skipped)
        save_manifest(dir / "pseudo.csv", rebase_manifest(res.pipeline.pseudo, dir),
                      ManifestFormat::extended);

    res.test_metrics = evaluate(*model, test_m, cfg.teacher.resize_side, cfg.teacher.batch_size);
    std::ofstream met(dir / "metrics.csv");
    met << "top1,top3,n\n"
        << res.test_metrics.top1 << "," << res.test_metrics.top3 << ","
        << res.test_metrics.n_examples << "\n";
    return res;
}

// --- pseudo-label ---------------------------------------------------------------

inline CurationResult cmd_pseudo_label(const RunConfig& cfg, const fs_::path& ckpt,
                                       const fs_::path& pool_csv, const fs_::path& out_csv,
                                       double tau) {
    validate(cfg);
    auto model = load_checkpoint(ckpt);
    const DatasetManifest pool = load_manifest(pool_csv, model->config().num_classes);
    const int resize = model->config().kind == "teacher" ? cfg.teacher.resize_side
                                                         : cfg.student.resize_side;
    const int batch = model->config().kind == "teacher" ? cfg.teacher.batch_size
                                                        : cfg.student.batch_size;
    CurationResult cur = curate(*model, pool, tau, resize, batch);
    const fs_::path out_root = out_csv.parent_path().empty() ? fs_::path(".") : out_csv.parent_path();
    ensure_dir(out_root);
    save_manifest(out_csv, rebase_manifest(cur.pseudo, out_root), ManifestFormat::extended);
    return cur;
}

// --- train-student ----------------------------------------------------------------

// One cell of the experiment grid: which pieces of the pipeline are on.
struct StudentVariant {
    bool use_ssda = true;
    bool use_aug = true;
    int stages = 3;    // run the first N stages of the cycle
    double tau = -1.0; // pseudo-label threshold; negative means cfg.ssda.tau_student
};

struct StudentRunResult {
    TrainLog log;
    Metrics test_metrics;
    std::optional<CurationReport> curation; // present when use_ssda
    fs_::path checkpoint;                   // empty when not saved
};

inline StudentRunResult train_student_variant(const RunConfig& cfg, std::uint64_t run_seed,
                                              const StudentVariant& v, Model* teacher,
                                              const DatasetManifest& train_m,
                                              const DatasetManifest& pool_m,
                                              const DatasetManifest& test_m,
                                              const fs_::path* save_dir,
                                              bool eval_each_epoch = false) {
    if (v.stages < 1 || v.stages > 3)
        throw ConfigError("student variant: stages must be in [1,3], got " +
                          std::to_string(v.stages));
    if (v.use_ssda && teacher == nullptr)
        throw ConfigError("student variant: pseudo-labeling requires a teacher model");

    StudentRunResult res;
    DatasetManifest effective = train_m;
    if (v.use_ssda) {
        const double tau = v.tau >= 0.0 ? v.tau : cfg.ssda.tau_student;
        CurationResult cur =
            curate(*teacher, pool_m, tau, cfg.teacher.resize_side, cfg.teacher.batch_size);
        res.curation = cur.report;
        if (cur.report.accepted > 0) effective = merge(train_m, cur.pseudo);
        if (save_dir && cur.report.accepted > 0)
            save_manifest(*save_dir / "pseudo.csv", rebase_manifest(cur.pseudo, *save_dir),
                          ManifestFormat::extended);
    }

    CycleSchedule sched = student_schedule(cfg);
    sched.stages.resize(std::size_t(v.stages));
    if (!v.use_aug) sched.policy.reset();

    const std::uint64_t seed = student_seed(run_seed);
    auto model = build_model(student_model_config(cfg), seed);

    const TrainData data = load_train_data(effective, sched.resize_side);
    StageCallback cb;
    if (save_dir)
        cb = [&](int idx, const StageConfig&, Model& m) {
            save_checkpoint(*save_dir / ("stage" + std::to_string(idx) + ".ckpt"), m);
        };
    res.log = cycle_train(*model, data, sched, seed, eval_each_epoch ? &test_m : nullptr, cb);
    if (res.curation && res.curation->accepted == 0)
        res.log.warnings.push_back("pseudo-labeling kept 0 of " +
                                   std::to_string(res.curation->total) +
                                   " pool images; trained on labeled data only");

    res.test_metrics = evaluate(*model, test_m, sched.resize_side, sched.batch_size);
    if (save_dir) {
        res.checkpoint = *save_dir / "final.ckpt";
        save_checkpoint(res.checkpoint, *model);
        save_train_log(*save_dir / "log.csv", res.log);
        if (res.curation) save_curation_report(*save_dir / "curation.csv", *res.curation);
        std::ofstream met(*save_dir / "metrics.csv");
        met << "top1,top3,n\n"
            << res.test_metrics.top1 << "," << res.test_metrics.top3 << ","
            << res.test_metrics.n_examples << "\n";
    }
    return res;
}

inline StudentRunResult cmd_train_student(const RunConfig& cfg, const StudentVariant& v,
                                          fs_::path teacher_ckpt = {}) {
    validate(cfg);
    const fs_::path out = snapshot_config(cfg);
    const fs_::path dir = ensure_dir(out / "student");

    const DatasetManifest train_m = load_split(cfg, "train");
    const DatasetManifest pool_m = load_split(cfg, "val");
    const DatasetManifest test_m = load_split(cfg, "test");

    std::unique_ptr<Model> teacher;
    if (v.use_ssda) {
        if (teacher_ckpt.empty()) teacher_ckpt = out / "teacher" / "teacher.ckpt";
        teacher = load_checkpoint(teacher_ckpt);
    }
    return train_student_variant(cfg, cfg.run.seed, v, teacher.get(), train_m, pool_m, test_m,
                                 &dir, /*eval_each_epoch=*/true);
}

// --- eval / bench ------------------------------------------------------------------

struct EvalResult {
    Metrics metrics;
    LatencyReport latency;
    double score = 0.0;
};

inline EvalResult cmd_eval(const RunConfig& cfg, const fs_::path& ckpt,
                           const fs_::path& manifest_csv) {
    validate(cfg);
    const fs_::path out = snapshot_config(cfg);
    auto model = load_checkpoint(ckpt);
    const bool is_teacher = model->config().kind == "teacher";
    const int resize = is_teacher ? cfg.teacher.resize_side : cfg.student.resize_side;
    const int batch = is_teacher ? cfg.teacher.batch_size : cfg.student.batch_size;
    const DatasetManifest m = load_manifest(manifest_csv, model->config().num_classes);

    EvalResult res;
    res.metrics = evaluate(*model, m, resize, batch);
    res.latency = measure_latency(*model, cfg.eval.latency_iterations, cfg.eval.latency_warmup);
    res.score = challenge_score(res.metrics.top1, res.metrics.top3, res.latency.mean_ms,
                                cfg.eval.score_c);

    const fs_::path dir = ensure_dir(out / "eval");
    std::ofstream met(dir / "metrics.csv");
    met << "top1,top3,n,latency_ms_mean,latency_ms_std,score\n"
        << res.metrics.top1 << "," << res.metrics.top3 << "," << res.metrics.n_examples << ","
        << res.latency.mean_ms << "," << res.latency.std_ms << "," << res.score << "\n";
    return res;
}

inline LatencyReport cmd_bench(const RunConfig& cfg, const fs_::path& ckpt) {
    validate(cfg);
    const fs_::path out = snapshot_config(cfg);
    auto model = load_checkpoint(ckpt);
    const LatencyReport lat =
        measure_latency(*model, cfg.eval.latency_iterations, cfg.eval.latency_warmup);
    const fs_::path dir = ensure_dir(out / "bench");
    std::ofstream f(dir / "latency.csv");
    f << "iteration,ms\n";
    for (std::size_t i = 0; i < lat.per_iter_ms.size(); ++i)
        f << i << "," << lat.per_iter_ms[i] << "\n";
    f << "# mean_ms=" << lat.mean_ms << " std_ms=" << lat.std_ms << " warmup=" << lat.warmup
      << "\n";
    return lat;
}

// --- ablate -------------------------------------------------------------------------

struct AblationCell {
    std::string name;
    StudentVariant variant;
};

// The grid: pipeline-component toggles, cycle-stage prefixes, and the
// confidence-threshold sweep. Cells that resolve to identical work (for
// example a sweep threshold equal to the default) are deduplicated by
// run_ablation and share one training run.
inline std::vector<AblationCell> ablation_cells(const RunConfig& cfg) {
    std::vector<AblationCell> cells;
    cells.push_back({"baseline", {false, false, 3, -1.0}});
    cells.push_back({"aug_only", {false, true, 3, -1.0}});
    cells.push_back({"ssda_only", {true, false, 3, cfg.ssda.tau_student}});
    cells.push_back({"full", {true, true, 3, cfg.ssda.tau_student}});
    cells.push_back({"stage1", {true, true, 1, cfg.ssda.tau_student}});
    cells.push_back({"stage12", {true, true, 2, cfg.ssda.tau_student}});
    for (const double t : cfg.ablate.thresholds)
        cells.push_back({"tau_" + detail::fmt_double(t), {true, true, 3, t}});
    return cells;
}

inline std::string variant_key(const StudentVariant& v) {
    std::ostringstream o;
    o << v.use_ssda << "/" << v.use_aug << "/" << v.stages << "/";
    if (v.use_ssda)
        o << detail::fmt_double(v.tau);
    else
        o << "-"; // threshold is irrelevant without pseudo-labeling
    return o.str();
}

struct CellResult {
    std::string cell;
    std::uint64_t seed = 0;
    Metrics metrics;
};

inline void save_cell_results(const fs_::path& path, const std::vector<CellResult>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ablation results: " + path.string());
    out << "cell,seed,top1,top3,n\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.cell << "," << r.seed << "," << r.metrics.top1 << "," << r.metrics.top3 << ","
            << r.metrics.n_examples << "\n";
}

inline std::vector<CellResult> load_cell_results(const fs_::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ablation results: " + path.string());
    std::vector<CellResult> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue; // header
        std::istringstream ls(line);
        CellResult r;
        std::string f;
        try {
            if (!std::getline(ls, r.cell, ',')) throw std::invalid_argument("cell");
            if (!std::getline(ls, f, ',')) throw std::invalid_argument("seed");
            r.seed = std::stoull(f);
            if (!std::getline(ls, f, ',')) throw std::invalid_argument("top1");
            r.metrics.top1 = std::stod(f);
            if (!std::getline(ls, f, ',')) throw std::invalid_argument("top3");
            r.metrics.top3 = std::stod(f);
            if (!std::getline(ls, f, ',')) throw std::invalid_argument("n");
            r.metrics.n_examples = std::stoi(f);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed ablation row '" + line + "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

// Runs the whole grid: one teacher per seed, then every unique student cell.
inline std::vector<CellResult> run_ablation(const RunConfig& cfg, std::ostream* progress = nullptr) {
    validate(cfg);
    const fs_::path out = snapshot_config(cfg);
    ensure_dir(out / "ablate");

    const DatasetManifest train_m = load_split(cfg, "train");
    const DatasetManifest pool_m = load_split(cfg, "val");
    const DatasetManifest test_m = load_split(cfg, "test");

    const std::vector<AblationCell> cells = ablation_cells(cfg);
    std::vector<CellResult> rows;
    for (int i = 0; i < cfg.ablate.seeds; ++i) {
        const std::uint64_t seed = cfg.run.seed + std::uint64_t(i);
        if (progress) *progress << "seed " << seed << ": training teacher\n" << std::flush;
        auto teacher = build_model(teacher_model_config(cfg), teacher_seed(seed));
        train_teacher_pipeline(*teacher, train_m, pool_m, teacher_pipeline_config(cfg),
                               teacher_seed(seed));

        std::map<std::string, Metrics> done; // variant_key -> metrics for this seed
        for (const auto& cell : cells) {
            const std::string key = variant_key(cell.variant);
            auto it = done.find(key);
            if (it == done.end()) {
                if (progress) *progress << "seed " << seed << ": cell " << cell.name << "\n"
                                        << std::flush;
                const StudentRunResult r = train_student_variant(
                    cfg, seed, cell.variant, teacher.get(), train_m, pool_m, test_m, nullptr);
                it = done.emplace(key, r.test_metrics).first;
            } else if (progress) {
                *progress << "seed " << seed << ": cell " << cell.name
                          << " (shared with an earlier cell)\n"
                          << std::flush;
            }
            rows.push_back({cell.name, seed, it->second});
        }
    }
    save_cell_results(out / "ablate" / "summary.csv", rows);
    return rows;
}

struct CellSummary {
    std::string cell;
    int n_seeds = 0;
    double mean_top1 = 0.0;
    double mean_top3 = 0.0;
};

inline std::vector<CellSummary> summarize_cells(const std::vector<CellResult>& rows) {
    std::vector<CellSummary> out;
    for (const auto& r : rows) {
        CellSummary* s = nullptr;
        for (auto& c : out)
            if (c.cell == r.cell) s = &c;
        if (!s) {
            out.push_back({r.cell, 0, 0.0, 0.0});
            s = &out.back();
        }
        ++s->n_seeds;
        s->mean_top1 += r.metrics.top1;
        s->mean_top3 += r.metrics.top3;
    }
    for (auto& c : out) {
        c.mean_top1 /= c.n_seeds;
        c.mean_top3 /= c.n_seeds;
    }
    return out;
}

inline const CellSummary* find_cell(const std::vector<CellSummary>& s, const std::string& name) {
    for (const auto& c : s)
        if (c.cell == name) return &c;
    return nullptr;
}

inline std::string render_report(const std::vector<CellSummary>& sums) {
    std::ostringstream o;
    o << std::left << std::setw(14) << "cell" << std::right << std::setw(7) << "seeds"
      << std::setw(10) << "top1" << std::setw(10) << "top3" << "\n";
    o << std::string(41, '-') << "\n";
    o << std::fixed << std::setprecision(4);
    for (const auto& c : sums)
        o << std::left << std::setw(14) << c.cell << std::right << std::setw(7) << c.n_seeds
          << std::setw(10) << c.mean_top1 << std::setw(10) << c.mean_top3 << "\n";

    auto trend = [&](const std::string& label, const char* a, const char* b) {
        const CellSummary* ca = find_cell(sums, a);
        const CellSummary* cb = find_cell(sums, b);
        if (!ca || !cb) return;
        o << label << ": " << (ca->mean_top1 >= cb->mean_top1 ? "holds" : "violated") << " ("
          << ca->mean_top1 << " vs " << cb->mean_top1 << ")\n";
    };
    o << "\n";
    trend("stage12 >= stage1 ", "stage12", "stage1");
    trend("full >= stage12   ", "full", "stage12");
    trend("full >= baseline  ", "full", "baseline");
    trend("tau_0.8 >= tau_0  ", "tau_0.8", "tau_0");
    return o.str();
}

inline void save_cell_summary(const fs_::path& path, const std::vector<CellSummary>& sums) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ablation report: " + path.string());
    out << "cell,seeds,mean_top1,mean_top3\n";
    out << std::setprecision(17);
    for (const auto& c : sums)
        out << c.cell << "," << c.n_seeds << "," << c.mean_top1 << "," << c.mean_top3 << "\n";
}

struct AblateResult {
    std::vector<CellResult> rows;
    std::vector<CellSummary> summary;
};

inline AblateResult cmd_ablate(const RunConfig& cfg, std::ostream* progress = nullptr) {
    AblateResult res;
    res.rows = run_ablation(cfg, progress);
    res.summary = summarize_cells(res.rows);
    save_cell_summary(fs_::path(cfg.run.out) / "ablate" / "report.csv", res.summary);
    return res;
}

inline std::string cmd_report(const RunConfig& cfg) {
    const fs_::path out = fs_::path(cfg.run.out);
    const std::vector<CellResult> rows = load_cell_results(out / "ablate" / "summary.csv");
    if (rows.empty()) throw DataError("ablation summary is empty: " + (out / "ablate" / "summary.csv").string());
    const std::vector<CellSummary> sums = summarize_cells(rows);
    save_cell_summary(out / "ablate" / "report.csv", sums);
    return render_report(sums);
}

} // namespace cyclet
