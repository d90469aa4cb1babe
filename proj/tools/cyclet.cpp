// cyclet: synthetic-shift image classification pipeline.
//
// Subcommands cover the whole experiment lifecycle: dataset synthesis,
// teacher training with pseudo-label refinement, confidence-curated
// pseudo-labeling, staged student training, evaluation, latency
// benchmarking, and the ablation grid.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cyclet/experiment.hpp"
#include "cyclet/util.hpp"

namespace {

using namespace cyclet;

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;

    RunConfig resolve() const {
        RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
        if (seed) cfg.run.seed = *seed;
        if (!out.empty()) cfg.run.out = out;
        return cfg;
    }
};

void add_common(CLI::App& cmd, CommonOpts& opts) {
    cmd.add_option("-c,--config", opts.config, "INI config file (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    cmd.add_option("--seed", opts.seed, "override [run] seed");
    cmd.add_option("-o,--out", opts.out, "override [run] out directory");
}

void print_metrics(const Metrics& m) {
    std::cout << "top1 " << m.top1 << "  top3 " << m.top3 << "  (" << m.n_examples
              << " examples)\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cyclet: teacher/student training with pseudo-label curation"};
    app.set_version_flag("--version", "cyclet 0.1.0");
    app.require_subcommand(1);

    CommonOpts opts;

    auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset splits");
    add_common(*gen, opts);

    auto* teach = app.add_subcommand("train-teacher", "train the teacher and refine it on its own pseudo-labels");
    add_common(*teach, opts);

    auto* plabel = app.add_subcommand("pseudo-label", "score a pool and keep confident pseudo-labels");
    add_common(*plabel, opts);
    std::string pl_ckpt, pl_pool, pl_out_csv;
    double pl_tau = -1.0;
    plabel->add_option("--checkpoint", pl_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
    plabel->add_option("--pool", pl_pool, "pool manifest CSV")->required()->check(CLI::ExistingFile);
    plabel->add_option("--out-csv", pl_out_csv, "output manifest CSV")->required();
    plabel->add_option("--tau", pl_tau, "confidence threshold (default: [ssda] tau_teacher)");

    auto* stud = app.add_subcommand("train-student", "run the staged training cycle on the student");
    add_common(*stud, opts);
    std::string st_teacher;
    StudentVariant variant;
    bool no_ssda = false, no_aug = false;
    stud->add_option("--teacher", st_teacher, "teacher checkpoint (default: <out>/teacher/teacher.ckpt)");
    stud->add_flag("--no-ssda", no_ssda, "train on labeled data only");
    stud->add_flag("--no-aug", no_aug, "disable the augmentation policy");
    stud->add_option("--stages", variant.stages, "run only the first N cycle stages")->check(CLI::Range(1, 3));
    stud->add_option("--tau", variant.tau, "pseudo-label threshold (default: [ssda] tau_student)");

    auto* ev = app.add_subcommand("eval", "accuracy, latency, and challenge score of a checkpoint");
    add_common(*ev, opts);
    std::string ev_ckpt, ev_manifest;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", ev_manifest, "labeled manifest CSV")->required()->check(CLI::ExistingFile);

    auto* bench = app.add_subcommand("bench", "single-image latency of a checkpoint");
    add_common(*bench, opts);
    std::string be_ckpt;
    bench->add_option("--checkpoint", be_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);

    auto* abl = app.add_subcommand("ablate", "run the component/stage/threshold grid over all seeds");
    add_common(*abl, opts);

    auto* rep = app.add_subcommand("report", "aggregate ablation results into a table");
    add_common(*rep, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1; // usage problems are config errors
    }

    try {
        if (*gen) {
            const RunConfig cfg = opts.resolve();
            const SynthResult r = cmd_gen_data(cfg);
            std::cout << "wrote " << r.train_count << " train / " << r.val_count << " val / "
                      << r.test_count << " test images under " << cfg.dataset.root << "\n";
        } else if (*teach) {
            const RunConfig cfg = opts.resolve();
            const TeacherRunResult r = cmd_train_teacher(cfg);
            const CurationReport& c = r.pipeline.report;
            std::cout << "pseudo-labels: " << c.accepted << "/" << c.total
                      << " accepted (mean confidence " << c.mean_confidence << ")\n";
            if (r.pipeline.phase_b_skipped)
                std::cout << "refinement skipped: no pool image cleared the threshold\n";
            for (const auto& w : r.pipeline.log.warnings) std::cout << "warning: " << w << "\n";
            std::cout << "test: ";
            print_metrics(r.test_metrics);
            std::cout << "checkpoint: " << r.checkpoint.string() << "\n";
        } else if (*plabel) {
            const RunConfig cfg = opts.resolve();
            const double tau = pl_tau >= 0.0 ? pl_tau : cfg.ssda.tau_teacher;
            const CurationResult r = cmd_pseudo_label(cfg, pl_ckpt, pl_pool, pl_out_csv, tau);
            std::cout << "kept " << r.report.accepted << "/" << r.report.total << " at tau " << tau
                      << " (mean confidence " << r.report.mean_confidence << ") -> " << pl_out_csv
                      << "\n";
        } else if (*stud) {
            const RunConfig cfg = opts.resolve();
            variant.use_ssda = !no_ssda;
            variant.use_aug = !no_aug;
            const StudentRunResult r = cmd_train_student(cfg, variant, st_teacher);
            for (const auto& w : r.log.warnings) std::cout << "warning: " << w << "\n";
            if (r.curation)
                std::cout << "pseudo-labels: " << r.curation->accepted << "/" << r.curation->total
                          << " accepted\n";
            std::cout << "test: ";
            print_metrics(r.test_metrics);
            std::cout << "checkpoint: " << r.checkpoint.string() << "\n";
        } else if (*ev) {
            const RunConfig cfg = opts.resolve();
            const EvalResult r = cmd_eval(cfg, ev_ckpt, ev_manifest);
            print_metrics(r.metrics);
            std::cout << "latency " << r.latency.mean_ms << " ms (std " << r.latency.std_ms
                      << ", " << r.latency.per_iter_ms.size() << " iters after "
                      << r.latency.warmup << " warmup)\n";
            std::cout << "challenge score " << r.score << "\n";
        } else if (*bench) {
            const RunConfig cfg = opts.resolve();
            const LatencyReport r = cmd_bench(cfg, be_ckpt);
            std::cout << "latency " << r.mean_ms << " ms (std " << r.std_ms << ", "
                      << r.per_iter_ms.size() << " iters after " << r.warmup << " warmup)\n";
        } else if (*abl) {
            const RunConfig cfg = opts.resolve();
            const AblateResult r = cmd_ablate(cfg, &std::cout);
            std::cout << "\n" << render_report(r.summary);
        } else if (*rep) {
            const RunConfig cfg = opts.resolve();
            std::cout << cmd_report(cfg);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
