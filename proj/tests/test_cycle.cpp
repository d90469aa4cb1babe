#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "cyclet/checkpoint.hpp"
#include "cyclet/cycle.hpp"
#include "cyclet/synth.hpp"

using namespace cyclet;
namespace fs = std::filesystem;

namespace {

struct PipelineFixture {
    fs::path dir;
    DatasetManifest train_m, val_m, test_m;

    PipelineFixture() {
        dir = fs::temp_directory_path() / "cyclet_cycle";
        static bool generated = false;
        if (!generated || !fs::exists(dir / "train.csv")) {
            fs::remove_all(dir);
            SynthSpec spec;
            spec.num_classes = 3;
            spec.train_per_class = 8;
            spec.val_per_class = 2;
            spec.test_per_class = 2;
            spec.image_side = 24;
            spec.seed = 71;
            generate_synthetic(spec, dir);
            generated = true;
        }
        train_m = load_manifest(dir / "train.csv", 3);
        val_m = load_manifest(dir / "val.csv", 3);
        test_m = load_manifest(dir / "test.csv", 3);
    }

    static std::unique_ptr<Model> student(std::uint64_t seed) {
        ModelConfig mc;
        mc.kind = "student";
        mc.num_classes = 3;
        mc.input_side = 16;
        mc.width_multiplier = 0.5;
        mc.hidden_units = 16;
        return build_model(mc, seed);
    }

    static std::unique_ptr<Model> teacher(std::uint64_t seed) {
        ModelConfig mc;
        mc.kind = "teacher";
        mc.num_classes = 3;
        mc.input_side = 16;
        mc.width_multiplier = 0.25;
        mc.blocks_per_stage = 1;
        return build_model(mc, seed);
    }

    static CycleSchedule tiny_schedule() {
        CycleSchedule s;
        s.stages = {make_stage("Exploitation", 2), make_stage("Exploration", 3),
                    make_stage("Stabilization", 2)};
        s.lr = LrSchedule{0.01, 0.5, 3};
        s.batch_size = 8;
        s.resize_side = 20;
        s.policy = std::nullopt;
        return s;
    }
};

std::vector<float> backbone_bytes(Model& m) {
    std::vector<float> out;
    for (const auto& p : m.params())
        if (p.group == "backbone") out.insert(out.end(), p.t.v.begin(), p.t.v.end());
    return out;
}

} // namespace

TEST_CASE("stage names map to canonical freeze sets") {
    REQUIRE(canonical_groups("Exploitation") == std::vector<std::string>{"head"});
    REQUIRE(canonical_groups("Exploration") == std::vector<std::string>({"backbone", "head"}));
    REQUIRE(canonical_groups("Stabilization") == std::vector<std::string>{"head"});
    REQUIRE_THROWS_AS(canonical_groups("Warmup"), ConfigError);

    StageConfig bad = make_stage("Exploitation", 5);
    bad.trainable_groups = {"neck"};
    REQUIRE_THROWS_AS(validate(bad), ConfigError);
    bad = make_stage("Exploitation", 5);
    bad.trainable_groups = {"backbone", "head"}; // not canonical for Exploitation
    REQUIRE_THROWS_AS(validate(bad), ConfigError);
    bad = make_stage("Exploration", 0);
    REQUIRE_THROWS_AS(validate(bad), ConfigError);
    REQUIRE_NOTHROW(validate(make_stage("Stabilization", 1)));
}

TEST_CASE("default schedule is the 10/30/10 cycle") {
    const CycleSchedule s = default_cycle_schedule();
    REQUIRE(s.stages.size() == 3);
    REQUIRE(s.stages[0].name == "Exploitation");
    REQUIRE(s.stages[0].epochs == 10);
    REQUIRE(s.stages[1].name == "Exploration");
    REQUIRE(s.stages[1].epochs == 30);
    REQUIRE(s.stages[2].name == "Stabilization");
    REQUIRE(s.stages[2].epochs == 10);
    REQUIRE(s.policy.has_value());
}

TEST_CASE_METHOD(PipelineFixture, "epoch counter and lr staircase span stage boundaries") {
    auto m = student(5);
    const TrainData data = load_train_data(train_m, 20);
    const CycleSchedule sched = tiny_schedule();
    const TrainLog log = cycle_train(*m, data, sched, 90);

    REQUIRE(log.epochs.size() == 7);
    const std::string expected_stage[7] = {"Exploitation", "Exploitation", "Exploration",
                                           "Exploration",  "Exploration",  "Stabilization",
                                           "Stabilization"};
    for (int e = 0; e < 7; ++e) {
        REQUIRE(log.epochs[std::size_t(e)].epoch == e);
        REQUIRE(log.epochs[std::size_t(e)].stage == expected_stage[e]);
        // a per-stage reset would give 0.01 at the start of every stage;
        // the global counter decays mid-Exploration instead
        REQUIRE(log.epochs[std::size_t(e)].lr == Catch::Approx(sched.lr.lr_at(e)).epsilon(1e-12));
        REQUIRE(std::isfinite(log.epochs[std::size_t(e)].train_loss));
        REQUIRE(std::isnan(log.epochs[std::size_t(e)].top1));
    }
    REQUIRE(log.epochs[3].lr == Catch::Approx(0.005).epsilon(1e-12));
}

TEST_CASE_METHOD(PipelineFixture, "head-only stages leave the backbone bit-identical") {
    auto m = student(6);
    const TrainData data = load_train_data(train_m, 20);
    const std::vector<float> before = backbone_bytes(*m);

    CycleSchedule sched = tiny_schedule();
    sched.stages = {make_stage("Exploitation", 2)};
    cycle_train(*m, data, sched, 91);
    const std::vector<float> after = backbone_bytes(*m);
    REQUIRE(before.size() == after.size());
    REQUIRE(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);

    // while Exploration moves it
    sched.stages = {make_stage("Exploration", 1)};
    cycle_train(*m, data, sched, 92);
    REQUIRE(!(backbone_bytes(*m) == before));
}

TEST_CASE_METHOD(PipelineFixture, "stage callbacks fire in order and can checkpoint") {
    auto m = student(7);
    const TrainData data = load_train_data(train_m, 20);
    CycleSchedule sched = tiny_schedule();

    std::vector<std::string> seen;
    const fs::path ckpt_dir = dir / "stage_ckpts";
    fs::create_directories(ckpt_dir);
    cycle_train(*m, data, sched, 93, nullptr,
                [&](int idx, const StageConfig& st, Model& model) {
                    REQUIRE(idx == int(seen.size()));
                    seen.push_back(st.name);
                    save_checkpoint(ckpt_dir / ("stage" + std::to_string(idx) + ".ckpt"), model);
                });
    REQUIRE(seen == std::vector<std::string>({"Exploitation", "Exploration", "Stabilization"}));
    auto back = load_checkpoint(ckpt_dir / "stage2.ckpt");
    REQUIRE(back->config().kind == "student");
}

TEST_CASE_METHOD(PipelineFixture, "training runs are bit-reproducible") {
    const TrainData data = load_train_data(train_m, 20);
    CycleSchedule sched = tiny_schedule();
    sched.policy = AugPolicy{}; // include the stochastic augmentation path

    auto run = [&] {
        auto m = student(8);
        const TrainLog log = cycle_train(*m, data, sched, 94);
        std::vector<float> all;
        for (const auto& p : m->params()) all.insert(all.end(), p.t.v.begin(), p.t.v.end());
        return std::pair{all, log};
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.first.size() == b.first.size());
    REQUIRE(std::memcmp(a.first.data(), b.first.data(), a.first.size() * sizeof(float)) == 0);
    for (std::size_t e = 0; e < a.second.epochs.size(); ++e)
        REQUIRE(a.second.epochs[e].train_loss == b.second.epochs[e].train_loss);
}

TEST_CASE_METHOD(PipelineFixture, "metrics are logged when an eval manifest is given") {
    auto m = student(9);
    const TrainData data = load_train_data(train_m, 20);
    CycleSchedule sched = tiny_schedule();
    sched.stages = {make_stage("Exploitation", 1)};
    const TrainLog log = cycle_train(*m, data, sched, 95, &test_m);
    REQUIRE(log.epochs.size() == 1);
    REQUIRE(!std::isnan(log.epochs[0].top1));
    REQUIRE(log.epochs[0].top1 >= 0.0);
    REQUIRE(log.epochs[0].top3 >= log.epochs[0].top1);
    REQUIRE(log.epochs[0].top3 <= 1.0);
}

TEST_CASE_METHOD(PipelineFixture, "the loss comes down on learnable data") {
    auto m = student(10);
    const TrainData data = load_train_data(train_m, 20);
    CycleSchedule sched = tiny_schedule();
    sched.stages = {make_stage("Exploration", 6)};
    sched.lr = LrSchedule{3e-3, 0.1, 20};
    const TrainLog log = cycle_train(*m, data, sched, 96);
    REQUIRE(log.epochs.back().train_loss < log.epochs.front().train_loss);
    REQUIRE(log.epochs.front().train_loss < 2.5); // ~ln(3) + slack at init
}

TEST_CASE_METHOD(PipelineFixture, "schedule validation") {
    auto m = student(11);
    const TrainData data = load_train_data(train_m, 20);
    CycleSchedule sched = tiny_schedule();
    sched.stages.clear();
    REQUIRE_THROWS_AS(cycle_train(*m, data, sched, 1), ConfigError);

    sched = tiny_schedule();
    sched.stages[0].trainable_groups = {"everything"};
    REQUIRE_THROWS_AS(cycle_train(*m, data, sched, 1), ConfigError);

    sched = tiny_schedule();
    sched.batch_size = 0;
    REQUIRE_THROWS_AS(cycle_train(*m, data, sched, 1), ConfigError);
}

TEST_CASE_METHOD(PipelineFixture, "teacher pipeline runs both phases and reports curation") {
    auto t = teacher(12);
    TeacherPipelineConfig cfg;
    cfg.epochs_labeled = 2;
    cfg.epochs_pseudo = 2;
    cfg.tau = 0.0;
    cfg.lr = LrSchedule{1e-3, 0.1, 20};
    cfg.batch_size = 8;
    cfg.resize_side = 20;

    const TeacherPipelineResult res = train_teacher_pipeline(*t, train_m, val_m, cfg, 97);
    REQUIRE(!res.phase_b_skipped);
    REQUIRE(res.log.epochs.size() == 4);
    REQUIRE(res.log.epochs[0].stage == "labeled");
    REQUIRE(res.log.epochs[1].stage == "labeled");
    REQUIRE(res.log.epochs[2].stage == "pseudo");
    REQUIRE(res.log.epochs[3].epoch == 3); // global counter keeps going
    REQUIRE(res.report.total == 6);
    REQUIRE(res.report.accepted == 6); // tau 0 keeps everything
    REQUIRE(res.pseudo.entries.size() == 6);
    REQUIRE(res.log.warnings.empty());
}

TEST_CASE_METHOD(PipelineFixture, "teacher refinement is skipped when nothing clears tau") {
    auto t = teacher(13);
    TeacherPipelineConfig cfg;
    cfg.epochs_labeled = 1;
    cfg.epochs_pseudo = 2;
    cfg.tau = 1.0;                     // a barely-trained softmax never saturates
    cfg.lr = LrSchedule{1e-5, 0.1, 20};
    cfg.batch_size = 8;
    cfg.resize_side = 20;

    const TeacherPipelineResult res = train_teacher_pipeline(*t, train_m, val_m, cfg, 98);
    REQUIRE(res.phase_b_skipped);
    REQUIRE(res.log.epochs.size() == 1); // only phase A ran
    REQUIRE(res.report.accepted == 0);
    REQUIRE(res.log.warnings.size() == 1);
    REQUIRE(res.log.warnings[0].find("skipped") != std::string::npos);
}

TEST_CASE_METHOD(PipelineFixture, "teacher pipeline validates its config") {
    auto t = teacher(14);
    TeacherPipelineConfig cfg;
    cfg.refine_data = "everything";
    REQUIRE_THROWS_AS(train_teacher_pipeline(*t, train_m, val_m, cfg, 1), ConfigError);
    cfg = TeacherPipelineConfig{};
    cfg.epochs_labeled = 0;
    REQUIRE_THROWS_AS(train_teacher_pipeline(*t, train_m, val_m, cfg, 1), ConfigError);
}

TEST_CASE_METHOD(PipelineFixture, "teacher pipeline can refine on the combined set") {
    auto t = teacher(15);
    TeacherPipelineConfig cfg;
    cfg.epochs_labeled = 1;
    cfg.epochs_pseudo = 1;
    cfg.tau = 0.0;
    cfg.batch_size = 8;
    cfg.resize_side = 20;
    cfg.refine_data = "combined";
    const TeacherPipelineResult res = train_teacher_pipeline(*t, train_m, val_m, cfg, 99);
    REQUIRE(res.log.epochs.size() == 2);
    REQUIRE(!res.phase_b_skipped);
}

TEST_CASE("train log serialization") {
    TrainLog log;
    log.epochs.push_back({0, "Exploitation", 1e-3, 1.5, 0.5, 0.9});
    log.epochs.push_back({1, "Exploration", 1e-4, 1.2, std::nan(""), std::nan("")});
    log.warnings.push_back("something odd");

    const fs::path p = fs::temp_directory_path() / "cyclet_log.csv";
    save_train_log(p, log);

    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "epoch,stage,lr,train_loss,top1,top3");
    std::getline(in, line);
    REQUIRE(line.find("0,Exploitation,0.001,1.5,0.5") == 0);
    std::getline(in, line);
    REQUIRE(line.find("1,Exploration,") == 0);
    REQUIRE(line.back() == ','); // NaN metrics serialize as empty fields
    std::getline(in, line);
    REQUIRE(line.find("# warning: something odd") == 0);
}
