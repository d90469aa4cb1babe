#pragma once

// Run configuration: a strict INI file covering every knob of the pipeline.
// Unknown sections or keys are errors, values must parse exactly, and
// serialize() -> parse() is an identity so run directories can snapshot the
// effective config.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cyclet/augment.hpp"
#include "cyclet/cycle.hpp"
#include "cyclet/error.hpp"
#include "cyclet/models.hpp"
#include "cyclet/synth.hpp"

namespace cyclet {

struct RunConfig {
    struct Run {
        std::uint64_t seed = 42;
        std::string out = "runs/out";
        bool operator==(const Run&) const = default;
    } run;

    struct Dataset {
        std::string root = "data/synth";
        int num_classes = 10;
        int train_per_class = 100;
        int val_per_class = 20;
        int test_per_class = 20;
        int image_side = 64;
        double hue_shift_deg = 18.0;
        double brightness_bias = 25.0;
        double noise_sigma = 8.0;
        bool operator==(const Dataset&) const = default;
    } dataset;

    struct Teacher {
        int input_side = 32;
        double width_multiplier = 1.0;
        int blocks_per_stage = 2;
        int resize_side = 40;
        int batch_size = 32;
        double lr0 = 1e-3;
        double lr_decay = 0.5;
        int lr_period = 10;
        double weight_decay = 1e-4;
        int epochs_labeled = 10;
        int epochs_pseudo = 10;
        std::string refine_data = "pseudo";
        bool operator==(const Teacher&) const = default;
    } teacher;

    struct Student {
        int input_side = 32;
        double width_multiplier = 1.0;
        int hidden_units = 128;
        int resize_side = 40;
        int batch_size = 32;
        double lr0 = 2e-3;
        double lr_decay = 0.5;
        int lr_period = 10;
        double weight_decay = 1e-4;
        int epochs_exploitation = 10;
        int epochs_exploration = 30;
        int epochs_stabilization = 10;
        bool operator==(const Student&) const = default;
    } student;

    struct Ssda {
        double tau_teacher = 0.9;
        double tau_student = 0.8;
        bool operator==(const Ssda&) const = default;
    } ssda;

    struct Augment {
        bool enabled = true;
        double weak_below = 0.3;
        double strong_above = 0.7;
        int num_ops = 2;
        int magnitude = 5;
        bool operator==(const Augment&) const = default;
    } augment;

    struct Eval {
        double score_c = 1.0;
        int latency_iterations = 20;
        int latency_warmup = 3;
        bool operator==(const Eval&) const = default;
    } eval;

    struct Ablate {
        int seeds = 5;
        std::vector<double> thresholds = {0.0, 0.8, 0.85, 0.9};
        bool operator==(const Ablate&) const = default;
    } ablate;

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string cfg_err(const std::string& where, int line, const std::string& msg) {
    return where + ":" + std::to_string(line) + ": " + msg;
}

// trim() is shared with the manifest parser (cyclet/manifest.hpp)

inline std::int64_t parse_int(const std::string& v, const std::string& where, int line) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(cfg_err(where, line, "expected integer, got '" + v + "'"));
    return out;
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& where, int line) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(cfg_err(where, line, "expected unsigned integer, got '" + v + "'"));
    return out;
}

inline double parse_double(const std::string& v, const std::string& where, int line) {
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(cfg_err(where, line, "expected number, got '" + v + "'"));
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& where, int line) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(cfg_err(where, line, "expected true or false, got '" + v + "'"));
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& where,
                                             int line) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const std::size_t comma = v.find(',', pos);
        const std::string item =
            trim(comma == std::string::npos ? v.substr(pos) : v.substr(pos, comma - pos));
        if (item.empty())
            throw ConfigError(cfg_err(where, line, "empty element in list '" + v + "'"));
        out.push_back(parse_double(item, where, line));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError(cfg_err(where, line, "expected a non-empty list"));
    return out;
}

inline std::string fmt_double(double x) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, p);
}

inline std::string fmt_double_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(xs[i]);
    }
    return out;
}

// One key assignment inside a known section. Returns false if the key does
// not belong to the section.
inline bool assign_key(RunConfig& c, const std::string& sec, const std::string& key,
                       const std::string& val, const std::string& where, int line) {
    auto i = [&] { return int(parse_int(val, where, line)); };
    auto d = [&] { return parse_double(val, where, line); };
    if (sec == "run") {
        if (key == "seed") c.run.seed = parse_uint(val, where, line);
        else if (key == "out") c.run.out = val;
        else return false;
        return true;
    }
    if (sec == "dataset") {
        auto& ds = c.dataset;
        if (key == "root") ds.root = val;
        else if (key == "num_classes") ds.num_classes = i();
        else if (key == "train_per_class") ds.train_per_class = i();
        else if (key == "val_per_class") ds.val_per_class = i();
        else if (key == "test_per_class") ds.test_per_class = i();
        else if (key == "image_side") ds.image_side = i();
        else if (key == "hue_shift_deg") ds.hue_shift_deg = d();
        else if (key == "brightness_bias") ds.brightness_bias = d();
        else if (key == "noise_sigma") ds.noise_sigma = d();
        else return false;
        return true;
    }
    if (sec == "teacher") {
        auto& t = c.teacher;
        if (key == "input_side") t.input_side = i();
        else if (key == "width_multiplier") t.width_multiplier = d();
        else if (key == "blocks_per_stage") t.blocks_per_stage = i();
        else if (key == "resize_side") t.resize_side = i();
        else if (key == "batch_size") t.batch_size = i();
        else if (key == "lr0") t.lr0 = d();
        else if (key == "lr_decay") t.lr_decay = d();
        else if (key == "lr_period") t.lr_period = i();
        else if (key == "weight_decay") t.weight_decay = d();
        else if (key == "epochs_labeled") t.epochs_labeled = i();
        else if (key == "epochs_pseudo") t.epochs_pseudo = i();
        else if (key == "refine_data") t.refine_data = val;
        else return false;
        return true;
    }
    if (sec == "student") {
        auto& s = c.student;
        if (key == "input_side") s.input_side = i();
        else if (key == "width_multiplier") s.width_multiplier = d();
        else if (key == "hidden_units") s.hidden_units = i();
        else if (key == "resize_side") s.resize_side = i();
        else if (key == "batch_size") s.batch_size = i();
        else if (key == "lr0") s.lr0 = d();
        else if (key == "lr_decay") s.lr_decay = d();
        else if (key == "lr_period") s.lr_period = i();
        else if (key == "weight_decay") s.weight_decay = d();
        else if (key == "epochs_exploitation") s.epochs_exploitation = i();
        else if (key == "epochs_exploration") s.epochs_exploration = i();
        else if (key == "epochs_stabilization") s.epochs_stabilization = i();
        else return false;
        return true;
    }
    if (sec == "ssda") {
        if (key == "tau_teacher") c.ssda.tau_teacher = d();
        else if (key == "tau_student") c.ssda.tau_student = d();
        else return false;
        return true;
    }
    if (sec == "augment") {
        auto& a = c.augment;
        if (key == "enabled") a.enabled = parse_bool(val, where, line);
        else if (key == "weak_below") a.weak_below = d();
        else if (key == "strong_above") a.strong_above = d();
        else if (key == "num_ops") a.num_ops = i();
        else if (key == "magnitude") a.magnitude = i();
        else return false;
        return true;
    }
    if (sec == "eval") {
        auto& e = c.eval;
        if (key == "score_c") e.score_c = d();
        else if (key == "latency_iterations") e.latency_iterations = i();
        else if (key == "latency_warmup") e.latency_warmup = i();
        else return false;
        return true;
    }
    if (sec == "ablate") {
        if (key == "seeds") c.ablate.seeds = i();
        else if (key == "thresholds") c.ablate.thresholds = parse_double_list(val, where, line);
        else return false;
        return true;
    }
    throw ConfigError(cfg_err(where, line, "unknown section [" + sec + "]"));
}

} // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& where = "<config>") {
    RunConfig cfg;
    std::string section;
    std::vector<std::string> seen; // "section.key" pairs, to reject duplicates
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError(detail::cfg_err(where, line, "malformed section header '" + s + "'"));
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section.empty())
                throw ConfigError(detail::cfg_err(where, line, "empty section name"));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(detail::cfg_err(where, line, "expected 'key = value', got '" + s + "'"));
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(detail::cfg_err(where, line, "empty key"));
        if (section.empty())
            throw ConfigError(detail::cfg_err(where, line, "key '" + key + "' outside any section"));
        const std::string tag = section + "." + key;
        for (const auto& t : seen)
            if (t == tag)
                throw ConfigError(detail::cfg_err(where, line, "duplicate key '" + tag + "'"));
        seen.push_back(tag);
        if (!detail::assign_key(cfg, section, key, val, where, line))
            throw ConfigError(
                detail::cfg_err(where, line, "unknown key '" + key + "' in section [" + section + "]"));
    }
    return cfg;
}

inline std::string serialize_config(const RunConfig& c) {
    using detail::fmt_double;
    std::ostringstream o;
    o << "[run]\n"
      << "seed = " << c.run.seed << "\n"
      << "out = " << c.run.out << "\n\n";
    o << "[dataset]\n"
      << "root = " << c.dataset.root << "\n"
      << "num_classes = " << c.dataset.num_classes << "\n"
      << "train_per_class = " << c.dataset.train_per_class << "\n"
      << "val_per_class = " << c.dataset.val_per_class << "\n"
      << "test_per_class = " << c.dataset.test_per_class << "\n"
      << "image_side = " << c.dataset.image_side << "\n"
      << "hue_shift_deg = " << fmt_double(c.dataset.hue_shift_deg) << "\n"
      << "brightness_bias = " << fmt_double(c.dataset.brightness_bias) << "\n"
      << "noise_sigma = " << fmt_double(c.dataset.noise_sigma) << "\n\n";
    o << "[teacher]\n"
      << "input_side = " << c.teacher.input_side << "\n"
      << "width_multiplier = " << fmt_double(c.teacher.width_multiplier) << "\n"
      << "blocks_per_stage = " << c.teacher.blocks_per_stage << "\n"
      << "resize_side = " << c.teacher.resize_side << "\n"
      << "batch_size = " << c.teacher.batch_size << "\n"
      << "lr0 = " << fmt_double(c.teacher.lr0) << "\n"
      << "lr_decay = " << fmt_double(c.teacher.lr_decay) << "\n"
      << "lr_period = " << c.teacher.lr_period << "\n"
      << "weight_decay = " << fmt_double(c.teacher.weight_decay) << "\n"
      << "epochs_labeled = " << c.teacher.epochs_labeled << "\n"
      << "epochs_pseudo = " << c.teacher.epochs_pseudo << "\n"
      << "refine_data = " << c.teacher.refine_data << "\n\n";
    o << "[student]\n"
      << "input_side = " << c.student.input_side << "\n"
      << "width_multiplier = " << fmt_double(c.student.width_multiplier) << "\n"
      << "hidden_units = " << c.student.hidden_units << "\n"
      << "resize_side = " << c.student.resize_side << "\n"
      << "batch_size = " << c.student.batch_size << "\n"
      << "lr0 = " << fmt_double(c.student.lr0) << "\n"
      << "lr_decay = " << fmt_double(c.student.lr_decay) << "\n"
      << "lr_period = " << c.student.lr_period << "\n"
      << "weight_decay = " << fmt_double(c.student.weight_decay) << "\n"
      << "epochs_exploitation = " << c.student.epochs_exploitation << "\n"
      << "epochs_exploration = " << c.student.epochs_exploration << "\n"
      << "epochs_stabilization = " << c.student.epochs_stabilization << "\n\n";
    o << "[ssda]\n"
      << "tau_teacher = " << fmt_double(c.ssda.tau_teacher) << "\n"
      << "tau_student = " << fmt_double(c.ssda.tau_student) << "\n\n";
    o << "[augment]\n"
      << "enabled = " << (c.augment.enabled ? "true" : "false") << "\n"
      << "weak_below = " << fmt_double(c.augment.weak_below) << "\n"
      << "strong_above = " << fmt_double(c.augment.strong_above) << "\n"
      << "num_ops = " << c.augment.num_ops << "\n"
      << "magnitude = " << c.augment.magnitude << "\n\n";
    o << "[eval]\n"
      << "score_c = " << fmt_double(c.eval.score_c) << "\n"
      << "latency_iterations = " << c.eval.latency_iterations << "\n"
      << "latency_warmup = " << c.eval.latency_warmup << "\n\n";
    o << "[ablate]\n"
      << "seeds = " << c.ablate.seeds << "\n"
      << "thresholds = " << detail::fmt_double_list(c.ablate.thresholds) << "\n";
    return o.str();
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

inline void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config file: " + path.string());
    out << serialize_config(cfg);
    if (!out) throw DataError("failed writing config file: " + path.string());
}

// --- derived pipeline objects -----------------------------------------------

inline SynthSpec synth_spec(const RunConfig& c) {
    SynthSpec s;
    s.num_classes = c.dataset.num_classes;
    s.train_per_class = c.dataset.train_per_class;
    s.val_per_class = c.dataset.val_per_class;
    s.test_per_class = c.dataset.test_per_class;
    s.image_side = c.dataset.image_side;
    s.shift = DomainShift{c.dataset.hue_shift_deg, c.dataset.brightness_bias,
                          c.dataset.noise_sigma};
    s.seed = c.run.seed;
    return s;
}

inline ModelConfig teacher_model_config(const RunConfig& c) {
    ModelConfig m;
    m.kind = "teacher";
    m.num_classes = c.dataset.num_classes;
    m.input_side = c.teacher.input_side;
    m.width_multiplier = c.teacher.width_multiplier;
    m.blocks_per_stage = c.teacher.blocks_per_stage;
    return m;
}

inline ModelConfig student_model_config(const RunConfig& c) {
    ModelConfig m;
    m.kind = "student";
    m.num_classes = c.dataset.num_classes;
    m.input_side = c.student.input_side;
    m.width_multiplier = c.student.width_multiplier;
    m.hidden_units = c.student.hidden_units;
    return m;
}

inline std::optional<AugPolicy> aug_policy(const RunConfig& c) {
    if (!c.augment.enabled) return std::nullopt;
    AugPolicy p;
    p.flip_threshold = c.augment.weak_below;
    p.strong_threshold = c.augment.strong_above;
    p.n = c.augment.num_ops;
    p.m = c.augment.magnitude;
    validate(p);
    return p;
}

inline CycleSchedule student_schedule(const RunConfig& c) {
    CycleSchedule s;
    s.stages = {make_stage("Exploitation", c.student.epochs_exploitation),
                make_stage("Exploration", c.student.epochs_exploration),
                make_stage("Stabilization", c.student.epochs_stabilization)};
    s.lr = LrSchedule{c.student.lr0, c.student.lr_decay, c.student.lr_period};
    s.opt.weight_decay = c.student.weight_decay;
    s.batch_size = c.student.batch_size;
    s.resize_side = c.student.resize_side;
    s.policy = aug_policy(c);
    return s;
}

inline TeacherPipelineConfig teacher_pipeline_config(const RunConfig& c) {
    TeacherPipelineConfig t;
    t.epochs_labeled = c.teacher.epochs_labeled;
    t.epochs_pseudo = c.teacher.epochs_pseudo;
    t.tau = c.ssda.tau_teacher;
    t.lr = LrSchedule{c.teacher.lr0, c.teacher.lr_decay, c.teacher.lr_period};
    t.opt.weight_decay = c.teacher.weight_decay;
    t.batch_size = c.teacher.batch_size;
    t.resize_side = c.teacher.resize_side;
    t.refine_data = c.teacher.refine_data;
    return t;
}

// Cross-field sanity checks beyond what the derived objects validate
// themselves. Throws ConfigError on the first violation.
inline void validate(const RunConfig& c) {
    validate(teacher_model_config(c));
    validate(student_model_config(c));
    aug_policy(c); // validates when enabled
    for (const auto& st : student_schedule(c).stages) cyclet::validate(st);
    if (c.ssda.tau_teacher < 0.0 || c.ssda.tau_teacher > 1.0)
        throw ConfigError("ssda.tau_teacher must be in [0,1]");
    if (c.ssda.tau_student < 0.0 || c.ssda.tau_student > 1.0)
        throw ConfigError("ssda.tau_student must be in [0,1]");
    if (c.teacher.refine_data != "pseudo" && c.teacher.refine_data != "combined")
        throw ConfigError("teacher.refine_data must be 'pseudo' or 'combined'");
    if (c.teacher.epochs_labeled < 1 || c.teacher.epochs_pseudo < 1)
        throw ConfigError("teacher epochs must be >= 1");
    if (c.teacher.batch_size < 1 || c.student.batch_size < 1)
        throw ConfigError("batch_size must be >= 1");
    if (c.teacher.resize_side < c.teacher.input_side)
        throw ConfigError("teacher.resize_side must be >= teacher.input_side");
    if (c.student.resize_side < c.student.input_side)
        throw ConfigError("student.resize_side must be >= student.input_side");
    if (c.teacher.lr0 <= 0.0 || c.student.lr0 <= 0.0)
        throw ConfigError("lr0 must be > 0");
    if (c.teacher.lr_decay <= 0.0 || c.teacher.lr_decay > 1.0 || c.student.lr_decay <= 0.0 ||
        c.student.lr_decay > 1.0)
        throw ConfigError("lr_decay must be in (0,1]");
    if (c.teacher.lr_period < 1 || c.student.lr_period < 1)
        throw ConfigError("lr_period must be >= 1");
    if (c.teacher.weight_decay < 0.0 || c.student.weight_decay < 0.0)
        throw ConfigError("weight_decay must be >= 0");
    if (c.dataset.train_per_class < 1 || c.dataset.val_per_class < 1 ||
        c.dataset.test_per_class < 1)
        throw ConfigError("dataset per-class counts must be >= 1");
    if (c.dataset.noise_sigma < 0.0) throw ConfigError("dataset.noise_sigma must be >= 0");
    if (c.eval.score_c <= 0.0) throw ConfigError("eval.score_c must be > 0");
    if (c.eval.latency_iterations < 1) throw ConfigError("eval.latency_iterations must be >= 1");
    if (c.eval.latency_warmup < 0) throw ConfigError("eval.latency_warmup must be >= 0");
    if (c.ablate.seeds < 1) throw ConfigError("ablate.seeds must be >= 1");
    if (c.ablate.thresholds.empty()) throw ConfigError("ablate.thresholds must be non-empty");
    for (const double t : c.ablate.thresholds)
        if (t < 0.0 || t > 1.0) throw ConfigError("ablate.thresholds entries must be in [0,1]");
}

} // namespace cyclet
