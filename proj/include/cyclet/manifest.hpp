#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/image.hpp"

namespace cyclet {

inline constexpr int kUnlabeled = -1;
inline constexpr const char* kUnlabeledToken = "UNLABELED";

enum class Provenance { original, pseudo };

inline const char* provenance_name(Provenance p) {
    return p == Provenance::original ? "original" : "pseudo";
}

struct ManifestEntry {
    std::string path;       // relative to the manifest root
    int label = kUnlabeled; // kUnlabeled for the unlabeled pool
    double confidence = 1.0;
    Provenance provenance = Provenance::original;
};

struct DatasetManifest {
    std::filesystem::path root; // directory image paths are resolved against
    int num_classes = 0;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }

    int count_labeled() const {
        int n = 0;
        for (const auto& e : entries) n += (e.label != kUnlabeled);
        return n;
    }
    int count_pseudo() const {
        int n = 0;
        for (const auto& e : entries) n += (e.provenance == Provenance::pseudo);
        return n;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

[[noreturn]] inline void manifest_fail(const std::filesystem::path& p, int line, const std::string& msg) {
    throw DataError(p.string() + ":" + std::to_string(line) + ": " + msg);
}

} // namespace detail

// CSV rows are `path,label` or `path,label,confidence,provenance`; label may be
// the UNLABELED sentinel. A `path,label,...` header row is skipped if present.
inline DatasetManifest load_manifest(const std::filesystem::path& csv_path, int num_classes,
                                     bool verify_files = true) {
    if (num_classes < 2) throw ConfigError("manifest: num_classes must be >= 2");
    std::ifstream in(csv_path);
    if (!in) throw DataError(csv_path.string() + ": cannot open manifest");

    DatasetManifest m;
    m.root = csv_path.parent_path();
    m.num_classes = num_classes;

    std::unordered_set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto f = detail::split_csv(t);
        if (lineno == 1 && f.size() >= 2 && f[0] == "path" && f[1] == "label") continue;
        if (f.size() != 2 && f.size() != 4)
            detail::manifest_fail(csv_path, lineno, "expected 2 or 4 fields, got " + std::to_string(f.size()));

        ManifestEntry e;
        e.path = f[0];
        if (e.path.empty()) detail::manifest_fail(csv_path, lineno, "empty path");
        if (!seen.insert(e.path).second)
            detail::manifest_fail(csv_path, lineno, "duplicate path '" + e.path + "'");

        if (f[1] == kUnlabeledToken) {
            e.label = kUnlabeled;
        } else {
            try {
                std::size_t pos = 0;
                e.label = std::stoi(f[1], &pos);
                if (pos != f[1].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                detail::manifest_fail(csv_path, lineno, "bad label '" + f[1] + "'");
            }
            if (e.label < 0 || e.label >= num_classes)
                detail::manifest_fail(csv_path, lineno,
                                      "label " + std::to_string(e.label) + " outside [0," +
                                          std::to_string(num_classes) + ")");
        }

        if (f.size() == 4) {
            try {
                std::size_t pos = 0;
                e.confidence = std::stod(f[2], &pos);
                if (pos != f[2].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                detail::manifest_fail(csv_path, lineno, "bad confidence '" + f[2] + "'");
            }
            if (e.confidence < 0.0 || e.confidence > 1.0)
                detail::manifest_fail(csv_path, lineno, "confidence outside [0,1]");
            if (f[3] == "original") e.provenance = Provenance::original;
            else if (f[3] == "pseudo") e.provenance = Provenance::pseudo;
            else detail::manifest_fail(csv_path, lineno, "bad provenance '" + f[3] + "'");
        }

        if (verify_files) {
            const auto full = m.root / e.path;
            if (!std::filesystem::exists(full))
                detail::manifest_fail(csv_path, lineno, "missing file " + full.string());
            read_ppm_header(full); // throws DataError on a bad header
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

enum class ManifestFormat { basic, extended };

inline void save_manifest(const std::filesystem::path& csv_path, const DatasetManifest& m,
                          ManifestFormat fmt = ManifestFormat::basic) {
    std::ofstream out(csv_path);
    if (!out) throw DataError(csv_path.string() + ": cannot open for writing");
    if (fmt == ManifestFormat::basic) {
        out << "path,label\n";
        for (const auto& e : m.entries) {
            out << e.path << ',';
            if (e.label == kUnlabeled) out << kUnlabeledToken;
            else out << e.label;
            out << '\n';
        }
    } else {
        out << "path,label,confidence,provenance\n";
        char buf[64];
        for (const auto& e : m.entries) {
            std::snprintf(buf, sizeof buf, "%.6f", e.confidence);
            out << e.path << ',';
            if (e.label == kUnlabeled) out << kUnlabeledToken;
            else out << e.label;
            out << ',' << buf << ',' << provenance_name(e.provenance) << '\n';
        }
    }
    if (!out) throw DataError(csv_path.string() + ": write failed");
}

} // namespace cyclet
