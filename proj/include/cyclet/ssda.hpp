#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/manifest.hpp"
#include "cyclet/models.hpp"
#include "cyclet/preprocess.hpp"
#include "cyclet/util.hpp"

namespace cyclet {

// Confidence of a predicted distribution is its largest probability.
// The row must lie on the simplex (within a small tolerance).
inline double confidence(const float* probs, int n) {
    if (n < 1) throw ShapeError("confidence: empty probability row");
    double sum = 0.0;
    float best = probs[0];
    for (int i = 0; i < n; ++i) {
        if (probs[i] < -1e-6f || probs[i] > 1.0f + 1e-6f)
            throw ShapeError("confidence: probability outside [0,1]");
        sum += probs[i];
        best = std::max(best, probs[i]);
    }
    if (std::fabs(sum - 1.0) > 1e-4)
        throw ShapeError("confidence: probabilities sum to " + std::to_string(sum) + ", not 1");
    return double(best);
}

inline double confidence(const std::vector<float>& probs) {
    return confidence(probs.data(), int(probs.size()));
}

struct PseudoLabel {
    int label = 0;
    double conf = 0.0;
    bool accepted = false;
};

// Argmax with ties resolved toward the lowest class index; accept when the
// confidence reaches the threshold (conf == tau accepts). The comparison
// happens in the probabilities' own precision so that a probability written
// as the same decimal as tau (e.g. 0.85 vs tau=0.85) counts as meeting it.
inline PseudoLabel pseudo_label(const float* probs, int n, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("pseudo_label: tau must be in [0,1]");
    PseudoLabel out;
    out.conf = confidence(probs, n); // validates the row
    out.label = 0;
    for (int i = 1; i < n; ++i)
        if (probs[i] > probs[out.label]) out.label = i; // strict > keeps the first max
    out.accepted = probs[out.label] >= static_cast<float>(tau);
    return out;
}

inline PseudoLabel pseudo_label(const std::vector<float>& probs, double tau) {
    return pseudo_label(probs.data(), int(probs.size()), tau);
}

struct CurationReport {
    int total = 0;
    int accepted = 0;
    double acceptance_rate = 0.0;
    double mean_confidence = 0.0; // over accepted examples; 0 when none
    std::vector<int> per_class;   // accepted count per pseudo label
};

struct CurationResult {
    DatasetManifest pseudo;
    CurationReport report;
};

// Score every pool image with the model (resize -> center crop -> normalize)
// and keep the ones whose confidence clears tau. Rows that already carry a
// label are treated as candidates like any other; their labels are ignored.
inline CurationResult curate(Model& model, const DatasetManifest& pool, double tau,
                             int resize_side, int batch_size = 32) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("curate: tau must be in [0,1]");
    if (batch_size < 1) throw ConfigError("curate: batch_size must be >= 1");
    const int side = model.config().input_side;
    if (resize_side < side) throw ShapeError("curate: resize side smaller than model input");
    if (model.config().num_classes != pool.num_classes)
        throw ShapeError("curate: model has " + std::to_string(model.config().num_classes) +
                         " classes, pool manifest " + std::to_string(pool.num_classes));

    CurationResult res;
    res.pseudo.root = pool.root;
    res.pseudo.num_classes = pool.num_classes;
    res.report.total = int(pool.entries.size());
    res.report.per_class.assign(std::size_t(pool.num_classes), 0);

    double conf_sum = 0.0;
    const int total = int(pool.entries.size());
    for (int begin = 0; begin < total; begin += batch_size) {
        const int n = std::min(batch_size, total - begin);
        Tensor batch({n, 3, side, side});
        const std::size_t stride = std::size_t(3) * side * side;
        parallel_for(n, [&](int i) {
            const Image img = read_ppm(pool.resolve(pool.entries[std::size_t(begin + i)]));
            const Image prepped = center_crop(resize_bilinear(img, resize_side), side);
            normalize_into(prepped, batch.v.data() + std::size_t(i) * stride);
        });
        const Tensor probs = predict_probs(model, batch);
        for (int i = 0; i < n; ++i) {
            const PseudoLabel pl =
                pseudo_label(probs.v.data() + std::size_t(i) * pool.num_classes, pool.num_classes, tau);
            if (!pl.accepted) continue;
            ManifestEntry e;
            e.path = pool.entries[std::size_t(begin + i)].path;
            e.label = pl.label;
            e.confidence = pl.conf;
            e.provenance = Provenance::pseudo;
            res.pseudo.entries.push_back(std::move(e));
            res.report.per_class[std::size_t(pl.label)]++;
            conf_sum += pl.conf;
        }
    }
    res.report.accepted = int(res.pseudo.entries.size());
    res.report.acceptance_rate =
        res.report.total == 0 ? 0.0 : double(res.report.accepted) / double(res.report.total);
    res.report.mean_confidence =
        res.report.accepted == 0 ? 0.0 : conf_sum / double(res.report.accepted);
    return res;
}

// Re-anchor entry paths to a different root directory (e.g. before writing a
// manifest file somewhere other than the dataset root).
inline DatasetManifest rebase_manifest(DatasetManifest m, const std::filesystem::path& new_root) {
    namespace fs = std::filesystem;
    const fs::path old_abs = fs::weakly_canonical(fs::absolute(m.root));
    const fs::path new_abs = fs::weakly_canonical(fs::absolute(new_root));
    if (old_abs != new_abs)
        for (ManifestEntry& e : m.entries)
            e.path = fs::relative(old_abs / e.path, new_abs).generic_string();
    m.root = new_root;
    return m;
}

// Union of the labeled set and the curated pseudo set. Every row must be
// labeled, class counts must agree, and no path may appear twice.
inline DatasetManifest merge(const DatasetManifest& labeled, const DatasetManifest& pseudo) {
    if (labeled.num_classes != pseudo.num_classes)
        throw DataError("merge: manifests disagree on num_classes");
    DatasetManifest out;
    out.root = labeled.root;
    out.num_classes = labeled.num_classes;

    const DatasetManifest rebased = rebase_manifest(pseudo, labeled.root);
    std::unordered_set<std::string> seen;
    auto push = [&](const ManifestEntry& e, const char* which) {
        if (e.label == kUnlabeled)
            throw DataError(std::string("merge: unlabeled row '") + e.path + "' in " + which + " manifest");
        if (!seen.insert(e.path).second)
            throw DataError("merge: path '" + e.path + "' appears in both manifests");
        out.entries.push_back(e);
    };
    for (const auto& e : labeled.entries) push(e, "labeled");
    for (const auto& e : rebased.entries) push(e, "pseudo");
    return out;
}

} // namespace cyclet
