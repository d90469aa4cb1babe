#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "cyclet/error.hpp"
#include "cyclet/manifest.hpp"
#include "cyclet/models.hpp"
#include "cyclet/preprocess.hpp"
#include "cyclet/util.hpp"

namespace cyclet {

// Fraction of rows whose true label ranks inside the top k. A label's rank
// counts every strictly larger probability plus equal probabilities at lower
// class indices, mirroring the tie rule used for pseudo-labels.
inline double topk_accuracy(const Tensor& probs, const std::vector<int>& labels, int k) {
    if (probs.ndim() != 2) throw ShapeError("topk: expected probs [N,C], got " + shape_str(probs.shape));
    const int n = probs.dim(0), c = probs.dim(1);
    if (int(labels.size()) != n)
        throw ShapeError("topk: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
    if (k < 1 || k > c) throw ShapeError("topk: k must be in [1," + std::to_string(c) + "]");
    if (n == 0) throw ShapeError("topk: empty batch");

    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[std::size_t(i)];
        if (y < 0 || y >= c) throw ShapeError("topk: label " + std::to_string(y) + " out of range");
        const float* row = probs.v.data() + std::size_t(i) * c;
        int rank = 0;
        for (int j = 0; j < c; ++j) {
            if (row[j] > row[y]) ++rank;
            else if (row[j] == row[y] && j < y) ++rank;
        }
        hits += rank < k;
    }
    return double(hits) / double(n);
}

struct Metrics {
    double top1 = 0.0;
    double top3 = 0.0;
    int n_examples = 0;
};

// Labeled-manifest evaluation with the deterministic scoring path
// (resize -> center crop -> normalize), batched through the model.
inline Metrics evaluate(Model& model, const DatasetManifest& m, int resize_side, int batch_size = 32) {
    if (m.entries.empty()) throw DataError("evaluate: empty manifest");
    if (m.num_classes < 3) throw ConfigError("evaluate: top-3 metric needs at least 3 classes");
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    const int side = model.config().input_side;
    if (resize_side < side) throw ShapeError("evaluate: resize side smaller than model input");
    if (model.config().num_classes != m.num_classes)
        throw ShapeError("evaluate: model/manifest class count mismatch");

    const int total = int(m.entries.size());
    std::vector<int> labels(static_cast<std::size_t>(total), 0);
    for (int i = 0; i < total; ++i) {
        labels[std::size_t(i)] = m.entries[std::size_t(i)].label;
        if (labels[std::size_t(i)] == kUnlabeled)
            throw DataError("evaluate: unlabeled row '" + m.entries[std::size_t(i)].path + "'");
    }

    Tensor probs({total, m.num_classes});
    const std::size_t in_stride = std::size_t(3) * side * side;
    for (int begin = 0; begin < total; begin += batch_size) {
        const int n = std::min(batch_size, total - begin);
        Tensor batch({n, 3, side, side});
        parallel_for(n, [&](int i) {
            const Image img = read_ppm(m.resolve(m.entries[std::size_t(begin + i)]));
            const Image prepped = center_crop(resize_bilinear(img, resize_side), side);
            normalize_into(prepped, batch.v.data() + std::size_t(i) * in_stride);
        });
        const Tensor p = predict_probs(model, batch);
        std::copy(p.v.begin(), p.v.end(),
                  probs.v.begin() + std::size_t(begin) * m.num_classes);
    }

    Metrics out;
    out.n_examples = total;
    out.top1 = topk_accuracy(probs, labels, 1);
    out.top3 = topk_accuracy(probs, labels, 3);
    return out;
}

// score = 2 * (top1 + top3) / (C * runtime_ms)
inline double challenge_score(double top1, double top3, double runtime_ms, double c = 1.0) {
    if (!(runtime_ms > 0.0)) throw ConfigError("score: runtime_ms must be positive");
    if (!(c > 0.0)) throw ConfigError("score: C must be positive");
    if (top1 < 0.0 || top1 > 1.0 || top3 < 0.0 || top3 > 1.0)
        throw ConfigError("score: accuracies must be in [0,1]");
    return 2.0 * (top1 + top3) / (c * runtime_ms);
}

struct LatencyReport {
    std::vector<double> per_iter_ms; // exactly `iterations` post-warmup samples
    double mean_ms = 0.0;
    double std_ms = 0.0;
    int warmup = 0;
};

// Single-image forward latency: `warmup` unrecorded passes, then `iterations`
// timed passes on a fixed mid-gray input.
inline LatencyReport measure_latency(Model& model, int iterations = 20, int warmup = 3) {
    if (iterations < 1) throw ConfigError("latency: iterations must be >= 1");
    if (warmup < 0) throw ConfigError("latency: warmup must be >= 0");
    const int side = model.config().input_side;
    Tensor x({1, 3, side, side}); // zeros = mid-gray after normalization

    LatencyReport rep;
    rep.warmup = warmup;
    rep.per_iter_ms.reserve(std::size_t(iterations));
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup + iterations; ++i) {
        const auto t0 = clock::now();
        const Tensor probs = predict_probs(model, x);
        const auto t1 = clock::now();
        (void)probs;
        if (i >= warmup)
            rep.per_iter_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double sum = 0.0;
    for (double v : rep.per_iter_ms) sum += v;
    rep.mean_ms = sum / double(iterations);
    double ss = 0.0;
    for (double v : rep.per_iter_ms) ss += (v - rep.mean_ms) * (v - rep.mean_ms);
    rep.std_ms = iterations > 1 ? std::sqrt(ss / double(iterations - 1)) : 0.0;
    return rep;
}

} // namespace cyclet
