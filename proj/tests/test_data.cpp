#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cyclet/augment.hpp"
#include "cyclet/image.hpp"
#include "cyclet/manifest.hpp"
#include "cyclet/preprocess.hpp"
#include "cyclet/synth.hpp"

using namespace cyclet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Image random_image(int w, int h, std::uint64_t seed) {
    Image img(w, h);
    Rng rng(seed);
    for (auto& b : img.px) b = std::uint8_t(rng.uniform_int(256));
    return img;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

} // namespace

TEST_CASE("ppm round trip is byte exact") {
    const auto dir = fresh_dir("cyclet_ppm");
    const Image img = random_image(13, 7, 99);
    write_ppm(dir / "a.ppm", img);
    const Image back = read_ppm(dir / "a.ppm");
    REQUIRE(back == img);
    const auto h = read_ppm_header(dir / "a.ppm");
    REQUIRE(h.width == 13);
    REQUIRE(h.height == 7);
}

TEST_CASE("ppm reader rejects malformed files") {
    const auto dir = fresh_dir("cyclet_ppm_bad");
    REQUIRE_THROWS_AS(read_ppm(dir / "missing.ppm"), DataError);

    write_text(dir / "bad_magic.ppm", "P5\n2 2\n255\n----------");
    REQUIRE_THROWS_AS(read_ppm(dir / "bad_magic.ppm"), DataError);

    write_text(dir / "bad_maxval.ppm", "P6\n2 2\n65535\n----");
    REQUIRE_THROWS_AS(read_ppm(dir / "bad_maxval.ppm"), DataError);

    write_text(dir / "truncated.ppm", "P6\n4 4\n255\nxx");
    REQUIRE_THROWS_AS(read_ppm(dir / "truncated.ppm"), DataError);
}

TEST_CASE("bilinear resize basics") {
    const Image img = random_image(16, 16, 5);
    SECTION("same size is the identity") { REQUIRE(resize_bilinear(img, 16) == img); }
    SECTION("constant image stays constant") {
        Image c(10, 10);
        for (auto& b : c.px) b = 123;
        const Image r = resize_bilinear(c, 23);
        for (auto b : r.px) REQUIRE(int(b) == 123);
    }
    SECTION("output dimensions and value range") {
        const Image r = resize_bilinear(img, 7);
        REQUIRE(r.width == 7);
        REQUIRE(r.height == 7);
    }
    SECTION("rejects non-positive side") { REQUIRE_THROWS_AS(resize_bilinear(img, 0), ShapeError); }
}

TEST_CASE("crops") {
    Image img(8, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) img.at(x, y, 0) = std::uint8_t(10 * y + x);

    SECTION("center crop picks the centered window") {
        const Image c = center_crop(img, 4);
        // offsets: x=(8-4)/2=2, y=(6-4)/2=1
        REQUIRE(int(c.at(0, 0, 0)) == 12);
        REQUIRE(int(c.at(3, 3, 0)) == 45);
    }
    SECTION("oversized crop throws") { REQUIRE_THROWS_AS(center_crop(img, 9), ShapeError); }
    SECTION("random crop is deterministic and in bounds") {
        Rng a(7), b(7);
        const Image ca = random_crop(img, 4, a);
        const Image cb = random_crop(img, 4, b);
        REQUIRE(ca == cb);
        // full-size crop has a single valid placement: the image itself
        Image sq = random_image(5, 5, 8);
        Rng c(9);
        REQUIRE(random_crop(sq, 5, c) == sq);
    }
}

TEST_CASE("normalization maps [0,255] to [-1,1] in CHW order") {
    Image img(2, 2);
    img.at(0, 0, 0) = 0;
    img.at(1, 0, 0) = 255;
    img.at(0, 1, 0) = 128;
    img.at(1, 0, 2) = 77; // distinct value to pin the layout
    const Tensor t = normalize_chw(img);
    REQUIRE(t.shape == std::vector<int>({3, 2, 2}));
    REQUIRE(t.v[0] == -1.0f);                         // c0,y0,x0
    REQUIRE(t.v[1] == 1.0f);                          // c0,y0,x1
    REQUIRE(t.v[2] == Catch::Approx(128.0 / 127.5 - 1.0).margin(1e-6)); // c0,y1,x0
    REQUIRE(t.v[2 * 4 + 1] == Catch::Approx(77.0 / 127.5 - 1.0).margin(1e-6));
}

TEST_CASE("preprocess pipeline") {
    const Image img = random_image(20, 20, 11);
    SECTION("center mode is deterministic") {
        const Tensor a = preprocess(img, 16, 12, CropMode::center);
        const Tensor b = preprocess(img, 16, 12, CropMode::center);
        REQUIRE(a.v == b.v);
        REQUIRE(a.shape == std::vector<int>({3, 12, 12}));
    }
    SECTION("random mode needs an rng and respects it") {
        REQUIRE_THROWS_AS(preprocess(img, 16, 12, CropMode::random), ShapeError);
        Rng r1(3), r2(3);
        REQUIRE(preprocess(img, 16, 12, CropMode::random, &r1).v ==
                preprocess(img, 16, 12, CropMode::random, &r2).v);
    }
    SECTION("crop larger than resize throws") {
        REQUIRE_THROWS_AS(preprocess(img, 16, 17, CropMode::center), ShapeError);
    }
}

TEST_CASE("manifest load and save") {
    const auto dir = fresh_dir("cyclet_manifest");
    write_ppm(dir / "a.ppm", random_image(4, 4, 1));
    write_ppm(dir / "b.ppm", random_image(4, 4, 2));
    write_ppm(dir / "c.ppm", random_image(4, 4, 3));

    SECTION("basic rows with header and sentinel") {
        write_text(dir / "m.csv", "path,label\na.ppm,0\nb.ppm,UNLABELED\nc.ppm,2\n");
        const auto m = load_manifest(dir / "m.csv", 3);
        REQUIRE(m.entries.size() == 3);
        REQUIRE(m.entries[0].label == 0);
        REQUIRE(m.entries[1].label == kUnlabeled);
        REQUIRE(m.entries[2].label == 2);
        REQUIRE(m.count_labeled() == 2);
        REQUIRE(m.count_pseudo() == 0);
        REQUIRE(m.entries[0].provenance == Provenance::original);
    }
    SECTION("extended rows") {
        write_text(dir / "m.csv", "path,label,confidence,provenance\na.ppm,1,0.93,pseudo\nb.ppm,0,1.0,original\n");
        const auto m = load_manifest(dir / "m.csv", 3);
        REQUIRE(m.entries[0].provenance == Provenance::pseudo);
        REQUIRE(m.entries[0].confidence == Catch::Approx(0.93));
        REQUIRE(m.count_pseudo() == 1);
    }
    SECTION("parse errors carry line numbers") {
        write_text(dir / "m.csv", "a.ppm,0\nb.ppm,zebra\n");
        try {
            load_manifest(dir / "m.csv", 3);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SECTION("label out of range") {
        write_text(dir / "m.csv", "a.ppm,3\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m.csv", 3), DataError);
        write_text(dir / "m2.csv", "a.ppm,-1\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m2.csv", 3), DataError);
    }
    SECTION("wrong field count") {
        write_text(dir / "m.csv", "a.ppm,0,0.5\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m.csv", 3), DataError);
    }
    SECTION("duplicate path") {
        write_text(dir / "m.csv", "a.ppm,0\na.ppm,1\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m.csv", 3), DataError);
    }
    SECTION("missing image file") {
        write_text(dir / "m.csv", "nope.ppm,0\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m.csv", 3), DataError);
        // but tolerated when verification is off
        REQUIRE(load_manifest(dir / "m.csv", 3, false).entries.size() == 1);
    }
    SECTION("bad confidence and provenance") {
        write_text(dir / "m.csv", "a.ppm,0,1.5,original\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m.csv", 3), DataError);
        write_text(dir / "m2.csv", "a.ppm,0,0.5,guessed\n");
        REQUIRE_THROWS_AS(load_manifest(dir / "m2.csv", 3), DataError);
    }
    SECTION("round trip preserves entries") {
        DatasetManifest m;
        m.root = dir;
        m.num_classes = 3;
        m.entries.push_back({"a.ppm", 1, 0.875, Provenance::pseudo});
        m.entries.push_back({"b.ppm", kUnlabeled, 1.0, Provenance::original});
        save_manifest(dir / "rt.csv", m, ManifestFormat::extended);
        const auto back = load_manifest(dir / "rt.csv", 3);
        REQUIRE(back.entries.size() == 2);
        REQUIRE(back.entries[0].label == 1);
        REQUIRE(back.entries[0].confidence == Catch::Approx(0.875));
        REQUIRE(back.entries[0].provenance == Provenance::pseudo);
        REQUIRE(back.entries[1].label == kUnlabeled);
    }
}

TEST_CASE("synthetic generation is deterministic and correctly labeled") {
    SynthSpec spec;
    spec.num_classes = 3;
    spec.train_per_class = 4;
    spec.val_per_class = 2;
    spec.test_per_class = 2;
    spec.image_side = 32;
    spec.seed = 21;

    const auto a = fresh_dir("cyclet_synth_a");
    const auto b = fresh_dir("cyclet_synth_b");
    const auto ra = generate_synthetic(spec, a);
    const auto rb = generate_synthetic(spec, b);

    SECTION("counts and manifests") {
        REQUIRE(ra.train_count == 12);
        REQUIRE(ra.val_count == 6);
        REQUIRE(ra.test_count == 6);
        const auto train = load_manifest(ra.train_csv, 3);
        const auto val = load_manifest(ra.val_csv, 3);
        const auto test = load_manifest(ra.test_csv, 3);
        REQUIRE(train.count_labeled() == 12);
        REQUIRE(val.count_labeled() == 0); // unlabeled pool
        REQUIRE(test.count_labeled() == 6);
        std::map<int, int> per_class;
        for (const auto& e : train.entries) per_class[e.label]++;
        REQUIRE(per_class.size() == 3);
        for (auto [cls, n] : per_class) REQUIRE(n == 4);
    }
    SECTION("same seed gives byte-identical datasets") {
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) continue;
            const auto rel = fs::relative(entry.path(), a);
            REQUIRE(slurp(entry.path()) == slurp(b / rel));
        }
    }
    SECTION("a different seed changes the images") {
        SynthSpec other = spec;
        other.seed = 22;
        const auto c = fresh_dir("cyclet_synth_c");
        generate_synthetic(other, c);
        REQUIRE(slurp(a / "train/class_00/img_0000.ppm") != slurp(c / "train/class_00/img_0000.ppm"));
    }
    SECTION("instances within a class differ") {
        REQUIRE(slurp(a / "train/class_00/img_0000.ppm") != slurp(a / "train/class_00/img_0001.ppm"));
    }
    SECTION("invalid specs are rejected") {
        SynthSpec bad = spec;
        bad.num_classes = 1;
        REQUIRE_THROWS_AS(generate_synthetic(bad, fresh_dir("cyclet_synth_bad")), ConfigError);
        bad = spec;
        bad.train_per_class = 0;
        REQUIRE_THROWS_AS(generate_synthetic(bad, fresh_dir("cyclet_synth_bad")), ConfigError);
    }
}

TEST_CASE("zero domain shift is a bit-exact identity") {
    Rng rng = stream_rng(5, StreamTag::synth, 0, 0);
    Image img = render_class_instance(2, 10, 32, rng);
    Image copy = img;
    DomainShift none; // all zeros
    Rng noise(1);
    apply_domain_shift(copy, none, noise);
    REQUIRE(copy == img);
}

TEST_CASE("nonzero domain shift perturbs images") {
    Rng rng = stream_rng(5, StreamTag::synth, 0, 1);
    const Image img = render_class_instance(1, 10, 32, rng);
    Image shifted = img;
    DomainShift s{20.0, 15.0, 5.0};
    Rng noise(1);
    apply_domain_shift(shifted, s, noise);
    REQUIRE(!(shifted == img));
    REQUIRE(shifted.width == img.width);
}

namespace {

// Depth-2 axis-aligned decision tree on 3 features, exhaustive search.
// Returns training accuracy; used as a separability floor for the generator.
double stump2_accuracy(const std::vector<std::array<double, 3>>& x, const std::vector<int>& y,
                       int num_classes) {
    const int n = int(x.size());
    auto majority_count = [&](const std::vector<int>& idx) {
        std::vector<int> hist(std::size_t(num_classes), 0);
        for (int i : idx) hist[std::size_t(y[std::size_t(i)])]++;
        return *std::max_element(hist.begin(), hist.end());
    };
    auto best_split_count = [&](const std::vector<int>& idx) {
        int best = majority_count(idx); // allow a degenerate leaf
        for (int f = 0; f < 3; ++f) {
            std::vector<double> vals;
            for (int i : idx) vals.push_back(x[std::size_t(i)][std::size_t(f)]);
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (std::size_t t = 1; t < vals.size(); ++t) {
                const double thr = 0.5 * (vals[t - 1] + vals[t]);
                std::vector<int> lo, hi;
                for (int i : idx)
                    (x[std::size_t(i)][std::size_t(f)] < thr ? lo : hi).push_back(i);
                if (lo.empty() || hi.empty()) continue;
                best = std::max(best, majority_count(lo) + majority_count(hi));
            }
        }
        return best;
    };

    int best_total = 0;
    for (int f = 0; f < 3; ++f) {
        std::vector<double> vals;
        for (int i = 0; i < n; ++i) vals.push_back(x[std::size_t(i)][std::size_t(f)]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t t = 1; t < vals.size(); ++t) {
            const double thr = 0.5 * (vals[t - 1] + vals[t]);
            std::vector<int> lo, hi;
            for (int i = 0; i < n; ++i)
                (x[std::size_t(i)][std::size_t(f)] < thr ? lo : hi).push_back(i);
            if (lo.empty() || hi.empty()) continue;
            best_total = std::max(best_total, best_split_count(lo) + best_split_count(hi));
        }
    }
    return double(best_total) / double(n);
}

} // namespace

TEST_CASE("synthetic classes clear a shallow-classifier separability floor") {
    SynthSpec spec;
    spec.num_classes = 5;
    spec.train_per_class = 20;
    spec.val_per_class = 1;
    spec.test_per_class = 1;
    spec.image_side = 32;
    spec.seed = 33;
    const auto dir = fresh_dir("cyclet_synth_sep");
    const auto res = generate_synthetic(spec, dir);
    const auto train = load_manifest(res.train_csv, 5);

    std::vector<std::array<double, 3>> feats;
    std::vector<int> labels;
    for (const auto& e : train.entries) {
        const Image img = read_ppm(train.resolve(e));
        double m[3];
        cyclet::detail::channel_means(img, m);
        feats.push_back({m[0], m[1], m[2]});
        labels.push_back(e.label);
    }
    const double acc = stump2_accuracy(feats, labels, 5);
    // chance is 0.2; hue-keyed palettes should make mean color informative
    REQUIRE(acc > 0.3);
}
