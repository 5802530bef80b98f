#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "dferclip/dataset.hpp"
#include "dferclip/descriptions.hpp"

using namespace dfer;
namespace fs = std::filesystem;

namespace {

VideoClip make_clip(Index frames, Index h = 4, Index w = 4, int label = 0) {
    VideoClip clip;
    clip.height = h;
    clip.width = w;
    clip.label = label;
    for (Index t = 0; t < frames; ++t) {
        std::vector<double> frame(static_cast<size_t>(3 * h * w));
        for (size_t i = 0; i < frame.size(); ++i) {
            frame[i] = static_cast<double>((t * 31 + static_cast<Index>(i)) % 97) / 97.0;
        }
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("sample_frame_indices") {
    std::mt19937_64 rng(1);

    SUBCASE("16 of 16 in eval is the identity") {
        auto idx = sample_frame_indices(16, 16, SamplingMode::kUniformSegment, false, rng);
        for (Index j = 0; j < 16; ++j) CHECK(idx[static_cast<size_t>(j)] == j);
    }
    SUBCASE("segment midpoints for 32 -> 16") {
        auto idx = sample_frame_indices(32, 16, SamplingMode::kUniformSegment, false, rng);
        for (Index j = 0; j < 16; ++j) CHECK(idx[static_cast<size_t>(j)] == 2 * j + 1);
    }
    SUBCASE("short clips stretch-repeat") {
        auto idx = sample_frame_indices(4, 16, SamplingMode::kUniformSegment, false, rng);
        std::vector<Index> expected = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3};
        CHECK(idx == expected);
    }
    SUBCASE("training draws stay inside their segments and keep order") {
        for (int trial = 0; trial < 50; ++trial) {
            auto idx = sample_frame_indices(64, 8, SamplingMode::kUniformSegment, true, rng);
            for (Index j = 0; j < 8; ++j) {
                CHECK(idx[static_cast<size_t>(j)] >= j * 8);
                CHECK(idx[static_cast<size_t>(j)] < (j + 1) * 8);
            }
            CHECK(std::is_sorted(idx.begin(), idx.end()));
        }
    }
    SUBCASE("center mode takes the middle window") {
        auto idx = sample_frame_indices(10, 4, SamplingMode::kCenter, false, rng);
        std::vector<Index> expected = {3, 4, 5, 6};
        CHECK(idx == expected);
    }
    SUBCASE("bad T and empty clips are rejected") {
        CHECK_THROWS_AS(sample_frame_indices(8, 0, SamplingMode::kUniformSegment, false, rng),
                        ConfigError);
        CHECK_THROWS_AS(sample_frame_indices(0, 4, SamplingMode::kUniformSegment, false, rng),
                        DataError);
    }
}

TEST_CASE("augment") {
    std::mt19937_64 rng(2);
    VideoClip clip = make_clip(3, 6, 6);

    SUBCASE("all flags off is the identity") {
        auto out = augment(clip.frames, 6, 6, AugmentFlags{}, rng);
        CHECK(out == clip.frames);
    }
    SUBCASE("flip maps column c to W-1-c in every frame") {
        AugmentFlags flags;
        flags.flip = true;
        // find a seed whose first draw actually flips
        std::mt19937_64 local(7);
        auto out = augment(clip.frames, 6, 6, flags, local);
        bool flipped = out != clip.frames;
        if (flipped) {
            for (size_t t = 0; t < out.size(); ++t) {
                for (Index c = 0; c < 3; ++c) {
                    for (Index y = 0; y < 6; ++y) {
                        for (Index x = 0; x < 6; ++x) {
                            CHECK(out[t][static_cast<size_t>(c * 36 + y * 6 + x)] ==
                                  clip.frames[t][static_cast<size_t>(c * 36 + y * 6 + (5 - x))]);
                        }
                    }
                }
            }
            // flipping the flipped frames with the same draw restores the original
            std::mt19937_64 again(7);
            auto twice = augment(out, 6, 6, flags, again);
            CHECK(twice == clip.frames);
        } else {
            FAIL("seed 7 did not draw a flip; pick another seed");
        }
    }
    SUBCASE("full pipeline preserves shape and range") {
        AugmentFlags flags{true, true, true, true};
        for (int trial = 0; trial < 20; ++trial) {
            auto out = augment(clip.frames, 6, 6, flags, rng);
            REQUIRE(out.size() == clip.frames.size());
            for (const auto& f : out) {
                REQUIRE(f.size() == clip.frames[0].size());
                for (double v : f) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("clip and manifest round trips") {
    TempDir dir("dfer_dataset_test");

    SUBCASE("clip write/read is lossless") {
        VideoClip clip = make_clip(5, 4, 4, 2);
        clip.source_id = "test/2/0";
        clip.fold = 3;
        const std::string path = (dir.path / "clip.bin").string();
        save_clip(path, clip);
        VideoClip loaded = load_clip(path);
        CHECK(loaded.frames == clip.frames);
        CHECK(loaded.label == clip.label);
        CHECK(loaded.fold == clip.fold);
        CHECK(loaded.source_id == clip.source_id);
        CHECK(loaded.height == 4);
        CHECK(loaded.width == 4);
    }

    SUBCASE("truncated clip reports a byte offset") {
        VideoClip clip = make_clip(5);
        const std::string path = (dir.path / "clip.bin").string();
        save_clip(path, clip);
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const std::string cut = (dir.path / "cut.bin").string();
        std::ofstream out(cut, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
        out.close();
        try {
            load_clip(cut);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            std::string msg = e.what();
            CHECK(msg.find("truncated at byte") != std::string::npos);
            CHECK(msg.find(cut) != std::string::npos);
        }
    }

    SUBCASE("manifest rejects out-of-range labels, naming the file") {
        DatasetManifest m;
        m.classes = {"a", "b"};
        m.height = 4;
        m.width = 4;
        m.clips.push_back(ClipRef{"x.bin", 2, 0});
        const std::string path = (dir.path / "manifest.json").string();
        save_manifest(path, m);
        try {
            load_manifest(path);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            std::string msg = e.what();
            CHECK(msg.find("manifest.json") != std::string::npos);
            CHECK(msg.find("label 2") != std::string::npos);
        }
    }

    SUBCASE("missing files are data errors naming the path") {
        CHECK_THROWS_AS(load_manifest((dir.path / "absent.json").string()), DataError);
        CHECK_THROWS_AS(load_clip((dir.path / "absent.bin").string()), DataError);
    }
}

TEST_CASE("synthetic generation") {
    TempDir dir("dfer_synth_test");

    SUBCASE("noise-free data is perfectly classified by its template oracle") {
        SyntheticSpec spec;
        spec.classes = 3;
        spec.clips_per_class = 6;
        spec.raw_frames = 12;
        spec.height = 8;
        spec.width = 8;
        spec.noise = 0.0;
        spec.seed = 5;
        DatasetManifest m = generate_synthetic(spec, (dir.path / "clean").string());
        REQUIRE(m.clips.size() == 18);
        int correct = 0;
        for (size_t i = 0; i < m.clips.size(); ++i) {
            VideoClip clip = load_clip(m.clip_path(i));
            if (classify_by_template(spec, clip) == m.clips[i].label) ++correct;
        }
        CHECK(correct == 18);
    }

    SUBCASE("same seed gives bitwise identical files") {
        SyntheticSpec spec;
        spec.classes = 2;
        spec.clips_per_class = 2;
        spec.raw_frames = 6;
        spec.height = 6;
        spec.width = 6;
        spec.seed = 11;
        generate_synthetic(spec, (dir.path / "a").string());
        generate_synthetic(spec, (dir.path / "b").string());
        for (const char* name : {"clip_0000.bin", "clip_0003.bin", "manifest.json"}) {
            std::ifstream fa(dir.path / "a" / name, std::ios::binary);
            std::ifstream fb(dir.path / "b" / name, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
            std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
            REQUIRE(!sa.empty());
            CHECK(sa == sb);
        }
    }

    SUBCASE("overwhelming noise drives the oracle toward chance") {
        SyntheticSpec spec;
        spec.classes = 3;
        spec.clips_per_class = 20;
        spec.raw_frames = 8;
        spec.height = 6;
        spec.width = 6;
        spec.noise = 4.0;  // 10x the signal amplitude
        spec.seed = 13;
        DatasetManifest m = generate_synthetic(spec, (dir.path / "noisy").string());
        int correct = 0;
        for (size_t i = 0; i < m.clips.size(); ++i) {
            VideoClip clip = load_clip(m.clip_path(i));
            if (classify_by_template(spec, clip) == m.clips[i].label) ++correct;
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(m.clips.size()) < 0.6);
    }

    SUBCASE("round-trip manifest equals the generated one") {
        SyntheticSpec spec;
        spec.classes = 2;
        spec.clips_per_class = 3;
        spec.raw_frames = 4;
        spec.height = 4;
        spec.width = 4;
        spec.seed = 3;
        DatasetManifest m = generate_synthetic(spec, (dir.path / "rt").string());
        DatasetManifest loaded = load_manifest((dir.path / "rt" / "manifest.json").string());
        CHECK(loaded.classes == m.classes);
        CHECK(loaded.height == m.height);
        CHECK(loaded.width == m.width);
        CHECK(loaded.seed == m.seed);
        REQUIRE(loaded.clips.size() == m.clips.size());
        for (size_t i = 0; i < m.clips.size(); ++i) {
            CHECK(loaded.clips[i].path == m.clips[i].path);
            CHECK(loaded.clips[i].label == m.clips[i].label);
            CHECK(loaded.clips[i].fold == m.clips[i].fold);
        }
    }

    SUBCASE("folds partition the clips") {
        SyntheticSpec spec;
        spec.classes = 2;
        spec.clips_per_class = 13;
        spec.raw_frames = 4;
        spec.height = 4;
        spec.width = 4;
        DatasetManifest m = generate_synthetic(spec, (dir.path / "folds").string());
        std::set<int> folds;
        for (const auto& c : m.clips) {
            CHECK(c.fold >= 0);
            CHECK(c.fold < 5);
            folds.insert(c.fold);
        }
        CHECK(folds.size() == 5);
    }

    SUBCASE("fewer than two classes is a config error") {
        SyntheticSpec spec;
        spec.classes = 1;
        CHECK_THROWS_AS(generate_synthetic(spec, (dir.path / "bad").string()), ConfigError);
    }

    SUBCASE("seven-class manifest lists the seven basic expressions") {
        SyntheticSpec spec;
        spec.classes = 7;
        spec.clips_per_class = 1;
        spec.raw_frames = 2;
        spec.height = 4;
        spec.width = 4;
        DatasetManifest m = generate_synthetic(spec, (dir.path / "seven").string());
        CHECK(m.classes == std::vector<std::string>{"neutral", "happiness", "sadness", "surprise",
                                                    "fear", "disgust", "anger"});
    }
}
