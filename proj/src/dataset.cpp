#include "dferclip/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dferclip/checkpoint.hpp"
#include "dferclip/descriptions.hpp"

namespace dfer {

namespace fs = std::filesystem;

std::string DatasetManifest::clip_path(size_t i) const {
    const std::string& rel = clips.at(i).path;
    if (root.empty()) return rel;
    return (fs::path(root) / rel).string();
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    nlohmann::ordered_json j;
    j["classes"] = manifest.classes;
    j["height"] = manifest.height;
    j["width"] = manifest.width;
    j["seed"] = manifest.seed;
    nlohmann::ordered_json clips = nlohmann::ordered_json::array();
    for (const auto& c : manifest.clips) {
        clips.push_back({{"path", c.path}, {"label", c.label}, {"fold", c.fold}});
    }
    j["clips"] = clips;
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest: cannot open " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest: malformed JSON in " + path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.height = j.at("height").get<Index>();
        m.width = j.at("width").get<Index>();
        m.seed = j.value("seed", std::uint64_t{0});
        for (const auto& c : j.at("clips")) {
            ClipRef ref;
            ref.path = c.at("path").get<std::string>();
            ref.label = c.at("label").get<int>();
            ref.fold = c.value("fold", -1);
            m.clips.push_back(std::move(ref));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest: missing field in " + path + ": " + e.what());
    }
    const int c = static_cast<int>(m.classes.size());
    for (const auto& ref : m.clips) {
        if (ref.label < 0 || ref.label >= c) {
            throw DataError("manifest: " + path + " references label " +
                            std::to_string(ref.label) + " outside [0, " + std::to_string(c) +
                            ") for clip " + ref.path);
        }
    }
    m.root = fs::path(path).parent_path().string();
    return m;
}

void save_clip(const std::string& path, const VideoClip& clip) {
    if (clip.frames.empty()) throw DataError("clip: refusing to write empty clip " + path);
    BlobFile file;
    file.meta = nlohmann::ordered_json{{"kind", "clip"},
                                       {"label", clip.label},
                                       {"source_id", clip.source_id},
                                       {"fold", clip.fold},
                                       {"height", clip.height},
                                       {"width", clip.width}};
    const Index t = static_cast<Index>(clip.frames.size());
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(t * 3 * clip.height * clip.width));
    for (const auto& f : clip.frames) {
        if (static_cast<Index>(f.size()) != 3 * clip.height * clip.width) {
            throw DataError("clip: frame size mismatch while writing " + path);
        }
        flat.insert(flat.end(), f.begin(), f.end());
    }
    file.blobs.emplace_back(
        "frames", Tensor::from_values({t, 3, clip.height, clip.width}, std::move(flat)));
    write_blob_file(path, file);
}

VideoClip load_clip(const std::string& path) {
    BlobFile file = read_blob_file(path);
    if (file.meta.value("kind", std::string()) != "clip") {
        throw DataError(path + ": not a clip container");
    }
    if (file.blobs.size() != 1 || file.blobs[0].first != "frames") {
        throw DataError(path + ": expected a single 'frames' blob");
    }
    const Tensor& frames = file.blobs[0].second;
    if (frames.rank() != 4 || frames.dim(1) != 3) {
        throw DataError(path + ": frames blob has shape " + shape_str(frames.shape()) +
                        ", expected [T x 3 x H x W]");
    }
    VideoClip clip;
    clip.label = file.meta.value("label", -1);
    clip.source_id = file.meta.value("source_id", std::string());
    clip.fold = file.meta.value("fold", -1);
    clip.height = frames.dim(2);
    clip.width = frames.dim(3);
    const Index frame_len = 3 * clip.height * clip.width;
    for (Index t = 0; t < frames.dim(0); ++t) {
        const double* begin = frames.data() + t * frame_len;
        clip.frames.emplace_back(begin, begin + frame_len);
    }
    return clip;
}

std::vector<Index> sample_frame_indices(Index clip_len, Index t, SamplingMode mode, bool training,
                                        std::mt19937_64& rng) {
    if (t <= 0) throw ConfigError("sample_frames: T must be positive, got " + std::to_string(t));
    if (clip_len <= 0) throw DataError("sample_frames: empty clip");
    std::vector<Index> idx;
    idx.reserve(static_cast<size_t>(t));
    if (clip_len < t) {
        // stretch-repeat, e.g. 4 frames at T = 16 -> 0,0,0,0,1,1,1,1,...
        for (Index j = 0; j < t; ++j) idx.push_back(j * clip_len / t);
        return idx;
    }
    if (mode == SamplingMode::kCenter) {
        const Index start = (clip_len - t) / 2;
        for (Index j = 0; j < t; ++j) idx.push_back(start + j);
        return idx;
    }
    for (Index j = 0; j < t; ++j) {
        const Index start = j * clip_len / t;
        const Index end = std::max(start + 1, (j + 1) * clip_len / t);
        if (training && end - start > 1) {
            std::uniform_int_distribution<Index> dist(start, end - 1);
            idx.push_back(dist(rng));
        } else {
            idx.push_back(start + (end - start) / 2);
        }
    }
    return idx;
}

std::vector<std::vector<double>> sample_frames(const VideoClip& clip, Index t, SamplingMode mode,
                                               bool training, std::mt19937_64& rng) {
    std::vector<Index> idx =
        sample_frame_indices(static_cast<Index>(clip.frames.size()), t, mode, training, rng);
    std::vector<std::vector<double>> out;
    out.reserve(idx.size());
    for (Index i : idx) out.push_back(clip.frames[static_cast<size_t>(i)]);
    return out;
}

namespace {

double bilinear(const std::vector<double>& frame, Index h, Index w, Index c, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const Index y0 = static_cast<Index>(std::floor(y));
    const Index x0 = static_cast<Index>(std::floor(x));
    const Index y1 = std::min(y0 + 1, h - 1);
    const Index x1 = std::min(x0 + 1, w - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    auto at = [&](Index yy, Index xx) {
        return frame[static_cast<size_t>(c * h * w + yy * w + xx)];
    };
    return at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x1) * (1 - fy) * fx +
           at(y1, x0) * fy * (1 - fx) + at(y1, x1) * fy * fx;
}

}  // namespace

std::vector<std::vector<double>> augment(const std::vector<std::vector<double>>& frames,
                                         Index height, Index width, const AugmentFlags& flags,
                                         std::mt19937_64& rng) {
    // Draw the whole transform once, then apply it to every frame.
    bool do_flip = false;
    double crop_top = 0, crop_left = 0, crop_h = static_cast<double>(height),
           crop_w = static_cast<double>(width);
    double angle = 0;
    double gain[3] = {1, 1, 1}, bias[3] = {0, 0, 0};
    if (flags.flip) {
        do_flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    }
    if (flags.crop) {
        const double scale = std::uniform_real_distribution<double>(0.8, 1.0)(rng);
        crop_h = std::max(1.0, std::round(static_cast<double>(height) * scale));
        crop_w = std::max(1.0, std::round(static_cast<double>(width) * scale));
        crop_top = std::uniform_real_distribution<double>(0.0, static_cast<double>(height) - crop_h)(rng);
        crop_left = std::uniform_real_distribution<double>(0.0, static_cast<double>(width) - crop_w)(rng);
    }
    if (flags.rotate) {
        constexpr double kMaxDegrees = 15.0;
        angle = std::uniform_real_distribution<double>(-kMaxDegrees, kMaxDegrees)(rng) *
                std::numbers::pi / 180.0;
    }
    if (flags.jitter) {
        for (int c = 0; c < 3; ++c) {
            gain[c] = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
            bias[c] = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
        }
    }

    const bool geometric = flags.crop || flags.rotate;
    const double cy = (static_cast<double>(height) - 1) / 2.0;
    const double cx = (static_cast<double>(width) - 1) / 2.0;
    const double cos_a = std::cos(angle), sin_a = std::sin(angle);
    const double span_y = height > 1 ? static_cast<double>(height - 1) : 1.0;
    const double span_x = width > 1 ? static_cast<double>(width - 1) : 1.0;

    std::vector<std::vector<double>> out;
    out.reserve(frames.size());
    for (const auto& frame : frames) {
        std::vector<double> next(frame.size());
        for (Index c = 0; c < 3; ++c) {
            for (Index y = 0; y < height; ++y) {
                for (Index x = 0; x < width; ++x) {
                    Index sx = x;
                    if (do_flip) sx = width - 1 - x;
                    double value;
                    if (geometric) {
                        // rotate about the center, then map into the crop window
                        double ry = static_cast<double>(y), rx = static_cast<double>(sx);
                        if (flags.rotate) {
                            const double dy = ry - cy, dx = rx - cx;
                            ry = cy + cos_a * dy - sin_a * dx;
                            rx = cx + sin_a * dy + cos_a * dx;
                        }
                        const double src_y = crop_top + ry / span_y * (crop_h - 1);
                        const double src_x = crop_left + rx / span_x * (crop_w - 1);
                        value = bilinear(frame, height, width, c, src_y, src_x);
                    } else {
                        value = frame[static_cast<size_t>(c * height * width + y * width + sx)];
                    }
                    value = value * gain[c] + bias[c];
                    next[static_cast<size_t>(c * height * width + y * width + x)] =
                        std::clamp(value, 0.0, 1.0);
                }
            }
        }
        out.push_back(std::move(next));
    }
    return out;
}

double synthetic_template(const SyntheticSpec& spec, int class_index, Index t, Index c, Index y,
                          Index x) {
    const double theta =
        std::numbers::pi * static_cast<double>(class_index) / static_cast<double>(spec.classes);
    const double cycles = 1.0 + static_cast<double>(class_index % 3);
    const double omega = 1.0 + static_cast<double>(class_index % 4);
    const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(spec.width);
    const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(spec.height);
    const double phase =
        2.0 * std::numbers::pi *
        (cycles * (std::cos(theta) * u + std::sin(theta) * v) +
         omega * static_cast<double>(t) / static_cast<double>(spec.raw_frames)) +
        2.0 * std::numbers::pi * static_cast<double>(c) / 3.0;
    return 0.5 + spec.amplitude * std::sin(phase);
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    if (spec.classes < 2) {
        throw ConfigError("generate_synthetic: need at least 2 classes, got " +
                          std::to_string(spec.classes));
    }
    if (spec.clips_per_class < 1 || spec.raw_frames < 1) {
        throw ConfigError("generate_synthetic: clips_per_class and raw_frames must be positive");
    }
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.classes = default_class_names(spec.classes);
    manifest.height = spec.height;
    manifest.width = spec.width;
    manifest.seed = spec.seed;
    manifest.root = out_dir;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const Index frame_len = 3 * spec.height * spec.width;
    int index = 0;
    for (int k = 0; k < spec.classes; ++k) {
        for (int i = 0; i < spec.clips_per_class; ++i, ++index) {
            const Index t0 =
                std::uniform_int_distribution<Index>(0, spec.raw_frames - 1)(rng);
            const double amp_scale = std::uniform_real_distribution<double>(0.85, 1.0)(rng);

            VideoClip clip;
            clip.height = spec.height;
            clip.width = spec.width;
            clip.label = k;
            clip.fold = index % 5;
            clip.source_id =
                "synthetic/" + manifest.classes[static_cast<size_t>(k)] + "/" + std::to_string(i);
            for (Index t = 0; t < spec.raw_frames; ++t) {
                std::vector<double> frame(static_cast<size_t>(frame_len));
                Index pos = 0;
                for (Index c = 0; c < 3; ++c) {
                    for (Index y = 0; y < spec.height; ++y) {
                        for (Index x = 0; x < spec.width; ++x, ++pos) {
                            const double base = synthetic_template(spec, k, t + t0, c, y, x);
                            double value = 0.5 + amp_scale * (base - 0.5);
                            if (spec.noise > 0) value += spec.noise * noise(rng);
                            frame[static_cast<size_t>(pos)] = std::clamp(value, 0.0, 1.0);
                        }
                    }
                }
                clip.frames.push_back(std::move(frame));
            }
            char name[32];
            std::snprintf(name, sizeof(name), "clip_%04d.bin", index);
            save_clip((fs::path(out_dir) / name).string(), clip);
            manifest.clips.push_back(ClipRef{name, k, clip.fold});
        }
    }
    save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

namespace {

double shifted_correlation(const SyntheticSpec& spec, const VideoClip& clip, int k, Index t0) {
    // Pearson correlation between the clip and the class template shifted by t0.
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    double n = 0;
    for (size_t t = 0; t < clip.frames.size(); ++t) {
        Index pos = 0;
        for (Index c = 0; c < 3; ++c) {
            for (Index y = 0; y < spec.height; ++y) {
                for (Index x = 0; x < spec.width; ++x, ++pos) {
                    const double a = clip.frames[t][static_cast<size_t>(pos)];
                    const double b =
                        synthetic_template(spec, k, static_cast<Index>(t) + t0, c, y, x);
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                    n += 1;
                }
            }
        }
    }
    const double cov = sab - sa * sb / n;
    const double va = saa - sa * sa / n;
    const double vb = sbb - sb * sb / n;
    if (va <= 0 || vb <= 0) return 0;
    return cov / std::sqrt(va * vb);
}

}  // namespace

int classify_by_template(const SyntheticSpec& spec, const VideoClip& clip) {
    if (clip.height != spec.height || clip.width != spec.width) {
        throw DataError("classify_by_template: clip geometry does not match the spec");
    }
    int best_class = -1;
    double best = -2;
    for (int k = 0; k < spec.classes; ++k) {
        for (Index t0 = 0; t0 < spec.raw_frames; ++t0) {
            const double r = shifted_correlation(spec, clip, k, t0);
            if (r > best) {
                best = r;
                best_class = k;
            }
        }
    }
    return best_class;
}

Tensor frame_to_tensor(const std::vector<double>& frame, Index height, Index width) {
    if (static_cast<Index>(frame.size()) != 3 * height * width) {
        throw ShapeError("frame_to_tensor: frame has " + std::to_string(frame.size()) +
                         " values, expected " + std::to_string(3 * height * width));
    }
    return Tensor::from_values({3, height, width}, frame);
}

}  // namespace dfer
