#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dferclip/tensor.hpp"

namespace dfer {

/// A clip is a list of RGB frames; each frame is a channel-planar flat array
/// of 3*H*W doubles in [0, 1].
struct VideoClip {
    std::vector<std::vector<double>> frames;
    Index height = 0;
    Index width = 0;
    int label = -1;
    std::string source_id;
    int fold = -1;
};

struct ClipRef {
    std::string path;  // relative to the manifest directory
    int label = -1;
    int fold = -1;
};

struct DatasetManifest {
    std::vector<std::string> classes;
    std::vector<ClipRef> clips;
    Index height = 0;
    Index width = 0;
    std::uint64_t seed = 0;
    std::string root;  // directory of the manifest file, set on load

    std::string clip_path(size_t i) const;
};

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

void save_clip(const std::string& path, const VideoClip& clip);
VideoClip load_clip(const std::string& path);

enum class SamplingMode { kUniformSegment, kCenter };

/// Frame indices for sampling T frames from a clip of `clip_len` frames.
/// UNIFORM_SEGMENT splits the clip into T equal segments: training mode draws
/// uniformly inside each segment, evaluation takes segment midpoints. Clips
/// shorter than T stretch-repeat frames (j -> floor(j * N / T)). CENTER takes
/// the middle T consecutive frames. Output is always non-decreasing in time.
std::vector<Index> sample_frame_indices(Index clip_len, Index t, SamplingMode mode, bool training,
                                        std::mt19937_64& rng);

std::vector<std::vector<double>> sample_frames(const VideoClip& clip, Index t, SamplingMode mode,
                                               bool training, std::mt19937_64& rng);

struct AugmentFlags {
    bool flip = false;
    bool crop = false;
    bool rotate = false;
    bool jitter = false;
};

/// One transform draw per clip, applied to every frame, so facial structure
/// stays temporally coherent. Crop scale is [0.8, 1], rotation within +-15
/// degrees, jitter gain [0.8, 1.2] and bias [-0.1, 0.1]; values are clamped
/// back to [0, 1].
std::vector<std::vector<double>> augment(const std::vector<std::vector<double>>& frames,
                                         Index height, Index width, const AugmentFlags& flags,
                                         std::mt19937_64& rng);

/// Synthetic stand-in data: class k is a drifting sinusoidal pattern with
/// class-specific orientation, spatial frequency, and temporal frequency;
/// clips vary by time offset and amplitude, plus Gaussian noise.
struct SyntheticSpec {
    int classes = 3;
    int clips_per_class = 10;
    Index raw_frames = 24;
    Index height = 16;
    Index width = 16;
    double noise = 0.05;
    std::uint64_t seed = 0;
    double amplitude = 0.4;
};

/// Writes clip files and manifest.json under out_dir; folds are assigned
/// round-robin over {0..4} in generation order.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

/// Noise-free class template value at (frame, channel, y, x).
double synthetic_template(const SyntheticSpec& spec, int class_index, Index t, Index c, Index y,
                          Index x);

/// Nearest-template classification, maximizing time-shifted correlation over
/// classes. Exact at zero noise by construction.
int classify_by_template(const SyntheticSpec& spec, const VideoClip& clip);

Tensor frame_to_tensor(const std::vector<double>& frame, Index height, Index width);

}  // namespace dfer
