#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "dferclip/model.hpp"
#include "dferclip/tensor.hpp"

namespace dfer {

// Binary container used for checkpoints and clip files:
//   magic "DFERBLOB" | u32 version | u64 json length | json bytes |
//   blobs until EOF, each: u32 name length | name | u32 rank |
//   u64 extents[rank] | little-endian f64 data.
// All integers little-endian. Round-trips are bit-exact.

inline constexpr char kBlobMagic[8] = {'D', 'F', 'E', 'R', 'B', 'L', 'O', 'B'};
inline constexpr std::uint32_t kBlobVersion = 1;

struct BlobFile {
    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, Tensor>> blobs;
};

void write_blob_file(const std::string& path, const BlobFile& file);
BlobFile read_blob_file(const std::string& path);

void save_checkpoint(const std::string& path, const Model& model);

/// Rebuilds the model from the checkpoint's embedded config and restores
/// every parameter bit-exactly. The description set must produce the same
/// vocabulary the checkpoint was trained with.
Model load_model(const std::string& path, const DescriptionSet& descriptions);

/// Restores parameters into an existing model with an identical registry.
void load_checkpoint_into(const std::string& path, Model& model);

// JSON conversions for configs (partial objects fall back to defaults).
void to_json(nlohmann::ordered_json& j, const ModelConfig& c);
void from_json(const nlohmann::ordered_json& j, ModelConfig& c);
void to_json(nlohmann::ordered_json& j, const PromptSpec& s);
void from_json(const nlohmann::ordered_json& j, PromptSpec& s);

}  // namespace dfer
