#include "dferclip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dfer {

namespace {

void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

void put_f64(std::ostream& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    std::ifstream in;
    std::string path;
    std::uint64_t offset = 0;

    void read(void* p, size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n) {
            throw DataError(path + ": truncated at byte " +
                            std::to_string(offset + static_cast<std::uint64_t>(in.gcount())));
        }
        offset += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    bool at_eof() {
        in.peek();
        return in.eof();
    }
};

}  // namespace

void write_blob_file(const std::string& path, const BlobFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    put_bytes(out, kBlobMagic, sizeof(kBlobMagic));
    put_u32(out, kBlobVersion);
    const std::string json = file.meta.dump();
    put_u64(out, json.size());
    put_bytes(out, json.data(), json.size());
    for (const auto& [name, tensor] : file.blobs) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (Index d : tensor.shape()) put_u64(out, static_cast<std::uint64_t>(d));
        for (Index i = 0; i < tensor.size(); ++i) put_f64(out, tensor.at(i));
    }
    if (!out) throw IoError("write failed for " + path);
}

BlobFile read_blob_file(const std::string& path) {
    Reader r;
    r.path = path;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw DataError("cannot open " + path);

    char magic[8];
    r.read(magic, 8);
    if (std::memcmp(magic, kBlobMagic, 8) != 0) {
        throw DataError(path + ": malformed header (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kBlobVersion) {
        throw DataError(path + ": unsupported container version " + std::to_string(version));
    }
    const std::uint64_t json_len = r.u64();
    std::string json(json_len, '\0');
    r.read(json.data(), json_len);

    BlobFile file;
    try {
        file.meta = nlohmann::ordered_json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": malformed header JSON: " + e.what());
    }

    while (!r.at_eof()) {
        const std::uint32_t name_len = r.u32();
        std::string name(name_len, '\0');
        r.read(name.data(), name_len);
        const std::uint32_t rank = r.u32();
        std::vector<Index> shape;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<Index>(r.u64()));
        }
        const Index numel = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(numel));
        for (Index i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = r.f64();
        file.blobs.emplace_back(std::move(name), Tensor::from_values(std::move(shape), std::move(data)));
    }
    return file;
}

void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
    j = nlohmann::ordered_json{{"frames", c.frames},
                               {"height", c.height},
                               {"width", c.width},
                               {"patch", c.patch},
                               {"d_img", c.d_img},
                               {"d_text", c.d_text},
                               {"embed_len", c.embed_len},
                               {"image_depth", c.image_depth},
                               {"text_depth", c.text_depth},
                               {"temporal_depth", c.temporal_depth},
                               {"heads", c.heads},
                               {"classes", c.classes},
                               {"tau", c.tau},
                               {"train_tau", c.train_tau},
                               {"video_final_norm", c.video_final_norm}};
}

void from_json(const nlohmann::ordered_json& j, ModelConfig& c) {
    c.frames = j.value("frames", c.frames);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.patch = j.value("patch", c.patch);
    c.d_img = j.value("d_img", c.d_img);
    c.d_text = j.value("d_text", c.d_text);
    c.embed_len = j.value("embed_len", c.embed_len);
    c.image_depth = j.value("image_depth", c.image_depth);
    c.text_depth = j.value("text_depth", c.text_depth);
    c.temporal_depth = j.value("temporal_depth", c.temporal_depth);
    c.heads = j.value("heads", c.heads);
    c.classes = j.value("classes", c.classes);
    c.tau = j.value("tau", c.tau);
    c.train_tau = j.value("train_tau", c.train_tau);
    c.video_final_norm = j.value("video_final_norm", c.video_final_norm);
}

void to_json(nlohmann::ordered_json& j, const PromptSpec& s) {
    j = nlohmann::ordered_json{
        {"context_len", s.context_len},
        {"class_specific", s.class_specific},
        {"position", s.position == DescriptionPosition::kEnd ? "end" : "middle"},
        {"ensemble_size", s.ensemble_size},
        {"kind", s.kind == PromptKind::kDescriptors ? "descriptor" : "class"},
        {"descriptors_k", s.descriptors_k}};
}

void from_json(const nlohmann::ordered_json& j, PromptSpec& s) {
    s.context_len = j.value("context_len", s.context_len);
    s.class_specific = j.value("class_specific", s.class_specific);
    const std::string pos = j.value("position", std::string("end"));
    if (pos == "end") {
        s.position = DescriptionPosition::kEnd;
    } else if (pos == "middle") {
        s.position = DescriptionPosition::kMiddle;
    } else {
        throw ConfigError("prompt position must be 'end' or 'middle', got '" + pos + "'");
    }
    s.ensemble_size = j.value("ensemble_size", s.ensemble_size);
    const std::string kind = j.value("kind", std::string("descriptor"));
    if (kind == "descriptor") {
        s.kind = PromptKind::kDescriptors;
    } else if (kind == "class") {
        s.kind = PromptKind::kClassName;
    } else {
        throw ConfigError("prompt kind must be 'descriptor' or 'class', got '" + kind + "'");
    }
    s.descriptors_k = j.value("descriptors_k", s.descriptors_k);
}

void save_checkpoint(const std::string& path, const Model& model) {
    BlobFile file;
    nlohmann::ordered_json model_json, prompt_json;
    to_json(model_json, model.config());
    to_json(prompt_json, model.prompt_spec());
    file.meta = nlohmann::ordered_json{{"kind", "checkpoint"},
                                       {"model", model_json},
                                       {"prompt", prompt_json},
                                       {"classes", model.class_names()},
                                       {"vocab_size", model.text_encoder().token_emb.dim(0)}};
    for (const auto& p : model.params().items()) {
        file.blobs.emplace_back(p.name, p.tensor);
    }
    write_blob_file(path, file);
}

namespace {

void restore_params(const BlobFile& file, Model& model, const std::string& path) {
    if (file.blobs.size() != model.params().items().size()) {
        throw DataError(path + ": checkpoint has " + std::to_string(file.blobs.size()) +
                        " blobs, model expects " +
                        std::to_string(model.params().items().size()));
    }
    for (const auto& [name, tensor] : file.blobs) {
        const NamedParam& p = model.params().find(name);
        if (p.tensor.shape() != tensor.shape()) {
            throw DataError(path + ": parameter '" + name + "' has shape " +
                            shape_str(tensor.shape()) + ", model expects " +
                            shape_str(p.tensor.shape()));
        }
        std::copy(tensor.values().begin(), tensor.values().end(),
                  const_cast<Tensor&>(p.tensor).values().begin());
    }
}

}  // namespace

Model load_model(const std::string& path, const DescriptionSet& descriptions) {
    BlobFile file = read_blob_file(path);
    if (file.meta.value("kind", std::string()) != "checkpoint") {
        throw DataError(path + ": not a checkpoint container");
    }
    ModelConfig config;
    PromptSpec prompt;
    from_json(file.meta.at("model"), config);
    from_json(file.meta.at("prompt"), prompt);
    std::vector<std::string> classes = file.meta.at("classes").get<std::vector<std::string>>();
    Vocabulary vocab = build_vocabulary(descriptions);
    const Index expected_vocab = file.meta.value("vocab_size", Index{0});
    if (expected_vocab != vocab.size()) {
        throw DataError(path + ": vocabulary size " + std::to_string(vocab.size()) +
                        " does not match checkpoint's " + std::to_string(expected_vocab));
    }
    Model model(config, prompt, std::move(classes), descriptions, vocab, 0);
    restore_params(file, model, path);
    return model;
}

void load_checkpoint_into(const std::string& path, Model& model) {
    BlobFile file = read_blob_file(path);
    if (file.meta.value("kind", std::string()) != "checkpoint") {
        throw DataError(path + ": not a checkpoint container");
    }
    restore_params(file, model, path);
}

}  // namespace dfer
