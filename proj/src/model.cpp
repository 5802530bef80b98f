#include "dferclip/model.hpp"

#include <algorithm>
#include <cmath>

#include "dferclip/ops.hpp"

namespace dfer {

namespace {

constexpr double kInitSigma = 0.02;

Tensor randn(std::vector<Index> shape, double sigma, std::mt19937_64& rng, bool trainable) {
    Tensor t(std::move(shape), trainable);
    std::normal_distribution<double> dist(0.0, sigma);
    for (Index i = 0; i < t.size(); ++i) t.at(i) = dist(rng);
    return t;
}

}  // namespace

void ModelConfig::validate() const {
    if (frames < 1) throw ConfigError("config: frames must be >= 1");
    if (height < 1 || width < 1 || patch < 1) throw ConfigError("config: bad frame geometry");
    if (height % patch != 0 || width % patch != 0) {
        throw ConfigError("config: height/width " + std::to_string(height) + "x" +
                          std::to_string(width) + " not divisible by patch " +
                          std::to_string(patch));
    }
    if (heads < 1 || d_img % heads != 0 || d_text % heads != 0 || embed_len % heads != 0) {
        throw ConfigError("config: widths must be divisible by heads " + std::to_string(heads));
    }
    if (image_depth < 1 || text_depth < 1) throw ConfigError("config: encoder depth must be >= 1");
    if (temporal_depth < 0) throw ConfigError("config: temporal depth must be >= 0");
    if (classes < 1) throw ConfigError("config: classes must be >= 1");
    if (!(tau > 0)) throw ConfigError("config: tau must be positive");
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.frames = 16;
    c.height = 224;
    c.width = 224;
    c.patch = 32;
    c.d_img = 768;
    c.d_text = 512;
    c.embed_len = 512;
    c.image_depth = 12;
    c.text_depth = 12;
    c.temporal_depth = 1;
    c.heads = 8;
    c.classes = 7;
    c.tau = 0.01;
    return c;
}

void ParamRegistry::add(std::string name, Tensor tensor, ParamGroup group) {
    if (!tensor.defined()) return;
    for (const auto& p : items_) {
        if (p.name == name) throw IntegrityError("duplicate parameter name '" + name + "'");
    }
    items_.push_back(NamedParam{std::move(name), std::move(tensor), group});
}

const NamedParam& ParamRegistry::find(const std::string& name) const {
    for (const auto& p : items_) {
        if (p.name == name) return p;
    }
    throw IntegrityError("unknown parameter '" + name + "'");
}

Index ParamRegistry::total_size() const {
    Index n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
}

TransformerBlock TransformerBlock::init(Index width, int heads, bool trainable,
                                        std::mt19937_64& rng) {
    TransformerBlock b;
    b.heads = heads;
    b.ln1_gain = Tensor::full({width}, 1.0, trainable);
    b.ln1_bias = Tensor::zeros({width}, trainable);
    b.wq = randn({width, width}, kInitSigma, rng, trainable);
    b.bq = Tensor::zeros({width}, trainable);
    b.wk = randn({width, width}, kInitSigma, rng, trainable);
    b.bk = Tensor::zeros({width}, trainable);
    b.wv = randn({width, width}, kInitSigma, rng, trainable);
    b.bv = Tensor::zeros({width}, trainable);
    b.wo = randn({width, width}, kInitSigma, rng, trainable);
    b.bo = Tensor::zeros({width}, trainable);
    b.ln2_gain = Tensor::full({width}, 1.0, trainable);
    b.ln2_bias = Tensor::zeros({width}, trainable);
    b.mlp_w1 = randn({width, 4 * width}, kInitSigma, rng, trainable);
    b.mlp_b1 = Tensor::zeros({4 * width}, trainable);
    b.mlp_w2 = randn({4 * width, width}, kInitSigma, rng, trainable);
    b.mlp_b2 = Tensor::zeros({width}, trainable);
    return b;
}

namespace {
constexpr double kLnEps = 1e-12;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
    Tensor n1 = layer_norm(x, ln1_gain, ln1_bias, kLnEps);
    Tensor q = add_row(matmul(n1, wq), bq);
    Tensor k = add_row(matmul(n1, wk), bk);
    Tensor v = add_row(matmul(n1, wv), bv);
    Tensor attn = add_row(matmul(multi_head_attention(q, k, v, heads), wo), bo);
    Tensor h = add(x, attn);
    Tensor n2 = layer_norm(h, ln2_gain, ln2_bias, kLnEps);
    Tensor mlp = add_row(matmul(gelu(add_row(matmul(n2, mlp_w1), mlp_b1)), mlp_w2), mlp_b2);
    return add(h, mlp);
}

void TransformerBlock::register_params(ParamRegistry& reg, const std::string& prefix,
                                       ParamGroup group) const {
    reg.add(prefix + ".ln1.gain", ln1_gain, group);
    reg.add(prefix + ".ln1.bias", ln1_bias, group);
    reg.add(prefix + ".attn.wq", wq, group);
    reg.add(prefix + ".attn.bq", bq, group);
    reg.add(prefix + ".attn.wk", wk, group);
    reg.add(prefix + ".attn.bk", bk, group);
    reg.add(prefix + ".attn.wv", wv, group);
    reg.add(prefix + ".attn.bv", bv, group);
    reg.add(prefix + ".attn.wo", wo, group);
    reg.add(prefix + ".attn.bo", bo, group);
    reg.add(prefix + ".ln2.gain", ln2_gain, group);
    reg.add(prefix + ".ln2.bias", ln2_bias, group);
    reg.add(prefix + ".mlp.w1", mlp_w1, group);
    reg.add(prefix + ".mlp.b1", mlp_b1, group);
    reg.add(prefix + ".mlp.w2", mlp_w2, group);
    reg.add(prefix + ".mlp.b2", mlp_b2, group);
}

Tensor ImageEncoder::patchify(const Tensor& frame) const {
    if (frame.rank() != 3 || frame.dim(0) != 3 || frame.dim(1) != height ||
        frame.dim(2) != width) {
        throw ShapeError("encode_frame: frame shape " + shape_str(frame.shape()) +
                         " does not match configured [3x" + std::to_string(height) + "x" +
                         std::to_string(width) + "]");
    }
    const Index py = height / patch, px = width / patch;
    const Index dim = 3 * patch * patch;
    Tensor out({py * px, dim});
    Index row = 0;
    for (Index gy = 0; gy < py; ++gy) {
        for (Index gx = 0; gx < px; ++gx, ++row) {
            Index col = 0;
            for (Index c = 0; c < 3; ++c) {
                for (Index y = 0; y < patch; ++y) {
                    for (Index x = 0; x < patch; ++x, ++col) {
                        const Index src = c * height * width + (gy * patch + y) * width +
                                          (gx * patch + x);
                        out(row, col) = frame.at(src);
                    }
                }
            }
        }
    }
    return out;
}

Tensor ImageEncoder::encode(const Tensor& frame) const {
    Tensor tokens = add_row(matmul(patchify(frame), patch_w), patch_b);  // [N x d]
    Tensor seq = concat_rows(reshape(cls, {1, d}), tokens);              // [N+1 x d]
    Tensor x = add(seq, pos);
    for (const auto& block : blocks) x = block.forward(x);
    Tensor pooled = layer_norm(take_row(x, 0), ln_post_gain, ln_post_bias, kLnEps);
    return reshape(matmul(reshape(pooled, {1, d}), proj), {embed_len});
}

Tensor TemporalModel::encode(const Tensor& frame_features) const {
    if (frame_features.rank() != 2 || frame_features.dim(0) != frames ||
        frame_features.dim(1) != embed_len) {
        throw ShapeError("encode_video: expected [" + std::to_string(frames) + "x" +
                         std::to_string(embed_len) + "] frame features, got " +
                         shape_str(frame_features.shape()));
    }
    if (depth == 0) {
        Tensor mean = mean_rows(frame_features);
        return final_norm ? layer_norm(mean, ln_post_gain, ln_post_bias, kLnEps) : mean;
    }
    Tensor seq = concat_rows(reshape(cls, {1, embed_len}), frame_features);  // [T+1 x L]
    Tensor x = add(seq, pos);
    for (const auto& block : blocks) x = block.forward(x);
    Tensor out = take_row(x, 0);
    return final_norm ? layer_norm(out, ln_post_gain, ln_post_bias, kLnEps) : out;
}

Tensor TextEncoder::encode(const PromptSequence& seq, const ContextBank& bank) const {
    Tensor rows = prompt_embedding_rows(seq, token_emb, bank);  // [(eot+1) x d]
    Tensor x = add(rows, slice_rows(pos, 0, seq.eot_index + 1));
    for (const auto& block : blocks) x = block.forward(x);
    Tensor pooled = layer_norm(take_row(x, seq.eot_index), ln_final_gain, ln_final_bias, kLnEps);
    return reshape(matmul(reshape(pooled, {1, d}), proj), {embed_len});
}

Prediction predict(const std::vector<double>& video_embedding,
                   const std::vector<std::vector<double>>& class_embeddings, double tau) {
    if (!(tau > 0)) throw ConfigError("predict: tau must be positive");
    auto norm = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    const double vn = norm(video_embedding);
    if (!(vn > 0) || !std::isfinite(vn)) {
        throw NumericError("predict: video embedding has degenerate norm");
    }
    Prediction p;
    for (const auto& t : class_embeddings) {
        if (t.size() != video_embedding.size()) {
            throw ShapeError("predict: class embedding width mismatch");
        }
        const double tn = norm(t);
        if (!(tn > 0) || !std::isfinite(tn)) {
            throw NumericError("predict: class embedding has degenerate norm");
        }
        double dot = 0;
        for (size_t i = 0; i < t.size(); ++i) dot += t[i] * video_embedding[i];
        const double cosine = std::clamp(dot / (vn * tn), -1.0, 1.0);
        p.logits.push_back(cosine / tau);
    }
    double m = *std::max_element(p.logits.begin(), p.logits.end());
    double z = 0;
    for (double l : p.logits) z += std::exp(l - m);
    for (double l : p.logits) p.probs.push_back(std::exp(l - m) / z);
    p.argmax = static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) -
                                p.probs.begin());
    return p;
}

Model::Model(const ModelConfig& config, const PromptSpec& prompt_spec,
             std::vector<std::string> class_names, const DescriptionSet& descriptions,
             const Vocabulary& vocab, std::uint64_t seed)
    : config_(config), prompt_spec_(prompt_spec), class_names_(std::move(class_names)) {
    config_.validate();
    if (static_cast<int>(class_names_.size()) != config_.classes) {
        throw ConfigError("model: " + std::to_string(class_names_.size()) + " class names for " +
                          std::to_string(config_.classes) + " classes");
    }
    if (prompt_spec_.ensemble_size < 1) throw ConfigError("model: ensemble size must be >= 1");

    std::mt19937_64 rng(seed);

    // Image encoder.
    image_.height = config_.height;
    image_.width = config_.width;
    image_.patch = config_.patch;
    image_.d = config_.d_img;
    image_.embed_len = config_.embed_len;
    image_.heads = config_.heads;
    image_.patch_w = randn({3 * config_.patch * config_.patch, config_.d_img}, kInitSigma, rng, true);
    image_.patch_b = Tensor::zeros({config_.d_img}, true);
    image_.cls = randn({config_.d_img}, kInitSigma, rng, true);
    image_.pos = randn({image_.patches() + 1, config_.d_img}, kInitSigma, rng, true);
    for (int i = 0; i < config_.image_depth; ++i) {
        image_.blocks.push_back(TransformerBlock::init(config_.d_img, config_.heads, true, rng));
    }
    image_.ln_post_gain = Tensor::full({config_.d_img}, 1.0, true);
    image_.ln_post_bias = Tensor::zeros({config_.d_img}, true);
    image_.proj = randn({config_.d_img, config_.embed_len}, kInitSigma, rng, true);

    // Temporal model; depth 0 owns no parameters.
    temporal_.frames = config_.frames;
    temporal_.embed_len = config_.embed_len;
    temporal_.depth = config_.temporal_depth;
    temporal_.heads = config_.heads;
    temporal_.final_norm = config_.video_final_norm;
    if (config_.temporal_depth > 0) {
        temporal_.cls = randn({config_.embed_len}, kInitSigma, rng, true);
        temporal_.pos = randn({config_.frames + 1, config_.embed_len}, kInitSigma, rng, true);
        for (int i = 0; i < config_.temporal_depth; ++i) {
            temporal_.blocks.push_back(
                TransformerBlock::init(config_.embed_len, config_.heads, true, rng));
        }
    }
    if (config_.video_final_norm) {
        temporal_.ln_post_gain = Tensor::full({config_.embed_len}, 1.0, true);
        temporal_.ln_post_bias = Tensor::zeros({config_.embed_len}, true);
    }

    // Frozen text encoder.
    text_.d = config_.d_text;
    text_.embed_len = config_.embed_len;
    text_.heads = config_.heads;
    text_.token_emb = randn({static_cast<Index>(vocab.size()), config_.d_text}, kInitSigma, rng,
                            false);
    text_.pos = randn({static_cast<Index>(kMaxTokens), config_.d_text}, kInitSigma, rng, false);
    for (int i = 0; i < config_.text_depth; ++i) {
        text_.blocks.push_back(TransformerBlock::init(config_.d_text, config_.heads, false, rng));
    }
    text_.ln_final_gain = Tensor::full({config_.d_text}, 1.0, false);
    text_.ln_final_bias = Tensor::zeros({config_.d_text}, false);
    text_.proj = randn({config_.d_text, config_.embed_len}, kInitSigma, rng, false);

    // Learnable contexts and the per-class prompt layouts.
    contexts_ = ContextBank::init(config_.classes, prompt_spec_.context_len, config_.d_text,
                                  prompt_spec_.class_specific, rng);
    for (int k = 0; k < config_.classes; ++k) {
        std::vector<PromptSequence> members;
        for (int e = 0; e < prompt_spec_.ensemble_size; ++e) {
            std::string text;
            if (prompt_spec_.kind == PromptKind::kClassName) {
                text = class_names_[static_cast<size_t>(k)];
            } else {
                ClassDescription cd = descriptions.description(class_names_[static_cast<size_t>(k)],
                                                               prompt_spec_.descriptors_k);
                text = ensemble_description(cd, prompt_spec_.descriptors_k, e);
            }
            members.push_back(
                assemble_prompt(prompt_spec_, k, encode_words(text, vocab), contexts_));
        }
        prompts_.push_back(std::move(members));
    }

    inv_tau_ = Tensor::scalar(1.0 / config_.tau, config_.train_tau);

    // Registration order fixes the checkpoint layout.
    registry_.add("image.patch_proj.w", image_.patch_w, ParamGroup::kImage);
    registry_.add("image.patch_proj.b", image_.patch_b, ParamGroup::kImage);
    registry_.add("image.cls", image_.cls, ParamGroup::kImage);
    registry_.add("image.pos", image_.pos, ParamGroup::kImage);
    for (size_t i = 0; i < image_.blocks.size(); ++i) {
        image_.blocks[i].register_params(registry_, "image.blocks." + std::to_string(i),
                                         ParamGroup::kImage);
    }
    registry_.add("image.ln_post.gain", image_.ln_post_gain, ParamGroup::kImage);
    registry_.add("image.ln_post.bias", image_.ln_post_bias, ParamGroup::kImage);
    registry_.add("image.proj", image_.proj, ParamGroup::kImage);

    if (config_.temporal_depth > 0) {
        registry_.add("temporal.cls", temporal_.cls, ParamGroup::kTemporal);
        registry_.add("temporal.pos", temporal_.pos, ParamGroup::kTemporal);
        for (size_t i = 0; i < temporal_.blocks.size(); ++i) {
            temporal_.blocks[i].register_params(registry_, "temporal.blocks." + std::to_string(i),
                                                ParamGroup::kTemporal);
        }
    }
    if (config_.video_final_norm) {
        registry_.add("temporal.ln_post.gain", temporal_.ln_post_gain, ParamGroup::kTemporal);
        registry_.add("temporal.ln_post.bias", temporal_.ln_post_bias, ParamGroup::kTemporal);
    }
    if (config_.train_tau) {
        registry_.add("head.inv_tau", inv_tau_, ParamGroup::kTemporal);
    }

    registry_.add("text.token_emb", text_.token_emb, ParamGroup::kFrozenText);
    registry_.add("text.pos", text_.pos, ParamGroup::kFrozenText);
    for (size_t i = 0; i < text_.blocks.size(); ++i) {
        text_.blocks[i].register_params(registry_, "text.blocks." + std::to_string(i),
                                        ParamGroup::kFrozenText);
    }
    registry_.add("text.ln_final.gain", text_.ln_final_gain, ParamGroup::kFrozenText);
    registry_.add("text.ln_final.bias", text_.ln_final_bias, ParamGroup::kFrozenText);
    registry_.add("text.proj", text_.proj, ParamGroup::kFrozenText);

    registry_.add("ctx.bank", contexts_.bank, ParamGroup::kContext);
}

Tensor Model::encode_frame(const Tensor& frame) const {
    return image_.encode(frame);
}

Tensor Model::encode_video(const std::vector<Tensor>& frame_features) const {
    if (static_cast<Index>(frame_features.size()) != config_.frames) {
        throw ShapeError("encode_video: expected " + std::to_string(config_.frames) +
                         " frame features, got " + std::to_string(frame_features.size()));
    }
    return temporal_.encode(stack_rows(frame_features));
}

Tensor Model::encode_clip(const std::vector<Tensor>& frames) const {
    std::vector<Tensor> features;
    features.reserve(frames.size());
    for (const auto& f : frames) features.push_back(encode_frame(f));
    return encode_video(features);
}

std::vector<Tensor> Model::encode_text_classes() const {
    std::vector<Tensor> out;
    out.reserve(prompts_.size());
    for (const auto& members : prompts_) {
        Tensor combined;
        for (const auto& seq : members) {
            Tensor unit = l2_normalize(text_.encode(seq, contexts_));
            combined = combined.defined() ? add(combined, unit) : unit;
        }
        if (members.size() > 1) {
            combined = mul_scalar(combined, 1.0 / static_cast<double>(members.size()));
        }
        out.push_back(combined);
    }
    return out;
}

Tensor Model::stacked_text_embeddings() const {
    std::vector<Tensor> rows;
    for (auto& e : encode_text_classes()) rows.push_back(l2_normalize(e));
    return stack_rows(rows);
}

Tensor Model::cosine_logits(const Tensor& video_embedding, const Tensor& normalized_text) const {
    Tensor unit = l2_normalize(video_embedding);
    Tensor cosines = reshape(matmul(normalized_text, reshape(unit, {config_.embed_len, 1})),
                             {static_cast<Index>(config_.classes)});
    return config_.train_tau ? mul_scalar_param(cosines, inv_tau_)
                             : mul_scalar(cosines, 1.0 / config_.tau);
}

Prediction Model::predict_clip(const std::vector<Tensor>& frames) const {
    NoGradGuard ng;
    Tensor video = encode_clip(frames);
    std::vector<std::vector<double>> text;
    for (const auto& t : encode_text_classes()) text.push_back(t.values());
    return predict(video.values(), text, config_.tau);
}

double Model::tau() const {
    return 1.0 / inv_tau_.item();
}

}  // namespace dfer
