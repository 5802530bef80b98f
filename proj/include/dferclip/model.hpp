#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dferclip/descriptions.hpp"
#include "dferclip/prompt.hpp"
#include "dferclip/tensor.hpp"
#include "dferclip/tokenizer.hpp"

namespace dfer {

/// Architecture and head hyperparameters. Defaults are the desk-scale toy
/// preset; paper_scale() carries the full-scale values.
struct ModelConfig {
    Index frames = 8;  // T, sampled frames per clip
    Index height = 16;
    Index width = 16;
    Index patch = 8;
    Index d_img = 32;
    Index d_text = 32;
    Index embed_len = 16;  // L, shared embedding width
    int image_depth = 1;
    int text_depth = 1;
    int temporal_depth = 1;  // 0 selects mean pooling over frame features
    int heads = 4;
    int classes = 7;
    double tau = 0.01;
    bool train_tau = false;
    bool video_final_norm = false;

    void validate() const;
    static ModelConfig paper_scale();
};

enum class ParamGroup { kImage, kTemporal, kContext, kFrozenText };

struct NamedParam {
    std::string name;
    Tensor tensor;
    ParamGroup group;
};

/// Ordered registry of every model parameter; the order fixes checkpoint
/// layout and optimizer walks.
class ParamRegistry {
public:
    void add(std::string name, Tensor tensor, ParamGroup group);
    const std::vector<NamedParam>& items() const { return items_; }
    const NamedParam& find(const std::string& name) const;
    Index total_size() const;

private:
    std::vector<NamedParam> items_;
};

/// Pre-norm transformer encoder layer: x + attn(norm(x)), then
/// x + mlp(norm(x)) with a 4x hidden GELU MLP.
struct TransformerBlock {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    int heads = 1;

    Tensor forward(const Tensor& x) const;

    static TransformerBlock init(Index width, int heads, bool trainable, std::mt19937_64& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamGroup group) const;
};

/// ViT-style frame encoder f(.): patch projection, class token, position
/// embeddings, transformer stack, projection to the shared embedding width.
struct ImageEncoder {
    Index height = 0, width = 0, patch = 0, d = 0, embed_len = 0;
    int heads = 1;
    Tensor patch_w, patch_b;  // [3*patch^2 x d], [d]
    Tensor cls;               // [d]
    Tensor pos;               // [n_patches + 1 x d]
    std::vector<TransformerBlock> blocks;
    Tensor ln_post_gain, ln_post_bias;
    Tensor proj;  // [d x L]

    Index patches() const { return (height / patch) * (width / patch); }
    Tensor patchify(const Tensor& frame) const;  // [3 x H x W] -> constant [N x 3p^2]
    Tensor encode(const Tensor& frame) const;    // -> [L]
};

/// Temporal model g(.) over per-frame features: class token, T+1 position
/// embeddings, transformer stack; depth 0 owns no parameters and mean-pools.
struct TemporalModel {
    Index frames = 0, embed_len = 0;
    int depth = 0, heads = 1;
    bool final_norm = false;
    Tensor cls;  // [L]
    Tensor pos;  // [T+1 x L]
    std::vector<TransformerBlock> blocks;
    Tensor ln_post_gain, ln_post_bias;  // only with final_norm

    Tensor encode(const Tensor& frame_features) const;  // [T x L] -> [L]
};

/// Frozen text encoder h(.): token embedding table, position embeddings,
/// transformer stack, EOT pooling, projection. Only the context vectors in
/// the prompt carry gradients through it.
struct TextEncoder {
    Index d = 0, embed_len = 0;
    int heads = 1;
    Tensor token_emb;  // [V x d]
    Tensor pos;        // [kMaxTokens x d]
    std::vector<TransformerBlock> blocks;
    Tensor ln_final_gain, ln_final_bias;
    Tensor proj;  // [d x L]

    Tensor encode(const PromptSequence& seq, const ContextBank& bank) const;  // -> [L]
};

struct Prediction {
    std::vector<double> logits;  // cosine / tau
    std::vector<double> probs;
    int argmax = -1;
};

/// Cosine/temperature head over plain vectors (evaluation path).
Prediction predict(const std::vector<double>& video_embedding,
                   const std::vector<std::vector<double>>& class_embeddings, double tau);

/// The full dual-encoder model with its prompt machinery.
class Model {
public:
    Model(const ModelConfig& config, const PromptSpec& prompt_spec,
          std::vector<std::string> class_names, const DescriptionSet& descriptions,
          const Vocabulary& vocab, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const PromptSpec& prompt_spec() const { return prompt_spec_; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    const ParamRegistry& params() const { return registry_; }
    const ImageEncoder& image_encoder() const { return image_; }
    const TemporalModel& temporal_model() const { return temporal_; }
    const TextEncoder& text_encoder() const { return text_; }
    const ContextBank& context_bank() const { return contexts_; }
    const std::vector<std::vector<PromptSequence>>& prompt_sequences() const { return prompts_; }
    TemporalModel& temporal_model() { return temporal_; }

    Tensor encode_frame(const Tensor& frame) const;
    Tensor encode_video(const std::vector<Tensor>& frame_features) const;
    Tensor encode_clip(const std::vector<Tensor>& frames) const;

    /// One embedding per class; ensemble members are encoded separately,
    /// L2-normalized, and averaged.
    std::vector<Tensor> encode_text_classes() const;

    /// [C x L] matrix of L2-normalized class embeddings.
    Tensor stacked_text_embeddings() const;

    /// Cosine logits against pre-normalized class embeddings, scaled by 1/tau.
    Tensor cosine_logits(const Tensor& video_embedding, const Tensor& normalized_text) const;

    Prediction predict_clip(const std::vector<Tensor>& frames) const;

    double tau() const;

private:
    ModelConfig config_;
    PromptSpec prompt_spec_;
    std::vector<std::string> class_names_;
    ImageEncoder image_;
    TemporalModel temporal_;
    TextEncoder text_;
    ContextBank contexts_;
    Tensor inv_tau_;  // scalar parameter when train_tau, constant otherwise
    std::vector<std::vector<PromptSequence>> prompts_;  // [class][ensemble member]
    ParamRegistry registry_;
};

}  // namespace dfer
