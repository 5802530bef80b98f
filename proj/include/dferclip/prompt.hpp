#pragma once

#include <random>
#include <vector>

#include "dferclip/tensor.hpp"
#include "dferclip/tokenizer.hpp"

namespace dfer {

enum class DescriptionPosition { kEnd, kMiddle };
enum class PromptKind { kClassName, kDescriptors };

/// Layout of the per-class prompt: M learnable context slots around a frozen
/// tokenized description, wrapped in SOT/EOT within the 77-token budget.
struct PromptSpec {
    int context_len = 8;  // M
    bool class_specific = true;
    DescriptionPosition position = DescriptionPosition::kEnd;
    int ensemble_size = 1;
    PromptKind kind = PromptKind::kDescriptors;
    int descriptors_k = 4;
};

enum class SlotKind { kSot, kContext, kDesc, kEot, kPad };

struct PromptSlot {
    SlotKind kind = SlotKind::kPad;
    int token_id = Vocabulary::kPad;  // kSot/kDesc/kEot/kPad slots
    Index context_row = -1;           // kContext slots: row into the context bank
};

struct PromptSequence {
    std::vector<PromptSlot> slots;  // padded to kMaxTokens
    Index eot_index = -1;
    int class_index = -1;
    int context_slots() const;
};

/// Learnable context vectors [p]_k^m. Class-specific banks hold C*M rows of
/// width d, shared banks M rows. M = 0 owns no parameters.
struct ContextBank {
    Tensor bank;  // undefined when M == 0
    int context_len = 0;
    bool class_specific = true;
    int classes = 0;

    Index row(int class_index, int m) const;
    Index parameter_count() const;

    /// Rows drawn from N(0, 0.02^2).
    static ContextBank init(int classes, int context_len, Index d, bool class_specific,
                            std::mt19937_64& rng);
};

/// Slot layout for class k. END places the description between the contexts
/// and EOT; MIDDLE puts ceil(M/2) contexts before the description and the
/// remaining floor(M/2) after it. Over-budget prompts raise ConfigError
/// naming the excess.
PromptSequence assemble_prompt(const PromptSpec& spec, int class_index,
                               const std::vector<int>& description_ids, const ContextBank& bank);

/// Embedding matrix for the active prefix [0, eot_index] of a prompt. Context
/// slots read the (trainable) bank, all other slots the frozen token table;
/// gradients therefore reach only the context vectors.
Tensor prompt_embedding_rows(const PromptSequence& seq, const Tensor& token_embeddings,
                             const ContextBank& bank);

}  // namespace dfer
