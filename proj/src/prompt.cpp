#include "dferclip/prompt.hpp"

#include "dferclip/ops.hpp"

namespace dfer {

int PromptSequence::context_slots() const {
    int n = 0;
    for (const auto& s : slots) {
        if (s.kind == SlotKind::kContext) ++n;
    }
    return n;
}

Index ContextBank::row(int class_index, int m) const {
    if (m < 0 || m >= context_len) throw UsageError("context bank: slot index out of range");
    if (class_specific) {
        if (class_index < 0 || class_index >= classes) {
            throw UsageError("context bank: class index out of range");
        }
        return static_cast<Index>(class_index) * context_len + m;
    }
    return m;
}

Index ContextBank::parameter_count() const {
    return bank.defined() ? bank.size() : 0;
}

ContextBank ContextBank::init(int classes, int context_len, Index d, bool class_specific,
                              std::mt19937_64& rng) {
    if (context_len < 0) throw ConfigError("context bank: negative context length");
    ContextBank cb;
    cb.context_len = context_len;
    cb.class_specific = class_specific;
    cb.classes = classes;
    if (context_len > 0) {
        const Index rows = class_specific ? static_cast<Index>(classes) * context_len : context_len;
        cb.bank = Tensor({rows, d}, true);
        std::normal_distribution<double> dist(0.0, 0.02);
        for (Index i = 0; i < cb.bank.size(); ++i) cb.bank.at(i) = dist(rng);
    }
    return cb;
}

PromptSequence assemble_prompt(const PromptSpec& spec, int class_index,
                               const std::vector<int>& description_ids, const ContextBank& bank) {
    const int m = spec.context_len;
    if (m < 0) throw ConfigError("assemble_prompt: negative context length");
    const int needed = 2 + m + static_cast<int>(description_ids.size());
    if (needed > kMaxTokens) {
        throw ConfigError("assemble_prompt: prompt needs " + std::to_string(needed) +
                          " tokens, exceeding the " + std::to_string(kMaxTokens) +
                          "-token budget by " + std::to_string(needed - kMaxTokens));
    }
    PromptSequence seq;
    seq.class_index = class_index;
    seq.slots.reserve(kMaxTokens);
    seq.slots.push_back({SlotKind::kSot, Vocabulary::kSot, -1});

    auto push_contexts = [&](int from, int count) {
        for (int i = 0; i < count; ++i) {
            seq.slots.push_back({SlotKind::kContext, -1, bank.row(class_index, from + i)});
        }
    };
    auto push_description = [&] {
        for (int id : description_ids) seq.slots.push_back({SlotKind::kDesc, id, -1});
    };

    if (spec.position == DescriptionPosition::kEnd) {
        push_contexts(0, m);
        push_description();
    } else {
        const int before = (m + 1) / 2;
        push_contexts(0, before);
        push_description();
        push_contexts(before, m - before);
    }
    seq.eot_index = static_cast<Index>(seq.slots.size());
    seq.slots.push_back({SlotKind::kEot, Vocabulary::kEot, -1});
    seq.slots.resize(kMaxTokens, {SlotKind::kPad, Vocabulary::kPad, -1});
    return seq;
}

Tensor prompt_embedding_rows(const PromptSequence& seq, const Tensor& token_embeddings,
                             const ContextBank& bank) {
    if (seq.eot_index < 0) throw UsageError("prompt sequence is missing its EOT slot");
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(seq.eot_index) + 1);
    for (Index i = 0; i <= seq.eot_index; ++i) {
        const auto& slot = seq.slots[static_cast<size_t>(i)];
        if (slot.kind == SlotKind::kContext) {
            rows.push_back(take_row(bank.bank, slot.context_row));
        } else {
            rows.push_back(take_row(token_embeddings, slot.token_id));
        }
    }
    return stack_rows(rows);
}

}  // namespace dfer
