#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dferclip/errors.hpp"

namespace dfer {

/// Fixed sequence budget, SOT and EOT included.
inline constexpr int kMaxTokens = 77;

/// Whitespace/punctuation word tokenizer with SOT/EOT/PAD/UNK specials.
/// Stands in for a subword vocabulary; ids are stable for a given token list.
class Vocabulary {
public:
    static constexpr int kSot = 0;
    static constexpr int kEot = 1;
    static constexpr int kPad = 2;
    static constexpr int kUnk = 3;

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> word_tokens);  // specials prepended

    int size() const { return static_cast<int>(tokens_.size()); }
    int id(const std::string& token) const;  // kUnk for out-of-vocabulary
    bool contains(const std::string& token) const { return index_.count(token) > 0; }
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Unique words of all texts, sorted, behind the four specials.
    static Vocabulary build(const std::vector<std::string>& texts);

    void save(const std::string& path) const;  // one token per line
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
    std::vector<int> ids;   // padded to kMaxTokens
    int length = 0;         // through EOT, inclusive
    bool truncated = false;
};

/// Lowercase, split on anything that is not a letter or digit.
std::vector<std::string> split_words(const std::string& text);

/// SOT + word ids + EOT, padded to kMaxTokens. Over-budget words are dropped
/// from the tail (never SOT/EOT) and the truncation flag is set.
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab);

/// Words of a sequence between SOT and EOT, space-joined; specials skipped.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

/// Word ids only, no specials, no padding (prompt assembly input).
std::vector<int> encode_words(const std::string& text, const Vocabulary& vocab);

}  // namespace dfer
