#include "dferclip/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

namespace dfer {

namespace {
const std::vector<std::string> kSpecials = {"<sot>", "<eot>", "<pad>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> word_tokens) {
    tokens_ = kSpecials;
    for (auto& t : word_tokens) tokens_.push_back(std::move(t));
    for (size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
        if (!inserted) throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) {
        throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<size_t>(id)];
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) words.insert(std::move(w));
    }
    return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("vocabulary: cannot write " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocabulary: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.size() < kSpecials.size() ||
        !std::equal(kSpecials.begin(), kSpecials.end(), lines.begin())) {
        throw DataError("vocabulary: " + path + " does not start with the special tokens");
    }
    return Vocabulary(std::vector<std::string>(lines.begin() + kSpecials.size(), lines.end()));
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<std::string> words = split_words(text);
    TokenSequence seq;
    seq.ids.reserve(kMaxTokens);
    seq.ids.push_back(Vocabulary::kSot);
    const size_t budget = kMaxTokens - 2;  // SOT/EOT are never dropped
    if (words.size() > budget) {
        words.resize(budget);
        seq.truncated = true;
    }
    for (const auto& w : words) seq.ids.push_back(vocab.id(w));
    seq.ids.push_back(Vocabulary::kEot);
    seq.length = static_cast<int>(seq.ids.size());
    seq.ids.resize(kMaxTokens, Vocabulary::kPad);
    return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (int i = 1; i < seq.length - 1; ++i) {
        int id = seq.ids[static_cast<size_t>(i)];
        if (id == Vocabulary::kSot || id == Vocabulary::kEot || id == Vocabulary::kPad) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

std::vector<int> encode_words(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
    return ids;
}

}  // namespace dfer
