#include <doctest.h>

#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dferclip/descriptions.hpp"
#include "dferclip/ops.hpp"
#include "dferclip/prompt.hpp"
#include "dferclip/tokenizer.hpp"

using namespace dfer;

TEST_CASE("vocabulary specials and round trip") {
    DescriptionSet set = DescriptionSet::builtin();
    Vocabulary vocab = build_vocabulary(set);

    std::vector<int> specials = {Vocabulary::kSot, Vocabulary::kEot, Vocabulary::kPad,
                                 Vocabulary::kUnk};
    for (size_t i = 0; i < specials.size(); ++i) {
        for (size_t j = i + 1; j < specials.size(); ++j) {
            CHECK(vocab.token(specials[i]) != vocab.token(specials[j]));
        }
    }
    for (int id = 0; id < vocab.size(); ++id) {
        CHECK(vocab.id(vocab.token(id)) == id);
    }
    CHECK(vocab.contains("eyebrows"));
    CHECK(vocab.id("definitely-not-a-token") == Vocabulary::kUnk);
}

TEST_CASE("tokenize examples") {
    Vocabulary vocab = build_vocabulary(DescriptionSet::builtin());

    TokenSequence empty = tokenize("", vocab);
    CHECK(empty.ids.size() == kMaxTokens);
    CHECK(empty.ids[0] == Vocabulary::kSot);
    CHECK(empty.ids[1] == Vocabulary::kEot);
    CHECK(empty.ids[2] == Vocabulary::kPad);
    CHECK(empty.length == 2);
    CHECK(!empty.truncated);

    TokenSequence brows = tokenize("raised eyebrows", vocab);
    CHECK(brows.ids[0] == Vocabulary::kSot);
    CHECK(brows.ids[1] == vocab.id("raised"));
    CHECK(brows.ids[2] == vocab.id("eyebrows"));
    CHECK(brows.ids[3] == Vocabulary::kEot);
    CHECK(brows.ids[4] == Vocabulary::kPad);
    CHECK(!brows.truncated);

    std::string long_text;
    for (int i = 0; i < 100; ++i) long_text += "word ";
    TokenSequence trunc = tokenize(long_text, vocab);
    CHECK(trunc.ids.size() == kMaxTokens);
    CHECK(trunc.truncated);
    CHECK(trunc.length == kMaxTokens);
    CHECK(trunc.ids[0] == Vocabulary::kSot);
    CHECK(trunc.ids[kMaxTokens - 1] == Vocabulary::kEot);
}

TEST_CASE("tokenize is idempotent through detokenize") {
    Vocabulary vocab = build_vocabulary(DescriptionSet::builtin());
    ClassDescription cd = DescriptionSet::builtin().description("surprise", 4);
    std::string text = build_description(cd, 4);
    TokenSequence first = tokenize(text, vocab);
    TokenSequence second = tokenize(detokenize(first, vocab), vocab);
    CHECK(first.ids == second.ids);
}

TEST_CASE("build_description join rule") {
    DescriptionSet set = DescriptionSet::builtin();

    ClassDescription happiness = set.description("happiness", 4);
    CHECK(build_description(happiness, 4) ==
          "a smiling mouth, raised cheeks, wrinkled eyes, and arched eyebrows.");

    CHECK(build_description(happiness, 1) == "a smiling mouth");
    CHECK(build_description(set.description("neutral", 1), 1) == "relaxed facial muscles");

    ClassDescription anger = set.description("anger", 2);
    CHECK(build_description(anger, 2) == "furrowed eyebrows, and narrow eyes.");

    CHECK_THROWS_AS(build_description(happiness, 0), ConfigError);
    CHECK_THROWS_AS(build_description(happiness, 99), ConfigError);
    CHECK_THROWS_AS(set.description("happiness", 7), ConfigError);
}

TEST_CASE("ensemble descriptions rotate the descriptor order") {
    DescriptionSet set = DescriptionSet::builtin();
    ClassDescription cd = set.description("anger", 2);
    CHECK(ensemble_description(cd, 2, 0) == build_description(cd, 2));
    CHECK(ensemble_description(cd, 2, 1) == "narrow eyes, and tightened lips.");
    CHECK(ensemble_description(cd, 2, 1) == ensemble_description(cd, 2, 1));
}

TEST_CASE("assemble_prompt layouts") {
    std::mt19937_64 rng(17);
    const Index d = 8;
    const int classes = 3;

    SUBCASE("END layout slot pattern") {
        PromptSpec spec;
        spec.context_len = 8;
        ContextBank bank = ContextBank::init(classes, 8, d, true, rng);
        std::vector<int> desc(12, 42);
        PromptSequence seq = assemble_prompt(spec, 1, desc, bank);
        CHECK(seq.eot_index == 21);  // 1 + 8 + 12
        CHECK(seq.slots.size() == kMaxTokens);
        CHECK(seq.slots[0].kind == SlotKind::kSot);
        for (int i = 1; i <= 8; ++i) CHECK(seq.slots[static_cast<size_t>(i)].kind == SlotKind::kContext);
        for (int i = 9; i <= 20; ++i) CHECK(seq.slots[static_cast<size_t>(i)].kind == SlotKind::kDesc);
        CHECK(seq.slots[21].kind == SlotKind::kEot);
        CHECK(seq.slots[22].kind == SlotKind::kPad);
        CHECK(seq.context_slots() == 8);
    }

    SUBCASE("M = 0 degenerates to the plain description") {
        PromptSpec spec;
        spec.context_len = 0;
        ContextBank bank = ContextBank::init(classes, 0, d, true, rng);
        CHECK(bank.parameter_count() == 0);
        PromptSequence seq = assemble_prompt(spec, 0, {5, 6}, bank);
        CHECK(seq.slots[0].kind == SlotKind::kSot);
        CHECK(seq.slots[1].kind == SlotKind::kDesc);
        CHECK(seq.slots[2].kind == SlotKind::kDesc);
        CHECK(seq.slots[3].kind == SlotKind::kEot);
        CHECK(seq.context_slots() == 0);
    }

    SUBCASE("MIDDLE layout splits contexts around the description") {
        PromptSpec spec;
        spec.context_len = 8;
        spec.position = DescriptionPosition::kMiddle;
        ContextBank bank = ContextBank::init(classes, 8, d, true, rng);
        std::vector<int> desc(5, 42);
        PromptSequence seq = assemble_prompt(spec, 0, desc, bank);
        int before = 0, after = 0;
        bool seen_desc = false;
        for (const auto& slot : seq.slots) {
            if (slot.kind == SlotKind::kDesc) seen_desc = true;
            if (slot.kind == SlotKind::kContext) (seen_desc ? after : before)++;
        }
        CHECK(before == 4);
        CHECK(after == 4);
    }

    SUBCASE("odd M puts the extra context before the description") {
        PromptSpec spec;
        spec.context_len = 5;
        spec.position = DescriptionPosition::kMiddle;
        ContextBank bank = ContextBank::init(classes, 5, d, true, rng);
        PromptSequence seq = assemble_prompt(spec, 0, {7}, bank);
        int before = 0, after = 0;
        bool seen_desc = false;
        for (const auto& slot : seq.slots) {
            if (slot.kind == SlotKind::kDesc) seen_desc = true;
            if (slot.kind == SlotKind::kContext) (seen_desc ? after : before)++;
        }
        CHECK(before == 3);
        CHECK(after == 2);
    }

    SUBCASE("budget overflow names the excess") {
        PromptSpec spec;
        spec.context_len = 10;
        ContextBank bank = ContextBank::init(classes, 10, d, true, rng);
        std::vector<int> desc(70, 1);  // 2 + 10 + 70 = 82 > 77
        try {
            assemble_prompt(spec, 0, desc, bank);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("by 5") != std::string::npos);
        }
    }
}

TEST_CASE("prompt variants keep the token cap and context counts") {
    std::mt19937_64 rng(23);
    DescriptionSet set = DescriptionSet::builtin();
    Vocabulary vocab = build_vocabulary(set);
    const Index d = 16;
    const auto names = set.class_names();
    const int classes = static_cast<int>(names.size());

    for (bool class_specific : {true, false}) {
        for (auto pos : {DescriptionPosition::kEnd, DescriptionPosition::kMiddle}) {
            for (int m : {0, 4, 8, 16}) {
                PromptSpec spec;
                spec.context_len = m;
                spec.class_specific = class_specific;
                spec.position = pos;
                ContextBank bank = ContextBank::init(classes, m, d, class_specific, rng);
                const Index expected =
                    class_specific ? static_cast<Index>(classes) * m * d : static_cast<Index>(m) * d;
                CHECK(bank.parameter_count() == expected);
                for (int k = 0; k < classes; ++k) {
                    std::vector<int> ids =
                        encode_words(build_description(set.description(names[k], 4), 4), vocab);
                    PromptSequence seq = assemble_prompt(spec, k, ids, bank);
                    CHECK(seq.context_slots() == m);
                    CHECK(seq.eot_index < kMaxTokens);
                    CHECK(seq.slots.size() == kMaxTokens);
                }
            }
        }
    }
}

TEST_CASE("description position permutes slots but preserves their contents") {
    std::mt19937_64 rng(29);
    ContextBank bank = ContextBank::init(2, 6, 4, true, rng);
    PromptSpec end_spec;
    end_spec.context_len = 6;
    PromptSpec mid_spec = end_spec;
    mid_spec.position = DescriptionPosition::kMiddle;
    std::vector<int> desc = {10, 11, 12};

    auto multiset = [](const PromptSequence& seq) {
        std::map<std::pair<int, Index>, int> counts;
        for (const auto& s : seq.slots) {
            counts[{static_cast<int>(s.kind) * 100000 + s.token_id, s.context_row}]++;
        }
        return counts;
    };
    PromptSequence a = assemble_prompt(end_spec, 1, desc, bank);
    PromptSequence b = assemble_prompt(mid_spec, 1, desc, bank);
    CHECK(multiset(a) == multiset(b));
    bool differs = false;
    for (size_t i = 0; i < a.slots.size(); ++i) {
        if (a.slots[i].kind != b.slots[i].kind) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("prompt embeddings route gradients to the context bank only") {
    Tape::active().reset();
    std::mt19937_64 rng(31);
    ContextBank bank = ContextBank::init(2, 2, 4, true, rng);
    Tensor token_emb({8, 4}, false);  // frozen table
    for (Index i = 0; i < token_emb.size(); ++i) token_emb.at(i) = 0.01 * static_cast<double>(i);

    PromptSpec spec;
    spec.context_len = 2;
    PromptSequence seq = assemble_prompt(spec, 1, {5, 6}, bank);
    Tensor rows = prompt_embedding_rows(seq, token_emb, bank);
    CHECK(rows.rows() == seq.eot_index + 1);
    Tape::active().backward(sum(rows));
    CHECK(bank.bank.has_grad());
    CHECK(!token_emb.has_grad());
    // only class 1's rows received gradient
    for (Index r = 0; r < bank.bank.rows(); ++r) {
        double g = 0;
        for (Index c = 0; c < bank.bank.cols(); ++c) {
            g += std::abs(bank.bank.grad()[static_cast<size_t>(r * bank.bank.cols() + c)]);
        }
        if (r >= 2) {
            CHECK(g > 0.0);
        } else {
            CHECK(g == 0.0);
        }
    }
    Tape::active().reset();
}

TEST_CASE("shipped data files match the builtin tables") {
    const std::string dir = DFERCLIP_DATA_DIR;
    DescriptionSet shipped = DescriptionSet::load_json(dir + "/descriptions.json");
    DescriptionSet builtin = DescriptionSet::builtin();
    REQUIRE(shipped.class_names() == builtin.class_names());
    CHECK(shipped.class_names().size() == 11);
    for (const auto& name : builtin.class_names()) {
        CHECK(shipped.descriptors(name) == builtin.descriptors(name));
    }

    Vocabulary shipped_vocab = Vocabulary::load(dir + "/vocab.txt");
    Vocabulary built = build_vocabulary(builtin);
    CHECK(shipped_vocab.tokens() == built.tokens());
}

TEST_CASE("vocabulary file round trip") {
    Vocabulary vocab = build_vocabulary(DescriptionSet::builtin());
    std::string path = "vocab_roundtrip_test.txt";
    vocab.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.tokens() == vocab.tokens());
    std::remove(path.c_str());
}
