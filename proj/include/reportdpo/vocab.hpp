#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace reportdpo::lm {

using TokenId = std::int32_t;

/// Word-level vocabulary. Words are lowercased; punctuation stays attached
/// ("clear." and "clear" are different tokens).
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBegin = 1;
    static constexpr TokenId kEnd = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kUnk = 4;
    static constexpr TokenId kResponse = 5;
    static constexpr TokenId kFirstWord = 6;

    Vocabulary();

    /// Words from the given texts, sorted so the table is order independent.
    static Vocabulary build(const std::vector<std::string>& texts);
    static Vocabulary from_words(const std::vector<std::string>& words);

    TokenId id(const std::string& word) const;
    const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return words_.size(); }
    bool is_special(TokenId id) const { return id < kFirstWord; }

    /// All entries, specials included, in id order.
    const std::vector<std::string>& words() const { return words_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Half-open token range of one sentence, separator included.
struct LineSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const LineSpan&, const LineSpan&) = default;
};

struct Tokenized {
    std::vector<TokenId> ids;
    std::vector<LineSpan> spans;
};

/// Sentences (split on ". ") become words followed by a separator token.
Tokenized tokenize(const Vocabulary& vocab, const std::string& text);

/// Same layout from an explicit line list. Trailing periods are stripped from
/// every line and put back on the last one, matching tokenize(join_lines(lines)).
Tokenized encode_lines(const Vocabulary& vocab, const std::vector<std::string>& lines);

/// Prompt words without separators.
std::vector<TokenId> encode_prompt(const Vocabulary& vocab, const std::string& prompt);

/// Inverse of tokenize up to whitespace and sentence-initial capitals. Stops at
/// the end token; other specials are skipped.
std::string detokenize(const Vocabulary& vocab, const std::vector<TokenId>& ids);

}  // namespace reportdpo::lm
