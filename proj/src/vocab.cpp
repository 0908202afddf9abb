#include "reportdpo/vocab.hpp"

#include <algorithm>
#include <set>

#include "reportdpo/error.hpp"
#include "reportdpo/priordetect.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::lm {

namespace {

const std::vector<std::string>& special_words() {
    static const std::vector<std::string> s{"<pad>", "<bos>", "<end>", "<sep>", "<unk>", "<resp>"};
    return s;
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const auto& w : special_words()) {
        index_.emplace(w, static_cast<TokenId>(words_.size()));
        words_.push_back(w);
    }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> seen;
    for (const auto& t : texts) {
        for (auto& w : text::split_ws(text::to_lower(t))) {
            seen.insert(std::move(w));
        }
    }
    return from_words({seen.begin(), seen.end()});
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) {
        if (v.index_.count(w) != 0) {
            continue;
        }
        v.index_.emplace(w, static_cast<TokenId>(v.words_.size()));
        v.words_.push_back(w);
    }
    return v;
}

TokenId Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

namespace {

void append_line(const Vocabulary& vocab, const std::vector<std::string>& words, Tokenized& out) {
    LineSpan span;
    span.begin = out.ids.size();
    for (const auto& w : words) {
        out.ids.push_back(vocab.id(w));
    }
    out.ids.push_back(Vocabulary::kSep);
    span.end = out.ids.size();
    out.spans.push_back(span);
}

}  // namespace

Tokenized tokenize(const Vocabulary& vocab, const std::string& text) {
    Tokenized out;
    for (const auto& sentence : detect::split_sentences(text)) {
        append_line(vocab, text::split_ws(text::to_lower(sentence)), out);
    }
    return out;
}

Tokenized encode_lines(const Vocabulary& vocab, const std::vector<std::string>& lines) {
    Tokenized out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto words = text::split_ws(text::to_lower(text::strip_final_period(lines[i])));
        if (words.empty()) {
            throw DataError("encode_lines: empty line " + std::to_string(i));
        }
        if (i + 1 == lines.size()) {
            words.back() += '.';
        }
        append_line(vocab, words, out);
    }
    return out;
}

std::vector<TokenId> encode_prompt(const Vocabulary& vocab, const std::string& prompt) {
    std::vector<TokenId> ids;
    for (const auto& w : text::split_ws(text::to_lower(prompt))) {
        ids.push_back(vocab.id(w));
    }
    return ids;
}

std::string detokenize(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
    std::vector<std::string> lines;
    std::vector<std::string> current;
    auto flush = [&] {
        if (!current.empty()) {
            lines.push_back(text::capitalize_first(text::join(current, " ")));
            current.clear();
        }
    };
    for (TokenId id : ids) {
        if (id == Vocabulary::kEnd) {
            break;
        }
        if (id == Vocabulary::kSep) {
            flush();
            continue;
        }
        if (id == Vocabulary::kUnk) {
            current.push_back("<unk>");
            continue;
        }
        if (vocab.is_special(id)) {
            continue;
        }
        current.push_back(vocab.word(id));
    }
    flush();
    return text::join(lines, ". ");
}

}  // namespace reportdpo::lm
