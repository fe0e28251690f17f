#include "paravul/tokenizer.hpp"

#include <algorithm>
#include <cctype>

namespace paravul {

namespace {

bool is_word(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

char lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

struct Span {
    std::size_t begin;
    std::size_t end;
};

std::vector<Span> word_spans(std::string_view text) {
    std::vector<Span> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word(text[i])) {
            ++i;
        }
        std::size_t b = i;
        while (i < text.size() && is_word(text[i])) {
            ++i;
        }
        if (i > b) {
            spans.push_back({b, i});
        }
    }
    return spans;
}

}  // namespace

std::vector<std::string> default_security_keywords() {
    return {"call", "delegatecall", "send", "transfer", "selfdestruct",
            "tx.origin", "block.timestamp", "require", "assert"};
}

SecurityTokenizer::SecurityTokenizer() : SecurityTokenizer(default_security_keywords()) {}

SecurityTokenizer::SecurityTokenizer(std::vector<std::string> keywords) : keywords_(std::move(keywords)) {
    for (const auto& kw : keywords_) {
        std::string low;
        low.reserve(kw.size());
        for (char c : kw) {
            low.push_back(lower(c));
        }
        if (std::any_of(low.begin(), low.end(), [](char c) { return !is_word(c); }) && !low.empty() &&
            is_word(low.front()) && is_word(low.back())) {
            compound_.push_back(std::move(low));
        }
    }
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    for (auto s : word_spans(text)) {
        std::string t;
        t.reserve(s.end - s.begin);
        for (std::size_t i = s.begin; i < s.end; ++i) {
            t.push_back(lower(text[i]));
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> SecurityTokenizer::tokenize(std::string_view source) const {
    const auto spans = word_spans(source);
    std::string low(source.size(), '\0');
    std::transform(source.begin(), source.end(), low.begin(), lower);

    // extra[k] holds compound keywords whose last part is token k.
    std::vector<std::vector<const std::string*>> extra(spans.size());
    if (!compound_.empty()) {
        for (std::size_t k = 0; k < spans.size(); ++k) {
            for (const auto& kw : compound_) {
                const std::size_t end = spans[k].end;
                if (end < kw.size()) {
                    continue;
                }
                const std::size_t begin = end - kw.size();
                if (begin > 0 && is_word(low[begin - 1])) {
                    continue;
                }
                if (std::string_view(low).substr(begin, kw.size()) == kw) {
                    extra[k].push_back(&kw);
                }
            }
        }
    }

    std::vector<std::string> tokens;
    tokens.reserve(spans.size());
    auto push = [&tokens](std::string t) {
        if (tokens.empty() || tokens.back() != t) {
            tokens.push_back(std::move(t));
        }
    };
    for (std::size_t k = 0; k < spans.size(); ++k) {
        push(low.substr(spans[k].begin, spans[k].end - spans[k].begin));
        for (const auto* kw : extra[k]) {
            push(*kw);
        }
    }
    return tokens;
}

}  // namespace paravul
