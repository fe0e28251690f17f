#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace paravul {

std::vector<std::string> default_security_keywords();

/// Lexical tokenizer for the BM25 pathway.
///
/// Splits on non-alphanumeric characters and lowercases. Keywords made of a
/// single word are already tokens; compound keywords such as "tx.origin"
/// are emitted as one extra token right after their parts. Exact
/// consecutive duplicates are collapsed at the end.
class SecurityTokenizer {
public:
    SecurityTokenizer();
    explicit SecurityTokenizer(std::vector<std::string> keywords);

    std::vector<std::string> tokenize(std::string_view source) const;
    const std::vector<std::string>& keywords() const noexcept { return keywords_; }

private:
    std::vector<std::string> keywords_;
    std::vector<std::string> compound_;  // lowercased keywords that contain a separator
};

/// Lowercased alphanumeric words only, no keyword tagging or de-duplication.
std::vector<std::string> split_words(std::string_view text);

}  // namespace paravul
