#include "paravul/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"

namespace paravul {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Taxonomy::Taxonomy(std::vector<std::string> names) : names_(std::move(names)) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty() || !seen.insert(n).second) {
            throw Error(ErrorKind::SchemaError, "taxonomy names must be unique and non-empty: '" + n + "'");
        }
    }
}

std::optional<std::size_t> Taxonomy::index_of(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - names_.begin());
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    if (!j.is_array()) {
        throw Error(ErrorKind::SchemaError, path.string() + ": taxonomy must be a JSON array of strings");
    }
    std::vector<std::string> names;
    for (const auto& item : j) {
        if (!item.is_string()) {
            throw Error(ErrorKind::SchemaError, path.string() + ": taxonomy entries must be strings");
        }
        names.push_back(item.get<std::string>());
    }
    return Taxonomy(std::move(names));
}

void Taxonomy::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << json(names_).dump() << '\n';
}

Taxonomy Taxonomy::synthetic_default() {
    return Taxonomy({"reentrancy", "integer_overflow", "unchecked_call", "timestamp_dependency", "tx_origin_auth"});
}

LabelVector::LabelVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
        if (b > 1) {
            throw Error(ErrorKind::SchemaError, "label bits must be 0 or 1");
        }
    }
}

std::size_t LabelVector::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

LabelVector label_vector_from_names(const std::set<std::string>& names, const Taxonomy& taxonomy) {
    LabelVector v(taxonomy.size());
    for (const auto& name : names) {
        auto idx = taxonomy.index_of(name);
        if (!idx) {
            throw Error(ErrorKind::UnknownLabel, "label '" + name + "' is not in the taxonomy");
        }
        v.set(*idx);
    }
    return v;
}

Dataset Dataset::subset(Split split) const {
    Dataset out;
    out.taxonomy = taxonomy;
    for (const auto& c : contracts) {
        if (c.split == split) {
            out.contracts.push_back(c);
        }
    }
    return out;
}

void Dataset::validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& c : contracts) {
        if (!ids.insert(c.id).second) {
            throw Error(ErrorKind::SchemaError, "duplicate contract id '" + c.id + "'");
        }
        if (c.labels && c.labels->size() != taxonomy.size()) {
            throw Error(ErrorKind::SchemaError, "contract '" + c.id + "' has " + std::to_string(c.labels->size()) +
                                                    " labels, taxonomy has " + std::to_string(taxonomy.size()));
        }
    }
}

std::string preprocess(std::string_view raw) {
    enum class State { Code, String, LineComment, BlockComment };

    // Pass 1: remove comments. A block comment becomes its newlines, or one
    // space when it has none, so adjacent tokens never fuse.
    std::string stripped;
    stripped.reserve(raw.size());
    State state = State::Code;
    char quote = 0;
    bool block_had_newline = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        const char next = i + 1 < raw.size() ? raw[i + 1] : '\0';
        switch (state) {
            case State::Code:
                if (c == '"' || c == '\'') {
                    state = State::String;
                    quote = c;
                    stripped.push_back(c);
                } else if (c == '/' && next == '/') {
                    state = State::LineComment;
                    ++i;
                } else if (c == '/' && next == '*') {
                    state = State::BlockComment;
                    block_had_newline = false;
                    ++i;
                } else {
                    stripped.push_back(c);
                }
                break;
            case State::String:
                stripped.push_back(c);
                if (c == '\\' && i + 1 < raw.size()) {
                    stripped.push_back(next);
                    ++i;
                } else if (c == quote || c == '\n') {
                    state = State::Code;
                }
                break;
            case State::LineComment:
                if (c == '\n') {
                    stripped.push_back('\n');
                    state = State::Code;
                }
                break;
            case State::BlockComment:
                if (c == '*' && next == '/') {
                    if (!block_had_newline) {
                        stripped.push_back(' ');
                    }
                    state = State::Code;
                    ++i;
                } else if (c == '\n') {
                    stripped.push_back('\n');
                    block_had_newline = true;
                }
                break;
        }
    }

    // Pass 2: trim lines, drop blank ones.
    std::string out;
    out.reserve(stripped.size());
    std::size_t pos = 0;
    while (pos <= stripped.size()) {
        std::size_t eol = stripped.find('\n', pos);
        if (eol == std::string::npos) {
            eol = stripped.size();
        }
        std::size_t b = pos;
        std::size_t e = eol;
        while (b < e && is_space(stripped[b])) {
            ++b;
        }
        while (e > b && is_space(stripped[e - 1])) {
            --e;
        }
        if (e > b) {
            if (!out.empty()) {
                out.push_back('\n');
            }
            out.append(stripped, b, e - b);
        }
        pos = eol + 1;
    }
    if (out.empty()) {
        throw Error(ErrorKind::EmptyContract, "contract source is empty after preprocessing");
    }
    return out;
}

Dataset parse_dataset(std::string_view jsonl, const Taxonomy& taxonomy) {
    Dataset ds;
    ds.taxonomy = taxonomy;
    std::size_t record = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        std::size_t eol = jsonl.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = jsonl.size();
        }
        std::string_view line = jsonl.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        const std::string where = "record " + std::to_string(record);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("source") ||
            !j["source"].is_string()) {
            throw Error(ErrorKind::SchemaError, where + ": expected object with string fields 'id' and 'source'");
        }
        Contract c;
        c.id = j["id"].get<std::string>();
        try {
            c.source = preprocess(j["source"].get<std::string>());
        } catch (const Error& e) {
            throw Error(e.kind(), where + " ('" + c.id + "'): " + e.what());
        }
        if (j.contains("labels") && !j["labels"].is_null()) {
            const auto& arr = j["labels"];
            if (!arr.is_array()) {
                throw Error(ErrorKind::SchemaError, where + ": 'labels' must be an array");
            }
            if (arr.size() != taxonomy.size()) {
                throw Error(ErrorKind::SchemaError, where + ": " + std::to_string(arr.size()) +
                                                        " labels under a taxonomy of " +
                                                        std::to_string(taxonomy.size()));
            }
            std::vector<std::uint8_t> bits;
            for (const auto& b : arr) {
                if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
                    throw Error(ErrorKind::SchemaError, where + ": labels must be 0/1 integers");
                }
                bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
            }
            c.labels = LabelVector(std::move(bits));
        }
        if (j.contains("split")) {
            const auto s = j["split"].is_string() ? j["split"].get<std::string>() : std::string{};
            if (s == "train") {
                c.split = Split::Train;
            } else if (s == "test") {
                c.split = Split::Test;
            } else {
                throw Error(ErrorKind::SchemaError, where + ": split must be \"train\" or \"test\"");
            }
        }
        ds.contracts.push_back(std::move(c));
        ++record;
    }
    ds.validate();
    return ds;
}

Dataset ingest(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    return parse_dataset(read_file(path), taxonomy);
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    for (const auto& c : dataset.contracts) {
        json j;
        j["id"] = c.id;
        j["source"] = c.source;
        if (c.labels) {
            j["labels"] = c.labels->bits();
        }
        j["split"] = c.split == Split::Train ? "train" : "test";
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << serialize_dataset(dataset);
}

}  // namespace paravul
