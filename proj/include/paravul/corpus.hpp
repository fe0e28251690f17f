#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace paravul {

/// Ordered list of vulnerability label names. Its size fixes L for a run.
class Taxonomy {
public:
    Taxonomy() = default;
    explicit Taxonomy(std::vector<std::string> names);

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    std::optional<std::size_t> index_of(std::string_view name) const;

    static Taxonomy load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Five placeholder classes used when no taxonomy file is given.
    static Taxonomy synthetic_default();

    bool operator==(const Taxonomy&) const = default;

private:
    std::vector<std::string> names_;
};

/// Fixed-length binary vector over a taxonomy. Every element is 0 or 1.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::size_t length) : bits_(length, 0) {}
    explicit LabelVector(std::vector<std::uint8_t> bits);

    std::size_t size() const noexcept { return bits_.size(); }
    bool test(std::size_t i) const { return bits_.at(i) != 0; }
    void set(std::size_t i, bool value = true) { bits_.at(i) = value ? 1 : 0; }
    std::size_t count() const noexcept;
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    bool operator==(const LabelVector&) const = default;

private:
    std::vector<std::uint8_t> bits_;
};

LabelVector label_vector_from_names(const std::set<std::string>& names, const Taxonomy& taxonomy);

enum class Split { Train, Test };

struct Contract {
    std::string id;
    std::string source;                 // preprocessed
    std::optional<LabelVector> labels;  // absent for unlabeled inference inputs
    Split split = Split::Train;

    bool operator==(const Contract&) const = default;
};

struct Dataset {
    Taxonomy taxonomy;
    std::vector<Contract> contracts;

    std::size_t size() const noexcept { return contracts.size(); }
    bool empty() const noexcept { return contracts.empty(); }

    /// Contracts with the given split, order preserved.
    Dataset subset(Split split) const;
    /// Throws SchemaError on duplicate ids or wrong label lengths.
    void validate() const;
};

/// Strips line and block comments, trims each line, drops blank lines.
/// String literals are copied verbatim. Throws EmptyContract when nothing
/// survives.
std::string preprocess(std::string_view raw_source);

/// Reads a line-delimited JSON dataset and preprocesses every source.
Dataset ingest(const std::filesystem::path& path, const Taxonomy& taxonomy);
Dataset parse_dataset(std::string_view jsonl, const Taxonomy& taxonomy);

/// Writes the same line-delimited format that ingest reads.
void export_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);

}  // namespace paravul
