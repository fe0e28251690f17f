#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paravul/corpus.hpp"

namespace paravul {

/// The five analysis elements every finding carries, in report order.
inline constexpr std::array<std::string_view, 5> kReportElements = {
    "Location and manifestation", "Root causes", "Security risks", "Potential impact", "Mitigation strategies"};

/// JSON keys of the five elements in a knowledge file.
inline constexpr std::array<std::string_view, 5> kKnowledgeKeys = {
    "location_and_manifestation", "root_causes", "security_risks", "potential_impact", "mitigation_strategies"};

struct KnowledgeEntry {
    std::array<std::string, 5> sections;
    // Summary-table cells; empty ones fall back to section text.
    std::string affected_location;
    std::string consequence;
    std::string solution;
};

/// Label name -> section texts, loaded from a JSON object.
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    explicit KnowledgeBase(std::map<std::string, KnowledgeEntry> entries) : entries_(std::move(entries)) {}

    static KnowledgeBase load(const std::filesystem::path& path);
    static KnowledgeBase parse(std::string_view json_text);

    const KnowledgeEntry* find(const std::string& label) const;
    std::size_t size() const noexcept { return entries_.size(); }

    std::string general_recommendations = default_recommendations();
    static std::string default_recommendations();

private:
    std::map<std::string, KnowledgeEntry> entries_;
};

struct Finding {
    std::string label;
    double probability = 0.0;
    std::array<std::string, 5> sections;
    bool generic = false;  // no knowledge entry was available
};

struct SummaryRow {
    std::string vulnerability_type;
    std::string affected_location;
    std::string consequence;
    std::string solution;
};

struct Report {
    std::string contract_id;
    std::vector<Finding> findings;
    std::vector<SummaryRow> summary;
    std::string recommendations;
    std::vector<std::string> notices;

    std::string to_markdown() const;
};

/// Deterministic template report. Labels without a knowledge entry get
/// generic text and a notice.
Report render_report(const Contract& contract, const LabelVector& labels, std::span<const double> probabilities,
                     const Taxonomy& taxonomy, const KnowledgeBase& knowledge);

/// Chain-of-thought prompt with {source}, {labels} and {elements} placeholders.
class PromptTemplate {
public:
    explicit PromptTemplate(std::string text) : text_(std::move(text)) {}
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate default_template();

    std::string render(std::string_view source, std::span<const std::string> labels) const;
    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

struct LlmEndpoint {
    std::string url;
    std::chrono::milliseconds timeout = std::chrono::seconds(30);
    std::string auth_header;
};

/// Splits a Markdown reply into per-label sections. Returns false unless
/// every label has all five level-3 element headers, in order, each with
/// non-empty text.
bool parse_llm_sections(std::string_view markdown, std::span<const std::string> labels,
                        std::vector<std::array<std::string, 5>>& out);

/// Asks an LLM endpoint (POST {"prompt"} -> {"text"}) for the five sections
/// of each detected label. Any transport or validation failure falls back
/// to render_report with a notice.
Report llm_report(const Contract& contract, const LabelVector& labels, std::span<const double> probabilities,
                  const Taxonomy& taxonomy, const KnowledgeBase& knowledge, const LlmEndpoint& endpoint,
                  const PromptTemplate& prompt = PromptTemplate::default_template());

}  // namespace paravul
