#include "paravul/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"
#include "paravul/http.hpp"

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

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string first_sentence(const std::string& text) {
    const auto dot = text.find(". ");
    return dot == std::string::npos ? text : text.substr(0, dot + 1);
}

std::string table_cell(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '|') {
            out += "\\|";
        } else if (c == '\n' || c == '\r') {
            out.push_back(' ');
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::array<std::string, 5> generic_sections(const std::string& label) {
    return {
        "The detectors flagged code consistent with " + label + ". Review the functions that handle external "
            "calls, arithmetic, and access control for this pattern.",
        "The flagged pattern usually stems from missing validation or an unsafe ordering of state changes "
            "around " + label + ".",
        "An attacker may be able to trigger the flagged behaviour to bypass the contract's intended rules.",
        "Exploitation could lead to loss or locking of funds, or corruption of contract state.",
        "Audit the flagged code manually, add explicit checks for " + label +
            ", and cover the scenario with tests before deployment.",
    };
}

SummaryRow summary_row(const Finding& f, const KnowledgeEntry* entry) {
    SummaryRow row;
    row.vulnerability_type = f.label;
    row.affected_location = entry && !entry->affected_location.empty() ? entry->affected_location
                                                                        : first_sentence(f.sections[0]);
    row.consequence = entry && !entry->consequence.empty() ? entry->consequence : first_sentence(f.sections[3]);
    row.solution = entry && !entry->solution.empty() ? entry->solution : first_sentence(f.sections[4]);
    return row;
}

std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", p);
    return buf;
}

}  // namespace

KnowledgeBase KnowledgeBase::parse(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("knowledge file: ") + e.what());
    }
    if (!j.is_object()) {
        throw Error(ErrorKind::SchemaError, "knowledge file must be a JSON object keyed by label name");
    }
    std::map<std::string, KnowledgeEntry> entries;
    std::string recommendations = default_recommendations();
    for (const auto& [label, value] : j.items()) {
        if (label == "_general_recommendations") {
            recommendations = value.get<std::string>();
            continue;
        }
        if (!value.is_object()) {
            throw Error(ErrorKind::SchemaError, "knowledge entry '" + label + "' must be an object");
        }
        KnowledgeEntry e;
        for (std::size_t i = 0; i < kKnowledgeKeys.size(); ++i) {
            const std::string key(kKnowledgeKeys[i]);
            if (!value.contains(key) || !value[key].is_string() || value[key].get<std::string>().empty()) {
                throw Error(ErrorKind::SchemaError, "knowledge entry '" + label + "' needs a non-empty '" + key + "'");
            }
            e.sections[i] = value[key].get<std::string>();
        }
        e.affected_location = value.value("affected_location", "");
        e.consequence = value.value("consequence", "");
        e.solution = value.value("solution", "");
        entries.emplace(label, std::move(e));
    }
    KnowledgeBase kb(std::move(entries));
    kb.general_recommendations = std::move(recommendations);
    return kb;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path) {
    return parse(read_file(path));
}

const KnowledgeEntry* KnowledgeBase::find(const std::string& label) const {
    auto it = entries_.find(label);
    return it == entries_.end() ? nullptr : &it->second;
}

std::string KnowledgeBase::default_recommendations() {
    return "Follow the checks-effects-interactions pattern, use checked arithmetic, validate the return value "
           "of every external call, avoid tx.origin and block.timestamp in security decisions, and commission an "
           "independent audit before deployment.";
}

std::string Report::to_markdown() const {
    std::ostringstream md;
    md << "# Vulnerability Detection Report: " << contract_id << "\n\n";
    for (const auto& n : notices) {
        md << "> Note: " << n << "\n\n";
    }
    if (findings.empty()) {
        md << "No vulnerabilities detected.\n\n";
    } else {
        md << "## Detailed Analysis\n\n";
        for (std::size_t i = 0; i < findings.size(); ++i) {
            const auto& f = findings[i];
            md << "## " << i + 1 << ". " << f.label << " (probability " << format_probability(f.probability)
               << ")\n\n";
            for (std::size_t s = 0; s < kReportElements.size(); ++s) {
                md << "### " << kReportElements[s] << "\n\n" << f.sections[s] << "\n\n";
            }
        }
        md << "## Summary\n\n";
        md << "| Vulnerability type | Affected location | Consequence | Solution |\n";
        md << "|---|---|---|---|\n";
        for (const auto& r : summary) {
            md << "| " << table_cell(r.vulnerability_type) << " | " << table_cell(r.affected_location) << " | "
               << table_cell(r.consequence) << " | " << table_cell(r.solution) << " |\n";
        }
        md << "\n";
    }
    md << "## General Recommendations\n\n" << recommendations << "\n";
    return md.str();
}

Report render_report(const Contract& contract, const LabelVector& labels, std::span<const double> probabilities,
                     const Taxonomy& taxonomy, const KnowledgeBase& knowledge) {
    if (labels.size() != taxonomy.size() || probabilities.size() != taxonomy.size()) {
        throw Error(ErrorKind::ShapeError, "report labels and probabilities must match the taxonomy size");
    }
    Report report;
    report.contract_id = contract.id;
    report.recommendations = knowledge.general_recommendations;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (!labels.test(j)) {
            continue;
        }
        Finding f;
        f.label = taxonomy.name(j);
        f.probability = probabilities[j];
        const KnowledgeEntry* entry = knowledge.find(f.label);
        if (entry) {
            f.sections = entry->sections;
        } else {
            f.sections = generic_sections(f.label);
            f.generic = true;
            report.notices.push_back("no knowledge entry for '" + f.label + "'; generic guidance shown.");
        }
        report.summary.push_back(summary_row(f, entry));
        report.findings.push_back(std::move(f));
    }
    return report;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    return PromptTemplate(read_file(path));
}

PromptTemplate PromptTemplate::default_template() {
    return PromptTemplate(
        "You are a smart contract security auditor. The contract below was flagged for these vulnerability "
        "types: {labels}.\n\n"
        "Think step by step. For each flagged type, first locate where it appears in the code, then explain "
        "why it arises, then what an attacker could do, then what the consequences would be, and finally how "
        "to fix it.\n\n"
        "Write Markdown. Start each vulnerability with a level-2 header containing its type name exactly as "
        "given. Under it, write these level-3 headers in this order, each followed by at least one sentence:\n"
        "{elements}\n\n"
        "Contract source:\n```solidity\n{source}\n```\n");
}

std::string PromptTemplate::render(std::string_view source, std::span<const std::string> labels) const {
    std::string label_list;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        label_list += (i ? ", " : "") + labels[i];
    }
    std::string elements;
    for (auto e : kReportElements) {
        elements += "### " + std::string(e) + "\n";
    }
    if (!elements.empty()) {
        elements.pop_back();
    }
    std::string out;
    out.reserve(text_.size() + source.size());
    for (std::size_t i = 0; i < text_.size();) {
        auto sub = [&](std::string_view key, std::string_view value) {
            if (std::string_view(text_).substr(i, key.size()) == key) {
                out += value;
                i += key.size();
                return true;
            }
            return false;
        };
        if (sub("{source}", source) || sub("{labels}", label_list) || sub("{elements}", elements)) {
            continue;
        }
        out.push_back(text_[i++]);
    }
    return out;
}

bool parse_llm_sections(std::string_view markdown, std::span<const std::string> labels,
                        std::vector<std::array<std::string, 5>>& out) {
    struct Line {
        int level;
        std::string text;
    };
    std::vector<Line> lines;
    std::size_t pos = 0;
    while (pos <= markdown.size()) {
        auto eol = markdown.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = markdown.size();
        }
        std::string_view line = markdown.substr(pos, eol - pos);
        int level = 0;
        while (static_cast<std::size_t>(level) < line.size() && line[level] == '#') {
            ++level;
        }
        if (level > 0 && static_cast<std::size_t>(level) < line.size() && line[level] == ' ') {
            lines.push_back({level, trim(line.substr(level + 1))});
        } else {
            lines.push_back({0, std::string(line)});
        }
        pos = eol + 1;
    }

    out.clear();
    for (const auto& label : labels) {
        std::size_t i = 0;
        while (i < lines.size() && !(lines[i].level == 2 && lines[i].text.find(label) != std::string::npos)) {
            ++i;
        }
        if (i == lines.size()) {
            return false;
        }
        std::array<std::string, 5> sections;
        std::size_t next_element = 0;
        std::size_t current = sections.size();
        for (++i; i < lines.size() && !(lines[i].level > 0 && lines[i].level <= 2); ++i) {
            if (lines[i].level == 3) {
                if (next_element >= kReportElements.size() || lines[i].text != kReportElements[next_element]) {
                    return false;
                }
                current = next_element++;
                continue;
            }
            if (current < sections.size()) {
                sections[current] += lines[i].text;
                sections[current].push_back('\n');
            }
        }
        if (next_element != kReportElements.size()) {
            return false;
        }
        for (auto& s : sections) {
            s = trim(s);
            if (s.empty()) {
                return false;
            }
        }
        out.push_back(std::move(sections));
    }
    return true;
}

Report llm_report(const Contract& contract, const LabelVector& labels, std::span<const double> probabilities,
                  const Taxonomy& taxonomy, const KnowledgeBase& knowledge, const LlmEndpoint& endpoint,
                  const PromptTemplate& prompt) {
    Report report = render_report(contract, labels, probabilities, taxonomy, knowledge);
    if (report.findings.empty()) {
        return report;
    }
    std::vector<std::string> names;
    for (const auto& f : report.findings) {
        names.push_back(f.label);
    }
    std::string failure;
    try {
        const auto reply =
            post_json(endpoint.url, {{"prompt", prompt.render(contract.source, names)}}, endpoint.timeout,
                      endpoint.auth_header);
        if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
            failure = "reply lacks a 'text' field";
        } else {
            std::vector<std::array<std::string, 5>> sections;
            if (!parse_llm_sections(reply["text"].get<std::string>(), names, sections)) {
                failure = "reply is missing one or more of the five required sections";
            } else {
                for (std::size_t i = 0; i < report.findings.size(); ++i) {
                    report.findings[i].sections = sections[i];
                    report.findings[i].generic = false;
                }
                report.notices.clear();
                for (std::size_t i = 0; i < report.findings.size(); ++i) {
                    report.summary[i] = summary_row(report.findings[i], knowledge.find(report.findings[i].label));
                }
                return report;
            }
        }
    } catch (const Error& e) {
        failure = e.what();
    }
    report.notices.push_back("LLM elaboration unavailable (" + failure + "); template report shown.");
    return report;
}

}  // namespace paravul
