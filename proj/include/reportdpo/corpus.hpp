#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace reportdpo::corpus {

/// A sectioned radiology report. Absent sections are std::nullopt; section text
/// never contains a section header.
struct RadiologyReport {
    std::string study_id;
    std::optional<std::string> findings;
    std::optional<std::string> impression;
    std::optional<std::string> indication;
    std::optional<std::string> comparison;

    bool has_any_body() const { return findings.has_value() || impression.has_value(); }
    bool has_both_bodies() const { return findings.has_value() && impression.has_value(); }

    friend bool operator==(const RadiologyReport&, const RadiologyReport&) = default;
};

enum class Split { train, validation, test };

struct SplitRule {
    Split split = Split::train;
    bool require_both_sections = false;

    /// The only valid rule for a split: validation and test need both sections.
    static SplitRule for_split(Split s) { return {s, s != Split::train}; }
};

/// Case-insensitive header scan. FINDINGS, IMPRESSION (also CONCLUSION and
/// SUMMARY), INDICATION and COMPARISON are extracted; the first header of each
/// class wins. A handful of other common headers (TECHNIQUE, HISTORY, ...) only
/// terminate the preceding section. Whitespace runs inside a section collapse to
/// one space; an empty section counts as absent.
RadiologyReport parse_report(std::string_view raw_text, std::string study_id = {});

/// Canonical text rendering; parse_report(render_report(r)) == r.
std::string render_report(const RadiologyReport& report);

/// Keeps reports allowed by the rule, preserving order. Throws ConfigError when
/// the rule is inconsistent with its split.
std::vector<RadiologyReport> filter_split(const std::vector<RadiologyReport>& reports,
                                          const SplitRule& rule);

/// Findings followed by impression, joined so that the section boundary is also
/// a sentence boundary. Empty when neither section is present.
std::string report_text(const RadiologyReport& report);

/// Sentence lines of report_text() plus how many of them came from findings.
struct ReportLines {
    std::vector<std::string> lines;
    std::size_t findings_count = 0;
};
ReportLines report_lines(const RadiologyReport& report);

/// Joins sentence lines back into section text: "A. B. C."
std::string join_lines(const std::vector<std::string>& lines);

/// Model prompt built from the context sections: "INDICATION: ... COMPARISON: ...".
/// Empty when neither is present or when `include_comparison` drops the only one.
std::string prompt_text(const RadiologyReport& report, bool include_comparison = true);

// Newline-delimited JSON, one report per line.
nlohmann::json to_json(const RadiologyReport& report);
RadiologyReport report_from_json(const nlohmann::json& j);
std::vector<RadiologyReport> read_reports(const std::string& path);
void write_reports(const std::string& path, const std::vector<RadiologyReport>& reports);

/// Synthetic corpus settings.
struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t report_count = 1000;
    double prior_line_rate = 0.5;
    std::size_t min_lines = 4;
    std::size_t max_lines = 8;

    void validate() const;
};

enum class LineKind { none, partial, all };

/// What the generator knows about each line it produced.
struct LineTruth {
    LineKind kind = LineKind::none;
    std::string rendered;
    /// Prior-free rendering; empty for LineKind::all.
    std::string clean;
    bool in_findings = true;
};

struct SyntheticReport {
    RadiologyReport report;
    std::vector<LineTruth> lines;
};

/// Deterministic in the config: equal configs yield byte-identical corpora.
std::vector<RadiologyReport> generate_synthetic_corpus(const SynthConfig& config);
std::vector<SyntheticReport> generate_synthetic_with_truth(const SynthConfig& config);

}  // namespace reportdpo::corpus
