#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reportdpo/corpus.hpp"
#include "reportdpo/error.hpp"
#include "reportdpo/priordetect.hpp"

namespace reportdpo::annotate {

enum class PriorCategory { none, partial, all };

std::string to_string(PriorCategory c);
std::optional<PriorCategory> category_from_string(std::string_view s);

/// Per-line label. `rewrite` is present exactly when category == partial.
struct LineLabel {
    std::size_t line_index = 0;
    PriorCategory category = PriorCategory::none;
    std::optional<std::string> rewrite;

    friend bool operator==(const LineLabel&, const LineLabel&) = default;
};

// ---------------------------------------------------------------------------
// Prompt

/// Instruction block that starts every annotation prompt.
const std::string& instruction_prefix();

/// Canned few-shot block for a keyword, or nullptr when none is defined.
const std::string* keyword_examples(std::string_view keyword);

struct AnnotationPrompt {
    std::string prefix;
    /// (keyword, example block) for keywords present in the report, list order.
    std::vector<std::pair<std::string, std::string>> keyword_examples;
    std::vector<std::string> report_lines;

    /// Full prompt text: prefix, keyword examples, "Report: [0] ... [1] ...",
    /// then "JSON:".
    std::string render() const;
};

/// Throws DataError("nothing to annotate") when the report has no findings or
/// impression lines.
AnnotationPrompt build_prompt(const corpus::RadiologyReport& report,
                              const detect::KeywordSet& keywords = detect::KeywordSet::standard());

/// Recovers the numbered report lines from a rendered prompt.
std::vector<std::string> lines_from_prompt(std::string_view prompt);

// ---------------------------------------------------------------------------
// Response parsing

enum class MalformedKind { invalid_syntax, line_mismatch, missing_rewrite };

std::string to_string(MalformedKind k);

class MalformedResponse : public DataError {
public:
    MalformedResponse(MalformedKind kind, const std::string& what)
        : DataError(what), kind_(kind) {}
    MalformedKind kind() const { return kind_; }

private:
    MalformedKind kind_;
};

/// Parses {"0": {"prior_cat": ...}, ...}. Keys must be exactly 0..n-1.
/// Throws MalformedResponse.
std::vector<LineLabel> parse_annotation(std::string_view response_text,
                                        std::size_t expected_line_count);

std::vector<LineLabel> parse_annotation(const nlohmann::json& response,
                                        std::size_t expected_line_count);

/// Inverse of parse_annotation.
nlohmann::json annotation_json(const std::vector<LineLabel>& labels);

// ---------------------------------------------------------------------------
// Offline annotator

struct RuleAnnotatorOptions {
    /// Probability that a keyword-bearing line is left labeled "none".
    double miss_rate = 0.0;
    std::uint64_t seed = 0;
};

/// Labels a single line without noise.
LineLabel classify_line(std::size_t line_index, std::string_view line,
                        const detect::KeywordSet& keywords = detect::KeywordSet::standard());

std::vector<LineLabel> rule_based_annotate(const std::vector<std::string>& lines,
                                           const detect::KeywordSet& keywords,
                                           const RuleAnnotatorOptions& options = {});

std::vector<LineLabel> rule_based_annotate(const corpus::RadiologyReport& report,
                                           const detect::KeywordSet& keywords = detect::KeywordSet::standard(),
                                           const RuleAnnotatorOptions& options = {});

/// Text-in, text-out annotation backend. A live LLM client implements this.
class AnnotatorClient {
public:
    virtual ~AnnotatorClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Answers prompts with the rule-based annotator.
class RuleBasedClient final : public AnnotatorClient {
public:
    explicit RuleBasedClient(RuleAnnotatorOptions options = {},
                             detect::KeywordSet keywords = detect::KeywordSet::standard())
        : options_(options), keywords_(std::move(keywords)) {}

    std::string complete(const std::string& prompt) override;

private:
    RuleAnnotatorOptions options_;
    detect::KeywordSet keywords_;
};

/// Replays recorded responses matched on exact prompt text. Unknown prompts
/// get an empty response, which then parses as malformed.
class ReplayClient final : public AnnotatorClient {
public:
    explicit ReplayClient(std::unordered_map<std::string, std::string> responses)
        : responses_(std::move(responses)) {}

    /// Newline-delimited {"prompt": ..., "response": ...} objects, the same
    /// shape as a malformed-response queue file.
    static ReplayClient load(const std::string& path);

    std::string complete(const std::string& prompt) override;

private:
    std::unordered_map<std::string, std::string> responses_;
};

struct AnnotatedReport {
    corpus::RadiologyReport report;
    std::vector<LineLabel> labels;
};

struct MalformedRecord {
    std::string study_id;
    MalformedKind kind;
    std::string message;
    std::string prompt;
    std::string response;
};

enum class MalformedPolicy { drop, manual_fix_queue };

struct AnnotationRun {
    std::vector<AnnotatedReport> annotated;
    /// Responses that failed to parse. Under drop these are only counted by the
    /// caller; under manual_fix_queue they are meant to be written out and fixed.
    std::vector<MalformedRecord> malformed;
    std::size_t skipped_empty = 0;
};

AnnotationRun annotate_reports(const std::vector<corpus::RadiologyReport>& reports,
                               AnnotatorClient& client,
                               const detect::KeywordSet& keywords = detect::KeywordSet::standard());

nlohmann::json to_json(const AnnotatedReport& a);
AnnotatedReport annotated_from_json(const nlohmann::json& j);
std::vector<AnnotatedReport> read_annotated(const std::string& path);
void write_annotated(const std::string& path, const std::vector<AnnotatedReport>& items);

// ---------------------------------------------------------------------------
// Preference pairs

struct PreferencePair {
    std::string study_id;
    std::string prompt_text;
    std::vector<std::string> dispreferred;
    std::vector<std::string> preferred;
    std::vector<bool> dispreferred_relevance;
    std::vector<bool> preferred_relevance;

    friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class PairMode {
    train,  // exclude only when both sections end up empty
    eval,   // exclude when either section is missing
};

/// The processed (prior-free) version of a report: none lines copied, partial
/// lines replaced by their rewrite, all lines dropped. Sections emptied by
/// processing become absent. Throws DataError on a label count mismatch.
corpus::RadiologyReport apply_labels(const corpus::RadiologyReport& report,
                                     const std::vector<LineLabel>& labels);

std::optional<PreferencePair> build_preference_pair(const corpus::RadiologyReport& report,
                                                    const std::vector<LineLabel>& labels,
                                                    PairMode mode = PairMode::train,
                                                    bool include_comparison = true);

/// Reports whose findings or impression contain "compar" (any case), keeping
/// only the first report for each distinct findings+impression value.
std::vector<corpus::RadiologyReport> compar_filter(const std::vector<corpus::RadiologyReport>& reports);

nlohmann::json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);
std::vector<PreferencePair> read_pairs(const std::string& path);
void write_pairs(const std::string& path, const std::vector<PreferencePair>& pairs);

// ---------------------------------------------------------------------------
// Accounting

struct CategoryCounts {
    std::size_t none = 0;
    std::size_t partial = 0;
    std::size_t all = 0;
    std::size_t total() const { return none + partial + all; }
};

struct LabelFrequency {
    CategoryCounts labels;
    /// Lines with a prior-exam keyword in each category, before processing.
    CategoryCounts prior_before;
    /// Same lines after processing ("all" lines are gone, so always 0 there).
    CategoryCounts prior_after;
    std::size_t report_count = 0;
};

LabelFrequency label_frequency_report(const std::vector<AnnotatedReport>& corpus,
                                      const detect::KeywordSet& keywords = detect::KeywordSet::standard());

std::string render_label_frequency(const LabelFrequency& f);

}  // namespace reportdpo::annotate
