#include "reportdpo/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "reportdpo/rng.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::annotate {

using corpus::RadiologyReport;
using nlohmann::json;

std::string to_string(PriorCategory c) {
    switch (c) {
        case PriorCategory::none: return "none";
        case PriorCategory::partial: return "partial";
        case PriorCategory::all: return "all";
    }
    return "none";
}

std::optional<PriorCategory> category_from_string(std::string_view s) {
    if (s == "none") return PriorCategory::none;
    if (s == "partial") return PriorCategory::partial;
    if (s == "all") return PriorCategory::all;
    return std::nullopt;
}

std::string to_string(MalformedKind k) {
    switch (k) {
        case MalformedKind::invalid_syntax: return "InvalidSyntax";
        case MalformedKind::line_mismatch: return "LineMismatch";
        case MalformedKind::missing_rewrite: return "MissingRewrite";
    }
    return "InvalidSyntax";
}

// ---------------------------------------------------------------------------
// Prompt

std::string AnnotationPrompt::render() const {
    std::string out = prefix;
    for (const auto& [kw, examples] : keyword_examples) {
        out += '\n';
        out += examples;
    }
    out += "\nReport:";
    for (std::size_t i = 0; i < report_lines.size(); ++i) {
        out += " [" + std::to_string(i) + "] " + text::strip_final_period(report_lines[i]) + ".";
    }
    out += "\nJSON:";
    return out;
}

AnnotationPrompt build_prompt(const RadiologyReport& report, const detect::KeywordSet& keywords) {
    auto lines = corpus::report_lines(report).lines;
    if (lines.empty()) {
        throw DataError("nothing to annotate");
    }
    AnnotationPrompt prompt;
    prompt.prefix = instruction_prefix();
    const std::string all_text = text::join(lines, " ");
    for (const auto& kw : keywords.present_in(all_text)) {
        // Joining could create a match across a line boundary; confirm per line.
        bool in_a_line = false;
        for (const auto& l : lines) {
            if (text::icontains(l, kw)) {
                in_a_line = true;
                break;
            }
        }
        if (!in_a_line) {
            continue;
        }
        if (const std::string* ex = keyword_examples(kw)) {
            prompt.keyword_examples.emplace_back(kw, *ex);
        }
    }
    prompt.report_lines = std::move(lines);
    return prompt;
}

std::vector<std::string> lines_from_prompt(std::string_view prompt) {
    const auto rpos = prompt.rfind("\nReport:");
    if (rpos == std::string_view::npos) {
        return {};
    }
    std::string_view body = prompt.substr(rpos + 8);
    if (const auto jpos = body.rfind("\nJSON:"); jpos != std::string_view::npos) {
        body = body.substr(0, jpos);
    }
    std::vector<std::string> lines;
    std::size_t i = 0;
    std::size_t pos = body.find("[0] ");
    while (pos != std::string_view::npos) {
        const std::string marker = "[" + std::to_string(i) + "] ";
        const std::string next = "[" + std::to_string(i + 1) + "] ";
        const std::size_t start = pos + marker.size();
        const std::size_t stop = body.find(next, start);
        const std::size_t end = stop == std::string_view::npos ? body.size() : stop;
        lines.push_back(text::strip_final_period(body.substr(start, end - start)));
        pos = stop;
        ++i;
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Parsing

std::vector<LineLabel> parse_annotation(const json& response, std::size_t expected_line_count) {
    if (!response.is_object()) {
        throw MalformedResponse(MalformedKind::invalid_syntax, "annotation is not a JSON object");
    }
    std::vector<std::optional<LineLabel>> slots(expected_line_count);
    for (const auto& [key, value] : response.items()) {
        if (key.empty() || key.size() > 9 ||
            !std::all_of(key.begin(), key.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw MalformedResponse(MalformedKind::line_mismatch, "non-numeric line id: " + key);
        }
        const std::size_t idx = std::stoul(key);
        if (idx >= expected_line_count) {
            throw MalformedResponse(MalformedKind::line_mismatch,
                                    "line id " + key + " outside [0, " +
                                        std::to_string(expected_line_count) + ")");
        }
        if (!value.is_object() || !value.contains("prior_cat") || !value["prior_cat"].is_string()) {
            throw MalformedResponse(MalformedKind::invalid_syntax,
                                    "line " + key + ": missing prior_cat");
        }
        const auto cat = category_from_string(value["prior_cat"].get<std::string>());
        if (!cat) {
            throw MalformedResponse(MalformedKind::invalid_syntax,
                                    "line " + key + ": unknown prior_cat");
        }
        LineLabel label{idx, *cat, std::nullopt};
        if (*cat == PriorCategory::partial) {
            auto it = value.find("partial_rewrite");
            if (it == value.end() || !it->is_string() ||
                text::trim(it->get<std::string>()).empty()) {
                throw MalformedResponse(MalformedKind::missing_rewrite,
                                        "line " + key + ": partial without partial_rewrite");
            }
            label.rewrite = text::trim(it->get<std::string>());
        }
        slots[idx] = std::move(label);
    }
    std::vector<LineLabel> labels;
    labels.reserve(expected_line_count);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) {
            throw MalformedResponse(MalformedKind::line_mismatch,
                                    "missing label for line " + std::to_string(i));
        }
        labels.push_back(std::move(*slots[i]));
    }
    return labels;
}

std::vector<LineLabel> parse_annotation(std::string_view response_text,
                                        std::size_t expected_line_count) {
    json j;
    try {
        j = json::parse(response_text);
    } catch (const json::parse_error& e) {
        throw MalformedResponse(MalformedKind::invalid_syntax, e.what());
    }
    return parse_annotation(j, expected_line_count);
}

json annotation_json(const std::vector<LineLabel>& labels) {
    json j = json::object();
    for (const auto& l : labels) {
        json v;
        v["prior_cat"] = to_string(l.category);
        if (l.category == PriorCategory::partial && l.rewrite) {
            v["partial_rewrite"] = *l.rewrite;
        }
        j[std::to_string(l.line_index)] = std::move(v);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Rule-based annotator

namespace {

struct Verdict {
    PriorCategory category;
    std::string rewrite;
};

struct Rules {
    std::regex pure{R"(^(.+) (is|are) (stable|unchanged|constant)$)", std::regex::icase};
    std::regex no_change{R"(^no (significant |substantial )?(interval )?changes?( .*)?$)",
                         std::regex::icase};
    std::regex prefix{
        R"(^(as )?(compared (to|with)|in comparison (to|with))( [^,]*)?, (.+)$)",
        std::regex::icase};
    std::regex verb{R"(^(.+) (has|have) (worsened|improved|increased|decreased|progressed|developed)$)",
                    std::regex::icase};
    std::regex remain{R"(^(.+) (remains|remain) (.+)$)", std::regex::icase};
    std::regex persist{R"(^(.+) (persists|persist)$)", std::regex::icase};
    std::regex again{R"(^(.+) (is|are) again (seen|noted)$)", std::regex::icase};
    std::regex new_finding{R"(^there (is|are) (a )?new (.+)$)", std::regex::icase};
};

const Rules& rules() {
    static const Rules r;
    return r;
}

bool plural_aux(const std::string& word) {
    const std::string w = text::to_lower(word);
    return w == "have" || w == "are" || w == "remain" || w == "persist";
}

Verdict classify_text(const std::string& s, const detect::KeywordSet& kw, int depth = 0) {
    const Rules& r = rules();
    std::smatch m;
    if (std::regex_match(s, r.pure) || std::regex_match(s, r.no_change)) {
        return {PriorCategory::all, {}};
    }
    if (std::regex_match(s, m, r.prefix)) {
        const std::string rest = text::capitalize_first(text::trim(m[6].str()));
        if (depth < 2 && kw.matches(rest)) {
            return classify_text(rest, kw, depth + 1);
        }
        return {PriorCategory::partial, rest};
    }
    if (std::regex_match(s, m, r.verb)) {
        return {PriorCategory::partial,
                m[1].str() + (plural_aux(m[2].str()) ? " are present" : " is present")};
    }
    if (std::regex_match(s, m, r.remain)) {
        return {PriorCategory::partial,
                m[1].str() + (plural_aux(m[2].str()) ? " are " : " is ") + m[3].str()};
    }
    if (std::regex_match(s, m, r.persist)) {
        return {PriorCategory::partial,
                m[1].str() + (plural_aux(m[2].str()) ? " are present" : " is present")};
    }
    if (std::regex_match(s, m, r.again)) {
        return {PriorCategory::partial, m[1].str() + " " + m[2].str() + " " + m[3].str()};
    }
    if (std::regex_match(s, m, r.new_finding)) {
        return {PriorCategory::partial,
                text::capitalize_first("there " + m[1].str() + " " + m[2].str() + m[3].str())};
    }
    // Fallback: drop every word that carries a keyword.
    std::vector<std::string> kept;
    for (auto& w : text::split_ws(s)) {
        if (!kw.matches(w)) {
            kept.push_back(w);
        }
    }
    // Multi-word terms ("has enlarged") survive word-level filtering.
    std::string rest = text::join(kept, " ");
    if (kept.size() < 2 || kw.matches(rest)) {
        return {PriorCategory::all, {}};
    }
    while (!rest.empty() && (rest.back() == ',' || rest.back() == ';')) {
        rest.pop_back();
    }
    return {PriorCategory::partial, text::capitalize_first(rest)};
}

}  // namespace

LineLabel classify_line(std::size_t line_index, std::string_view line,
                        const detect::KeywordSet& keywords) {
    const std::string s = text::strip_final_period(line);
    if (!keywords.matches(s)) {
        return {line_index, PriorCategory::none, std::nullopt};
    }
    Verdict v = classify_text(s, keywords);
    if (v.category == PriorCategory::partial) {
        return {line_index, PriorCategory::partial, text::strip_final_period(v.rewrite)};
    }
    return {line_index, v.category, std::nullopt};
}

std::vector<LineLabel> rule_based_annotate(const std::vector<std::string>& lines,
                                           const detect::KeywordSet& keywords,
                                           const RuleAnnotatorOptions& options) {
    std::vector<std::string> normalized;
    normalized.reserve(lines.size());
    for (const auto& l : lines) {
        normalized.push_back(text::strip_final_period(l));
    }
    Rng rng(mix_seed(options.seed, text::join(normalized, "\n")));
    std::vector<LineLabel> labels;
    labels.reserve(lines.size());
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        LineLabel label = classify_line(i, normalized[i], keywords);
        if (label.category != PriorCategory::none && options.miss_rate > 0.0 &&
            rng.bernoulli(options.miss_rate)) {
            label = {i, PriorCategory::none, std::nullopt};
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

std::vector<LineLabel> rule_based_annotate(const RadiologyReport& report,
                                           const detect::KeywordSet& keywords,
                                           const RuleAnnotatorOptions& options) {
    return rule_based_annotate(corpus::report_lines(report).lines, keywords, options);
}

std::string RuleBasedClient::complete(const std::string& prompt) {
    const auto lines = lines_from_prompt(prompt);
    return annotation_json(rule_based_annotate(lines, keywords_, options_)).dump();
}

ReplayClient ReplayClient::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path);
    }
    std::unordered_map<std::string, std::string> responses;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            responses[j.at("prompt").get<std::string>()] = j.at("response").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return ReplayClient(std::move(responses));
}

std::string ReplayClient::complete(const std::string& prompt) {
    auto it = responses_.find(prompt);
    return it == responses_.end() ? std::string{} : it->second;
}

AnnotationRun annotate_reports(const std::vector<RadiologyReport>& reports,
                               AnnotatorClient& client, const detect::KeywordSet& keywords) {
    AnnotationRun run;
    for (const auto& r : reports) {
        const auto lines = corpus::report_lines(r).lines;
        if (lines.empty()) {
            ++run.skipped_empty;
            continue;
        }
        const std::string prompt = build_prompt(r, keywords).render();
        std::string response = client.complete(prompt);
        try {
            run.annotated.push_back({r, parse_annotation(std::string_view(response), lines.size())});
        } catch (const MalformedResponse& e) {
            run.malformed.push_back({r.study_id, e.kind(), e.what(), prompt, std::move(response)});
        }
    }
    return run;
}

json to_json(const AnnotatedReport& a) {
    json j = corpus::to_json(a.report);
    j["annotation"] = annotation_json(a.labels);
    return j;
}

AnnotatedReport annotated_from_json(const json& j) {
    AnnotatedReport a;
    a.report = corpus::report_from_json(j);
    if (!j.contains("annotation")) {
        throw DataError("annotated report " + a.report.study_id + " has no annotation");
    }
    a.labels = parse_annotation(j["annotation"], corpus::report_lines(a.report).lines.size());
    return a;
}

namespace {

template <class T, class F>
std::vector<T> read_ndjson(const std::string& path, F&& from_json) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <class T>
void write_ndjson(const std::string& path, const std::vector<T>& items) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    for (const auto& item : items) {
        out << to_json(item).dump() << '\n';
    }
}

}  // namespace

std::vector<AnnotatedReport> read_annotated(const std::string& path) {
    return read_ndjson<AnnotatedReport>(path, annotated_from_json);
}

void write_annotated(const std::string& path, const std::vector<AnnotatedReport>& items) {
    write_ndjson(path, items);
}

// ---------------------------------------------------------------------------
// Pairs

namespace {

void check_labels(const corpus::ReportLines& rl, const std::vector<LineLabel>& labels,
                  const std::string& study_id) {
    if (labels.size() != rl.lines.size()) {
        throw DataError("study " + study_id + ": " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(rl.lines.size()) + " lines");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].line_index != i) {
            throw DataError("study " + study_id + ": labels out of order at " + std::to_string(i));
        }
        if (labels[i].category == PriorCategory::partial && !labels[i].rewrite) {
            throw DataError("study " + study_id + ": partial label without rewrite");
        }
    }
}

}  // namespace

RadiologyReport apply_labels(const RadiologyReport& report, const std::vector<LineLabel>& labels) {
    const auto rl = corpus::report_lines(report);
    check_labels(rl, labels, report.study_id);
    std::vector<std::string> findings;
    std::vector<std::string> impression;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& dest = i < rl.findings_count ? findings : impression;
        switch (labels[i].category) {
            case PriorCategory::none: dest.push_back(rl.lines[i]); break;
            case PriorCategory::partial: dest.push_back(*labels[i].rewrite); break;
            case PriorCategory::all: break;
        }
    }
    RadiologyReport out = report;
    auto section = [](const std::vector<std::string>& lines) -> std::optional<std::string> {
        std::string s = corpus::join_lines(lines);
        if (s.empty()) {
            return std::nullopt;
        }
        return s;
    };
    out.findings = report.findings ? section(findings) : std::nullopt;
    out.impression = report.impression ? section(impression) : std::nullopt;
    return out;
}

std::optional<PreferencePair> build_preference_pair(const RadiologyReport& report,
                                                    const std::vector<LineLabel>& labels,
                                                    PairMode mode, bool include_comparison) {
    const auto rl = corpus::report_lines(report);
    const RadiologyReport processed = apply_labels(report, labels);
    const bool keep = mode == PairMode::train ? processed.has_any_body()
                                              : processed.has_both_bodies();
    if (!keep) {
        return std::nullopt;
    }
    PreferencePair p;
    p.study_id = report.study_id;
    p.prompt_text = corpus::prompt_text(report, include_comparison);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::string original = text::strip_final_period(rl.lines[i]);
        switch (labels[i].category) {
            case PriorCategory::none:
                p.dispreferred.push_back(original);
                p.dispreferred_relevance.push_back(false);
                p.preferred.push_back(original);
                p.preferred_relevance.push_back(false);
                break;
            case PriorCategory::partial:
                p.dispreferred.push_back(original);
                p.dispreferred_relevance.push_back(true);
                p.preferred.push_back(text::strip_final_period(*labels[i].rewrite));
                p.preferred_relevance.push_back(true);
                break;
            case PriorCategory::all:
                p.dispreferred.push_back(original);
                p.dispreferred_relevance.push_back(true);
                break;
        }
    }
    return p;
}

std::vector<RadiologyReport> compar_filter(const std::vector<RadiologyReport>& reports) {
    std::vector<RadiologyReport> kept;
    std::set<std::string> seen;
    for (const auto& r : reports) {
        const bool hit = (r.findings && text::icontains(*r.findings, "compar")) ||
                         (r.impression && text::icontains(*r.impression, "compar"));
        if (!hit) {
            continue;
        }
        std::string key = r.findings.value_or("") + '\x1f' + r.impression.value_or("");
        if (seen.insert(std::move(key)).second) {
            kept.push_back(r);
        }
    }
    return kept;
}

json to_json(const PreferencePair& p) {
    return json{{"study_id", p.study_id},
                {"prompt_text", p.prompt_text},
                {"dispreferred", p.dispreferred},
                {"preferred", p.preferred},
                {"dispreferred_relevance", p.dispreferred_relevance},
                {"preferred_relevance", p.preferred_relevance}};
}

PreferencePair pair_from_json(const json& j) {
    PreferencePair p;
    j.at("study_id").get_to(p.study_id);
    j.at("prompt_text").get_to(p.prompt_text);
    j.at("dispreferred").get_to(p.dispreferred);
    j.at("preferred").get_to(p.preferred);
    j.at("dispreferred_relevance").get_to(p.dispreferred_relevance);
    j.at("preferred_relevance").get_to(p.preferred_relevance);
    if (p.dispreferred.size() != p.dispreferred_relevance.size() ||
        p.preferred.size() != p.preferred_relevance.size()) {
        throw DataError("pair " + p.study_id + ": relevance length mismatch");
    }
    return p;
}

std::vector<PreferencePair> read_pairs(const std::string& path) {
    return read_ndjson<PreferencePair>(path, pair_from_json);
}

void write_pairs(const std::string& path, const std::vector<PreferencePair>& pairs) {
    write_ndjson(path, pairs);
}

// ---------------------------------------------------------------------------
// Accounting

LabelFrequency label_frequency_report(const std::vector<AnnotatedReport>& corpus,
                                      const detect::KeywordSet& keywords) {
    LabelFrequency f;
    f.report_count = corpus.size();
    for (const auto& a : corpus) {
        const auto rl = corpus::report_lines(a.report);
        check_labels(rl, a.labels, a.report.study_id);
        for (std::size_t i = 0; i < a.labels.size(); ++i) {
            const bool before = keywords.matches(rl.lines[i]);
            switch (a.labels[i].category) {
                case PriorCategory::none:
                    ++f.labels.none;
                    f.prior_before.none += before;
                    f.prior_after.none += before;
                    break;
                case PriorCategory::partial:
                    ++f.labels.partial;
                    f.prior_before.partial += before;
                    f.prior_after.partial += keywords.matches(*a.labels[i].rewrite);
                    break;
                case PriorCategory::all:
                    ++f.labels.all;
                    f.prior_before.all += before;
                    break;
            }
        }
    }
    return f;
}

std::string render_label_frequency(const LabelFrequency& f) {
    std::ostringstream os;
    auto row = [&](const char* name, const CategoryCounts& c) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-22s %8zu %8zu %8zu | %8zu\n", name, c.none, c.partial,
                      c.all, c.total());
        os << buf;
    };
    char head[128];
    std::snprintf(head, sizeof head, "%-22s %8s %8s %8s | %8s\n", "", "None", "Partial", "All",
                  "Total");
    os << head;
    row("Labels", f.labels);
    row("Prior lines (original)", f.prior_before);
    row("Prior lines (processed)", f.prior_after);
    return os.str();
}

}  // namespace reportdpo::annotate
