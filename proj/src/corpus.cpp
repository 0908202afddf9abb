#include "reportdpo/corpus.hpp"

#include <array>
#include <cctype>
#include <fstream>

#include "reportdpo/error.hpp"
#include "reportdpo/priordetect.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::corpus {

namespace {

enum class SectionKind { findings, impression, indication, comparison, other };

struct Header {
    std::string_view name;  // upper case, without colon
    SectionKind kind;
};

// Longer names first so "CLINICAL HISTORY" wins over "HISTORY" at the same spot.
constexpr std::array kHeaders{
    Header{"REASON FOR EXAMINATION", SectionKind::other},
    Header{"CLINICAL HISTORY", SectionKind::other},
    Header{"RECOMMENDATIONS", SectionKind::other},
    Header{"RECOMMENDATION", SectionKind::other},
    Header{"NOTIFICATION", SectionKind::other},
    Header{"EXAMINATION", SectionKind::other},
    Header{"INDICATION", SectionKind::indication},
    Header{"COMPARISON", SectionKind::comparison},
    Header{"IMPRESSION", SectionKind::impression},
    Header{"CONCLUSION", SectionKind::impression},
    Header{"TECHNIQUE", SectionKind::other},
    Header{"FINDINGS", SectionKind::findings},
    Header{"SUMMARY", SectionKind::impression},
    Header{"HISTORY", SectionKind::other},
    Header{"WET READ", SectionKind::other},
};

struct HeaderHit {
    std::size_t begin;
    std::size_t end;  // one past the colon
    SectionKind kind;
};

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<HeaderHit> find_headers(std::string_view raw) {
    const std::string upper = text::to_upper(raw);
    std::vector<HeaderHit> hits;
    std::size_t i = 0;
    while (i < upper.size()) {
        bool matched = false;
        if (i == 0 || !is_word_char(upper[i - 1])) {
            for (const auto& h : kHeaders) {
                const std::size_t n = h.name.size();
                if (upper.compare(i, n, h.name) == 0 && i + n < upper.size() &&
                    upper[i + n] == ':') {
                    hits.push_back({i, i + n + 1, h.kind});
                    i += n + 1;
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            ++i;
        }
    }
    return hits;
}

std::optional<std::string> section_body(std::string_view raw) {
    std::string body = text::join(text::split_ws(raw), " ");
    if (body.empty()) {
        return std::nullopt;
    }
    return body;
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    return it->get<std::string>();
}

}  // namespace

RadiologyReport parse_report(std::string_view raw_text, std::string study_id) {
    RadiologyReport report;
    report.study_id = std::move(study_id);
    const auto hits = find_headers(raw_text);
    for (std::size_t h = 0; h < hits.size(); ++h) {
        const std::size_t start = hits[h].end;
        const std::size_t stop = h + 1 < hits.size() ? hits[h + 1].begin : raw_text.size();
        std::optional<std::string>* slot = nullptr;
        switch (hits[h].kind) {
            case SectionKind::findings: slot = &report.findings; break;
            case SectionKind::impression: slot = &report.impression; break;
            case SectionKind::indication: slot = &report.indication; break;
            case SectionKind::comparison: slot = &report.comparison; break;
            case SectionKind::other: break;
        }
        if (slot != nullptr && !slot->has_value()) {
            *slot = section_body(raw_text.substr(start, stop - start));
        }
    }
    return report;
}

std::string render_report(const RadiologyReport& report) {
    std::string out;
    auto add = [&](const char* header, const std::optional<std::string>& body) {
        if (!body) {
            return;
        }
        if (!out.empty()) {
            out += '\n';
        }
        out += header;
        out += ' ';
        out += *body;
    };
    add("INDICATION:", report.indication);
    add("COMPARISON:", report.comparison);
    add("FINDINGS:", report.findings);
    add("IMPRESSION:", report.impression);
    return out;
}

std::vector<RadiologyReport> filter_split(const std::vector<RadiologyReport>& reports,
                                          const SplitRule& rule) {
    if (rule.require_both_sections != (rule.split != Split::train)) {
        throw ConfigError("split rule: require_both_sections must hold exactly for "
                          "validation and test");
    }
    std::vector<RadiologyReport> kept;
    for (const auto& r : reports) {
        if (rule.require_both_sections ? r.has_both_bodies() : r.has_any_body()) {
            kept.push_back(r);
        }
    }
    return kept;
}

std::string report_text(const RadiologyReport& report) {
    if (report.findings && report.impression) {
        const std::string f = text::trim(*report.findings);
        const std::string sep = (!f.empty() && f.back() == '.') ? " " : ". ";
        return f + sep + text::trim(*report.impression);
    }
    if (report.findings) {
        return text::trim(*report.findings);
    }
    if (report.impression) {
        return text::trim(*report.impression);
    }
    return {};
}

ReportLines report_lines(const RadiologyReport& report) {
    ReportLines out;
    out.lines = detect::split_sentences(report_text(report));
    if (report.findings) {
        out.findings_count = detect::split_sentences(*report.findings).size();
    }
    return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::vector<std::string> parts;
    parts.reserve(lines.size());
    for (const auto& l : lines) {
        std::string s = text::strip_final_period(l);
        if (!s.empty()) {
            parts.push_back(std::move(s));
        }
    }
    if (parts.empty()) {
        return {};
    }
    return text::join(parts, ". ") + ".";
}

std::string prompt_text(const RadiologyReport& report, bool include_comparison) {
    std::string out;
    if (report.indication) {
        out += "INDICATION: " + *report.indication;
    }
    if (include_comparison && report.comparison) {
        if (!out.empty()) {
            out += ' ';
        }
        out += "COMPARISON: " + *report.comparison;
    }
    return out;
}

nlohmann::json to_json(const RadiologyReport& report) {
    nlohmann::json j;
    j["study_id"] = report.study_id;
    if (report.findings) j["findings"] = *report.findings;
    if (report.impression) j["impression"] = *report.impression;
    if (report.indication) j["indication"] = *report.indication;
    if (report.comparison) j["comparison"] = *report.comparison;
    return j;
}

RadiologyReport report_from_json(const nlohmann::json& j) {
    RadiologyReport r;
    r.study_id = j.value("study_id", std::string{});
    r.findings = opt_string(j, "findings");
    r.impression = opt_string(j, "impression");
    r.indication = opt_string(j, "indication");
    r.comparison = opt_string(j, "comparison");
    return r;
}

std::vector<RadiologyReport> read_reports(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open corpus file: " + path);
    }
    std::vector<RadiologyReport> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(report_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_reports(const std::string& path, const std::vector<RadiologyReport>& reports) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write corpus file: " + path);
    }
    for (const auto& r : reports) {
        out << to_json(r).dump() << '\n';
    }
}

void SynthConfig::validate() const {
    if (prior_line_rate < 0.0 || prior_line_rate > 1.0) {
        throw ConfigError("prior_line_rate must lie in [0, 1]");
    }
    if (min_lines == 0 || min_lines > max_lines) {
        throw ConfigError("lines_per_report range must satisfy 1 <= min <= max");
    }
}

}  // namespace reportdpo::corpus
