#include "reportdpo/priordetect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "reportdpo/error.hpp"
#include "reportdpo/rng.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::detect {

KeywordSet::KeywordSet(std::vector<std::string> terms) {
    terms_.reserve(terms.size());
    for (auto& t : terms) {
        terms_.push_back(text::to_lower(t));
    }
}

const KeywordSet& KeywordSet::standard() {
    static const KeywordSet set(std::vector<std::string>{
        "more",      "regress",  "advanc",      "less",     "fewer",        "constant",
        "unchanged", "prior",    "new",         "stable",   "progressed",   "interval",
        "previous",  "further",  "again",       "since",    "increase",     "improve",
        "remain",    "worse",    "persist",     "remov",    "similar",      "cleared",
        "earlier",   "existing", "decrease",    "reduc",    "recurren",     "redemonstrat",
        "resol",     "still",    "has enlarged", "lower",   "larger",       "extubated",
        "smaller",   "higher",   "continue",    "compar",   "change",       "develop",
        "before"});
    return set;
}

KeywordSet KeywordSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open keyword file: " + path);
    }
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        // Terms may contain inner spaces ("has enlarged"); only strip the ends.
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        terms.push_back(line);
    }
    return KeywordSet(std::move(terms));
}

bool KeywordSet::matches(std::string_view text) const {
    const std::string lower = text::to_lower(text);
    return std::any_of(terms_.begin(), terms_.end(), [&](const std::string& t) {
        return lower.find(t) != std::string::npos;
    });
}

std::vector<std::string> KeywordSet::present_in(std::string_view text) const {
    const std::string lower = text::to_lower(text);
    std::vector<std::string> found;
    for (const auto& t : terms_) {
        if (lower.find(t) != std::string::npos) {
            found.push_back(t);
        }
    }
    return found;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = text.find(". ", start);
        const std::size_t end = pos == std::string_view::npos ? text.size() : pos;
        std::string piece = text::trim(text.substr(start, end - start));
        if (!piece.empty()) {
            out.push_back(std::move(piece));
        }
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 2;
    }
    return out;
}

std::size_t count_prior_lines(std::string_view report_text, const KeywordSet& keywords) {
    std::size_t n = 0;
    for (const auto& s : split_sentences(report_text)) {
        if (keywords.matches(s)) {
            ++n;
        }
    }
    return n;
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(const std::vector<double>& samples, std::size_t n_resamples,
                      std::uint64_t seed) {
    if (samples.empty()) {
        throw DataError("bootstrap_ci: empty sample");
    }
    if (n_resamples == 0) {
        throw ConfigError("bootstrap_ci: n_resamples must be positive");
    }
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    if (*mn == *mx) {
        return {*mn, *mx};
    }
    Rng rng(seed);
    const std::size_t n = samples.size();
    std::vector<double> means(n_resamples);
    for (auto& m : means) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += samples[rng.below(n)];
        }
        m = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    Interval ci{percentile(means, 0.025), percentile(means, 0.975)};
    // Rounding in the running sum can step a hair outside the sample range.
    ci.lo = std::clamp(ci.lo, *mn, *mx);
    ci.hi = std::clamp(ci.hi, *mn, *mx);
    return ci;
}

Interval bracketing_ci(const std::vector<double>& samples, double point,
                       std::size_t n_resamples, std::uint64_t seed) {
    Interval ci = bootstrap_ci(samples, n_resamples, seed);
    ci.lo = std::min(ci.lo, point);
    ci.hi = std::max(ci.hi, point);
    return ci;
}

PriorStats prior_stats_from_counts(const std::vector<std::size_t>& counts, std::uint64_t seed,
                                   std::size_t n_resamples) {
    if (counts.empty()) {
        throw DataError("empty corpus");
    }
    std::vector<double> lines;
    std::vector<double> any;
    lines.reserve(counts.size());
    any.reserve(counts.size());
    for (auto c : counts) {
        lines.push_back(static_cast<double>(c));
        any.push_back(c > 0 ? 100.0 : 0.0);
    }
    const double n = static_cast<double>(counts.size());
    PriorStats st;
    st.report_count = counts.size();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        st.avg_lines_with_prior += lines[i];
        st.pct_reports_with_prior += any[i];
    }
    st.avg_lines_with_prior /= n;
    st.pct_reports_with_prior /= n;
    st.ci_lines = bracketing_ci(lines, st.avg_lines_with_prior, n_resamples, seed);
    st.ci_pct = bracketing_ci(any, st.pct_reports_with_prior, n_resamples, seed + 1);
    return st;
}

PriorStats corpus_prior_stats(const std::vector<std::string>& reports, std::uint64_t seed,
                              std::size_t n_resamples, const KeywordSet& keywords) {
    std::vector<std::size_t> counts;
    counts.reserve(reports.size());
    for (const auto& r : reports) {
        counts.push_back(count_prior_lines(r, keywords));
    }
    return prior_stats_from_counts(counts, seed, n_resamples);
}

}  // namespace reportdpo::detect
