#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reportdpo::detect {

/// Ordered list of lowercase substrings that signal a reference to a prior exam.
class KeywordSet {
public:
    KeywordSet() = default;
    explicit KeywordSet(std::vector<std::string> terms);

    /// The 43-term list used by the prior-line metric.
    static const KeywordSet& standard();

    /// One term per line; blank lines and lines starting with '#' are skipped.
    static KeywordSet load(const std::string& path);

    const std::vector<std::string>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }

    /// True when any term occurs in `text` (case-insensitive substring).
    bool matches(std::string_view text) const;

    /// Terms occurring in `text`, in list order.
    std::vector<std::string> present_in(std::string_view text) const;

private:
    std::vector<std::string> terms_;
};

/// Splits on the two-character delimiter ". ". The delimiter is consumed and
/// empty fragments are dropped, so only the final sentence can keep a period.
std::vector<std::string> split_sentences(std::string_view text);

/// Number of sentences containing at least one keyword.
std::size_t count_prior_lines(std::string_view report_text,
                              const KeywordSet& keywords = KeywordSet::standard());

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap of the mean (2.5th and 97.5th percentiles, linear
/// interpolation between order statistics). Throws DataError on empty input.
Interval bootstrap_ci(const std::vector<double>& samples, std::size_t n_resamples,
                      std::uint64_t seed);

/// Bootstrap percentile interval widened, if needed, to contain `point`.
Interval bracketing_ci(const std::vector<double>& samples, double point,
                       std::size_t n_resamples, std::uint64_t seed);

struct PriorStats {
    double avg_lines_with_prior = 0.0;
    double pct_reports_with_prior = 0.0;
    Interval ci_lines;
    Interval ci_pct;
    std::size_t report_count = 0;
};

PriorStats corpus_prior_stats(const std::vector<std::string>& reports, std::uint64_t seed,
                              std::size_t n_resamples,
                              const KeywordSet& keywords = KeywordSet::standard());

/// Same statistics from already computed per-report line counts.
PriorStats prior_stats_from_counts(const std::vector<std::size_t>& counts,
                                   std::uint64_t seed, std::size_t n_resamples);

}  // namespace reportdpo::detect
