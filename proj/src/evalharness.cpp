#include "reportdpo/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "reportdpo/error.hpp"
#include "reportdpo/text.hpp"

namespace reportdpo::eval {

using nlohmann::json;

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
    std::map<Ngram, std::size_t> out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++out[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                    toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Estimate estimate(const std::vector<double>& samples, std::size_t n_resamples, std::uint64_t seed) {
    Estimate e;
    e.value = mean(samples);
    e.ci = detect::bracketing_ci(samples, e.value, n_resamples, seed);
    return e;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference, int max_n) {
    if (max_n < 1 || max_n > 4) {
        throw ConfigError("bleu: max_n must be between 1 and 4");
    }
    const auto cand = text::split_ws(text::to_lower(candidate));
    const auto ref = text::split_ws(text::to_lower(reference));
    if (cand.empty()) {
        return 0.0;
    }
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto nn = static_cast<std::size_t>(n);
        if (cand.size() < nn) {
            return 0.0;
        }
        const auto cc = ngram_counts(cand, nn);
        const auto rc = ngram_counts(ref, nn);
        std::size_t clipped = 0;
        for (const auto& [g, c] : cc) {
            auto it = rc.find(g);
            if (it != rc.end()) {
                clipped += std::min(c, it->second);
            }
        }
        if (clipped == 0) {
            return 0.0;
        }
        log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(cand.size() - nn + 1));
    }
    double bp = 1.0;
    if (cand.size() < ref.size()) {
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
    }
    return bp * std::exp(log_sum / max_n);
}

std::vector<EvalExample> eval_examples(const std::vector<corpus::RadiologyReport>& reports,
                                       bool include_comparison) {
    std::vector<EvalExample> out;
    out.reserve(reports.size());
    for (const auto& r : reports) {
        out.push_back({r.study_id, corpus::prompt_text(r, include_comparison), corpus::report_text(r)});
    }
    return out;
}

MetricsRow score_generations(const std::string& experiment, const std::vector<std::string>& generated,
                             const std::vector<EvalExample>& original,
                             const std::vector<EvalExample>& processed, const EvalOptions& options) {
    if (original.empty()) {
        throw DataError("evaluation set is empty");
    }
    if (original.size() != processed.size() || generated.size() != original.size()) {
        throw DataError("original and processed test sets differ in size");
    }
    for (std::size_t i = 0; i < original.size(); ++i) {
        if (original[i].study_id != processed[i].study_id) {
            throw DataError("study mismatch at position " + std::to_string(i) + ": " + original[i].study_id +
                            " vs " + processed[i].study_id);
        }
    }
    const auto& kw = options.keywords ? *options.keywords : detect::KeywordSet::standard();
    std::vector<std::size_t> counts;
    std::vector<double> b1o, b2o, b1p, b2p;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        counts.push_back(detect::count_prior_lines(generated[i], kw));
        b1o.push_back(bleu(generated[i], original[i].reference, 1));
        b2o.push_back(bleu(generated[i], original[i].reference, 2));
        b1p.push_back(bleu(generated[i], processed[i].reference, 1));
        b2p.push_back(bleu(generated[i], processed[i].reference, 2));
    }
    const auto st = detect::prior_stats_from_counts(counts, options.seed, options.n_resamples);
    MetricsRow row;
    row.experiment = experiment;
    row.report_count = generated.size();
    row.avg_lines_with_prior = {st.avg_lines_with_prior, st.ci_lines};
    row.pct_reports_with_prior = {st.pct_reports_with_prior, st.ci_pct};
    row.bleu1_original = estimate(b1o, options.n_resamples, options.seed + 2);
    row.bleu2_original = estimate(b2o, options.n_resamples, options.seed + 3);
    row.bleu1_processed = estimate(b1p, options.n_resamples, options.seed + 4);
    row.bleu2_processed = estimate(b2p, options.n_resamples, options.seed + 5);
    return row;
}

MetricsRow dual_eval(const std::string& experiment, const lm::ToyLM& model,
                     const std::vector<EvalExample>& original, const std::vector<EvalExample>& processed,
                     const EvalOptions& options) {
    if (original.empty()) {
        throw DataError("evaluation set is empty");
    }
    if (original.size() != processed.size()) {
        throw DataError("original and processed test sets differ in size");
    }
    std::vector<std::string> generated;
    generated.reserve(original.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
        if (original[i].study_id != processed[i].study_id) {
            throw DataError("study mismatch at position " + std::to_string(i));
        }
        generated.push_back(model.generate(original[i].prompt, options.decode));
    }
    return score_generations(experiment, generated, original, processed, options);
}

lm::CheckpointMetrics validation_metrics(const lm::ToyLM& model, const std::vector<EvalExample>& processed,
                                         const lm::ToyLM::DecodeOptions& decode,
                                         const detect::KeywordSet& keywords) {
    if (processed.empty()) {
        throw DataError("validation set is empty");
    }
    double b2 = 0.0;
    double prior = 0.0;
    for (const auto& ex : processed) {
        const std::string gen = model.generate(ex.prompt, decode);
        b2 += bleu(gen, ex.reference, 2);
        prior += static_cast<double>(detect::count_prior_lines(gen, keywords));
    }
    const double n = static_cast<double>(processed.size());
    return {1.0 - b2 / n, prior / n};
}

std::size_t select_index(const std::vector<RankedCandidate>& c) {
    if (c.empty()) {
        throw DataError("no checkpoints to select from");
    }
    auto rank = [&](std::size_t i, auto metric) {
        std::size_t r = 1;
        for (const auto& other : c) {
            if (metric(other) < metric(c[i])) {
                ++r;
            }
        }
        return r;
    };
    auto acc = [](const RankedCandidate& x) { return x.metrics.accuracy_proxy; };
    auto pri = [](const RankedCandidate& x) { return x.metrics.avg_prior_lines; };
    std::size_t best = 0;
    std::size_t best_sum = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const std::size_t s = rank(i, acc) + rank(i, pri);
        if (i == 0 || s < best_sum || (s == best_sum && c[i].iteration < c[best].iteration)) {
            best = i;
            best_sum = s;
        }
    }
    return best;
}

const lm::Checkpoint& select_checkpoint(const std::vector<lm::Checkpoint>& checkpoints) {
    std::vector<RankedCandidate> c;
    c.reserve(checkpoints.size());
    for (const auto& ck : checkpoints) {
        c.push_back({ck.iteration, ck.metrics});
    }
    return checkpoints[select_index(c)];
}

std::string format_estimate(const Estimate& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f, %.2f)", e.value, e.ci.lo, e.ci.hi);
    return buf;
}

namespace {

json estimate_json(const Estimate& e) {
    return {{"value", e.value}, {"lo", e.ci.lo}, {"hi", e.ci.hi}};
}

Estimate estimate_from_json(const json& j) {
    return {j.at("value").get<double>(), {j.at("lo").get<double>(), j.at("hi").get<double>()}};
}

const char* const kColumns[] = {"avg_lines_with_prior", "pct_reports_with_prior", "bleu1_original",
                                "bleu2_original",       "bleu1_processed",        "bleu2_processed"};

std::vector<const Estimate*> columns(const MetricsRow& r) {
    return {&r.avg_lines_with_prior, &r.pct_reports_with_prior, &r.bleu1_original,
            &r.bleu2_original,       &r.bleu1_processed,        &r.bleu2_processed};
}

}  // namespace

json to_json(const MetricsRow& row) {
    json j;
    j["experiment"] = row.experiment;
    const auto cols = columns(row);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        j[kColumns[i]] = estimate_json(*cols[i]);
    }
    j["report_count"] = row.report_count;
    j["bleu_aggregation"] = "per_report_mean";
    if (row.checkpoint_iteration) {
        j["checkpoint_iteration"] = *row.checkpoint_iteration;
    }
    if (row.accuracy_proxy) {
        j["accuracy_proxy"] = *row.accuracy_proxy;
    }
    if (row.val_avg_prior_lines) {
        j["val_avg_prior_lines"] = *row.val_avg_prior_lines;
    }
    return j;
}

MetricsRow row_from_json(const json& j) {
    MetricsRow row;
    row.experiment = j.at("experiment").get<std::string>();
    Estimate* targets[] = {&row.avg_lines_with_prior, &row.pct_reports_with_prior, &row.bleu1_original,
                           &row.bleu2_original,       &row.bleu1_processed,        &row.bleu2_processed};
    for (std::size_t i = 0; i < 6; ++i) {
        *targets[i] = estimate_from_json(j.at(kColumns[i]));
    }
    row.report_count = j.value("report_count", std::size_t{0});
    if (j.contains("checkpoint_iteration")) {
        row.checkpoint_iteration = j.at("checkpoint_iteration").get<std::size_t>();
    }
    if (j.contains("accuracy_proxy")) {
        row.accuracy_proxy = j.at("accuracy_proxy").get<double>();
    }
    if (j.contains("val_avg_prior_lines")) {
        row.val_avg_prior_lines = j.at("val_avg_prior_lines").get<double>();
    }
    return row;
}

json table_json(const MetricsTable& table) {
    json arr = json::array();
    for (const auto& r : table) {
        arr.push_back(to_json(r));
    }
    return arr;
}

MetricsTable table_from_json(const json& j) {
    if (!j.is_array()) {
        throw DataError("metrics table must be a JSON array");
    }
    MetricsTable t;
    for (const auto& r : j) {
        t.push_back(row_from_json(r));
    }
    return t;
}

std::string render_table(const MetricsTable& table) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"experiment", "lines w/ prior", "% reports w/ prior", "BLEU-1 (orig)", "BLEU-2 (orig)",
                     "BLEU-1 (proc)", "BLEU-2 (proc)"});
    for (const auto& r : table) {
        std::vector<std::string> line{r.experiment};
        for (const Estimate* e : columns(r)) {
            line.push_back(format_estimate(*e));
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size()) {
                out << std::string(width[c] - row[c].size() + 2, ' ');
            }
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace reportdpo::eval
