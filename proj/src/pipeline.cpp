#include "reportdpo/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "reportdpo/error.hpp"
#include "reportdpo/rng.hpp"

namespace reportdpo::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

lm::TrainConfig ExperimentPlan::default_pretrain() {
    lm::TrainConfig c;
    c.iterations = 3000;
    c.warmup_iterations = 100;
    c.peak_lr = 3e-3;
    c.weight_decay = 0.0;
    c.checkpoint_every = 3000;
    return c;
}

lm::TrainConfig ExperimentPlan::default_finetune() {
    lm::TrainConfig c;
    c.iterations = 3000;
    c.warmup_iterations = 300;
    c.peak_lr = 1e-5;
    c.weight_decay = 0.05;
    c.checkpoint_every = 500;
    return c;
}

void ExperimentPlan::validate() const {
    if (corpus.train_count == 0 || corpus.val_count == 0 || corpus.test_count == 0) {
        throw ConfigError("every split needs at least one report");
    }
    corpus::SynthConfig{seed, 1, corpus.prior_line_rate, corpus.min_lines, corpus.max_lines}.validate();
    if (!(annotate.miss_rate >= 0.0 && annotate.miss_rate <= 1.0)) {
        throw ConfigError("miss_rate must lie in [0, 1]");
    }
    model.validate();
    pretrain.validate();
    finetune.validate();
    for (double g : gammas) {
        dpo::DpoConfig{finetune.beta, g}.validate();
    }
    if (eval.resamples == 0) {
        throw ConfigError("eval.resamples must be positive");
    }
}

json to_json(const ExperimentPlan& p) {
    json j;
    j["seed"] = p.seed;
    j["corpus"] = {{"train_count", p.corpus.train_count},
                   {"val_count", p.corpus.val_count},
                   {"test_count", p.corpus.test_count},
                   {"prior_line_rate", p.corpus.prior_line_rate},
                   {"min_lines", p.corpus.min_lines},
                   {"max_lines", p.corpus.max_lines}};
    j["annotate"] = {{"miss_rate", p.annotate.miss_rate}, {"include_comparison", p.annotate.include_comparison}};
    j["model"] = {{"embed_dim", p.model.embed_dim},
                  {"hidden_dim", p.model.hidden_dim},
                  {"max_context", p.model.max_context}};
    auto train = [](const lm::TrainConfig& c) {
        json t = lm::to_json(c);
        t.erase("seed");
        return t;
    };
    j["pretrain"] = train(p.pretrain);
    j["finetune"] = train(p.finetune);
    j["gammas"] = p.gammas;
    j["eval"] = {{"resamples", p.eval.resamples}, {"max_tokens", p.eval.max_tokens}};
    return j;
}

ExperimentPlan plan_from_json(const json& j, ExperimentPlan p) {
    if (!j.is_object()) {
        throw ConfigError("plan must be a JSON object");
    }
    try {
        p.seed = j.value("seed", p.seed);
        if (j.contains("corpus")) {
            const auto& c = j.at("corpus");
            p.corpus.train_count = c.value("train_count", p.corpus.train_count);
            p.corpus.val_count = c.value("val_count", p.corpus.val_count);
            p.corpus.test_count = c.value("test_count", p.corpus.test_count);
            p.corpus.prior_line_rate = c.value("prior_line_rate", p.corpus.prior_line_rate);
            p.corpus.min_lines = c.value("min_lines", p.corpus.min_lines);
            p.corpus.max_lines = c.value("max_lines", p.corpus.max_lines);
        }
        if (j.contains("annotate")) {
            const auto& a = j.at("annotate");
            p.annotate.miss_rate = a.value("miss_rate", p.annotate.miss_rate);
            p.annotate.include_comparison = a.value("include_comparison", p.annotate.include_comparison);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            p.model.embed_dim = m.value("embed_dim", p.model.embed_dim);
            p.model.hidden_dim = m.value("hidden_dim", p.model.hidden_dim);
            p.model.max_context = m.value("max_context", p.model.max_context);
        }
        if (j.contains("pretrain")) {
            p.pretrain = lm::train_config_from_json(j.at("pretrain"), p.pretrain);
        }
        if (j.contains("finetune")) {
            p.finetune = lm::train_config_from_json(j.at("finetune"), p.finetune);
        }
        if (j.contains("gammas")) {
            p.gammas = j.at("gammas").get<std::vector<double>>();
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            p.eval.resamples = e.value("resamples", p.eval.resamples);
            p.eval.max_tokens = e.value("max_tokens", p.eval.max_tokens);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad plan: ") + e.what());
    }
    return p;
}

ExperimentPlan load_plan(const fs::path& path, ExperimentPlan base) {
    json j;
    try {
        j = read_json(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return plan_from_json(j, base);
}

SplitCorpus generate_split_corpus(const CorpusPlan& plan, std::uint64_t seed) {
    corpus::SynthConfig cfg;
    cfg.seed = seed;
    cfg.report_count = plan.train_count + plan.val_count + plan.test_count;
    cfg.prior_line_rate = plan.prior_line_rate;
    cfg.min_lines = plan.min_lines;
    cfg.max_lines = plan.max_lines;
    auto all = corpus::generate_synthetic_corpus(cfg);
    SplitCorpus out;
    const auto a = all.begin();
    const auto tr = static_cast<std::ptrdiff_t>(plan.train_count);
    const auto va = static_cast<std::ptrdiff_t>(plan.val_count);
    out.train.assign(a, a + tr);
    out.val.assign(a + tr, a + tr + va);
    out.test.assign(a + tr + va, all.end());
    return out;
}

annotate::AnnotationRun annotate_split(const std::vector<corpus::RadiologyReport>& reports, corpus::Split split,
                                       annotate::AnnotatorClient& client) {
    auto kept = corpus::filter_split(reports, corpus::SplitRule::for_split(split));
    if (split == corpus::Split::train) {
        kept = annotate::compar_filter(kept);
    }
    return annotate::annotate_reports(kept, client);
}

annotate::AnnotationRun annotate_split(const std::vector<corpus::RadiologyReport>& reports, corpus::Split split,
                                       double miss_rate, std::uint64_t seed) {
    annotate::RuleBasedClient client({miss_rate, seed});
    return annotate_split(reports, split, client);
}

std::vector<annotate::PreferencePair> build_pairs(const std::vector<annotate::AnnotatedReport>& annotated,
                                                  annotate::PairMode mode, bool include_comparison) {
    std::vector<annotate::PreferencePair> out;
    for (const auto& a : annotated) {
        if (auto p = annotate::build_preference_pair(a.report, a.labels, mode, include_comparison)) {
            out.push_back(std::move(*p));
        }
    }
    return out;
}

EvalSets eval_sets(const std::vector<annotate::PreferencePair>& pairs) {
    EvalSets s;
    for (const auto& p : pairs) {
        s.original.push_back({p.study_id, p.prompt_text, corpus::join_lines(p.dispreferred)});
        s.processed.push_back({p.study_id, p.prompt_text, corpus::join_lines(p.preferred)});
    }
    return s;
}

std::vector<lm::LmExample> preferred_examples(const lm::Vocabulary& vocab,
                                              const std::vector<annotate::PreferencePair>& pairs) {
    std::vector<lm::LmExample> out;
    for (const auto& p : pairs) {
        if (!p.preferred.empty()) {
            out.push_back(lm::make_example(vocab, p.prompt_text, p.preferred));
        }
    }
    return out;
}

std::vector<lm::PairExample> pair_examples(const lm::Vocabulary& vocab,
                                           const std::vector<annotate::PreferencePair>& pairs) {
    std::vector<lm::PairExample> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back(lm::make_pair_example(vocab, p));
    }
    return out;
}

void write_json(const fs::path& path, const json& j, int indent) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + path.string());
        }
        out << j.dump(indent) << '\n';
        if (!out) {
            throw DataError("write failed: " + path.string());
        }
    }
    fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_checkpoint(const fs::path& path, const lm::Checkpoint& ck, const json& meta) {
    json j;
    j["meta"] = meta;
    j["iteration"] = ck.iteration;
    j["metrics"] = {{"accuracy_proxy", ck.metrics.accuracy_proxy},
                    {"avg_prior_lines", ck.metrics.avg_prior_lines}};
    j["model"] = ck.model.to_json();
    write_json(path, j);
}

lm::Checkpoint load_checkpoint(const fs::path& path) {
    const json j = read_json(path);
    try {
        if (!j.contains("model")) {
            return {0, lm::ToyLM::from_json(j), {}};
        }
        lm::CheckpointMetrics m;
        if (j.contains("metrics")) {
            m.accuracy_proxy = j.at("metrics").at("accuracy_proxy").get<double>();
            m.avg_prior_lines = j.at("metrics").at("avg_prior_lines").get<double>();
        }
        return {j.value("iteration", std::size_t{0}), lm::ToyLM::from_json(j.at("model")), m};
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<lm::Checkpoint> load_run(const fs::path& dir) {
    static const std::regex name(R"(ckpt-(\d+)\.json)");
    std::vector<std::pair<std::size_t, fs::path>> files;
    if (!fs::is_directory(dir)) {
        throw DataError("not a run directory: " + dir.string());
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string fname = e.path().filename().string();
        if (std::regex_match(fname, m, name)) {
            files.emplace_back(std::stoul(m[1].str()), e.path());
        }
    }
    if (files.empty()) {
        throw DataError("no checkpoints in " + dir.string());
    }
    std::sort(files.begin(), files.end());
    std::vector<lm::Checkpoint> out;
    for (const auto& [it, p] : files) {
        out.push_back(load_checkpoint(p));
    }
    return out;
}

std::string dpo_run_name(double gamma) {
    std::ostringstream s;
    s << "dpo-g" << gamma;
    return s.str();
}

namespace {

std::string ckpt_name(std::size_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt-%06zu.json", iteration);
    return buf;
}

json meta_for(const std::string& stage, const json& fingerprint) {
    return {{"stage", stage}, {"fingerprint", fingerprint}};
}

/// A stage is done when its sidecar records the same fingerprint.
bool stage_done(const fs::path& sidecar, const json& fingerprint) {
    if (!fs::exists(sidecar)) {
        return false;
    }
    try {
        return read_json(sidecar).value("fingerprint", json{}) == fingerprint;
    } catch (const DataError&) {
        return false;
    }
}

void write_reports_meta(const fs::path& path, const std::vector<corpus::RadiologyReport>& r, const json& meta) {
    corpus::write_reports(path.string(), r);
    write_json(path.string() + ".meta.json", meta, 2);
}

class Runner {
public:
    Runner(const ExperimentPlan& plan, fs::path dir, Log log) : plan_(plan), dir_(std::move(dir)), log_(std::move(log)) {
        plan_.model.seed = mix_seed(plan_.seed, "model");
        plan_.pretrain.seed = mix_seed(plan_.seed, "pretrain");
        plan_.finetune.seed = mix_seed(plan_.seed, "finetune");
    }

    eval::MetricsTable run() {
        stage("gen-corpus", [&] { gen_corpus(); });
        stage("annotate", [&] { annotate(); });
        stage("build-pairs", [&] { build(); });
        stage("pretrain", [&] { pretrain(); });
        stage("sft", [&] { finetune("sft", std::nullopt); });
        for (double g : plan_.gammas) {
            stage(dpo_run_name(g), [&] { finetune(dpo_run_name(g), g); });
        }
        eval::MetricsTable table;
        stage("eval", [&] { table = evaluate(); });
        return table;
    }

private:
    template <class F>
    void stage(const std::string& name, F&& body) {
        try {
            body();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    }

    void say(const std::string& s) const {
        if (log_) {
            log_(s);
        }
    }

    fs::path path(const std::string& rel) const { return dir_ / rel; }

    json corpus_fp() const { return {{"seed", plan_.seed}, {"corpus", to_json(plan_)["corpus"]}}; }
    json annotate_fp() const { return {{"corpus", corpus_fp()}, {"annotate", to_json(plan_)["annotate"]}}; }
    json pretrain_fp() const {
        const json p = to_json(plan_);
        return {{"corpus", corpus_fp()}, {"model", p["model"]}, {"pretrain", p["pretrain"]}};
    }
    json run_fp(const std::string& name, std::optional<double> gamma) const {
        json fp{{"pretrain", pretrain_fp()}, {"pairs", annotate_fp()}, {"finetune", to_json(plan_)["finetune"]},
                {"eval", to_json(plan_)["eval"]["max_tokens"]}, {"run", name}};
        if (gamma) {
            fp["gamma"] = *gamma;
        }
        return fp;
    }

    void gen_corpus() {
        const json fp = corpus_fp();
        if (stage_done(path("corpus/test.jsonl.meta.json"), fp)) {
            say("gen-corpus: up to date");
            return;
        }
        const auto split = generate_split_corpus(plan_.corpus, plan_.seed);
        const json meta = meta_for("gen-corpus", fp);
        fs::create_directories(path("corpus"));
        write_reports_meta(path("corpus/train.jsonl"), split.train, meta);
        write_reports_meta(path("corpus/val.jsonl"), split.val, meta);
        write_reports_meta(path("corpus/test.jsonl"), split.test, meta);
        say("gen-corpus: " + std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
            std::to_string(split.test.size()) + " reports");
    }

    void annotate() {
        const json fp = annotate_fp();
        if (stage_done(path("annotated/test.jsonl.meta.json"), fp)) {
            say("annotate: up to date");
            return;
        }
        const std::uint64_t seed = mix_seed(plan_.seed, "annotate");
        const std::pair<const char*, corpus::Split> splits[] = {
            {"train", corpus::Split::train}, {"val", corpus::Split::validation}, {"test", corpus::Split::test}};
        for (const auto& [name, split] : splits) {
            const auto reports = corpus::read_reports(path(std::string("corpus/") + name + ".jsonl").string());
            const auto run = annotate_split(reports, split, plan_.annotate.miss_rate, seed);
            const fs::path out = path(std::string("annotated/") + name + ".jsonl");
            fs::create_directories(out.parent_path());
            annotate::write_annotated(out.string(), run.annotated);
            json meta = meta_for("annotate", fp);
            meta["malformed"] = run.malformed.size();
            meta["annotated"] = run.annotated.size();
            write_json(out.string() + ".meta.json", meta, 2);
            say(std::string("annotate: ") + name + " " + std::to_string(run.annotated.size()) + " reports, " +
                std::to_string(run.malformed.size()) + " malformed dropped");
        }
    }

    void build() {
        const json fp = annotate_fp();
        if (stage_done(path("pairs/test.jsonl.meta.json"), fp)) {
            say("build-pairs: up to date");
            return;
        }
        const std::pair<const char*, annotate::PairMode> modes[] = {
            {"train", annotate::PairMode::train}, {"val", annotate::PairMode::eval}, {"test", annotate::PairMode::eval}};
        for (const auto& [name, mode] : modes) {
            const auto annotated = annotate::read_annotated(path(std::string("annotated/") + name + ".jsonl").string());
            const auto pairs = build_pairs(annotated, mode, plan_.annotate.include_comparison);
            if (pairs.empty()) {
                throw DataError(std::string("no preference pairs for ") + name);
            }
            const fs::path out = path(std::string("pairs/") + name + ".jsonl");
            fs::create_directories(out.parent_path());
            annotate::write_pairs(out.string(), pairs);
            json meta = meta_for("build-pairs", fp);
            meta["mode"] = mode == annotate::PairMode::train ? "train" : "eval";
            meta["pairs"] = pairs.size();
            write_json(out.string() + ".meta.json", meta, 2);
            say(std::string("build-pairs: ") + name + " " + std::to_string(pairs.size()) + " pairs");
        }
    }

    void pretrain() {
        const json fp = pretrain_fp();
        if (stage_done(path("models/pretrained.meta.json"), fp)) {
            say("pretrain: up to date");
            return;
        }
        const auto train = corpus::read_reports(path("corpus/train.jsonl").string());
        const auto vocab = lm::build_vocabulary(train);
        std::vector<lm::LmExample> examples;
        for (const auto& r : train) {
            if (r.has_any_body()) {
                examples.push_back(lm::make_example(vocab, r, plan_.annotate.include_comparison));
            }
        }
        say("pretrain: " + std::to_string(examples.size()) + " reports, vocabulary " + std::to_string(vocab.size()));
        const std::size_t every = std::max<std::size_t>(1, plan_.pretrain.iterations / 10);
        auto model = lm::pretrain(vocab, plan_.model, examples, plan_.pretrain, [&](std::size_t it, double loss) {
            if (it % every == 0) {
                say("pretrain: iteration " + std::to_string(it) + " loss " + std::to_string(loss));
            }
        });
        json meta = meta_for("pretrain", fp);
        meta["train_config"] = lm::to_json(plan_.pretrain);
        save_checkpoint(path("models/pretrained.json"), {plan_.pretrain.iterations, model, {}}, meta);
        write_json(path("models/pretrained.meta.json"), meta, 2);
    }

    const lm::ToyLM& pretrained() {
        if (!pretrained_) {
            pretrained_ = load_checkpoint(path("models/pretrained.json")).model;
        }
        return *pretrained_;
    }

    void finetune(const std::string& name, std::optional<double> gamma) {
        const json fp = run_fp(name, gamma);
        const fs::path dir = path("runs/" + name);
        if (stage_done(dir / "run.meta.json", fp)) {
            say(name + ": up to date");
            return;
        }
        const auto& base = pretrained();
        const auto train_pairs = annotate::read_pairs(path("pairs/train.jsonl").string());
        const auto val = eval_sets(annotate::read_pairs(path("pairs/val.jsonl").string()));
        lm::ToyLM::DecodeOptions decode;
        decode.max_tokens = plan_.eval.max_tokens;
        auto validator = [&](const lm::ToyLM& m) { return eval::validation_metrics(m, val.processed, decode); };
        lm::TrainConfig cfg = plan_.finetune;
        if (gamma) {
            cfg.gamma = *gamma;
        }
        const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 10);
        auto progress = [&](std::size_t it, double loss) {
            if (it % every == 0) {
                say(name + ": iteration " + std::to_string(it) + " loss " + std::to_string(loss));
            }
        };
        std::vector<lm::Checkpoint> cks;
        json meta = meta_for(name, fp);
        meta["train_config"] = lm::to_json(cfg);
        if (gamma) {
            auto run = lm::dpo_finetune(base, base, pair_examples(base.vocab(), train_pairs), cfg, validator, progress);
            meta["skipped_overflow"] = run.skipped_overflow;
            if (run.skipped_overflow > 0) {
                say(name + ": skipped " + std::to_string(run.skipped_overflow) + " pairs over the context limit");
            }
            cks = std::move(run.checkpoints);
        } else {
            cks = lm::sft_checkpoints(base, preferred_examples(base.vocab(), train_pairs), cfg, validator, progress);
        }
        if (fs::exists(dir)) {
            fs::remove_all(dir);
        }
        fs::create_directories(dir);
        for (const auto& ck : cks) {
            save_checkpoint(dir / ckpt_name(ck.iteration), ck, meta);
            char line[160];
            std::snprintf(line, sizeof line, "%s: checkpoint %zu accuracy_proxy %.4f avg_prior_lines %.4f",
                          name.c_str(), ck.iteration, ck.metrics.accuracy_proxy, ck.metrics.avg_prior_lines);
            say(line);
        }
        const auto& chosen = eval::select_checkpoint(cks);
        meta["selected_iteration"] = chosen.iteration;
        write_json(dir / "selected.json", {{"iteration", chosen.iteration}, {"file", ckpt_name(chosen.iteration)}}, 2);
        write_json(dir / "run.meta.json", meta, 2);
        say(name + ": selected checkpoint " + std::to_string(chosen.iteration));
    }

    eval::MetricsTable evaluate() {
        const auto test = eval_sets(annotate::read_pairs(path("pairs/test.jsonl").string()));
        eval::EvalOptions opts;
        opts.n_resamples = plan_.eval.resamples;
        opts.seed = mix_seed(plan_.seed, "eval");
        opts.decode.max_tokens = plan_.eval.max_tokens;

        eval::MetricsTable table;
        table.push_back(eval::dual_eval("pretrained", pretrained(), test.original, test.processed, opts));
        say("eval: pretrained done");
        std::vector<std::string> runs{"sft"};
        for (double g : plan_.gammas) {
            runs.push_back(dpo_run_name(g));
        }
        for (const auto& name : runs) {
            const fs::path dir = path("runs/" + name);
            const auto sel = read_json(dir / "selected.json");
            const auto ck = load_checkpoint(dir / sel.at("file").get<std::string>());
            auto row = eval::dual_eval(name, ck.model, test.original, test.processed, opts);
            row.checkpoint_iteration = ck.iteration;
            row.accuracy_proxy = ck.metrics.accuracy_proxy;
            row.val_avg_prior_lines = ck.metrics.avg_prior_lines;
            table.push_back(std::move(row));
            say("eval: " + name + " done");
        }
        json out = eval::table_json(table);
        write_json(path("results.json"), out, 2);
        std::ofstream(path("results.txt")) << eval::render_table(table);
        write_json(path("results.meta.json"), meta_for("eval", {{"plan", to_json(plan_)}, {"seed", plan_.seed}}), 2);
        return table;
    }

    ExperimentPlan plan_;
    fs::path dir_;
    Log log_;
    std::optional<lm::ToyLM> pretrained_;
};

}  // namespace

eval::MetricsTable run_pipeline(const ExperimentPlan& plan, const fs::path& work_dir, const Log& log) {
    plan.validate();
    fs::create_directories(work_dir);
    write_json(work_dir / "plan.json", to_json(plan), 2);
    return Runner(plan, work_dir, log).run();
}

}  // namespace reportdpo::pipeline
