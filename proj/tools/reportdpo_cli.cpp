// reportdpo: synthetic report corpus, prior-exam annotation, preference pairs,
// toy LM training (pretrain / SFT / weighted DPO) and dual evaluation.
//
// Exit codes: 0 ok, 1 usage or config, 2 bad input data, 3 stage failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "reportdpo/annotate.hpp"
#include "reportdpo/corpus.hpp"
#include "reportdpo/error.hpp"
#include "reportdpo/evalharness.hpp"
#include "reportdpo/pipeline.hpp"
#include "reportdpo/priordetect.hpp"
#include "reportdpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace reportdpo;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kStage = 3 };

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Training flags; unset ones leave the config-file value alone.
struct TrainFlags {
    std::optional<std::size_t> iterations, warmup, batch, checkpoint_every;
    std::optional<double> lr, weight_decay, beta, gamma;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> loss;

    void add(CLI::App* app) {
        app->add_option("--iterations", iterations, "Training iterations");
        app->add_option("--warmup", warmup, "Linear warmup iterations");
        app->add_option("--batch-size", batch, "Batch size");
        app->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval");
        app->add_option("--lr", lr, "Peak learning rate");
        app->add_option("--weight-decay", weight_decay, "RMSprop weight decay");
        app->add_option("--seed", seed, "Training seed");
    }

    void add_dpo(CLI::App* app) {
        app->add_option("--beta", beta, "DPO beta");
        app->add_option("--gamma", gamma, "Weight on irrelevant tokens, in [0, 1]");
        app->add_option("--loss", loss, "weighted or standard")->check(CLI::IsMember({"weighted", "standard"}));
    }

    lm::TrainConfig apply(lm::TrainConfig c) const {
        if (iterations) c.iterations = *iterations;
        if (warmup) c.warmup_iterations = *warmup;
        if (batch) c.batch_size = *batch;
        if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
        if (lr) c.peak_lr = *lr;
        if (weight_decay) c.weight_decay = *weight_decay;
        if (beta) c.beta = *beta;
        if (gamma) c.gamma = *gamma;
        if (seed) c.seed = *seed;
        if (loss) c.loss_mode = *loss == "standard" ? lm::LossMode::standard : lm::LossMode::weighted;
        if (c.warmup_iterations > c.iterations) c.warmup_iterations = c.iterations;
        c.validate();
        return c;
    }
};

pipeline::ExperimentPlan plan_from(const std::string& config_path) {
    return config_path.empty() ? pipeline::ExperimentPlan{} : pipeline::load_plan(config_path);
}

corpus::Split parse_split(const std::string& s) {
    if (s == "train") return corpus::Split::train;
    if (s == "validation" || s == "val") return corpus::Split::validation;
    return corpus::Split::test;
}

std::vector<lm::Checkpoint> dump_run(const fs::path& dir, const std::vector<lm::Checkpoint>& cks, const json& meta) {
    fs::create_directories(dir);
    for (const auto& ck : cks) {
        char name[32];
        std::snprintf(name, sizeof name, "ckpt-%06zu.json", ck.iteration);
        pipeline::save_checkpoint(dir / name, ck, meta);
        std::printf("checkpoint %zu  accuracy_proxy %.4f  avg_prior_lines %.4f\n", ck.iteration,
                    ck.metrics.accuracy_proxy, ck.metrics.avg_prior_lines);
    }
    return cks;
}

lm::Validator validator_for(const std::string& val_pairs, std::size_t max_tokens) {
    if (val_pairs.empty()) {
        return {};
    }
    auto sets = std::make_shared<pipeline::EvalSets>(pipeline::eval_sets(annotate::read_pairs(val_pairs)));
    return [sets, max_tokens](const lm::ToyLM& m) {
        lm::ToyLM::DecodeOptions d;
        d.max_tokens = max_tokens;
        return eval::validation_metrics(m, sets->processed, d);
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prior-exam suppression with weighted DPO on a toy report generator"};
    app.require_subcommand(1);
    std::function<int()> action;

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic report corpus (NDJSON)");
    corpus::SynthConfig synth;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Output file")->required();
    gen->add_option("--count", synth.report_count, "Number of reports")->capture_default_str();
    gen->add_option("--prior-rate", synth.prior_line_rate, "Probability a line references a prior")->capture_default_str();
    gen->add_option("--min-lines", synth.min_lines)->capture_default_str();
    gen->add_option("--max-lines", synth.max_lines)->capture_default_str();
    gen->add_option("--seed", synth.seed)->capture_default_str();
    gen->callback([&] {
        action = [&] {
            const auto reports = corpus::generate_synthetic_corpus(synth);
            corpus::write_reports(gen_out, reports);
            pipeline::write_json(gen_out + ".meta.json",
                                 {{"stage", "gen-corpus"},
                                  {"seed", synth.seed},
                                  {"count", synth.report_count},
                                  {"prior_line_rate", synth.prior_line_rate},
                                  {"min_lines", synth.min_lines},
                                  {"max_lines", synth.max_lines}},
                                 2);
            std::printf("wrote %zu reports to %s\n", reports.size(), gen_out.c_str());
            return kOk;
        };
    });

    // annotate
    auto* ann = app.add_subcommand("annotate", "Label prior-exam lines with the rule-based annotator");
    std::string ann_in, ann_out, ann_split = "train", ann_malformed, ann_backend = "rules", ann_responses;
    double miss_rate = 0.2;
    std::uint64_t ann_seed = 0;
    ann->add_option("--in", ann_in, "Report corpus (NDJSON)")->required()->check(CLI::ExistingFile);
    ann->add_option("--out", ann_out, "Annotated reports (NDJSON)")->required();
    ann->add_option("--split", ann_split, "train applies the \"compar\" filter; validation/test need both sections")
        ->check(CLI::IsMember({"train", "validation", "val", "test"}))
        ->capture_default_str();
    ann->add_option("--miss-rate", miss_rate, "Chance a prior line is left unlabeled")->capture_default_str();
    ann->add_option("--seed", ann_seed)->capture_default_str();
    ann->add_option("--backend", ann_backend, "rules: offline annotator; file: replay recorded responses")
        ->check(CLI::IsMember({"rules", "file"}))
        ->capture_default_str();
    ann->add_option("--responses", ann_responses, "Recorded {prompt, response} lines for --backend file")
        ->check(CLI::ExistingFile);
    ann->add_option("--malformed-out", ann_malformed, "Write malformed responses here for manual fixing");
    ann->callback([&] {
        action = [&] {
            const auto reports = corpus::read_reports(ann_in);
            annotate::AnnotationRun run;
            if (ann_backend == "file") {
                if (ann_responses.empty()) throw ConfigError("--backend file needs --responses");
                auto client = annotate::ReplayClient::load(ann_responses);
                run = pipeline::annotate_split(reports, parse_split(ann_split), client);
            } else {
                run = pipeline::annotate_split(reports, parse_split(ann_split), miss_rate, ann_seed);
            }
            annotate::write_annotated(ann_out, run.annotated);
            if (!ann_malformed.empty()) {
                std::ofstream out(ann_malformed);
                for (const auto& m : run.malformed) {
                    out << json{{"study_id", m.study_id}, {"kind", annotate::to_string(m.kind)}, {"message", m.message},
                                {"prompt", m.prompt}, {"response", m.response}}
                               .dump()
                        << '\n';
                }
            }
            pipeline::write_json(ann_out + ".meta.json",
                                 {{"stage", "annotate"}, {"split", ann_split}, {"miss_rate", miss_rate},
                                  {"seed", ann_seed}, {"annotated", run.annotated.size()},
                                  {"malformed", run.malformed.size()}},
                                 2);
            const auto freq = annotate::label_frequency_report(run.annotated);
            std::cout << annotate::render_label_frequency(freq);
            std::printf("annotated %zu reports, %zu malformed\n", run.annotated.size(), run.malformed.size());
            return kOk;
        };
    });

    // build-pairs
    auto* bp = app.add_subcommand("build-pairs", "Build preference pairs from annotated reports");
    std::string bp_in, bp_out, bp_mode = "train", bp_orig, bp_proc;
    bool no_comparison = false;
    bp->add_option("--in", bp_in, "Annotated reports")->required()->check(CLI::ExistingFile);
    bp->add_option("--out", bp_out, "Pairs (NDJSON)")->required();
    bp->add_option("--mode", bp_mode, "train or eval")->check(CLI::IsMember({"train", "eval"}))->capture_default_str();
    bp->add_flag("--no-comparison", no_comparison, "Leave the comparison section out of prompts");
    bp->add_option("--original-out", bp_orig, "Also write the paired original reports");
    bp->add_option("--processed-out", bp_proc, "Also write the paired processed reports");
    bp->callback([&] {
        action = [&] {
            const auto annotated = annotate::read_annotated(bp_in);
            const auto mode = bp_mode == "eval" ? annotate::PairMode::eval : annotate::PairMode::train;
            std::vector<annotate::PreferencePair> pairs;
            std::vector<corpus::RadiologyReport> originals, processed;
            for (const auto& a : annotated) {
                if (auto p = annotate::build_preference_pair(a.report, a.labels, mode, !no_comparison)) {
                    pairs.push_back(std::move(*p));
                    originals.push_back(a.report);
                    processed.push_back(annotate::apply_labels(a.report, a.labels));
                }
            }
            annotate::write_pairs(bp_out, pairs);
            if (!bp_orig.empty()) corpus::write_reports(bp_orig, originals);
            if (!bp_proc.empty()) corpus::write_reports(bp_proc, processed);
            pipeline::write_json(bp_out + ".meta.json",
                                 {{"stage", "build-pairs"}, {"mode", bp_mode}, {"include_comparison", !no_comparison},
                                  {"pairs", pairs.size()}},
                                 2);
            std::printf("built %zu pairs from %zu annotated reports\n", pairs.size(), annotated.size());
            return kOk;
        };
    });

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Next-token pretraining of a fresh model");
    std::string pre_corpus, pre_out, pre_config;
    std::optional<std::size_t> embed_dim, hidden_dim, max_context;
    std::optional<std::uint64_t> model_seed;
    TrainFlags pre_flags;
    pre->add_option("--corpus", pre_corpus, "Training reports (NDJSON)")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out, "Model checkpoint file")->required();
    pre->add_option("--config", pre_config, "Plan file; its model and pretrain sections are used");
    pre->add_option("--embed-dim", embed_dim);
    pre->add_option("--hidden-dim", hidden_dim);
    pre->add_option("--max-context", max_context);
    pre->add_option("--model-seed", model_seed, "Parameter initialization seed");
    pre_flags.add(pre);
    pre->callback([&] {
        action = [&] {
            const auto plan = plan_from(pre_config);
            lm::ModelConfig mc = plan.model;
            if (embed_dim) mc.embed_dim = *embed_dim;
            if (hidden_dim) mc.hidden_dim = *hidden_dim;
            if (max_context) mc.max_context = *max_context;
            if (model_seed) mc.seed = *model_seed;
            const auto cfg = pre_flags.apply(plan.pretrain);
            const auto reports = corpus::read_reports(pre_corpus);
            const auto vocab = lm::build_vocabulary(reports);
            std::vector<lm::LmExample> ex;
            for (const auto& r : reports) {
                if (r.has_any_body()) ex.push_back(lm::make_example(vocab, r));
            }
            const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 10);
            auto model = lm::pretrain(vocab, mc, ex, cfg, [&](std::size_t it, double loss) {
                if (it % every == 0) std::fprintf(stderr, "iteration %zu loss %.4f\n", it, loss);
            });
            pipeline::save_checkpoint(pre_out, {cfg.iterations, model, {}},
                                      {{"stage", "pretrain"}, {"train_config", lm::to_json(cfg)}});
            std::printf("pretrained %zu parameters, vocabulary %zu, final NLL %.4f\n", model.parameter_count(),
                        vocab.size(), lm::mean_nll(model, ex));
            return kOk;
        };
    });

    // sft
    auto* sft = app.add_subcommand("sft", "Supervised fine-tuning on the preferred responses of pairs");
    std::string sft_init, sft_pairs, sft_val, sft_dir, sft_config;
    std::size_t val_tokens = 96;
    TrainFlags sft_flags;
    sft->add_option("--init", sft_init, "Starting checkpoint")->required()->check(CLI::ExistingFile);
    sft->add_option("--pairs", sft_pairs, "Training pairs")->required()->check(CLI::ExistingFile);
    sft->add_option("--val", sft_val, "Validation pairs (eval mode) for checkpoint metrics");
    sft->add_option("--out-dir", sft_dir, "Run directory for checkpoints")->required();
    sft->add_option("--config", sft_config, "Plan file; its finetune section is used");
    sft->add_option("--val-max-tokens", val_tokens)->capture_default_str();
    sft_flags.add(sft);
    sft->callback([&] {
        action = [&] {
            const auto cfg = sft_flags.apply(plan_from(sft_config).finetune);
            const auto base = pipeline::load_checkpoint(sft_init).model;
            const auto ex = pipeline::preferred_examples(base.vocab(), annotate::read_pairs(sft_pairs));
            auto cks = lm::sft_checkpoints(base, ex, cfg, validator_for(sft_val, val_tokens));
            dump_run(sft_dir, cks, {{"stage", "sft"}, {"train_config", lm::to_json(cfg)}});
            return kOk;
        };
    });

    // dpo
    auto* dp = app.add_subcommand("dpo", "Weighted DPO fine-tuning against the frozen starting model");
    std::string dp_init, dp_ref, dp_pairs, dp_val, dp_dir, dp_config;
    TrainFlags dp_flags;
    dp->add_option("--init", dp_init, "Starting checkpoint (also the reference unless --ref)")
        ->required()
        ->check(CLI::ExistingFile);
    dp->add_option("--ref", dp_ref, "Reference checkpoint")->check(CLI::ExistingFile);
    dp->add_option("--pairs", dp_pairs, "Training pairs")->required()->check(CLI::ExistingFile);
    dp->add_option("--val", dp_val, "Validation pairs (eval mode) for checkpoint metrics");
    dp->add_option("--out-dir", dp_dir, "Run directory for checkpoints")->required();
    dp->add_option("--config", dp_config, "Plan file; its finetune section is used");
    dp->add_option("--val-max-tokens", val_tokens)->capture_default_str();
    dp_flags.add(dp);
    dp_flags.add_dpo(dp);
    dp->callback([&] {
        action = [&] {
            const auto cfg = dp_flags.apply(plan_from(dp_config).finetune);
            const auto policy = pipeline::load_checkpoint(dp_init).model;
            const auto ref = dp_ref.empty() ? policy : pipeline::load_checkpoint(dp_ref).model;
            const auto pairs = pipeline::pair_examples(policy.vocab(), annotate::read_pairs(dp_pairs));
            const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 10);
            auto run = lm::dpo_finetune(policy, ref, pairs, cfg, validator_for(dp_val, val_tokens),
                                        [&](std::size_t it, double loss) {
                                            if (it % every == 0) std::fprintf(stderr, "iteration %zu loss %.4f\n", it, loss);
                                        });
            if (run.skipped_overflow > 0) {
                std::fprintf(stderr, "skipped %zu pairs over the context limit\n", run.skipped_overflow);
            }
            dump_run(dp_dir, run.checkpoints,
                     {{"stage", "dpo"}, {"train_config", lm::to_json(cfg)}, {"skipped_overflow", run.skipped_overflow}});
            return kOk;
        };
    });

    // select-checkpoint
    auto* sel = app.add_subcommand("select-checkpoint", "Pick the checkpoint with the best mean rank");
    std::string sel_dir, sel_out;
    sel->add_option("--run", sel_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    sel->add_option("--out", sel_out, "Copy the chosen checkpoint here");
    sel->callback([&] {
        action = [&] {
            const auto cks = pipeline::load_run(sel_dir);
            const auto& c = eval::select_checkpoint(cks);
            char name[32];
            std::snprintf(name, sizeof name, "ckpt-%06zu.json", c.iteration);
            pipeline::write_json(fs::path(sel_dir) / "selected.json", {{"iteration", c.iteration}, {"file", name}}, 2);
            if (!sel_out.empty()) {
                fs::copy_file(fs::path(sel_dir) / name, sel_out, fs::copy_options::overwrite_existing);
            }
            std::printf("selected iteration %zu (%s)\n", c.iteration, name);
            return kOk;
        };
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Generate on the test prompts and score against both reference sets");
    std::string ev_ckpt, ev_orig, ev_proc, ev_name = "model", ev_out;
    eval::EvalOptions ev_opts;
    ev->add_option("--ckpt", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--test-original", ev_orig, "Original test reports")->required()->check(CLI::ExistingFile);
    ev->add_option("--test-processed", ev_proc, "Processed test reports, same studies")->required()->check(CLI::ExistingFile);
    ev->add_option("--resamples", ev_opts.n_resamples)->capture_default_str();
    ev->add_option("--seed", ev_opts.seed)->capture_default_str();
    ev->add_option("--max-tokens", ev_opts.decode.max_tokens)->capture_default_str();
    ev->add_option("--name", ev_name, "Experiment name for the row")->capture_default_str();
    ev->add_option("--out", ev_out, "Append the row to this results file (JSON array)");
    ev->callback([&] {
        action = [&] {
            const auto model = pipeline::load_checkpoint(ev_ckpt);
            const auto orig = eval::eval_examples(corpus::read_reports(ev_orig));
            const auto proc = eval::eval_examples(corpus::read_reports(ev_proc));
            auto row = eval::dual_eval(ev_name, model.model, orig, proc, ev_opts);
            eval::MetricsTable table;
            if (!ev_out.empty() && fs::exists(ev_out)) {
                table = eval::table_from_json(pipeline::read_json(ev_out));
            }
            table.push_back(row);
            if (!ev_out.empty()) pipeline::write_json(ev_out, eval::table_json(table), 2);
            std::cout << eval::render_table({row});
            return kOk;
        };
    });

    // run-all
    auto* all = app.add_subcommand("run-all", "Full experiment matrix: pretrained, SFT, DPO for each gamma");
    std::string all_config, all_dir = "work";
    std::optional<std::uint64_t> all_seed;
    std::optional<std::size_t> all_train, all_pre_it, all_ft_it;
    all->add_option("--config", all_config, "Plan file (JSON)");
    all->add_option("--work-dir", all_dir, "Artifacts directory")->capture_default_str();
    all->add_option("--seed", all_seed, "Plan seed");
    all->add_option("--train-count", all_train, "Training reports");
    all->add_option("--pretrain-iterations", all_pre_it);
    all->add_option("--finetune-iterations", all_ft_it);
    all->callback([&] {
        action = [&] {
            auto plan = plan_from(all_config);
            if (all_seed) plan.seed = *all_seed;
            if (all_train) plan.corpus.train_count = *all_train;
            if (all_pre_it) {
                plan.pretrain.iterations = *all_pre_it;
                plan.pretrain.warmup_iterations = std::min(plan.pretrain.warmup_iterations, *all_pre_it);
                plan.pretrain.checkpoint_every = std::max<std::size_t>(1, *all_pre_it);
            }
            if (all_ft_it) {
                plan.finetune.iterations = *all_ft_it;
                plan.finetune.warmup_iterations = std::min(plan.finetune.warmup_iterations, *all_ft_it);
                if (*all_ft_it > 0 && *all_ft_it % plan.finetune.checkpoint_every != 0) {
                    plan.finetune.checkpoint_every = *all_ft_it;
                }
            }
            const auto table = pipeline::run_pipeline(plan, all_dir, log_line);
            std::cout << eval::render_table(table);
            return kOk;
        };
    });

    // prior-stats
    auto* ps = app.add_subcommand("prior-stats", "Prior-exam line statistics of a report file");
    std::string ps_in, ps_keywords;
    bool ps_text = false, ps_json = false;
    std::size_t ps_resamples = 1000;
    std::uint64_t ps_seed = 0;
    ps->add_option("--in", ps_in, "Reports (NDJSON), or one report per line with --text")->required()->check(CLI::ExistingFile);
    ps->add_flag("--text", ps_text, "Input is plain text, one report per line");
    ps->add_flag("--json", ps_json, "Print JSON instead of text");
    ps->add_option("--keywords", ps_keywords, "Keyword list file")->check(CLI::ExistingFile);
    ps->add_option("--resamples", ps_resamples)->capture_default_str();
    ps->add_option("--seed", ps_seed)->capture_default_str();
    ps->callback([&] {
        action = [&] {
            std::vector<std::string> texts;
            if (ps_text) {
                std::ifstream in(ps_in);
                for (std::string line; std::getline(in, line);) texts.push_back(line);
            } else {
                for (const auto& r : corpus::read_reports(ps_in)) texts.push_back(corpus::report_text(r));
            }
            const auto kw = ps_keywords.empty() ? detect::KeywordSet::standard() : detect::KeywordSet::load(ps_keywords);
            const auto st = detect::corpus_prior_stats(texts, ps_seed, ps_resamples, kw);
            if (ps_json) {
                std::cout << json{{"report_count", st.report_count},
                                  {"avg_lines_with_prior", st.avg_lines_with_prior},
                                  {"ci_lines", {st.ci_lines.lo, st.ci_lines.hi}},
                                  {"pct_reports_with_prior", st.pct_reports_with_prior},
                                  {"ci_pct", {st.ci_pct.lo, st.ci_pct.hi}}}
                                 .dump(2)
                          << '\n';
                return kOk;
            }
            std::printf("reports                 %zu\n", st.report_count);
            std::printf("avg lines with prior    %s\n",
                        eval::format_estimate({st.avg_lines_with_prior, st.ci_lines}).c_str());
            std::printf("%% reports with prior    %s\n",
                        eval::format_estimate({st.pct_reports_with_prior, st.ci_pct}).c_str());
            return kOk;
        };
    });

    // generate
    auto* gn = app.add_subcommand("generate", "Generate reports for the prompts of a report file");
    std::string gn_ckpt, gn_in, gn_out;
    lm::ToyLM::DecodeOptions gn_opts;
    gn->add_option("--ckpt", gn_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    gn->add_option("--in", gn_in, "Reports (NDJSON) whose indication/comparison form the prompts")->required()->check(CLI::ExistingFile);
    gn->add_option("--out", gn_out, "Generations (NDJSON)")->required();
    gn->add_option("--max-tokens", gn_opts.max_tokens)->capture_default_str();
    gn->add_option("--temperature", gn_opts.temperature, "0 is greedy")->capture_default_str();
    gn->add_option("--seed", gn_opts.seed)->capture_default_str();
    gn->callback([&] {
        action = [&] {
            const auto model = pipeline::load_checkpoint(gn_ckpt).model;
            std::ofstream out(gn_out);
            if (!out) throw DataError("cannot write " + gn_out);
            std::size_t n = 0;
            for (const auto& r : corpus::read_reports(gn_in)) {
                const auto prompt = corpus::prompt_text(r);
                out << json{{"study_id", r.study_id}, {"prompt", prompt}, {"generated", model.generate(prompt, gn_opts)}}
                           .dump()
                    << '\n';
                ++n;
            }
            std::printf("generated %zu reports\n", n);
            return kOk;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    try {
        return action();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const pipeline::StageError& e) {
        std::cerr << "stage failed: " << e.what() << '\n';
        return kStage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return kStage;
    }
}
