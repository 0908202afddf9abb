#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "reportdpo_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string at(const std::string& name) { return (work() / name).string(); }

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string log = at("last_output.txt");
    const std::string cmd = std::string(REPORTDPO_CLI) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::ostringstream s;
    s << in.rdbuf();
    r.out = s.str();
    return r;
}

std::size_t line_count(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        n += !line.empty();
    }
    return n;
}

void write(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run("").code == 1);
    CHECK(run("no-such-command").code == 1);
    CHECK(run("gen-corpus").code == 1);
    CHECK(run("gen-corpus --out " + at("x.jsonl") + " --count abc").code == 1);
    CHECK(run("prior-stats --in " + at("missing.jsonl")).code == 1);
    CHECK(run("--help").code == 0);
}

TEST_CASE("full stage chain through the subcommands") {
    REQUIRE(run("gen-corpus --out " + at("train.jsonl") + " --count 120 --seed 4").code == 0);
    CHECK(line_count(at("train.jsonl")) == 120);
    CHECK(fs::exists(at("train.jsonl") + ".meta.json"));
    REQUIRE(run("gen-corpus --out " + at("test.jsonl") + " --count 30 --seed 5").code == 0);

    auto stats = run("prior-stats --in " + at("train.jsonl") + " --json --resamples 50");
    REQUIRE(stats.code == 0);
    auto j = nlohmann::json::parse(stats.out);
    CHECK(j.at("report_count") == 120);
    CHECK(j.at("avg_lines_with_prior").get<double>() > 0.0);

    REQUIRE(run("annotate --in " + at("train.jsonl") + " --out " + at("train.ann.jsonl") + " --split train").code == 0);
    REQUIRE(run("annotate --in " + at("test.jsonl") + " --out " + at("test.ann.jsonl") + " --split test").code == 0);
    REQUIRE(run("build-pairs --in " + at("train.ann.jsonl") + " --out " + at("train.pairs.jsonl")).code == 0);
    REQUIRE(run("build-pairs --in " + at("test.ann.jsonl") + " --out " + at("test.pairs.jsonl") +
                " --mode eval --original-out " + at("test.orig.jsonl") + " --processed-out " + at("test.proc.jsonl"))
                .code == 0);
    CHECK(line_count(at("test.orig.jsonl")) == line_count(at("test.proc.jsonl")));

    REQUIRE(run("pretrain --corpus " + at("train.jsonl") + " --out " + at("pre.json") +
                " --embed-dim 6 --hidden-dim 8 --iterations 20 --warmup 2 --checkpoint-every 20")
                .code == 0);
    REQUIRE(run("sft --init " + at("pre.json") + " --pairs " + at("train.pairs.jsonl") + " --val " +
                at("test.pairs.jsonl") + " --out-dir " + at("sft") +
                " --iterations 4 --warmup 1 --checkpoint-every 2 --val-max-tokens 20")
                .code == 0);
    REQUIRE(run("dpo --init " + at("pre.json") + " --pairs " + at("train.pairs.jsonl") + " --val " +
                at("test.pairs.jsonl") + " --out-dir " + at("dpo") +
                " --gamma 0.5 --iterations 4 --warmup 1 --checkpoint-every 2 --val-max-tokens 20")
                .code == 0);
    CHECK(fs::exists(at("dpo/ckpt-000002.json")));
    CHECK(fs::exists(at("dpo/ckpt-000004.json")));

    auto sel = run("select-checkpoint --run " + at("dpo") + " --out " + at("dpo.best.json"));
    REQUIRE(sel.code == 0);
    CHECK(fs::exists(at("dpo.best.json")));

    REQUIRE(run("eval --ckpt " + at("dpo.best.json") + " --test-original " + at("test.orig.jsonl") +
                " --test-processed " + at("test.proc.jsonl") + " --resamples 50 --max-tokens 20 --name dpo --out " +
                at("results.json"))
                .code == 0);
    REQUIRE(run("eval --ckpt " + at("pre.json") + " --test-original " + at("test.orig.jsonl") +
                " --test-processed " + at("test.proc.jsonl") + " --resamples 50 --max-tokens 20 --name pre --out " +
                at("results.json"))
                .code == 0);
    std::ifstream results(at("results.json"));
    auto table = nlohmann::json::parse(results);
    REQUIRE(table.size() == 2);
    CHECK(table[0].at("experiment") == "dpo");
    CHECK(table[1].at("experiment") == "pre");

    REQUIRE(run("generate --ckpt " + at("pre.json") + " --in " + at("test.jsonl") + " --out " + at("gen.jsonl") +
                " --max-tokens 10")
                .code == 0);
    CHECK(line_count(at("gen.jsonl")) == 30);
}

TEST_CASE("prior-stats on plain text") {
    write(at("plain.txt"), "Cardiac size is unchanged.\nLungs are clear. Heart is normal.\n");
    auto r = run("prior-stats --in " + at("plain.txt") + " --text --json --resamples 20");
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("avg_lines_with_prior").get<double>() == 0.5);
    CHECK(j.at("pct_reports_with_prior").get<double>() == 50.0);
}

TEST_CASE("bad data exits with 2") {
    write(at("broken.jsonl"), "{\"study_id\": \"a\", \"findings\": \"Lungs clear.\"}\nnot json\n");
    CHECK(run("prior-stats --in " + at("broken.jsonl")).code == 2);
    CHECK(run("annotate --in " + at("broken.jsonl") + " --out " + at("broken.ann.jsonl")).code == 2);
    write(at("empty.jsonl"), "");
    CHECK(run("prior-stats --in " + at("empty.jsonl")).code == 2);
}

TEST_CASE("invalid configuration exits with 1") {
    REQUIRE(fs::exists(at("pre.json")));
    CHECK(run("dpo --init " + at("pre.json") + " --pairs " + at("train.pairs.jsonl") + " --out-dir " +
              at("bad") + " --gamma 1.5 --iterations 2 --warmup 1 --checkpoint-every 1")
              .code == 1);
    CHECK(run("sft --init " + at("pre.json") + " --pairs " + at("train.pairs.jsonl") + " --out-dir " + at("bad") +
              " --iterations 5 --checkpoint-every 2")
              .code == 1);
}

TEST_CASE("run-all stage failure exits with 3") {
    write(at("plan.json"), R"({"seed": 3, "corpus": {"train_count": 100, "val_count": 10, "test_count": 10},
        "model": {"embed_dim": 6, "hidden_dim": 8},
        "pretrain": {"iterations": 10, "warmup_iterations": 2, "checkpoint_every": 10},
        "finetune": {"iterations": 0, "warmup_iterations": 0, "checkpoint_every": 1},
        "eval": {"resamples": 20, "max_tokens": 20}})");
    REQUIRE(run("run-all --config " + at("plan.json") + " --work-dir " + at("runall")).code == 0);
    CHECK(fs::exists(at("runall/results.json")));
    write(at("runall/models/pretrained.json"), "{ truncated");
    fs::remove_all(at("runall/runs"));
    auto r = run("run-all --config " + at("plan.json") + " --work-dir " + at("runall"));
    CHECK(r.code == 3);
    CHECK(r.out.find("sft") != std::string::npos);
    write(at("badplan.json"), R"({"gammas": [2.0]})");
    CHECK(run("run-all --config " + at("badplan.json") + " --work-dir " + at("runall2")).code == 1);
}
