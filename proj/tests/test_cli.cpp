// End-to-end tests of the vegn binary. The build passes its location through
// the VEGN_CLI environment variable.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
    const char* env = std::getenv("VEGN_CLI");
    REQUIRE(env != nullptr);
    return env;
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "vegn-cli-tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args) {
    const auto dir = work_dir();
    const auto out_file = dir / "stdout.txt";
    const auto err_file = dir / "stderr.txt";
    const std::string cmd = cli_path() + " " + args + " > " + out_file.string() + " 2> " +
                            err_file.string();
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

const std::string kSmallConfig = R"({
  "epochs": 5, "batch_size": 64, "initial_lr": 0.01, "eval_fraction": 0.2,
  "model": {"gene_dim": 8, "variant_dim": 12, "random_features": 32}
})";

}  // namespace

TEST_CASE("synth / train / predict / eval pipeline", "[cli]") {
    const auto dir = work_dir() / "pipeline";
    fs::create_directories(dir);
    const auto data_dir = dir / "data";

    auto synth = run("synth --genes 20 --modules 4 --variants-per-gene 6 --edge-prob 0.4 "
                     "--noise-sd 0.5 --flip-prob 0.0 --seed 5 --out-dir " + data_dir.string());
    REQUIRE(synth.exit_code == 0);
    REQUIRE(fs::exists(data_dir / "variants.tsv"));
    REQUIRE(fs::exists(data_dir / "gene_edges.tsv"));
    REQUIRE(fs::exists(data_dir / "genes.txt"));

    write_file(dir / "config.json", kSmallConfig);
    const std::string ckpt = (dir / "model.vegn").string();
    auto train = run("train --variants " + (data_dir / "variants.tsv").string() +
                     " --gene-edges " + (data_dir / "gene_edges.tsv").string() + " --genes " +
                     (data_dir / "genes.txt").string() + " --mode given --config " +
                     (dir / "config.json").string() + " --out " + ckpt + " --report " +
                     (dir / "report.jsonl").string() + " --seed 7");
    INFO(train.err);
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(ckpt));
    CHECK(train.out.find("final eval_auroc") != std::string::npos);

    // report has one JSON line per epoch
    {
        std::ifstream rep(dir / "report.jsonl");
        std::string line;
        int lines = 0;
        while (std::getline(rep, line)) {
            if (!line.empty()) ++lines;
        }
        CHECK(lines == 5);
    }

    const std::string preds = (dir / "preds.jsonl").string();
    auto predict = run("predict --model " + ckpt + " --variants " +
                       (data_dir / "variants.tsv").string() + " --out " + preds);
    INFO(predict.err);
    REQUIRE(predict.exit_code == 0);

    auto eval = run("eval --predictions " + preds);
    INFO(eval.err);
    REQUIRE(eval.exit_code == 0);
    REQUIRE(eval.out.find("auROC ") != std::string::npos);
    const double auc = std::stod(eval.out.substr(eval.out.find("auROC ") + 6));
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);

    SECTION("rerunning with identical flags and seed is byte-identical") {
        const std::string ckpt2 = (dir / "model2.vegn").string();
        auto train2 = run("train --variants " + (data_dir / "variants.tsv").string() +
                          " --gene-edges " + (data_dir / "gene_edges.tsv").string() + " --genes " +
                          (data_dir / "genes.txt").string() + " --mode given --config " +
                          (dir / "config.json").string() + " --out " + ckpt2 + " --seed 7");
        REQUIRE(train2.exit_code == 0);
        CHECK(slurp(ckpt) == slurp(ckpt2));

        const std::string preds2 = (dir / "preds2.jsonl").string();
        auto predict2 = run("predict --model " + ckpt2 + " --variants " +
                            (data_dir / "variants.tsv").string() + " --out " + preds2);
        REQUIRE(predict2.exit_code == 0);
        CHECK(slurp(preds) == slurp(preds2));
    }

    SECTION("attention export works on the trained model") {
        const std::string att = (dir / "attention.jsonl").string();
        auto attention = run("attention --model " + ckpt + " --variants " +
                             (data_dir / "variants.tsv").string() + " --top-k 3 --out " + att);
        INFO(attention.err);
        REQUIRE(attention.exit_code == 0);
        std::ifstream in(att);
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line.find("\"layer\"") != std::string::npos);
        CHECK(line.find("\"neighbors\"") != std::string::npos);
    }

    SECTION("learnt mode trains and predicts too") {
        const std::string ckpt_l = (dir / "model-learnt.vegn").string();
        auto train_l = run("train --variants " + (data_dir / "variants.tsv").string() +
                           " --gene-edges " + (data_dir / "gene_edges.tsv").string() +
                           " --genes " + (data_dir / "genes.txt").string() +
                           " --mode learnt --config " + (dir / "config.json").string() +
                           " --out " + ckpt_l + " --seed 7");
        INFO(train_l.err);
        REQUIRE(train_l.exit_code == 0);
        const std::string preds_l = (dir / "preds-learnt.jsonl").string();
        auto predict_l = run("predict --model " + ckpt_l + " --variants " +
                             (data_dir / "variants.tsv").string() + " --out " + preds_l);
        REQUIRE(predict_l.exit_code == 0);
    }
}

TEST_CASE("predict rejects a checkpoint with a mismatched version", "[cli]") {
    const auto dir = work_dir() / "badckpt";
    fs::create_directories(dir);
    // valid magic, unsupported version
    const auto path = dir / "bad.vegn";
    {
        std::ofstream out(path, std::ios::binary);
        out << "VEGN";
        const char version99[4] = {99, 0, 0, 0};
        out.write(version99, 4);
        out << std::string(32, '\0');
    }
    write_file(dir / "v.tsv",
               "variant_id\tchrom\tpos\tref\talt\tgene_id\tfeat_x\tlabel\n"
               "V1\tchr1\t1\tA\tC\tG1\t0.5\t1\n");
    auto r = run("predict --model " + path.string() + " --variants " + (dir / "v.tsv").string() +
                 " --out " + (dir / "p.jsonl").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("error: incompatibility:") != std::string::npos);
}

TEST_CASE("eval with a single class fails with the degenerate-metric class", "[cli]") {
    const auto dir = work_dir() / "degenerate";
    fs::create_directories(dir);
    write_file(dir / "preds.jsonl",
               "{\"variant_id\":\"V1\",\"score\":0.9,\"label\":1}\n"
               "{\"variant_id\":\"V2\",\"score\":0.8,\"label\":1}\n");
    auto r = run("eval --predictions " + (dir / "preds.jsonl").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("error: degenerate-metric:") != std::string::npos);
}

TEST_CASE("unknown flags are rejected", "[cli]") {
    auto r = run("synth --does-not-exist 1 --out-dir /tmp/x");
    CHECK(r.exit_code != 0);
}

TEST_CASE("file errors carry the io error class and path", "[cli]") {
    auto r = run("eval --predictions /definitely/not/here.jsonl");
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("error: io:") != std::string::npos);
    CHECK(r.err.find("/definitely/not/here.jsonl") != std::string::npos);
}

TEST_CASE("bench-attention emits CSV with error columns at small sizes", "[cli]") {
    auto r = run("bench-attention --genes 64,128 --dim 8 --features 64 --repeats 2 --seed 3");
    REQUIRE(r.exit_code == 0);
    std::istringstream in(r.out);
    std::string header;
    // first line may be the generated-seed echo; --seed was given so header is first
    REQUIRE(std::getline(in, header));
    CHECK(header == "genes,dim,features,repeat,favor_ms,exact_ms,rel_frob_err");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 6);
    }
    CHECK(rows == 4);
}

TEST_CASE("grad-check subcommand passes on the toy graph", "[cli]") {
    auto r = run("grad-check --mode given --seed 17");
    INFO(r.out);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find("max rel err") != std::string::npos);
}

TEST_CASE("train without a seed prints a generated one", "[cli]") {
    const auto dir = work_dir() / "genseed";
    fs::create_directories(dir);
    auto synth = run("synth --genes 6 --modules 2 --variants-per-gene 4 --seed 9 --out-dir " +
                     (dir / "data").string());
    REQUIRE(synth.exit_code == 0);
    write_file(dir / "config.json",
               R"({"epochs": 1, "batch_size": 64,
                   "model": {"gene_dim": 8, "variant_dim": 12, "random_features": 32}})");
    auto train = run("train --variants " + (dir / "data/variants.tsv").string() +
                     " --gene-edges " + (dir / "data/gene_edges.tsv").string() + " --genes " +
                     (dir / "data/genes.txt").string() + " --mode given --config " +
                     (dir / "config.json").string() + " --out " + (dir / "m.vegn").string());
    INFO(train.err);
    REQUIRE(train.exit_code == 0);
    CHECK(train.out.find("seed ") != std::string::npos);
}
