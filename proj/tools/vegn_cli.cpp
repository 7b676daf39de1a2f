// vegn: variant effect prediction over a heterogeneous gene/variant graph.
//
// Subcommands: train, predict, eval, attention, synth, bench-attention,
// grad-check. All randomness derives from --seed; when no seed is supplied a
// generated one is printed so the run stays reproducible after the fact.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vegn/gradcheck.hpp"
#include "vegn/io.hpp"
#include "vegn/metrics.hpp"
#include "vegn/synth.hpp"
#include "vegn/trainer.hpp"

namespace {

using namespace vegn;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const std::optional<std::uint64_t>& from_config = std::nullopt) {
    if (flag) return *flag;
    if (from_config) return *from_config;
    std::random_device rd;
    const std::uint64_t seed =
        (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
    std::printf("seed %" PRIu64 "\n", seed);
    return seed;
}

std::vector<GeneEdge> index_edges_to_records(const HeteroGraph& graph) {
    std::vector<GeneEdge> out;
    for (const auto& [key, w] : graph.gene_edges()) {
        out.push_back(GeneEdge{graph.gene_vocabulary()[key.first],
                               graph.gene_vocabulary()[key.second], w});
    }
    return out;
}

struct TrainArgs {
    std::string variants_path;
    std::string edges_path;
    std::string genes_path;
    std::string mode = "given";
    std::string config_path;
    std::string out_path;
    std::string report_path;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
    const auto variants = parse_variant_tsv(args.variants_path);
    const auto edge_parse = parse_gene_edges(args.edges_path);
    if (edge_parse.self_loops_dropped > 0) {
        std::fprintf(stderr, "warning: dropped %zu self-loop gene edges\n",
                     edge_parse.self_loops_dropped);
    }
    const auto vocab = parse_gene_list(args.genes_path);

    const nlohmann::json config_json = load_json_file(args.config_path);
    TrainConfig config = train_config_from_json(config_json);
    config.mode = graph_mode_from_string(args.mode);
    std::optional<std::uint64_t> config_seed;
    if (config_json.contains("seed")) config_seed = config.seed;
    config.seed = resolve_seed(args.seed, config_seed);

    if (variants.empty()) {
        throw Error(ErrorKind::contract, "no variants in " + args.variants_path);
    }
    ModelConfig model_config =
        ModelConfig::defaults_for(config.mode, variants[0].features.size());
    if (config_json.contains("model")) {
        model_config = model_config_from_json(config_json.at("model"), model_config);
        model_config.mode = config.mode;
        model_config.feature_dim = variants[0].features.size();
    }

    const auto graph = build_graph(variants, edge_parse.edges, vocab);
    auto result = train(graph, config, model_config);

    for (const auto& rep : result.reports) {
        std::fprintf(stderr, "epoch %zu train_loss %.6f eval_loss %.6f eval_auroc %.4f lr %g\n",
                     rep.epoch, rep.train_loss, rep.eval_loss, rep.eval_auroc, rep.lr);
    }
    save_checkpoint(result.params, config, index_edges_to_records(graph), args.out_path);
    if (!args.report_path.empty()) {
        auto out = std::ofstream(args.report_path);
        if (!out) throw Error(ErrorKind::io, "cannot open '" + args.report_path + "'");
        write_reports_jsonl(result.reports, out);
    }
    if (!result.reports.empty()) {
        std::printf("final eval_auroc %.6f\n", result.reports.back().eval_auroc);
    }
    std::printf("checkpoint %s\n", args.out_path.c_str());
    return 0;
}

int run_predict(const std::string& model_path, const std::string& variants_path,
                const std::string& out_path) {
    auto ckpt = load_checkpoint(model_path);
    const auto variants = parse_variant_tsv(variants_path);
    const auto graph = build_graph(variants, ckpt.gene_edges, ckpt.params.gene_vocab);

    Tape tape;
    const Tensor& y = model_forward(tape, graph, ckpt.params).val();
    std::vector<PredictionRow> rows;
    rows.reserve(variants.size());
    for (std::size_t i = 0; i < variants.size(); ++i) {
        rows.push_back(PredictionRow{variants[i].variant_id, y.at(i, 0), variants[i].label});
    }
    auto out = std::ofstream(out_path);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + out_path + "'");
    write_predictions_jsonl(rows, out);
    std::printf("predictions %zu -> %s\n", rows.size(), out_path.c_str());
    return 0;
}

int run_eval(const std::string& predictions_path, const std::string& labels_path) {
    auto rows = parse_predictions_jsonl(predictions_path);
    if (!labels_path.empty()) {
        const auto labelled = parse_variant_tsv(labels_path);
        std::unordered_map<std::string, Label> by_id;
        for (const auto& rec : labelled) by_id[rec.variant_id] = rec.label;
        for (auto& row : rows) {
            auto it = by_id.find(row.variant_id);
            if (it == by_id.end()) {
                throw Error(ErrorKind::referential,
                            "no label for variant '" + row.variant_id + "' in " + labels_path);
            }
            row.label = it->second;
        }
    }
    std::vector<ScoredLabel> scored;
    scored.reserve(rows.size());
    for (const auto& row : rows) {
        scored.push_back(
            ScoredLabel{row.score, effective_label(row.label) == 1.0 ? 1 : 0});
    }
    std::printf("auROC %.6f\n", auroc(scored));
    return 0;
}

int run_attention(const std::string& model_path, const std::string& variants_path,
                  std::size_t top_k, const std::string& out_path) {
    auto ckpt = load_checkpoint(model_path);
    const auto variants = parse_variant_tsv(variants_path);
    const auto graph = build_graph(variants, ckpt.gene_edges, ckpt.params.gene_vocab);
    const auto exported = export_attention(ckpt.params, graph, top_k);
    auto out = std::ofstream(out_path);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + out_path + "'");
    write_attention_jsonl(exported, out);
    std::printf("attention entries %zu -> %s\n", exported.entries.size(), out_path.c_str());
    return 0;
}

struct SynthArgs {
    SynthConfig config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

int run_synth(SynthArgs args) {
    args.config.seed = resolve_seed(args.seed);
    const auto data = generate(args.config);
    std::filesystem::create_directories(args.out_dir);
    const auto dir = std::filesystem::path(args.out_dir);
    write_variant_tsv(data.variants, (dir / "variants.tsv").string());
    write_gene_edges_tsv(data.gene_edges, (dir / "gene_edges.tsv").string());
    write_gene_list(data.gene_vocabulary, (dir / "genes.txt").string());
    {
        auto out = std::ofstream(dir / "gene_status.tsv");
        for (std::size_t g = 0; g < data.gene_vocabulary.size(); ++g) {
            out << data.gene_vocabulary[g] << '\t' << data.gene_status[g] << "\n";
        }
    }
    std::printf("synth genes %zu edges %zu variants %zu -> %s\n", data.gene_vocabulary.size(),
                data.gene_edges.size(), data.variants.size(), args.out_dir.c_str());
    return 0;
}

int run_bench(const std::string& genes_csv, std::size_t dim, std::size_t features,
              std::size_t repeats, std::size_t max_exact, const std::string& out_path,
              std::optional<std::uint64_t> seed_flag) {
    std::vector<std::size_t> gene_counts;
    std::stringstream ss(genes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) gene_counts.push_back(std::stoull(tok));
    }
    if (gene_counts.empty()) {
        throw Error(ErrorKind::contract, "bench-attention: --genes needs at least one count");
    }
    const std::uint64_t seed = resolve_seed(seed_flag);
    const auto rows = attention_benchmark(gene_counts, dim, features, repeats, seed, max_exact);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw Error(ErrorKind::io, "cannot open '" + out_path + "'");
        out = &file;
    }
    *out << "genes,dim,features,repeat,favor_ms,exact_ms,rel_frob_err\n";
    for (const auto& r : rows) {
        *out << r.genes << ',' << r.dim << ',' << r.features << ',' << r.repeat << ','
             << r.favor_ms << ',';
        if (r.exact_ms >= 0.0) *out << r.exact_ms;
        *out << ',';
        if (r.rel_frob_err >= 0.0) *out << r.rel_frob_err;
        *out << "\n";
    }
    return 0;
}

int run_grad_check(const std::string& mode_str, std::optional<std::uint64_t> seed_flag) {
    const GraphMode mode = graph_mode_from_string(mode_str);
    const std::uint64_t seed = resolve_seed(seed_flag, std::uint64_t{17});
    const auto data = grad_check_fixture();
    const auto graph = build_graph(data.variants, data.gene_edges, data.gene_vocabulary);
    auto params = ModelParams::init(ModelConfig::defaults_for(mode, 1),
                                    graph.gene_vocabulary(), seed);
    std::vector<double> labels;
    for (const auto& v : graph.variants()) labels.push_back(effective_label(v.label));

    auto make_loss = [&](Tape& t) { return bce_loss(model_forward(t, graph, params), labels); };
    const auto report = grad_check(make_loss, params.parameters(), 1e-5, 1e-4);
    for (const auto& e : report.entries) {
        std::printf("%-24s max_rel_err %.3e %s\n", e.name.c_str(), e.max_rel_err,
                    e.pass ? "ok" : "FAIL");
    }
    std::printf("max rel err %.3e (%s mode, tolerance 1e-4)\n", report.max_rel_err(),
                mode_str.c_str());
    if (!report.pass()) {
        std::printf("FAIL\n");
        return 1;
    }
    std::printf("PASS\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"variant effect prediction over a gene/variant graph"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    train_cmd->add_option("--variants", train_args.variants_path, "variant TSV")->required();
    train_cmd->add_option("--gene-edges", train_args.edges_path, "gene interaction TSV")
        ->required();
    train_cmd->add_option("--genes", train_args.genes_path, "gene vocabulary, one id per line")
        ->required();
    train_cmd->add_option("--mode", train_args.mode, "given|learnt")->required();
    train_cmd->add_option("--config", train_args.config_path, "training config JSON")->required();
    train_cmd->add_option("--out", train_args.out_path, "checkpoint output path")->required();
    train_cmd->add_option("--report", train_args.report_path, "epoch report JSONL path");
    train_cmd->add_option("--seed", train_args.seed, "run seed (overrides config)");

    std::string predict_model, predict_variants, predict_out;
    auto* predict_cmd = app.add_subcommand("predict", "score variants with a trained model");
    predict_cmd->add_option("--model", predict_model, "checkpoint path")->required();
    predict_cmd->add_option("--variants", predict_variants, "variant TSV")->required();
    predict_cmd->add_option("--out", predict_out, "predictions JSONL path")->required();

    std::string eval_predictions, eval_labels;
    auto* eval_cmd = app.add_subcommand("eval", "compute auROC from predictions");
    eval_cmd->add_option("--predictions", eval_predictions, "predictions JSONL")->required();
    eval_cmd->add_option("--labels", eval_labels, "variant TSV with labels (optional)");

    std::string att_model, att_variants, att_out;
    std::size_t att_top_k = 10;
    auto* att_cmd = app.add_subcommand("attention", "export top-k attention weights");
    att_cmd->add_option("--model", att_model, "checkpoint path")->required();
    att_cmd->add_option("--variants", att_variants, "variant TSV")->required();
    att_cmd->add_option("--top-k", att_top_k, "neighbors per query node")->required();
    att_cmd->add_option("--out", att_out, "attention JSONL path")->required();

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate a planted synthetic dataset");
    synth_cmd->add_option("--genes", synth_args.config.gene_count, "gene count");
    synth_cmd->add_option("--modules", synth_args.config.module_count, "module count");
    synth_cmd->add_option("--variants-per-gene", synth_args.config.variants_per_gene,
                          "Poisson mean of variants per gene");
    synth_cmd->add_option("--edge-prob", synth_args.config.gene_edge_probability,
                          "within-module edge probability");
    synth_cmd->add_option("--noise-sd", synth_args.config.feature_noise_sd,
                          "feature noise standard deviation");
    synth_cmd->add_option("--flip-prob", synth_args.config.label_flip_probability,
                          "label flip probability");
    synth_cmd->add_option("--seed", synth_args.seed, "generation seed");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "output directory")->required();

    std::string bench_genes = "1000,2000,4000";
    std::size_t bench_dim = 32, bench_features = 256, bench_repeats = 3, bench_max_exact = 8192;
    std::string bench_out;
    std::optional<std::uint64_t> bench_seed;
    auto* bench_cmd =
        app.add_subcommand("bench-attention", "time linear attention against the exact oracle");
    bench_cmd->add_option("--genes", bench_genes, "comma-separated gene counts");
    bench_cmd->add_option("--dim", bench_dim, "attention dimension");
    bench_cmd->add_option("--features", bench_features, "random feature count");
    bench_cmd->add_option("--repeats", bench_repeats, "timed repeats per size");
    bench_cmd->add_option("--max-exact", bench_max_exact,
                          "largest size for which the exact oracle runs");
    bench_cmd->add_option("--out", bench_out, "CSV output path (default stdout)");
    bench_cmd->add_option("--seed", bench_seed, "benchmark seed");

    std::string gc_mode = "given";
    std::optional<std::uint64_t> gc_seed;
    auto* gc_cmd = app.add_subcommand("grad-check",
                                      "finite-difference check of the full model gradients");
    gc_cmd->add_option("--mode", gc_mode, "given|learnt")->required();
    gc_cmd->add_option("--seed", gc_seed, "model init seed");

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return run_train(train_args);
        if (predict_cmd->parsed()) return run_predict(predict_model, predict_variants, predict_out);
        if (eval_cmd->parsed()) return run_eval(eval_predictions, eval_labels);
        if (att_cmd->parsed()) return run_attention(att_model, att_variants, att_top_k, att_out);
        if (synth_cmd->parsed()) return run_synth(synth_args);
        if (bench_cmd->parsed()) {
            return run_bench(bench_genes, bench_dim, bench_features, bench_repeats,
                             bench_max_exact, bench_out, bench_seed);
        }
        if (gc_cmd->parsed()) return run_grad_check(gc_mode, gc_seed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const vegn::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", vegn::to_string(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
