#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vegn/graph.hpp"
#include "vegn/model.hpp"
#include "vegn/trainer.hpp"

namespace vegn {

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline double parse_double(const std::string& s, std::size_t line_no, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": cannot parse " + what +
                                          " '" + s + "' as a finite number");
    }
}

inline std::int64_t parse_int(const std::string& s, std::size_t line_no, const std::string& what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::parse,
                    "line " + std::to_string(line_no) + ": cannot parse " + what + " '" + s + "'");
    }
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Variant tables: TSV with a header row. Required columns variant_id, chrom,
// pos, ref, alt, gene_id, label plus one or more feat_* columns (read in
// header order). label is 0, 1 or NA. Unknown columns are ignored.
// ---------------------------------------------------------------------------

inline std::vector<VariantRecord> parse_variant_tsv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::schema, "variant table: missing header row");
    }
    const auto header = detail::split_tabs(detail::strip_cr(line));
    auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw Error(ErrorKind::schema, "variant table: missing column '" + name + "'");
    };
    const std::size_t c_id = column("variant_id");
    const std::size_t c_chrom = column("chrom");
    const std::size_t c_pos = column("pos");
    const std::size_t c_ref = column("ref");
    const std::size_t c_alt = column("alt");
    const std::size_t c_gene = column("gene_id");
    const std::size_t c_label = column("label");
    std::vector<std::size_t> feat_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].rfind("feat_", 0) == 0) feat_cols.push_back(i);
    }
    if (feat_cols.empty()) {
        throw Error(ErrorKind::schema, "variant table: no feat_* feature columns");
    }

    std::vector<VariantRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(header.size()) + " fields, got " +
                                              std::to_string(fields.size()));
        }
        VariantRecord rec;
        rec.variant_id = fields[c_id];
        rec.chrom = fields[c_chrom];
        rec.pos = detail::parse_int(fields[c_pos], line_no, "pos");
        if (rec.pos < 1) {
            throw Error(ErrorKind::parse,
                        "line " + std::to_string(line_no) + ": pos must be >= 1 (1-based)");
        }
        rec.ref_allele = fields[c_ref];
        rec.alt_allele = fields[c_alt];
        rec.gene_id = fields[c_gene];
        const std::string& lab = fields[c_label];
        if (lab == "0") {
            rec.label = Label::benign;
        } else if (lab == "1") {
            rec.label = Label::pathogenic;
        } else if (lab == "NA") {
            rec.label = Label::unlabeled;
        } else {
            throw Error(ErrorKind::parse,
                        "line " + std::to_string(line_no) + ": label must be 0, 1 or NA, got '" +
                            lab + "'");
        }
        for (std::size_t fc : feat_cols) {
            rec.features.push_back(detail::parse_double(fields[fc], line_no, "feature"));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<VariantRecord> parse_variant_tsv(const std::string& path) {
    auto in = detail::open_input(path);
    try {
        return parse_variant_tsv(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline void write_variant_tsv(const std::vector<VariantRecord>& records, std::ostream& out) {
    const std::size_t f = records.empty() ? 1 : records[0].features.size();
    out << "variant_id\tchrom\tpos\tref\talt\tgene_id\tlabel";
    for (std::size_t i = 0; i < f; ++i) out << "\tfeat_" << i;
    out << "\n";
    for (const auto& rec : records) {
        out << rec.variant_id << '\t' << rec.chrom << '\t' << rec.pos << '\t' << rec.ref_allele
            << '\t' << rec.alt_allele << '\t' << rec.gene_id << '\t';
        switch (rec.label) {
            case Label::benign: out << '0'; break;
            case Label::pathogenic: out << '1'; break;
            case Label::unlabeled: out << "NA"; break;
        }
        for (double v : rec.features) out << '\t' << detail::format_double(v);
        out << "\n";
    }
}

inline void write_variant_tsv(const std::vector<VariantRecord>& records, const std::string& path) {
    auto out = detail::open_output(path);
    write_variant_tsv(records, out);
}

// ---------------------------------------------------------------------------
// Gene-gene edge lists: gene_a <tab> gene_b [<tab> weight]. Self-loops are
// dropped; the count comes back for a caller-side warning.
// ---------------------------------------------------------------------------

struct GeneEdgeParse {
    std::vector<GeneEdge> edges;
    std::size_t self_loops_dropped = 0;
};

inline GeneEdgeParse parse_gene_edges(std::istream& in) {
    GeneEdgeParse result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 2 && fields.size() != 3) {
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) +
                                              ": expected 'gene_a<TAB>gene_b[<TAB>weight]'");
        }
        GeneEdge e;
        e.gene_a = fields[0];
        e.gene_b = fields[1];
        e.weight = fields.size() == 3 ? detail::parse_double(fields[2], line_no, "weight") : 1.0;
        if (e.gene_a == e.gene_b) {
            ++result.self_loops_dropped;
            continue;
        }
        result.edges.push_back(std::move(e));
    }
    return result;
}

inline GeneEdgeParse parse_gene_edges(const std::string& path) {
    auto in = detail::open_input(path);
    try {
        return parse_gene_edges(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

inline void write_gene_edges_tsv(const std::vector<GeneEdge>& edges, const std::string& path) {
    auto out = detail::open_output(path);
    for (const auto& e : edges) {
        out << e.gene_a << '\t' << e.gene_b << '\t' << detail::format_double(e.weight) << "\n";
    }
}

// Gene vocabulary: one gene id per line, order defines embedding indices.
inline std::vector<std::string> parse_gene_list(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<std::string> genes;
    std::string line;
    while (std::getline(in, line)) {
        line = detail::strip_cr(line);
        if (!line.empty()) genes.push_back(line);
    }
    return genes;
}

inline void write_gene_list(const std::vector<std::string>& genes, const std::string& path) {
    auto out = detail::open_output(path);
    for (const auto& g : genes) out << g << "\n";
}

// ---------------------------------------------------------------------------
// JSON config, mirroring TrainConfig field names, with an optional "model"
// object for the layer hyperparameters.
// ---------------------------------------------------------------------------

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"epochs", c.epochs},
                          {"batch_size", c.batch_size},
                          {"initial_lr", c.initial_lr},
                          {"plateau_patience_epochs", c.plateau_patience_epochs},
                          {"plateau_factor", c.plateau_factor},
                          {"plateau_min_delta", c.plateau_min_delta},
                          {"dropout", c.dropout},
                          {"seed", c.seed},
                          {"mode", to_string(c.mode)},
                          {"eval_fraction", c.eval_fraction}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("initial_lr")) c.initial_lr = j.at("initial_lr").get<double>();
        if (j.contains("plateau_patience_epochs"))
            c.plateau_patience_epochs = j.at("plateau_patience_epochs").get<std::size_t>();
        if (j.contains("plateau_factor")) c.plateau_factor = j.at("plateau_factor").get<double>();
        if (j.contains("plateau_min_delta"))
            c.plateau_min_delta = j.at("plateau_min_delta").get<double>();
        if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mode")) c.mode = graph_mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("eval_fraction")) c.eval_fraction = j.at("eval_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::schema, std::string("config: ") + e.what());
    }
    return c;
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"mode", to_string(c.mode)},
                          {"feature_dim", c.feature_dim},
                          {"gene_dim", c.gene_dim},
                          {"variant_dim", c.variant_dim},
                          {"heads", c.heads},
                          {"performer_layers", c.performer_layers},
                          {"random_features", c.random_features},
                          {"dropout", c.dropout},
                          {"leaky_slope", c.leaky_slope},
                          {"use_edge_weight_bias", c.use_edge_weight_bias},
                          {"learnt_use_given_edges", c.learnt_use_given_edges},
                          {"attention_export_max_genes", c.attention_export_max_genes}};
}

// Overrides fields of `base` with those present in j.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base) {
    try {
        if (j.contains("mode")) base.mode = graph_mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("feature_dim")) base.feature_dim = j.at("feature_dim").get<std::size_t>();
        if (j.contains("gene_dim")) base.gene_dim = j.at("gene_dim").get<std::size_t>();
        if (j.contains("variant_dim")) base.variant_dim = j.at("variant_dim").get<std::size_t>();
        if (j.contains("heads")) base.heads = j.at("heads").get<std::size_t>();
        if (j.contains("performer_layers"))
            base.performer_layers = j.at("performer_layers").get<std::size_t>();
        if (j.contains("random_features"))
            base.random_features = j.at("random_features").get<std::size_t>();
        if (j.contains("dropout")) base.dropout = j.at("dropout").get<double>();
        if (j.contains("leaky_slope")) base.leaky_slope = j.at("leaky_slope").get<double>();
        if (j.contains("use_edge_weight_bias"))
            base.use_edge_weight_bias = j.at("use_edge_weight_bias").get<bool>();
        if (j.contains("learnt_use_given_edges"))
            base.learnt_use_given_edges = j.at("learnt_use_given_edges").get<bool>();
        if (j.contains("attention_export_max_genes"))
            base.attention_export_max_genes = j.at("attention_export_max_genes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::schema, std::string("config.model: ") + e.what());
    }
    return base;
}

inline nlohmann::json load_json_file(const std::string& path) {
    auto in = detail::open_input(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, path + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------------------
// Checkpoint: "VEGN" magic, u32 version, u64-length JSON metadata block, raw
// little-endian f64 tensor payloads in manifest order, trailing FNV-1a check
// value over everything before it. Round trips are bit exact.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
    put_u64(buf, std::bit_cast<std::uint64_t>(d));
}

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) {
        if (data_.size() - pos_ < n) {
            throw Error(ErrorKind::integrity, what_ + ": truncated checkpoint");
        }
    }

    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

struct TensorEntry {
    std::string name;
    const Tensor* tensor;
    std::string kind;  // "param" or "buffer"
};

inline std::vector<TensorEntry> checkpoint_manifest(ModelParams& params) {
    std::vector<TensorEntry> entries;
    for (Parameter* p : params.parameters()) {
        entries.push_back(TensorEntry{p->name, &p->value, "param"});
    }
    if (params.performer) {
        entries.push_back(TensorEntry{"performer.omega", &params.performer->omega, "buffer"});
    }
    return entries;
}

}  // namespace detail

struct Checkpoint {
    ModelParams params;
    TrainConfig train_config;
    std::vector<GeneEdge> gene_edges;
};

inline void save_checkpoint(ModelParams& params, const TrainConfig& train_config,
                            const std::vector<GeneEdge>& gene_edges, const std::string& path) {
    nlohmann::json meta;
    meta["format"] = "vegn-checkpoint";
    meta["model_config"] = model_config_to_json(params.config);
    meta["train_config"] = train_config_to_json(train_config);
    meta["gene_vocabulary"] = params.gene_vocab;
    meta["init_seed"] = params.init_seed;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : gene_edges) {
        edges.push_back(nlohmann::json::array({e.gene_a, e.gene_b, e.weight}));
    }
    meta["gene_edges"] = std::move(edges);
    nlohmann::json tensors = nlohmann::json::array();
    auto manifest = detail::checkpoint_manifest(params);
    for (const auto& entry : manifest) {
        tensors.push_back(nlohmann::json{{"name", entry.name},
                                         {"rows", entry.tensor->rows()},
                                         {"cols", entry.tensor->cols()},
                                         {"kind", entry.kind}});
    }
    meta["tensors"] = std::move(tensors);

    std::string buf;
    buf += "VEGN";
    detail::put_u32(buf, kCheckpointVersion);
    const std::string meta_str = meta.dump();
    detail::put_u64(buf, meta_str.size());
    buf += meta_str;
    for (const auto& entry : manifest) {
        for (double v : entry.tensor->values()) detail::put_f64(buf, v);
    }
    detail::put_u64(buf, detail::fnv1a64(buf));

    const std::string tmp = path + ".tmp";
    {
        auto out = detail::open_output(tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw Error(ErrorKind::io, "failed writing '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error(ErrorKind::io, "failed to move '" + tmp + "' to '" + path + "'");
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string data;
    {
        auto in = detail::open_input(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        data = ss.str();
    }
    detail::Reader r(data, path);
    if (r.bytes(4) != "VEGN") {
        throw Error(ErrorKind::incompatibility, path + ": not a vegn checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::incompatibility, path + ": unsupported checkpoint version " +
                                                    std::to_string(version));
    }
    const std::uint64_t meta_len = r.u64();
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.bytes(meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::integrity, path + ": corrupt metadata: " + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.train_config = train_config_from_json(meta.at("train_config"));
        ModelConfig mc = model_config_from_json(meta.at("model_config"), ModelConfig{});
        std::vector<std::string> vocab = meta.at("gene_vocabulary").get<std::vector<std::string>>();
        const auto seed = meta.at("init_seed").get<std::uint64_t>();
        for (const auto& e : meta.at("gene_edges")) {
            ckpt.gene_edges.push_back(GeneEdge{e.at(0).get<std::string>(),
                                               e.at(1).get<std::string>(), e.at(2).get<double>()});
        }
        ckpt.params = ModelParams::init(mc, std::move(vocab), seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::integrity, path + ": corrupt metadata: " + e.what());
    }

    auto manifest = detail::checkpoint_manifest(ckpt.params);
    const auto& tensors = meta.at("tensors");
    if (tensors.size() != manifest.size()) {
        throw Error(ErrorKind::integrity,
                    path + ": tensor manifest does not match the declared configuration");
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& tj = tensors.at(i);
        if (tj.at("name").get<std::string>() != manifest[i].name ||
            tj.at("rows").get<std::size_t>() != manifest[i].tensor->rows() ||
            tj.at("cols").get<std::size_t>() != manifest[i].tensor->cols()) {
            throw Error(ErrorKind::integrity,
                        path + ": tensor '" + manifest[i].name + "' shape/name mismatch");
        }
        auto* t = const_cast<Tensor*>(manifest[i].tensor);
        for (auto& v : t->values()) v = r.f64();
    }
    if (r.remaining() != 8) {
        throw Error(ErrorKind::integrity, path + ": trailing bytes after payload");
    }
    const std::uint64_t stored = detail::fnv1a64(data.substr(0, r.pos()));
    if (r.u64() != stored) {
        throw Error(ErrorKind::integrity, path + ": check value mismatch (corrupted file)");
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON outputs: predictions, epoch reports, attention export.
// ---------------------------------------------------------------------------

struct PredictionRow {
    std::string variant_id;
    double score = 0.0;
    Label label = Label::unlabeled;
};

inline void write_predictions_jsonl(const std::vector<PredictionRow>& rows, std::ostream& out) {
    for (const auto& row : rows) {
        nlohmann::json j{{"variant_id", row.variant_id}, {"score", row.score}};
        if (row.label == Label::unlabeled) {
            j["label"] = nullptr;
        } else {
            j["label"] = static_cast<int>(row.label);
        }
        out << j.dump() << "\n";
    }
}

inline std::vector<PredictionRow> parse_predictions_jsonl(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<PredictionRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PredictionRow row;
            row.variant_id = j.at("variant_id").get<std::string>();
            row.score = j.at("score").get<double>();
            if (j.contains("label") && !j.at("label").is_null()) {
                const int l = j.at("label").get<int>();
                if (l != 0 && l != 1) throw Error(ErrorKind::parse, "label must be 0 or 1");
                row.label = l == 0 ? Label::benign : Label::pathogenic;
            }
            rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse,
                        path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

inline void write_reports_jsonl(const std::vector<EpochReport>& reports, std::ostream& out) {
    for (const auto& r : reports) {
        out << nlohmann::json{{"epoch", r.epoch},
                              {"train_loss", r.train_loss},
                              {"eval_loss", r.eval_loss},
                              {"eval_auroc", r.eval_auroc},
                              {"lr", r.lr}}
                   .dump()
            << "\n";
    }
}

struct AttentionExport {
    struct Neighbor {
        std::string id;
        double weight = 0.0;
    };
    struct Entry {
        std::string layer;
        std::size_t head = 0;
        std::string node;
        std::vector<Neighbor> neighbors;  // descending weight, at most top_k
    };
    std::vector<Entry> entries;
};

namespace detail {

inline std::vector<AttentionExport::Entry> rank_trace_record(
    const AttentionTrace::LayerRecord& rec, const HeteroGraph& graph, bool dst_is_gene,
    bool src_is_gene, std::size_t top_k) {
    const std::size_t n_dst = dst_is_gene ? graph.gene_count() : graph.variant_count();
    std::vector<std::vector<std::pair<double, std::size_t>>> per_dst(n_dst);
    for (std::size_t e = 0; e < rec.dst.size(); ++e) {
        per_dst[rec.dst[e]].emplace_back(rec.weight[e], rec.src[e]);
    }
    std::vector<AttentionExport::Entry> entries;
    for (std::size_t d = 0; d < n_dst; ++d) {
        if (per_dst[d].empty()) continue;
        auto& lst = per_dst[d];
        std::sort(lst.begin(), lst.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        AttentionExport::Entry entry;
        entry.layer = rec.layer;
        entry.head = rec.head;
        entry.node = dst_is_gene ? graph.gene_vocabulary()[d] : graph.variants()[d].variant_id;
        for (std::size_t i = 0; i < lst.size() && i < top_k; ++i) {
            const std::string id = src_is_gene ? graph.gene_vocabulary()[lst[i].second]
                                               : graph.variants()[lst[i].second].variant_id;
            entry.neighbors.push_back(AttentionExport::Neighbor{id, lst[i].first});
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace detail

// Top-k attention neighbors per query node for every layer and head. GAT-layer
// weights come from a traced forward pass; the learnt gene-gene attention is
// recomputed exactly, which is only allowed for gene sets small enough to
// materialize rows on demand.
inline AttentionExport export_attention(ModelParams& params, const HeteroGraph& graph,
                                        std::size_t top_k) {
    if (params.config.mode == GraphMode::learnt &&
        graph.gene_count() > params.config.attention_export_max_genes) {
        throw Error(ErrorKind::capability,
                    "attention export in learnt mode recomputes exact attention and is limited to " +
                        std::to_string(params.config.attention_export_max_genes) +
                        " genes; this graph has " + std::to_string(graph.gene_count()));
    }
    AttentionExport result;
    AttentionTrace trace;
    {
        Tape tape;
        ForwardOptions opts;
        opts.trace = &trace;
        model_forward(tape, graph, params, opts);
    }
    for (const auto& rec : trace.records) {
        const bool dst_is_gene = rec.layer == "in" || rec.layer == "interact";
        const bool src_is_gene = rec.layer != "in";
        auto entries = detail::rank_trace_record(rec, graph, dst_is_gene, src_is_gene, top_k);
        for (auto& e : entries) result.entries.push_back(std::move(e));
    }
    if (params.config.mode == GraphMode::learnt) {
        const auto& vocab = graph.gene_vocabulary();
        performer_exact_walk(params, [&](std::size_t layer, std::size_t head, const Tensor& q,
                                         const Tensor& k) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
            std::vector<double> logits(k.rows());
            for (std::size_t i = 0; i < q.rows(); ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < k.rows(); ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < q.cols(); ++c) dot += q.at(i, c) * k.at(j, c);
                    logits[j] = dot * scale;
                    mx = std::max(mx, logits[j]);
                }
                double sum = 0.0;
                for (auto& l : logits) {
                    l = std::exp(l - mx);
                    sum += l;
                }
                std::vector<std::pair<double, std::size_t>> ranked(k.rows());
                for (std::size_t j = 0; j < k.rows(); ++j) ranked[j] = {logits[j] / sum, j};
                std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                AttentionExport::Entry entry;
                entry.layer = "performer.l" + std::to_string(layer);
                entry.head = head;
                entry.node = vocab[i];
                for (std::size_t j = 0; j < ranked.size() && j < top_k; ++j) {
                    entry.neighbors.push_back(
                        AttentionExport::Neighbor{vocab[ranked[j].second], ranked[j].first});
                }
                result.entries.push_back(std::move(entry));
            }
        });
    }
    return result;
}

inline void write_attention_jsonl(const AttentionExport& exp, std::ostream& out) {
    for (const auto& e : exp.entries) {
        nlohmann::json neighbors = nlohmann::json::array();
        for (const auto& n : e.neighbors) {
            neighbors.push_back(nlohmann::json{{"id", n.id}, {"weight", n.weight}});
        }
        out << nlohmann::json{{"layer", e.layer},
                              {"head", e.head},
                              {"node", e.node},
                              {"neighbors", std::move(neighbors)}}
                   .dump()
            << "\n";
    }
}

}  // namespace vegn
