#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vegn/graph.hpp"
#include "vegn/rng.hpp"
#include "vegn/tape.hpp"

namespace vegn {

enum class GraphMode { given, learnt };

inline const char* to_string(GraphMode m) { return m == GraphMode::given ? "given" : "learnt"; }

inline GraphMode graph_mode_from_string(const std::string& s) {
    if (s == "given") return GraphMode::given;
    if (s == "learnt") return GraphMode::learnt;
    throw Error(ErrorKind::contract, "mode must be 'given' or 'learnt', got '" + s + "'");
}

struct ModelConfig {
    GraphMode mode = GraphMode::given;
    std::size_t feature_dim = 1;
    std::size_t gene_dim = 32;
    std::size_t variant_dim = 64;  // 32 in learnt mode
    std::size_t heads = 2;
    std::size_t performer_layers = 3;
    std::size_t random_features = 256;
    double dropout = 0.2;  // performer layers, training only
    double leaky_slope = 0.2;
    bool use_edge_weight_bias = false;     // add log(w) to INTERACT attention logits
    bool learnt_use_given_edges = false;   // learnt mode additionally runs the given-edge GAT
    std::size_t attention_export_max_genes = 4096;

    static ModelConfig defaults_for(GraphMode mode, std::size_t feature_dim) {
        ModelConfig cfg;
        cfg.mode = mode;
        cfg.feature_dim = feature_dim;
        cfg.gene_dim = 32;
        cfg.variant_dim = (mode == GraphMode::given) ? 64 : 32;
        return cfg;
    }

    void validate() const {
        if (feature_dim == 0) throw Error(ErrorKind::contract, "feature_dim must be >= 1");
        if (heads == 0) throw Error(ErrorKind::contract, "heads must be >= 1");
        if (gene_dim % heads != 0 || variant_dim % heads != 0) {
            throw Error(ErrorKind::contract, "gene_dim and variant_dim must be divisible by heads");
        }
        if (random_features == 0) throw Error(ErrorKind::contract, "random_features must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) {
            throw Error(ErrorKind::contract, "dropout must be in [0,1)");
        }
    }
};

// Per-edge attention weights captured during a forward pass, one record per
// (layer, head) with parallel edge arrays.
struct AttentionTrace {
    struct LayerRecord {
        std::string layer;
        std::size_t head = 0;
        std::vector<std::size_t> src;
        std::vector<std::size_t> dst;
        std::vector<double> weight;
    };
    std::vector<LayerRecord> records;
};

namespace detail {

inline Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return random_uniform(rows, cols, -bound, bound, rng);
}

}  // namespace detail

// One GAT layer for one edge type. Genes and variants have different widths, so
// each side gets its own projection to a shared per-head message width of
// dst_dim / heads; head outputs are concatenated and combined with the self path.
struct GatLayerParams {
    struct Head {
        Parameter w_src;  // src_dim x msg_dim
        Parameter w_dst;  // dst_dim x msg_dim
        Parameter a_src;  // msg_dim x 1
        Parameter a_dst;  // msg_dim x 1
    };
    std::vector<Head> heads;
    Parameter w_self;  // dst_dim x dst_dim

    static GatLayerParams init(const std::string& name, std::size_t src_dim, std::size_t dst_dim,
                               std::size_t n_heads, std::mt19937_64& rng) {
        if (dst_dim % n_heads != 0) {
            throw Error(ErrorKind::contract, name + ": dst_dim not divisible by head count");
        }
        const std::size_t msg = dst_dim / n_heads;
        GatLayerParams p;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::string hn = name + ".h" + std::to_string(h);
            p.heads.push_back(Head{
                Parameter(hn + ".w_src", detail::init_uniform(src_dim, msg, src_dim, rng)),
                Parameter(hn + ".w_dst", detail::init_uniform(dst_dim, msg, dst_dim, rng)),
                Parameter(hn + ".a_src", detail::init_uniform(msg, 1, msg, rng)),
                Parameter(hn + ".a_dst", detail::init_uniform(msg, 1, msg, rng)),
            });
        }
        p.w_self = Parameter(name + ".w_self", detail::init_uniform(dst_dim, dst_dim, dst_dim, rng));
        return p;
    }

    void collect(std::vector<Parameter*>& out) {
        for (auto& h : heads) {
            out.push_back(&h.w_src);
            out.push_back(&h.w_dst);
            out.push_back(&h.a_src);
            out.push_back(&h.a_dst);
        }
        out.push_back(&w_self);
    }
};

struct PerformerHeadParams {
    Parameter wq, wk, wv;  // gene_dim x head_dim each
};

struct PerformerLayerParams {
    std::vector<PerformerHeadParams> heads;
};

struct PerformerParams {
    std::vector<PerformerLayerParams> layers;
    Tensor omega;  // random_features x head_dim; frozen, redrawn only on reseed
    double dropout = 0.2;

    void collect(std::vector<Parameter*>& out) {
        for (auto& l : layers) {
            for (auto& h : l.heads) {
                out.push_back(&h.wq);
                out.push_back(&h.wk);
                out.push_back(&h.wv);
            }
        }
    }
};

// Random feature matrix with block-orthogonal rows: each block of head_dim rows
// is an orthonormal frame rescaled to chi-distributed norms, so every row stays
// marginally standard normal while the estimator variance drops.
inline Tensor draw_omega(std::size_t m, std::size_t head_dim, std::mt19937_64& rng) {
    Tensor omega(m, head_dim);
    std::size_t written = 0;
    while (written < m) {
        // Modified Gram-Schmidt on a fresh Gaussian block.
        std::vector<std::vector<double>> q;
        while (q.size() < head_dim) {
            Tensor g = random_normal(1, head_dim, 0.0, 1.0, rng);
            std::vector<double> v(g.values());
            for (const auto& prev : q) {
                double dot = 0.0;
                for (std::size_t k = 0; k < head_dim; ++k) dot += v[k] * prev[k];
                for (std::size_t k = 0; k < head_dim; ++k) v[k] -= dot * prev[k];
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-12) continue;  // degenerate draw, resample
            for (auto& x : v) x /= norm;
            q.push_back(std::move(v));
        }
        for (std::size_t r = 0; r < head_dim && written < m; ++r, ++written) {
            Tensor s = random_normal(1, head_dim, 0.0, 1.0, rng);
            double norm = 0.0;
            for (double x : s.values()) norm += x * x;
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < head_dim; ++k) omega.at(written, k) = norm * q[r][k];
        }
    }
    return omega;
}

enum class FavorStabilizer { none, per_row, global };

struct FavorFeatures {
    Tensor phi;                   // n x m, strictly positive
    std::vector<double> offsets;  // per-row log scale c_i subtracted inside the exp
};

// Positive random features for the softmax kernel:
//   phi(x)_j = exp(omega_j . x - |x|^2/2 - c) / sqrt(m)
// so that E[phi(q) . phi(k)] * exp(c_q + c_k) = exp(q . k). The stabilizer keeps
// the exp in range; it is shared per row (queries) or globally (keys) and cancels
// exactly in normalized attention.
inline FavorFeatures favor_feature_map(const Tensor& x, const Tensor& omega,
                                       FavorStabilizer mode) {
    if (x.cols() != omega.cols()) {
        throw Error(ErrorKind::dimension, "favor_feature_map: x " + x.shape_str() + " vs omega " +
                                              omega.shape_str());
    }
    const std::size_t n = x.rows(), d = x.cols(), m = omega.rows();
    Tensor z = matmul(x, transpose(omega));  // n x m
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) sq += x.at(i, k) * x.at(i, k);
        sq *= 0.5;
        for (std::size_t j = 0; j < m; ++j) z.at(i, j) -= sq;
    }
    std::vector<double> offsets(n, 0.0);
    if (mode == FavorStabilizer::per_row) {
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, z.at(i, j));
            offsets[i] = mx;
        }
    } else if (mode == FavorStabilizer::global) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : z.values()) mx = std::max(mx, v);
        if (n > 0) offsets.assign(n, mx);
    }
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
    FavorFeatures out{Tensor(n, m), std::move(offsets)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            out.phi.at(i, j) = std::exp(z.at(i, j) - out.offsets[i]) * inv_sqrt_m;
    return out;
}

// Tape op over the same kernel. The stabilizer is treated as a constant in the
// backward rule; normalized attention is exactly invariant to it, so the layer
// gradient is exact.
inline Var favor_phi(Var x, Tensor omega, FavorStabilizer mode) {
    Tape& t = *x.tape;
    FavorFeatures f = favor_feature_map(x.val(), omega, mode);
    Var out = t.emit("favor_phi", std::move(f.phi));
    t.set_backward(out, [x, out, omega = std::move(omega)](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& phi = tp.value(out);
        const Tensor& xv = tp.value(x);
        Tensor gphi(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
            gphi.values()[i] = g.values()[i] * phi.values()[i];
        Tensor gx = matmul(gphi, omega);  // n x d
        for (std::size_t i = 0; i < gx.rows(); ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < gphi.cols(); ++j) rs += gphi.at(i, j);
            for (std::size_t k = 0; k < gx.cols(); ++k) gx.at(i, k) -= rs * xv.at(i, k);
        }
        tp.grad(x) += gx;
    });
    return out;
}

// Exact softmax attention softmax(Q K^T / sqrt(d)) V -- the quadratic reference
// the linear path approximates; also used for attention export.
inline Tensor exact_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw Error(ErrorKind::dimension, "exact_attention: Q " + q.shape_str() + ", K " +
                                              k.shape_str() + ", V " + v.shape_str());
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor out(q.rows(), v.cols());
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
        for (std::size_t j = 0; j < k.rows(); ++j) {
            logits[j] = std::exp(logits[j] - mx);
            sum += logits[j];
        }
        for (std::size_t j = 0; j < k.rows(); ++j) {
            const double a = logits[j] / sum;
            for (std::size_t c = 0; c < v.cols(); ++c) out.at(i, c) += a * v.at(j, c);
        }
    }
    return out;
}

// Linear-time approximation of exact_attention on raw Q, K, V. Q and K are
// scaled by d^(-1/4) so that phi(q) . phi(k) targets exp(q . k / sqrt(d)).
inline Tensor favor_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& omega) {
    const double scale = std::pow(static_cast<double>(q.cols()), -0.25);
    Tensor qs = q, ks = k;
    for (auto& x : qs.values()) x *= scale;
    for (auto& x : ks.values()) x *= scale;
    const Tensor phi_q = favor_feature_map(qs, omega, FavorStabilizer::per_row).phi;
    const Tensor phi_k = favor_feature_map(ks, omega, FavorStabilizer::global).phi;
    const Tensor kv = matmul(transpose(phi_k), v);  // m x dv
    Tensor num = matmul(phi_q, kv);                 // n x dv
    std::vector<double> ksum(phi_k.cols(), 0.0);
    for (std::size_t j = 0; j < phi_k.rows(); ++j)
        for (std::size_t c = 0; c < phi_k.cols(); ++c) ksum[c] += phi_k.at(j, c);
    for (std::size_t i = 0; i < num.rows(); ++i) {
        double den = 0.0;
        for (std::size_t c = 0; c < phi_q.cols(); ++c) den += phi_q.at(i, c) * ksum[c];
        if (den < 1e-30) {
            throw Error(ErrorKind::numerical_degeneracy,
                        "favor_attention: normalizer underflow (feature collapse)");
        }
        for (std::size_t c = 0; c < num.cols(); ++c) num.at(i, c) /= den;
    }
    return num;
}

// GAT message passing along one edge list. Per head h:
//   e_ij  = leaky_relu(a_dst . (W_dst x_i) + a_src . (W_src x_j))   for j in A(i)
//   alpha = softmax over A(i),  message_i = sum_j alpha_ij W_src x_j
// Heads are concatenated and combined with the self path:
//   out_i = leaky_relu(W_self x_i + message_i)
// A node with empty A(i) gets the self path only.
inline Var gat_layer(Var x_src, Var x_dst, const EdgeListView& edges, GatLayerParams& params,
                     double slope, bool edge_weight_bias = false, AttentionTrace* trace = nullptr,
                     const std::string& trace_label = "") {
    Tape& t = *x_src.tape;
    const std::size_t n_dst = x_dst.rows();
    if (edges.n_dst != n_dst || edges.n_src != x_src.rows()) {
        throw Error(ErrorKind::dimension,
                    "gat_layer: edge list is " + std::to_string(edges.n_src) + "->" +
                        std::to_string(edges.n_dst) + " but features are " +
                        x_src.val().shape_str() + " / " + x_dst.val().shape_str());
    }

    std::optional<Var> messages;
    for (std::size_t h = 0; h < params.heads.size(); ++h) {
        auto& head = params.heads[h];
        Var s = matmul(x_src, t.param(head.w_src));   // n_src x msg
        Var d = matmul(x_dst, t.param(head.w_dst));   // n_dst x msg
        Var as = matmul(s, t.param(head.a_src));      // n_src x 1
        Var ad = matmul(d, t.param(head.a_dst));      // n_dst x 1
        Var logits = add(gather_rows(ad, edges.dst), gather_rows(as, edges.src));
        if (edge_weight_bias && !edges.weight.empty()) {
            Tensor bias(edges.weight.size(), 1);
            for (std::size_t e = 0; e < edges.weight.size(); ++e)
                bias.at(e, 0) = std::log(std::max(edges.weight[e], 1e-12));
            logits = add(logits, t.constant(std::move(bias)));
        }
        logits = leaky_relu(logits, slope);
        Var alpha = segment_softmax(logits, edges.dst, n_dst);
        if (trace) {
            AttentionTrace::LayerRecord rec;
            rec.layer = trace_label;
            rec.head = h;
            rec.src = edges.src;
            rec.dst = edges.dst;
            rec.weight = alpha.val().values();
            trace->records.push_back(std::move(rec));
        }
        Var msg = segment_sum(scale_rows(gather_rows(s, edges.src), alpha), edges.dst, n_dst);
        messages = messages ? concat_cols(*messages, msg) : msg;
    }
    Var self = matmul(x_dst, t.param(params.w_self));
    return leaky_relu(add(self, *messages), slope);
}

// One Performer self-attention layer over all genes: per head, normalized
// linear attention via positive random features, never materializing an
// n x n matrix; heads concatenated, residual added, dropout during training.
inline Var performer_layer(Var x, PerformerLayerParams& layer, const Tensor& omega,
                           double dropout_rate, std::mt19937_64& rng, bool training) {
    Tape& t = *x.tape;
    const double scale = std::pow(static_cast<double>(omega.cols()), -0.25);
    std::optional<Var> heads_out;
    for (auto& head : layer.heads) {
        Var q = mul_scalar(matmul(x, t.param(head.wq)), scale);
        Var k = mul_scalar(matmul(x, t.param(head.wk)), scale);
        Var v = matmul(x, t.param(head.wv));
        Var phi_q = favor_phi(q, omega, FavorStabilizer::per_row);   // n x m
        Var phi_k = favor_phi(k, omega, FavorStabilizer::global);    // n x m
        Var kv = matmul(transpose(phi_k), v);                        // m x dh
        Var num = matmul(phi_q, kv);                                 // n x dh
        Var den = matmul(phi_q, transpose(col_sums(phi_k)));         // n x 1
        for (double dv : den.val().values()) {
            if (dv < 1e-30) {
                throw Error(ErrorKind::numerical_degeneracy,
                            "performer_attention: normalizer below 1e-30 (feature collapse)");
            }
        }
        Var out = div_rows(num, den);
        heads_out = heads_out ? concat_cols(*heads_out, out) : out;
    }
    return add(x, dropout(*heads_out, dropout_rate, rng, training));
}

// Eq.-style combination across edge types: element-wise sum of the per-type
// outputs for one node class.
inline Var hetero_aggregate(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw Error(ErrorKind::contract, "hetero_aggregate: no edge-type outputs");
    }
    Var acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (!parts[i].val().same_shape(acc.val())) {
            throw Error(ErrorKind::dimension,
                        "hetero_aggregate: shape " + parts[i].val().shape_str() + " vs " +
                            acc.val().shape_str());
        }
        acc = add(acc, parts[i]);
    }
    return acc;
}

struct ModelParams {
    ModelConfig config;
    std::vector<std::string> gene_vocab;
    std::uint64_t init_seed = 0;

    Parameter gene_embeddings;     // |G| x gene_dim
    Parameter variant_projection;  // feature_dim x variant_dim
    GatLayerParams in_gat;         // variants -> genes
    GatLayerParams has_gat;        // genes -> variants
    GatLayerParams final_gat;      // genes -> variants, finalization round
    std::optional<GatLayerParams> interact_gat;  // given mode (or learnt + flag)
    std::optional<PerformerParams> performer;    // learnt mode
    Parameter head_weight;  // variant_dim x 1
    Parameter head_bias;    // 1 x 1

    static ModelParams init(const ModelConfig& cfg, std::vector<std::string> vocab,
                            std::uint64_t seed) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        p.gene_vocab = std::move(vocab);
        p.init_seed = seed;
        auto rng = make_rng(seed, "param-init");
        Tensor emb = random_normal(p.gene_vocab.size(), cfg.gene_dim, 0.0, 0.1, rng);
        p.gene_embeddings = Parameter("gene_embeddings", std::move(emb));
        p.variant_projection = Parameter(
            "variant_projection",
            detail::init_uniform(cfg.feature_dim, cfg.variant_dim, cfg.feature_dim, rng));
        p.in_gat = GatLayerParams::init("in_gat", cfg.variant_dim, cfg.gene_dim, cfg.heads, rng);
        if (cfg.mode == GraphMode::given || cfg.learnt_use_given_edges) {
            p.interact_gat =
                GatLayerParams::init("interact_gat", cfg.gene_dim, cfg.gene_dim, cfg.heads, rng);
        }
        if (cfg.mode == GraphMode::learnt) {
            PerformerParams perf;
            perf.dropout = cfg.dropout;
            const std::size_t head_dim = cfg.gene_dim / cfg.heads;
            for (std::size_t l = 0; l < cfg.performer_layers; ++l) {
                PerformerLayerParams lp;
                for (std::size_t h = 0; h < cfg.heads; ++h) {
                    const std::string hn =
                        "performer.l" + std::to_string(l) + ".h" + std::to_string(h);
                    lp.heads.push_back(PerformerHeadParams{
                        Parameter(hn + ".wq",
                                  detail::init_uniform(cfg.gene_dim, head_dim, cfg.gene_dim, rng)),
                        Parameter(hn + ".wk",
                                  detail::init_uniform(cfg.gene_dim, head_dim, cfg.gene_dim, rng)),
                        Parameter(hn + ".wv",
                                  detail::init_uniform(cfg.gene_dim, head_dim, cfg.gene_dim, rng)),
                    });
                }
                perf.layers.push_back(std::move(lp));
            }
            auto omega_rng = make_rng(seed, "omega");
            perf.omega = draw_omega(cfg.random_features, head_dim, omega_rng);
            p.performer = std::move(perf);
        }
        p.has_gat = GatLayerParams::init("has_gat", cfg.gene_dim, cfg.variant_dim, cfg.heads, rng);
        p.final_gat =
            GatLayerParams::init("final_gat", cfg.gene_dim, cfg.variant_dim, cfg.heads, rng);
        p.head_weight =
            Parameter("head.weight", detail::init_uniform(cfg.variant_dim, 1, cfg.variant_dim, rng));
        p.head_bias = Parameter("head.bias", detail::init_uniform(1, 1, cfg.variant_dim, rng));
        return p;
    }

    // Trainable parameters in a stable order (checkpoint and optimizer layout).
    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        out.push_back(&gene_embeddings);
        out.push_back(&variant_projection);
        in_gat.collect(out);
        if (interact_gat) interact_gat->collect(out);
        if (performer) performer->collect(out);
        has_gat.collect(out);
        final_gat.collect(out);
        out.push_back(&head_weight);
        out.push_back(&head_bias);
        return out;
    }

    void zero_grad() {
        for (Parameter* p : parameters()) p->zero_grad();
    }
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    AttentionTrace* trace = nullptr;
};

// Full model: project variant features and look up gene embeddings; run one
// heterogeneous round (IN updates genes from variants, INTERACT updates genes
// from genes -- given-edge GAT or the Performer stack -- HAS updates variants
// from genes; per-type outputs summed per node class); one finalization
// gene->variant layer; sigmoid head. Returns one probability per variant.
inline Var model_forward(Tape& t, const HeteroGraph& graph, ModelParams& params,
                         const ForwardOptions& opts = {}) {
    const ModelConfig& cfg = params.config;
    if (graph.gene_vocabulary() != params.gene_vocab) {
        throw Error(ErrorKind::contract, "graph gene vocabulary does not match the embedding table");
    }
    if (graph.variant_count() == 0) {
        throw Error(ErrorKind::contract, "model_forward: graph has no variants to score");
    }
    if (graph.feature_dim() != cfg.feature_dim) {
        throw Error(ErrorKind::dimension,
                    "variant features have dim " + std::to_string(graph.feature_dim()) +
                        ", model expects " + std::to_string(cfg.feature_dim));
    }

    std::mt19937_64 dropout_rng(opts.dropout_seed);
    Var x_v0 = matmul(t.constant(graph.feature_matrix()), t.param(params.variant_projection));
    Var x_g0 = t.param(params.gene_embeddings);

    const EdgeListView in_edges = graph.edge_list(EdgeType::IN);
    const EdgeListView has_edges = graph.edge_list(EdgeType::HAS);
    const EdgeListView interact_edges = graph.edge_list(EdgeType::INTERACT);

    std::vector<Var> gene_parts;
    gene_parts.push_back(gat_layer(x_v0, x_g0, in_edges, params.in_gat, cfg.leaky_slope, false,
                                   opts.trace, "in"));
    if (cfg.mode == GraphMode::given) {
        gene_parts.push_back(gat_layer(x_g0, x_g0, interact_edges, *params.interact_gat,
                                       cfg.leaky_slope, cfg.use_edge_weight_bias, opts.trace,
                                       "interact"));
    } else {
        Var h = x_g0;
        auto& perf = *params.performer;
        for (auto& layer : perf.layers) {
            h = performer_layer(h, layer, perf.omega, perf.dropout, dropout_rng, opts.training);
        }
        gene_parts.push_back(h);
        if (cfg.learnt_use_given_edges) {
            gene_parts.push_back(gat_layer(x_g0, x_g0, interact_edges, *params.interact_gat,
                                           cfg.leaky_slope, cfg.use_edge_weight_bias, opts.trace,
                                           "interact"));
        }
    }
    Var x_g1 = hetero_aggregate(gene_parts);

    Var x_v1 = hetero_aggregate({gat_layer(x_g0, x_v0, has_edges, params.has_gat, cfg.leaky_slope,
                                           false, opts.trace, "has")});
    Var x_v2 = gat_layer(x_g1, x_v1, has_edges, params.final_gat, cfg.leaky_slope, false,
                         opts.trace, "final");
    return sigmoid(add(matmul(x_v2, t.param(params.head_weight)), t.param(params.head_bias)));
}

// Walks the learnt-mode attention stack with exact softmax attention, handing
// each per-layer Q/K pair to the visitor. Used by attention export, where the
// quadratic cost is accepted for small gene sets.
inline void performer_exact_walk(
    ModelParams& params,
    const std::function<void(std::size_t layer, std::size_t head, const Tensor& q,
                             const Tensor& k)>& visit) {
    if (!params.performer) {
        throw Error(ErrorKind::contract, "performer_exact_walk: model has no performer stack");
    }
    Tensor x = params.gene_embeddings.value;
    const auto& perf = *params.performer;
    for (std::size_t l = 0; l < perf.layers.size(); ++l) {
        Tensor combined(x.rows(), 0);
        for (std::size_t h = 0; h < perf.layers[l].heads.size(); ++h) {
            const auto& head = perf.layers[l].heads[h];
            Tensor q = matmul(x, head.wq.value);
            Tensor k = matmul(x, head.wk.value);
            Tensor v = matmul(x, head.wv.value);
            visit(l, h, q, k);
            Tensor att = exact_attention(q, k, v);
            Tensor next(x.rows(), combined.cols() + att.cols());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t j = 0; j < combined.cols(); ++j) next.at(i, j) = combined.at(i, j);
                for (std::size_t j = 0; j < att.cols(); ++j)
                    next.at(i, combined.cols() + j) = att.at(i, j);
            }
            combined = std::move(next);
        }
        for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += combined.values()[i];
    }
}

struct AttentionBenchRow {
    std::size_t genes = 0;
    std::size_t dim = 0;
    std::size_t features = 0;
    std::size_t repeat = 0;
    double favor_ms = 0.0;
    double exact_ms = -1.0;      // < 0 when skipped
    double rel_frob_err = -1.0;  // < 0 when skipped
};

// Times the linear-attention path against the exact quadratic one on random
// Q/K/V, which is how the linear-complexity claim is checked at desk scale.
inline std::vector<AttentionBenchRow> attention_benchmark(
    const std::vector<std::size_t>& gene_counts, std::size_t dim, std::size_t m,
    std::size_t repeats, std::uint64_t seed, std::size_t max_exact = 8192) {
    std::vector<AttentionBenchRow> rows;
    for (std::size_t n : gene_counts) {
        auto rng = make_rng(seed, "bench", n);
        const Tensor q = random_normal(n, dim, 0.0, 1.0, rng);
        const Tensor k = random_normal(n, dim, 0.0, 1.0, rng);
        const Tensor v = random_normal(n, dim, 0.0, 1.0, rng);
        const Tensor omega = draw_omega(m, dim, rng);
        Tensor exact;
        double exact_ms = -1.0;
        if (n <= max_exact) {
            const auto t0 = std::chrono::steady_clock::now();
            exact = exact_attention(q, k, v);
            const auto t1 = std::chrono::steady_clock::now();
            exact_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        for (std::size_t r = 0; r < repeats; ++r) {
            AttentionBenchRow row;
            row.genes = n;
            row.dim = dim;
            row.features = m;
            row.repeat = r;
            const auto t0 = std::chrono::steady_clock::now();
            const Tensor approx = favor_attention(q, k, v, omega);
            const auto t1 = std::chrono::steady_clock::now();
            row.favor_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            row.exact_ms = exact_ms;
            if (exact.size() > 0) {
                double num = 0.0, den = 0.0;
                for (std::size_t i = 0; i < exact.size(); ++i) {
                    const double d = approx.values()[i] - exact.values()[i];
                    num += d * d;
                    den += exact.values()[i] * exact.values()[i];
                }
                row.rel_frob_err = std::sqrt(num / std::max(den, 1e-300));
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace vegn
