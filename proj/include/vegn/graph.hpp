#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vegn/error.hpp"
#include "vegn/tensor.hpp"

namespace vegn {

// The three typed edge sets of the gene/variant graph.
enum class EdgeType { HAS, IN, INTERACT };

inline const char* to_string(EdgeType t) {
    switch (t) {
        case EdgeType::HAS: return "has";
        case EdgeType::IN: return "in";
        case EdgeType::INTERACT: return "interact";
    }
    return "?";
}

enum class Label : int { benign = 0, pathogenic = 1, unlabeled = 2 };

struct VariantRecord {
    std::string variant_id;
    std::string chrom;
    std::int64_t pos = 0;  // 1-based
    std::string ref_allele;
    std::string alt_allele;
    std::string gene_id;
    std::vector<double> features;
    Label label = Label::unlabeled;
};

struct GeneEdge {
    std::string gene_a;
    std::string gene_b;
    double weight = 1.0;
};

// Compressed adjacency: neighbors of node i are indices[offsets[i]..offsets[i+1]),
// sorted and duplicate-free.
struct Adjacency {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> indices;
    std::vector<double> weights;  // per stored neighbor; empty when unweighted

    std::size_t node_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }

    std::vector<std::size_t> neighbors(std::size_t node) const {
        return {indices.begin() + static_cast<std::ptrdiff_t>(offsets[node]),
                indices.begin() + static_cast<std::ptrdiff_t>(offsets[node + 1])};
    }
};

// Flat (src, dst) arrays for one edge type, ordered by destination then source.
// This is the form the message-passing layers consume.
struct EdgeListView {
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    std::vector<double> weight;  // empty when the type is unweighted
    std::size_t n_src = 0;
    std::size_t n_dst = 0;
};

// Immutable after construction: genes, variants, the three typed edge sets and
// their adjacency indices, plus the ingested per-variant data the model reads.
class HeteroGraph {
public:
    static HeteroGraph build(const std::vector<VariantRecord>& variants,
                             const std::vector<GeneEdge>& gene_edges,
                             const std::vector<std::string>& gene_vocabulary) {
        HeteroGraph g;
        g.gene_vocab_ = gene_vocabulary;
        for (std::size_t i = 0; i < gene_vocabulary.size(); ++i) {
            if (!g.gene_index_.emplace(gene_vocabulary[i], i).second) {
                throw Error(ErrorKind::duplication,
                            "gene vocabulary repeats id '" + gene_vocabulary[i] + "'");
            }
        }

        std::unordered_set<std::string> seen_variants;
        g.variants_.reserve(variants.size());
        g.variant_gene_.reserve(variants.size());
        for (std::size_t row = 0; row < variants.size(); ++row) {
            const VariantRecord& rec = variants[row];
            if (!seen_variants.insert(rec.variant_id).second) {
                throw Error(ErrorKind::duplication, "duplicate variant_id '" + rec.variant_id +
                                                        "' at row " + std::to_string(row));
            }
            auto it = g.gene_index_.find(rec.gene_id);
            if (it == g.gene_index_.end()) {
                throw Error(ErrorKind::referential, "unknown gene id '" + rec.gene_id +
                                                        "' in variant row " + std::to_string(row));
            }
            g.variants_.push_back(rec);
            g.variant_gene_.push_back(it->second);
        }

        // Undirected INTERACT edges, stored once with a < b; the first weight wins.
        std::map<std::pair<std::size_t, std::size_t>, double> undirected;
        for (std::size_t row = 0; row < gene_edges.size(); ++row) {
            const GeneEdge& e = gene_edges[row];
            auto ia = g.gene_index_.find(e.gene_a);
            auto ib = g.gene_index_.find(e.gene_b);
            if (ia == g.gene_index_.end()) {
                throw Error(ErrorKind::referential, "unknown gene id '" + e.gene_a +
                                                        "' in gene edge row " + std::to_string(row));
            }
            if (ib == g.gene_index_.end()) {
                throw Error(ErrorKind::referential, "unknown gene id '" + e.gene_b +
                                                        "' in gene edge row " + std::to_string(row));
            }
            if (e.weight < 0.0) {
                throw Error(ErrorKind::contract, "negative gene edge weight in row " +
                                                     std::to_string(row));
            }
            if (ia->second == ib->second) continue;  // self-loops dropped
            auto key = std::minmax(ia->second, ib->second);
            undirected.emplace(std::make_pair(key.first, key.second), e.weight);
        }
        g.gene_edges_.assign(undirected.begin(), undirected.end());

        g.rebuild_adjacency();
        return g;
    }

    // Returns a graph extended with new variant nodes; genes and INTERACT edges
    // are untouched and *this is not modified.
    HeteroGraph attach_variants(const std::vector<VariantRecord>& new_variants) const {
        HeteroGraph g = *this;
        std::unordered_set<std::string> seen;
        for (const auto& rec : variants_) seen.insert(rec.variant_id);
        for (std::size_t row = 0; row < new_variants.size(); ++row) {
            const VariantRecord& rec = new_variants[row];
            if (!seen.insert(rec.variant_id).second) {
                throw Error(ErrorKind::duplication, "duplicate variant_id '" + rec.variant_id +
                                                        "' at attached row " + std::to_string(row));
            }
            auto it = gene_index_.find(rec.gene_id);
            if (it == gene_index_.end()) {
                throw Error(ErrorKind::referential, "unknown gene id '" + rec.gene_id +
                                                        "' in attached row " + std::to_string(row));
            }
            g.variants_.push_back(rec);
            g.variant_gene_.push_back(it->second);
        }
        g.rebuild_adjacency();
        return g;
    }

    std::size_t gene_count() const { return gene_vocab_.size(); }
    std::size_t variant_count() const { return variants_.size(); }

    const std::vector<std::string>& gene_vocabulary() const { return gene_vocab_; }
    const std::vector<VariantRecord>& variants() const { return variants_; }
    const std::vector<std::size_t>& variant_gene() const { return variant_gene_; }
    const std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>>& gene_edges() const {
        return gene_edges_;
    }

    std::size_t gene_index(const std::string& gene_id) const {
        auto it = gene_index_.find(gene_id);
        if (it == gene_index_.end()) {
            throw Error(ErrorKind::referential, "unknown gene id '" + gene_id + "'");
        }
        return it->second;
    }

    const Adjacency& adjacency(EdgeType type) const {
        switch (type) {
            case EdgeType::HAS: return has_adj_;
            case EdgeType::IN: return in_adj_;
            case EdgeType::INTERACT: return interact_adj_;
        }
        throw Error(ErrorKind::contract, "bad edge type");
    }

    // A(i) for the source node class of the edge type: HAS is queried by gene,
    // IN by variant, INTERACT by gene.
    std::vector<std::size_t> neighbors(std::size_t node, EdgeType type) const {
        const Adjacency& adj = adjacency(type);
        if (node >= adj.node_count()) {
            throw Error(ErrorKind::bounds, std::string("neighbors: node ") + std::to_string(node) +
                                               " out of range for edge type " + to_string(type));
        }
        return adj.neighbors(node);
    }

    // Edge arrays oriented for message passing: src is the sending node class,
    // dst the receiving one, ordered by (dst, src).
    EdgeListView edge_list(EdgeType type) const {
        EdgeListView view;
        switch (type) {
            case EdgeType::HAS: {  // gene -> variant
                view.n_src = gene_count();
                view.n_dst = variant_count();
                for (std::size_t v = 0; v < variant_gene_.size(); ++v) {
                    view.src.push_back(variant_gene_[v]);
                    view.dst.push_back(v);
                }
                break;
            }
            case EdgeType::IN: {  // variant -> gene
                view.n_src = variant_count();
                view.n_dst = gene_count();
                for (std::size_t g = 0; g < gene_count(); ++g) {
                    for (std::size_t k = has_adj_.offsets[g]; k < has_adj_.offsets[g + 1]; ++k) {
                        view.src.push_back(has_adj_.indices[k]);
                        view.dst.push_back(g);
                    }
                }
                break;
            }
            case EdgeType::INTERACT: {  // gene <-> gene, both directions
                view.n_src = gene_count();
                view.n_dst = gene_count();
                for (std::size_t g = 0; g < gene_count(); ++g) {
                    for (std::size_t k = interact_adj_.offsets[g]; k < interact_adj_.offsets[g + 1];
                         ++k) {
                        view.src.push_back(interact_adj_.indices[k]);
                        view.dst.push_back(g);
                        view.weight.push_back(interact_adj_.weights[k]);
                    }
                }
                break;
            }
        }
        return view;
    }

    // Variant features as an n x F matrix; F must be uniform across records.
    Tensor feature_matrix() const {
        const std::size_t f = feature_dim();
        Tensor m(variants_.size(), f);
        for (std::size_t i = 0; i < variants_.size(); ++i) {
            for (std::size_t j = 0; j < f; ++j) m.at(i, j) = variants_[i].features[j];
        }
        return m;
    }

    std::size_t feature_dim() const {
        if (variants_.empty()) return 0;
        const std::size_t f = variants_[0].features.size();
        for (std::size_t i = 1; i < variants_.size(); ++i) {
            if (variants_[i].features.size() != f) {
                throw Error(ErrorKind::schema,
                            "variant '" + variants_[i].variant_id + "' has " +
                                std::to_string(variants_[i].features.size()) +
                                " features, expected " + std::to_string(f));
            }
        }
        return f;
    }

    bool structurally_equal(const HeteroGraph& other) const {
        return gene_vocab_ == other.gene_vocab_ && variant_gene_ == other.variant_gene_ &&
               gene_edges_ == other.gene_edges_ && variants_count_ids(*this) == variants_count_ids(other);
    }

private:
    static std::vector<std::string> variants_count_ids(const HeteroGraph& g) {
        std::vector<std::string> ids;
        ids.reserve(g.variants_.size());
        for (const auto& v : g.variants_) ids.push_back(v.variant_id);
        return ids;
    }

    void rebuild_adjacency() {
        // HAS: gene -> its variants. Mirrors IN exactly by construction.
        std::vector<std::vector<std::size_t>> has(gene_count());
        for (std::size_t v = 0; v < variant_gene_.size(); ++v) has[variant_gene_[v]].push_back(v);
        has_adj_ = pack(has, nullptr);

        std::vector<std::vector<std::size_t>> in(variant_count());
        for (std::size_t v = 0; v < variant_gene_.size(); ++v) in[v].push_back(variant_gene_[v]);
        in_adj_ = pack(in, nullptr);

        std::vector<std::vector<std::pair<std::size_t, double>>> inter(gene_count());
        for (const auto& [key, w] : gene_edges_) {
            inter[key.first].emplace_back(key.second, w);
            inter[key.second].emplace_back(key.first, w);
        }
        std::vector<std::vector<std::size_t>> inter_idx(gene_count());
        std::vector<std::vector<double>> inter_w(gene_count());
        for (std::size_t g = 0; g < gene_count(); ++g) {
            std::sort(inter[g].begin(), inter[g].end());
            for (const auto& [n, w] : inter[g]) {
                inter_idx[g].push_back(n);
                inter_w[g].push_back(w);
            }
        }
        interact_adj_ = pack(inter_idx, &inter_w);
    }

    static Adjacency pack(std::vector<std::vector<std::size_t>>& lists,
                          const std::vector<std::vector<double>>* weights) {
        Adjacency adj;
        adj.offsets.push_back(0);
        for (std::size_t i = 0; i < lists.size(); ++i) {
            auto& l = lists[i];
            if (!weights) std::sort(l.begin(), l.end());
            for (std::size_t k = 0; k < l.size(); ++k) {
                adj.indices.push_back(l[k]);
                if (weights) adj.weights.push_back((*weights)[i][k]);
            }
            adj.offsets.push_back(adj.indices.size());
        }
        return adj;
    }

    std::vector<std::string> gene_vocab_;
    std::unordered_map<std::string, std::size_t> gene_index_;
    std::vector<VariantRecord> variants_;
    std::vector<std::size_t> variant_gene_;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> gene_edges_;
    Adjacency has_adj_;
    Adjacency in_adj_;
    Adjacency interact_adj_;
};

inline HeteroGraph build_graph(const std::vector<VariantRecord>& variants,
                               const std::vector<GeneEdge>& gene_edges,
                               const std::vector<std::string>& gene_vocabulary) {
    return HeteroGraph::build(variants, gene_edges, gene_vocabulary);
}

}  // namespace vegn
