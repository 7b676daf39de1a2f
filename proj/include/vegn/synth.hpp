#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "vegn/error.hpp"
#include "vegn/graph.hpp"
#include "vegn/rng.hpp"

namespace vegn {

// Planted-structure generator: genes are partitioned into modules, modules get
// a pathogenic/benign status, gene-gene edges are dense within a module and
// sparse across, and every variant inherits its gene's status with feature
// noise and label flips. The feature alone is informative; the graph adds the
// shared gene signal.
struct SynthConfig {
    std::size_t gene_count = 100;
    double variants_per_gene = 10.0;  // Poisson mean
    double gene_edge_probability = 0.2;  // within modules
    std::size_t module_count = 10;
    double feature_noise_sd = 1.0;
    double label_flip_probability = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (gene_count < 1 || module_count < 1) {
            throw Error(ErrorKind::contract, "synth: counts must be >= 1");
        }
        if (module_count > gene_count) {
            throw Error(ErrorKind::contract, "synth: more modules than genes");
        }
        if (gene_edge_probability < 0.0 || gene_edge_probability > 1.0 ||
            label_flip_probability < 0.0 || label_flip_probability > 1.0) {
            throw Error(ErrorKind::contract, "synth: probabilities must be in [0,1]");
        }
        if (variants_per_gene <= 0.0) {
            throw Error(ErrorKind::contract, "synth: variants_per_gene must be > 0");
        }
        if (feature_noise_sd < 0.0) {
            throw Error(ErrorKind::contract, "synth: feature_noise_sd must be >= 0");
        }
    }
};

struct SynthData {
    std::vector<VariantRecord> variants;
    std::vector<GeneEdge> gene_edges;
    std::vector<std::string> gene_vocabulary;
    std::vector<int> gene_status;  // ground truth: 1 = pathogenic module
};

// Cross-module edges appear at this fixed base rate regardless of the
// within-module probability.
inline constexpr double kCrossModuleEdgeRate = 0.002;

inline SynthData generate(const SynthConfig& config) {
    config.validate();
    SynthData data;
    auto rng = make_rng(config.seed, "synth");

    data.gene_vocabulary.reserve(config.gene_count);
    for (std::size_t g = 0; g < config.gene_count; ++g) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "G%05zu", g);
        data.gene_vocabulary.emplace_back(buf);
    }

    // Contiguous modules; half of them (rounded up) pathogenic, chosen at random.
    std::vector<std::size_t> gene_module(config.gene_count);
    for (std::size_t g = 0; g < config.gene_count; ++g) {
        gene_module[g] = g * config.module_count / config.gene_count;
    }
    std::vector<int> module_status(config.module_count, 0);
    {
        std::vector<std::size_t> order(config.module_count);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < (config.module_count + 1) / 2; ++i) {
            module_status[order[i]] = 1;
        }
    }
    data.gene_status.resize(config.gene_count);
    for (std::size_t g = 0; g < config.gene_count; ++g) {
        data.gene_status[g] = module_status[gene_module[g]];
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t a = 0; a < config.gene_count; ++a) {
        for (std::size_t b = a + 1; b < config.gene_count; ++b) {
            const double p = gene_module[a] == gene_module[b] ? config.gene_edge_probability
                                                              : kCrossModuleEdgeRate;
            if (unif(rng) < p) {
                data.gene_edges.push_back(
                    GeneEdge{data.gene_vocabulary[a], data.gene_vocabulary[b], 1.0});
            }
        }
    }

    std::poisson_distribution<int> poisson(config.variants_per_gene);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t next_id = 0;
    for (std::size_t g = 0; g < config.gene_count; ++g) {
        const int count = poisson(rng);
        for (int i = 0; i < count; ++i) {
            VariantRecord rec;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "SV%06zu", next_id);
            rec.variant_id = buf;
            rec.chrom = "chr1";
            rec.pos = static_cast<std::int64_t>(next_id) + 1;
            rec.ref_allele = "A";
            rec.alt_allele = "C";
            rec.gene_id = data.gene_vocabulary[g];
            const double status = static_cast<double>(data.gene_status[g]);
            rec.features = {status + config.feature_noise_sd * noise(rng)};
            const bool flip = unif(rng) < config.label_flip_probability;
            const int label = flip ? 1 - data.gene_status[g] : data.gene_status[g];
            rec.label = label == 1 ? Label::pathogenic : Label::benign;
            data.variants.push_back(std::move(rec));
            ++next_id;
        }
    }
    return data;
}

// Fixed 5-gene / 8-variant fixture used by the gradient-check surfaces.
inline SynthData grad_check_fixture() {
    SynthData data;
    data.gene_vocabulary = {"GA", "GB", "GC", "GD", "GE"};
    data.gene_status = {1, 1, 0, 0, 1};
    data.gene_edges = {
        GeneEdge{"GA", "GB", 1.0},
        GeneEdge{"GB", "GC", 0.5},
        GeneEdge{"GC", "GD", 1.0},
        GeneEdge{"GA", "GE", 2.0},
    };
    const char* genes[8] = {"GA", "GA", "GB", "GC", "GC", "GD", "GE", "GE"};
    const double feats[8] = {0.9, 1.2, 0.7, -0.1, 0.2, -0.3, 1.1, 0.8};
    const int labels[8] = {1, 1, 1, 0, 0, 0, 1, 1};
    for (std::size_t i = 0; i < 8; ++i) {
        VariantRecord rec;
        rec.variant_id = "V" + std::to_string(i + 1);
        rec.chrom = "chr1";
        rec.pos = static_cast<std::int64_t>(100 + i);
        rec.ref_allele = "A";
        rec.alt_allele = "G";
        rec.gene_id = genes[i];
        rec.features = {feats[i]};
        rec.label = labels[i] == 1 ? Label::pathogenic : Label::benign;
        data.variants.push_back(std::move(rec));
    }
    return data;
}

}  // namespace vegn
