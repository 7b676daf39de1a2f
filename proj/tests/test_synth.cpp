#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "vegn/metrics.hpp"
#include "vegn/synth.hpp"

using namespace vegn;

TEST_CASE("noise-free generation separates labels perfectly", "[synth]") {
    SynthConfig cfg;
    cfg.gene_count = 20;
    cfg.module_count = 4;
    cfg.variants_per_gene = 8.0;
    cfg.feature_noise_sd = 0.0;
    cfg.label_flip_probability = 0.0;
    cfg.seed = 1;
    const auto data = generate(cfg);
    REQUIRE(data.variants.size() > 0);
    std::vector<ScoredLabel> scored;
    for (const auto& v : data.variants) {
        CHECK(v.features.size() == 1);
        scored.push_back(ScoredLabel{v.features[0], v.label == Label::pathogenic ? 1 : 0});
    }
    CHECK(auroc(scored) == 1.0);
}

TEST_CASE("flip probability one half erases the signal", "[synth]") {
    SynthConfig cfg;
    cfg.gene_count = 100;
    cfg.module_count = 10;
    cfg.variants_per_gene = 100.0;
    cfg.feature_noise_sd = 0.0;
    cfg.label_flip_probability = 0.5;
    cfg.seed = 2;
    const auto data = generate(cfg);
    REQUIRE(data.variants.size() >= 9000);
    std::vector<ScoredLabel> scored;
    for (const auto& v : data.variants) {
        scored.push_back(ScoredLabel{v.features[0], v.label == Label::pathogenic ? 1 : 0});
    }
    CHECK(std::fabs(auroc(scored) - 0.5) < 0.05);
}

TEST_CASE("generation is deterministic under a fixed seed", "[synth]") {
    SynthConfig cfg;
    cfg.gene_count = 15;
    cfg.module_count = 3;
    cfg.seed = 33;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    REQUIRE(a.variants.size() == b.variants.size());
    for (std::size_t i = 0; i < a.variants.size(); ++i) {
        CHECK(a.variants[i].variant_id == b.variants[i].variant_id);
        CHECK(a.variants[i].gene_id == b.variants[i].gene_id);
        CHECK(a.variants[i].features == b.variants[i].features);
        CHECK(a.variants[i].label == b.variants[i].label);
    }
    REQUIRE(a.gene_edges.size() == b.gene_edges.size());
    CHECK(a.gene_status == b.gene_status);
}

TEST_CASE("no self-loops and modules are denser inside than across", "[synth][property]") {
    SynthConfig cfg;
    cfg.gene_count = 200;
    cfg.module_count = 10;
    cfg.gene_edge_probability = 0.3;
    cfg.seed = 4;
    const auto data = generate(cfg);

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.gene_vocabulary.size(); ++i)
        index[data.gene_vocabulary[i]] = i;
    auto module_of = [&](const std::string& gene) {
        return index[gene] * cfg.module_count / cfg.gene_count;
    };
    std::size_t within = 0, across = 0;
    for (const auto& e : data.gene_edges) {
        CHECK(e.gene_a != e.gene_b);
        (module_of(e.gene_a) == module_of(e.gene_b) ? within : across)++;
    }
    // density = edges / possible pairs
    const double genes_per_module = double(cfg.gene_count) / double(cfg.module_count);
    const double within_pairs =
        cfg.module_count * genes_per_module * (genes_per_module - 1.0) / 2.0;
    const double total_pairs = cfg.gene_count * (cfg.gene_count - 1.0) / 2.0;
    const double within_density = double(within) / within_pairs;
    const double across_density = double(across) / (total_pairs - within_pairs);
    CHECK(within_density > across_density);
}

TEST_CASE("empirical flip rate matches the configured probability", "[synth][property]") {
    SynthConfig cfg;
    cfg.gene_count = 100;
    cfg.module_count = 10;
    cfg.variants_per_gene = 120.0;
    cfg.label_flip_probability = 0.1;
    cfg.feature_noise_sd = 0.0;
    cfg.seed = 5;
    const auto data = generate(cfg);
    REQUIRE(data.variants.size() >= 10000);

    std::map<std::string, int> status;
    for (std::size_t i = 0; i < data.gene_vocabulary.size(); ++i)
        status[data.gene_vocabulary[i]] = data.gene_status[i];
    std::size_t flipped = 0;
    for (const auto& v : data.variants) {
        const int label = v.label == Label::pathogenic ? 1 : 0;
        if (label != status[v.gene_id]) ++flipped;
    }
    const double n = double(data.variants.size());
    const double rate = double(flipped) / n;
    const double se = std::sqrt(0.1 * 0.9 / n);
    CHECK(std::fabs(rate - 0.1) < 3.0 * se);
}

TEST_CASE("invalid configs are rejected", "[synth]") {
    SynthConfig cfg;
    cfg.gene_count = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.label_flip_probability = 1.5;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = SynthConfig{};
    cfg.module_count = 50;
    cfg.gene_count = 10;
    CHECK_THROWS_AS(generate(cfg), Error);
}

TEST_CASE("the grad-check fixture is the documented 5-gene 8-variant graph", "[synth]") {
    const auto data = grad_check_fixture();
    CHECK(data.gene_vocabulary.size() == 5);
    CHECK(data.variants.size() == 8);
    CHECK_NOTHROW(build_graph(data.variants, data.gene_edges, data.gene_vocabulary));
}
