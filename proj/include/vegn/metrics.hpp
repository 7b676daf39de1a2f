#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vegn/error.hpp"

namespace vegn {

struct ScoredLabel {
    double score = 0.0;
    int label = 0;  // 0 or 1
};

namespace detail {

inline void check_auroc_input(const std::vector<ScoredLabel>& items) {
    std::size_t pos = 0, neg = 0;
    for (const auto& it : items) {
        if (!std::isfinite(it.score)) {
            throw Error(ErrorKind::contract, "auroc: non-finite score");
        }
        if (it.label != 0 && it.label != 1) {
            throw Error(ErrorKind::contract, "auroc: label must be 0 or 1");
        }
        (it.label == 1 ? pos : neg)++;
    }
    if (pos == 0 || neg == 0) {
        throw Error(ErrorKind::degenerate_metric,
                    "auroc needs at least one positive and one negative label");
    }
}

}  // namespace detail

// Rank-based auROC with average ranks for ties (Mann-Whitney convention):
// P(score_pos > score_neg) + 0.5 P(tie).
inline double auroc(const std::vector<ScoredLabel>& items) {
    detail::check_auroc_input(items);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return items[a].score < items[b].score; });

    double rank_sum_pos = 0.0;
    std::size_t pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
        for (std::size_t k = i; k < j; ++k) {
            if (items[order[k]].label == 1) {
                rank_sum_pos += avg_rank;
                ++pos;
            }
        }
        i = j;
    }
    const std::size_t neg = items.size() - pos;
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Quadratic enumeration of (positive, negative) pairs: wins plus half-ties.
// The independent cross-check for the ranked implementation.
inline double pair_count_auroc(const std::vector<ScoredLabel>& items) {
    detail::check_auroc_input(items);
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& p : items) {
        if (p.label != 1) continue;
        for (const auto& n : items) {
            if (n.label != 0) continue;
            ++pairs;
            if (p.score > n.score) {
                wins += 1.0;
            } else if (p.score == n.score) {
                wins += 0.5;
            }
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace vegn
