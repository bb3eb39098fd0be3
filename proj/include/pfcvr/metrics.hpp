#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "pfcvr/matrix.hpp"

namespace pfcvr {

// Gallery indices per query, best first. Ties break toward the lower gallery
// index so rankings are reproducible across platforms.
inline std::vector<std::vector<int>> rank_gallery(const Mat& sim) {
    check(sim.rows > 0 && sim.cols > 0, "rank_gallery: empty similarity matrix");
    std::vector<std::vector<int>> out(static_cast<size_t>(sim.rows));
    for (int q = 0; q < sim.rows; ++q) {
        std::vector<int>& order = out[static_cast<size_t>(q)];
        order.resize(static_cast<size_t>(sim.cols));
        std::iota(order.begin(), order.end(), 0);
        const double* row = sim.row_ptr(q);
        std::sort(order.begin(), order.end(), [row](int a, int b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        });
    }
    return out;
}

// Fraction of queries with at least one same-identity gallery item in the
// top k positions.
inline double rank_k(const std::vector<std::vector<int>>& rankings,
                     const std::vector<int>& query_labels,
                     const std::vector<int>& gallery_labels, int k) {
    check(k >= 1, "rank_k: k must be positive");
    check(rankings.size() == query_labels.size(), "rank_k: query count mismatch");
    int hits = 0;
    for (size_t q = 0; q < rankings.size(); ++q) {
        const auto& order = rankings[q];
        int depth = std::min<int>(k, static_cast<int>(order.size()));
        for (int i = 0; i < depth; ++i) {
            int g = order[static_cast<size_t>(i)];
            check(g >= 0 && g < static_cast<int>(gallery_labels.size()),
                  "rank_k: gallery index out of range");
            if (gallery_labels[static_cast<size_t>(g)] == query_labels[q]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

// AP_q = (1/m_q) * sum over match positions k of precision-at-k. Returns -1
// for queries with no gallery match; callers exclude those.
inline double average_precision(const std::vector<int>& ranking, int query_label,
                                const std::vector<int>& gallery_labels) {
    int matches = 0;
    double ap = 0.0;
    for (size_t i = 0; i < ranking.size(); ++i) {
        int g = ranking[i];
        if (gallery_labels[static_cast<size_t>(g)] == query_label) {
            ++matches;
            ap += static_cast<double>(matches) / static_cast<double>(i + 1);
        }
    }
    if (matches == 0) return -1.0;
    return ap / matches;
}

// Mean AP over queries that have at least one match; `skipped` counts the
// zero-match queries left out.
inline double mean_ap(const std::vector<std::vector<int>>& rankings,
                      const std::vector<int>& query_labels,
                      const std::vector<int>& gallery_labels, int* skipped = nullptr) {
    check(rankings.size() == query_labels.size(), "mean_ap: query count mismatch");
    double sum = 0.0;
    int used = 0, skip = 0;
    for (size_t q = 0; q < rankings.size(); ++q) {
        double ap = average_precision(rankings[q], query_labels[q], gallery_labels);
        if (ap < 0.0) {
            ++skip;
            continue;
        }
        sum += ap;
        ++used;
    }
    if (skipped) *skipped = skip;
    return used == 0 ? 0.0 : sum / used;
}

}  // namespace pfcvr
