#pragma once

#include "pct/tensor.hpp"

#include <vector>

namespace pct {

/// K-nearest-neighbor graph over one voxel's points. Neighbor lists are
/// sorted by squared distance ascending, ties broken by point index; self
/// edges are excluded and k is clamped to n-1.
struct Graph {
    int k = 0;
    std::vector<std::vector<int>> neighbors;            // per point, size min(k, n-1)
    std::vector<std::vector<double>> weights;           // exp(-||p_i - p_j||^2), matching
};

/// Graphs for every K in an ascending set, sharing one all-pairs distance
/// computation. Neighbor lists nest: for k1 < k2, N_i^(k1) is a prefix of
/// N_i^(k2).
struct GraphSet {
    std::vector<int> ks;
    std::vector<Graph> graphs; // one per k, same order
    int n = 0;

    const Graph& graph_for(int k) const;
};

Graph knn_graph(const Tensor& points, int k);

GraphSet build_graph_set(const Tensor& points, const std::vector<int>& ks = {1, 4, 8, 16});

} // namespace pct
