#include "pct/spatial_graph.hpp"

#include "pct/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pct {

namespace {

// Per point, all other points sorted by (squared distance, index).
struct Candidate {
    double d2;
    int j;
};

std::vector<std::vector<Candidate>> sorted_candidates(const Tensor& points) {
    int n = points.rows;
    std::vector<std::vector<Candidate>> cand{static_cast<size_t>(n)};
    for (int i = 0; i < n; ++i) {
        cand[size_t(i)].reserve(size_t(n - 1));
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                double diff = points(i, c) - points(j, c);
                d2 += diff * diff;
            }
            cand[size_t(i)].push_back({d2, j});
        }
        std::sort(cand[size_t(i)].begin(), cand[size_t(i)].end(),
                  [](const Candidate& a, const Candidate& b) {
                      return a.d2 != b.d2 ? a.d2 < b.d2 : a.j < b.j;
                  });
    }
    return cand;
}

Graph graph_from_candidates(const std::vector<std::vector<Candidate>>& cand, int n, int k) {
    Graph g;
    g.k = k;
    int k_eff = std::min(k, n - 1);
    g.neighbors.resize(size_t(n));
    g.weights.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        g.neighbors[size_t(i)].reserve(size_t(k_eff));
        g.weights[size_t(i)].reserve(size_t(k_eff));
        for (int r = 0; r < k_eff; ++r) {
            g.neighbors[size_t(i)].push_back(cand[size_t(i)][size_t(r)].j);
            g.weights[size_t(i)].push_back(std::exp(-cand[size_t(i)][size_t(r)].d2));
        }
    }
    return g;
}

} // namespace

const Graph& GraphSet::graph_for(int k) const {
    for (size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return graphs[i];
    throw DataError("graph set has no k=" + std::to_string(k));
}

Graph knn_graph(const Tensor& points, int k) {
    if (points.rows == 0) throw DataError("knn_graph: empty input");
    if (points.cols != 3) throw DataError("knn_graph: expected n x 3, got " + points.shape_str());
    if (k < 1) throw DataError("knn_graph: k must be >= 1");
    return graph_from_candidates(sorted_candidates(points), points.rows, k);
}

GraphSet build_graph_set(const Tensor& points, const std::vector<int>& ks) {
    if (points.rows == 0) throw DataError("build_graph_set: empty input");
    for (size_t i = 0; i + 1 < ks.size(); ++i)
        if (ks[i] >= ks[i + 1]) throw ConfigError("graph K values must be strictly increasing");
    if (ks.empty() || ks.front() < 1) throw ConfigError("graph K values must be >= 1");
    auto cand = sorted_candidates(points);
    GraphSet gs;
    gs.ks = ks;
    gs.n = points.rows;
    gs.graphs.reserve(ks.size());
    for (int k : ks) gs.graphs.push_back(graph_from_candidates(cand, points.rows, k));
    return gs;
}

} // namespace pct
