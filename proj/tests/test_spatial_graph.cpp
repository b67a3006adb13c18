#include "pct/spatial_graph.hpp"

#include "pct/errors.hpp"
#include "pct/rng.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace pct;

namespace {

// Independent all-pairs oracle: full sort per point, no shared code path
// with the implementation's candidate machinery.
std::vector<std::vector<int>> brute_knn(const Tensor& pts, int k) {
    int n = pts.rows;
    std::vector<std::vector<int>> out(size_t(n));
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> all;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0;
            for (int c = 0; c < 3; ++c) {
                double d = pts(i, c) - pts(j, c);
                d2 += d * d;
            }
            all.emplace_back(d2, j);
        }
        std::sort(all.begin(), all.end());
        for (int r = 0; r < std::min(k, n - 1); ++r) out[size_t(i)].push_back(all[size_t(r)].second);
    }
    return out;
}

Tensor points_of(std::vector<std::array<double, 3>> pts) {
    Tensor t(int(pts.size()), 3);
    for (size_t i = 0; i < pts.size(); ++i)
        for (int c = 0; c < 3; ++c) t(int(i), c) = pts[i][size_t(c)];
    return t;
}

} // namespace

TEST_CASE("knn_graph on three collinear points") {
    Tensor pts = points_of({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
    Graph g = knn_graph(pts, 1);
    REQUIRE(g.neighbors.size() == 3);
    CHECK(g.neighbors[0] == std::vector<int>{1});
    CHECK(g.neighbors[1] == std::vector<int>{0});
    CHECK(g.neighbors[2] == std::vector<int>{1});
    CHECK(g.weights[0][0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(g.weights[0][0] == doctest::Approx(0.367879).epsilon(1e-5));
}

TEST_CASE("coincident points have weight 1") {
    Tensor pts = points_of({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {1, 1, 1}});
    Graph g = knn_graph(pts, 1);
    CHECK(g.neighbors[0] == std::vector<int>{1}); // tie broken by index
    CHECK(g.weights[0][0] == 1.0);
}

TEST_CASE("knn_graph matches the brute-force oracle") {
    Rng rng(21);
    Tensor pts = test::random_points(rng, 64);
    Graph g = knn_graph(pts, 8);
    auto oracle = brute_knn(pts, 8);
    for (int i = 0; i < 64; ++i) CHECK(g.neighbors[size_t(i)] == oracle[size_t(i)]);
}

TEST_CASE("build_graph_set clamps k and nests neighbor lists") {
    Tensor two = points_of({{0, 0, 0}, {1, 1, 1}});
    GraphSet gs = build_graph_set(two);
    for (const Graph& g : gs.graphs) {
        CHECK(g.neighbors[0].size() == 1);
        CHECK(g.neighbors[1].size() == 1);
    }

    Rng rng(22);
    Tensor pts = test::random_points(rng, 32);
    GraphSet nested = build_graph_set(pts, {1, 4});
    for (int i = 0; i < 32; ++i) {
        const auto& small = nested.graphs[0].neighbors[size_t(i)];
        const auto& large = nested.graphs[1].neighbors[size_t(i)];
        REQUIRE(small.size() <= large.size());
        for (size_t r = 0; r < small.size(); ++r) CHECK(small[r] == large[r]);
    }
}

TEST_CASE("graphs are invariant under global translation") {
    Rng rng(23);
    Tensor pts = test::random_points(rng, 40);
    Tensor shifted = pts;
    for (int i = 0; i < 40; ++i) {
        shifted(i, 0) += 5.0;
        shifted(i, 1) += 5.0;
        shifted(i, 2) += 5.0;
    }
    GraphSet a = build_graph_set(pts);
    GraphSet b = build_graph_set(shifted);
    for (size_t k = 0; k < a.graphs.size(); ++k)
        for (int i = 0; i < 40; ++i) {
            CHECK(a.graphs[k].neighbors[size_t(i)] == b.graphs[k].neighbors[size_t(i)]);
            for (size_t r = 0; r < a.graphs[k].weights[size_t(i)].size(); ++r)
                CHECK(a.graphs[k].weights[size_t(i)][r] ==
                      doctest::Approx(b.graphs[k].weights[size_t(i)][r]).epsilon(1e-12));
        }
}

TEST_CASE("neighbor sets are permutation-equivariant for tie-free points") {
    Rng rng(24);
    int n = 24;
    Tensor pts = test::random_points(rng, n);
    std::vector<int> perm(size_t(n));
    for (int i = 0; i < n; ++i) perm[size_t(i)] = i;
    rng.shuffle(perm);
    Tensor permuted(n, 3);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) permuted(perm[size_t(i)], c) = pts(i, c);
    Graph g = knn_graph(pts, 5);
    Graph gp = knn_graph(permuted, 5);
    for (int i = 0; i < n; ++i) {
        std::vector<int> mapped;
        for (int j : g.neighbors[size_t(i)]) mapped.push_back(perm[size_t(j)]);
        std::vector<int> got = gp.neighbors[size_t(perm[size_t(i)])];
        std::sort(mapped.begin(), mapped.end());
        std::sort(got.begin(), got.end());
        CHECK(mapped == got);
    }
}

TEST_CASE("weights lie in (0,1] and are symmetric where both directions exist") {
    Rng rng(25);
    Tensor pts = test::random_points(rng, 48);
    Graph g = knn_graph(pts, 6);
    for (int i = 0; i < 48; ++i)
        for (size_t r = 0; r < g.neighbors[size_t(i)].size(); ++r) {
            double w = g.weights[size_t(i)][r];
            CHECK(w > 0.0);
            CHECK(w <= 1.0);
            int j = g.neighbors[size_t(i)][r];
            auto& back = g.neighbors[size_t(j)];
            auto it = std::find(back.begin(), back.end(), i);
            if (it != back.end())
                CHECK(g.weights[size_t(j)][size_t(it - back.begin())] == w);
        }
}

TEST_CASE("graph construction errors") {
    Tensor empty(0, 3);
    CHECK_THROWS_AS(knn_graph(empty, 1), DataError);
    CHECK_THROWS_AS(build_graph_set(empty), DataError);
    Tensor one = points_of({{0, 0, 0}});
    CHECK_THROWS_AS(knn_graph(one, 0), DataError);
    CHECK_THROWS_AS(build_graph_set(one, {4, 4}), ConfigError);
    CHECK_THROWS_AS(build_graph_set(one, {}), ConfigError);
    // n = 1 is legal: empty neighbor lists.
    Graph g = knn_graph(one, 3);
    CHECK(g.neighbors[0].empty());
}
