#include "pct/baselines.hpp"

#include "pct/errors.hpp"
#include "pct/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace pct {

namespace {

uint64_t voxel_stream(uint64_t seed, const VoxelIndex& idx) {
    uint64_t s = mix_seed(seed, uint64_t(idx.h));
    s = mix_seed(s, uint64_t(idx.w));
    return mix_seed(s, uint64_t(idx.d));
}

double sq_dist_rows(const Tensor& a, int i, const Tensor& b, int j) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = a(i, c) - b(j, c);
        s += d * d;
    }
    return s;
}

Tensor take_rows(const Tensor& src, const std::vector<size_t>& rows) {
    Tensor out(int(rows.size()), src.cols);
    for (size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < src.cols; ++c) out(int(r), c) = src(int(rows[r]), c);
    return out;
}

} // namespace

int64_t budget_points(double ratio, int64_t n) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ConfigError("budget ratio must be in (0, 1], got " + std::to_string(ratio));
    return int64_t(std::floor(ratio * double(n)));
}

int per_voxel_quota(const VoxelizedCloud& vc, double ratio) {
    if (vc.voxels.empty()) throw DataError("per_voxel_quota: no voxels");
    int64_t target = budget_points(ratio, vc.total_points);
    std::vector<int64_t> counts;
    counts.reserve(vc.voxels.size());
    int64_t max_n = 1;
    for (const auto& [idx, cell] : vc.voxels) {
        counts.push_back(cell.points.rows);
        max_n = std::max(max_n, int64_t(cell.points.rows));
    }
    auto realized = [&](int64_t q) {
        int64_t t = 0;
        for (int64_t n : counts) t += std::min(n, q);
        return t;
    };
    // Smallest quota whose realized total reaches the target; consecutive
    // totals differ by at most M, so one of {q-1, q} lands within M.
    int64_t lo = 1, hi = max_n;
    while (lo < hi) {
        int64_t mid = lo + (hi - lo) / 2;
        if (realized(mid) >= target)
            hi = mid;
        else
            lo = mid + 1;
    }
    int64_t q = lo;
    if (q > 1 && std::llabs(realized(q - 1) - target) < std::llabs(realized(q) - target)) q -= 1;
    return int(std::max<int64_t>(1, q));
}

PointCloud g_random(const PointCloud& cloud, double ratio, uint64_t seed) {
    if (cloud.size() == 0) throw DataError("g_random: empty cloud");
    int64_t keep = budget_points(ratio, cloud.size());
    Rng rng(mix_seed(seed, 0x67726e64)); // "grnd"
    std::vector<size_t> chosen =
        rng.sample_without_replacement(size_t(cloud.size()), size_t(keep));
    std::sort(chosen.begin(), chosen.end());
    PointCloud out;
    out.points = take_rows(cloud.points, chosen);
    return out;
}

PointCloud v_random(const VoxelizedCloud& vc, double ratio, uint64_t seed) {
    int quota = per_voxel_quota(vc, ratio);
    std::vector<const VoxelCell*> cells;
    std::vector<const VoxelIndex*> indices;
    for (const auto& [idx, cell] : vc.voxels) {
        indices.push_back(&idx);
        cells.push_back(&cell);
    }
    std::vector<Tensor> kept(cells.size());
    parallel_for(int(cells.size()), [&](int i) {
        const Tensor& pts = cells[size_t(i)]->points;
        int take = std::min(pts.rows, quota);
        Rng rng(voxel_stream(seed, *indices[size_t(i)]));
        std::vector<size_t> chosen = rng.sample_without_replacement(size_t(pts.rows), size_t(take));
        std::sort(chosen.begin(), chosen.end());
        kept[size_t(i)] = take_rows(pts, chosen);
    });
    int64_t total = 0;
    for (const Tensor& t : kept) total += t.rows;
    PointCloud out;
    out.points = Tensor(int(total), 3);
    int row = 0;
    for (const Tensor& t : kept)
        for (int r = 0; r < t.rows; ++r, ++row)
            for (int c = 0; c < 3; ++c) out.points(row, c) = t(r, c);
    return out;
}

KmeansResult kmeans_points(const Tensor& points, int k, Rng& rng, int max_iters, double rel_tol) {
    int n = points.rows;
    if (n == 0) throw DataError("kmeans: empty input");
    k = std::min(k, n);
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");

    // k-means++ seeding.
    std::vector<int> center_ids;
    center_ids.reserve(size_t(k));
    std::vector<double> d2(size_t(n), std::numeric_limits<double>::infinity());
    center_ids.push_back(int(rng.uniform_int(uint64_t(n))));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = sq_dist_rows(points, i, points, center_ids.back());
            d2[size_t(i)] = std::min(d2[size_t(i)], d);
            total += d2[size_t(i)];
        }
        int pick = -1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[size_t(i)];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) pick = n - 1;
        } else {
            // All remaining points coincide with a chosen center.
            pick = int(rng.uniform_int(uint64_t(n)));
        }
        center_ids.push_back(pick);
    }
    Tensor centers(k, 3);
    for (int c = 0; c < k; ++c)
        for (int x = 0; x < 3; ++x) centers(c, x) = points(center_ids[size_t(c)], x);

    KmeansResult result;
    std::vector<int> assign(size_t(n), 0);
    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                double d = sq_dist_rows(points, i, centers, c);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            assign[size_t(i)] = arg;
            inertia += best;
        }
        result.inertia_trace.push_back(inertia);
        if (iter > 0 && prev - inertia < rel_tol * std::max(prev, 1e-300)) break;
        prev = inertia;

        Tensor sums(k, 3);
        std::vector<int> counts(size_t(k), 0);
        for (int i = 0; i < n; ++i) {
            counts[size_t(assign[size_t(i)])]++;
            for (int x = 0; x < 3; ++x) sums(assign[size_t(i)], x) += points(i, x);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[size_t(c)] == 0) continue; // empty cluster keeps its center
            for (int x = 0; x < 3; ++x) centers(c, x) = sums(c, x) / double(counts[size_t(c)]);
        }
    }
    result.centers = std::move(centers);
    return result;
}

PointCloud v_kmeans(const VoxelizedCloud& vc, double ratio, uint64_t seed) {
    int quota = per_voxel_quota(vc, ratio);
    std::vector<const VoxelCell*> cells;
    std::vector<const VoxelIndex*> indices;
    for (const auto& [idx, cell] : vc.voxels) {
        indices.push_back(&idx);
        cells.push_back(&cell);
    }
    std::vector<Tensor> kept(cells.size());
    parallel_for(int(cells.size()), [&](int i) {
        const Tensor& pts = cells[size_t(i)]->points;
        Rng rng(voxel_stream(seed, *indices[size_t(i)]));
        kept[size_t(i)] = kmeans_points(pts, quota, rng).centers;
    });
    int64_t total = 0;
    for (const Tensor& t : kept) total += t.rows;
    PointCloud out;
    out.points = Tensor(int(total), 3);
    int row = 0;
    for (const Tensor& t : kept)
        for (int r = 0; r < t.rows; ++r, ++row)
            for (int c = 0; c < 3; ++c) out.points(row, c) = t(r, c);
    return out;
}

OctreeResult octree_represent(const PointCloud& cloud, int depth) {
    if (cloud.size() == 0) throw DataError("octree: empty cloud");
    if (depth < 1 || depth > 20) throw ConfigError("octree depth must be in [1, 20]");
    std::array<double, 3> mn{std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity()};
    std::array<double, 3> mx{-std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity()};
    for (int64_t i = 0; i < cloud.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            mn[size_t(c)] = std::min(mn[size_t(c)], cloud.points(int(i), c));
            mx[size_t(c)] = std::max(mx[size_t(c)], cloud.points(int(i), c));
        }
    double side = 0.0;
    for (int c = 0; c < 3; ++c) side = std::max(side, mx[size_t(c)] - mn[size_t(c)]);
    // Pad so points on the far face stay inside the half-open cells.
    side = std::max(side, 1e-12) * (1.0 + 1e-12);
    int64_t cells = int64_t(1) << depth;
    double cell = side / double(cells);

    std::unordered_map<uint64_t, int64_t> occupied; // key -> first point
    std::vector<uint64_t> order;
    for (int64_t i = 0; i < cloud.size(); ++i) {
        uint64_t key = 0;
        for (int c = 0; c < 3; ++c) {
            int64_t g = int64_t(std::floor((cloud.points(int(i), c) - mn[size_t(c)]) / cell));
            g = std::clamp<int64_t>(g, 0, cells - 1);
            key = (key << 20) | uint64_t(g);
        }
        if (occupied.emplace(key, i).second) order.push_back(key);
    }
    std::sort(order.begin(), order.end());

    OctreeResult result;
    result.leaves = int64_t(order.size());
    result.centers.points = Tensor(int(order.size()), 3);
    for (size_t r = 0; r < order.size(); ++r) {
        uint64_t key = order[r];
        int64_t g[3] = {int64_t(key >> 40) & 0xfffff, int64_t(key >> 20) & 0xfffff,
                        int64_t(key) & 0xfffff};
        for (int c = 0; c < 3; ++c)
            result.centers.points(int(r), c) = mn[size_t(c)] + (double(g[c]) + 0.5) * cell;
    }
    result.ratio = double(result.leaves) / double(cloud.size());
    return result;
}

int octree_pick_depth(const PointCloud& cloud, double target_ratio, int max_depth) {
    int best_depth = 1;
    double best_err = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= max_depth; ++d) {
        OctreeResult r = octree_represent(cloud, d);
        double err = std::abs(r.ratio - target_ratio);
        if (err < best_err) {
            best_err = err;
            best_depth = d;
        }
        if (r.ratio >= 1.0) break; // every point has its own leaf; deeper only repeats
    }
    return best_depth;
}

std::vector<double> pointnet_encode(const LocalVoxel& voxel, const Model& model) {
    if (model.config.encoder != EncoderKind::pointnet)
        throw ConfigError("pointnet_encode: model encoder is not pointnet");
    return encode_voxel(model, voxel, {1.0, 1.0, 1.0}).code;
}

} // namespace pct
