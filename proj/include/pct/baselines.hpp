#pragma once

#include "pct/pct_model.hpp"
#include "pct/pc_io.hpp"
#include "pct/rng.hpp"
#include "pct/voxelize.hpp"

#include <cstdint>
#include <vector>

namespace pct {

/// floor(ratio * n): the retained-point budget for spatial baselines under
/// scalar-count equivalence (3 scalars per point).
int64_t budget_points(double ratio, int64_t n);

/// Per-voxel retention quota, adjusted so the realized global total matches
/// floor(ratio * N) within the voxel count M. Always >= 1.
int per_voxel_quota(const VoxelizedCloud& vc, double ratio);

/// Uniform resampling over the whole cloud (G-Random), seeded, without
/// replacement, original point order preserved.
PointCloud g_random(const PointCloud& cloud, double ratio, uint64_t seed);

/// Per-voxel uniform resampling (V-Random): min(n_i, quota) points per voxel.
PointCloud v_random(const VoxelizedCloud& vc, double ratio, uint64_t seed);

/// Per-voxel k-means (V-Kmeans): cluster centers as the retained points.
PointCloud v_kmeans(const VoxelizedCloud& vc, double ratio, uint64_t seed);

struct KmeansResult {
    Tensor centers;                    // k x 3
    std::vector<double> inertia_trace; // one entry per Lloyd assignment pass
};

/// Lloyd's algorithm with k-means++ seeding; stops after max_iters or when
/// the relative inertia improvement falls below rel_tol.
KmeansResult kmeans_points(const Tensor& points, int k, Rng& rng, int max_iters = 50,
                           double rel_tol = 1e-6);

struct OctreeResult {
    PointCloud centers; // occupied-leaf centers
    double ratio;       // leaves / N under scalar-count accounting
    int64_t leaves = 0;
};

/// Occupied-leaf representation at a fixed depth over the padded bounding
/// cube (cube side = max extent; half-open cells).
OctreeResult octree_represent(const PointCloud& cloud, int depth);

/// Depth in [1, max_depth] whose ratio is closest to the target.
int octree_pick_depth(const PointCloud& cloud, double target_ratio, int max_depth = 12);

/// PointNet-style voxel encoder: shared per-point MLP + max aggregation.
/// Plugs into the same decoder and trainer as the GIN encoder; the model must
/// be configured with encoder = pointnet.
std::vector<double> pointnet_encode(const LocalVoxel& voxel, const Model& model);

} // namespace pct
