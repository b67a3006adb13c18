#pragma once

#include "pct/pc_io.hpp"
#include "pct/tensor.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <vector>

namespace pct {

/// 1-based grid index of a voxel. Negative values are legal: the grid is
/// anchored at an origin, not at the positive octant.
struct VoxelIndex {
    int64_t h = 0;
    int64_t w = 0;
    int64_t d = 0;

    auto operator<=>(const VoxelIndex&) const = default;
};

/// Equally-spaced axis-aligned grid. `origin` is the lower corner of voxel
/// (1,1,1); cell (h,w,d) covers the half-open box
/// [origin + (h-1)*sizes, origin + h*sizes) per axis.
struct VoxelSpec {
    double h = 1.0; // meters per voxel along X
    double w = 1.0; // along Y
    double d = 10.0; // along Z
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    std::array<double, 3> sizes() const { return {h, w, d}; }
    /// Lower corner of the cell with the given index.
    std::array<double, 3> corner(const VoxelIndex& idx) const {
        return {origin[0] + double(idx.h - 1) * h, origin[1] + double(idx.w - 1) * w,
                origin[2] + double(idx.d - 1) * d};
    }
    void validate() const;
};

struct VoxelCell {
    Tensor points;                   // n x 3, original world coordinates, input order
    std::vector<int64_t> point_ids;  // indices into the source cloud
};

struct VoxelizedCloud {
    VoxelSpec spec;
    std::map<VoxelIndex, VoxelCell> voxels; // lexicographic index order
    int64_t total_points = 0;

    int64_t voxel_count() const { return int64_t(voxels.size()); }
};

/// A voxel's points mapped to unit-cube coordinates:
/// local = (p - cell corner) / sizes, componentwise in [0, 1).
struct LocalVoxel {
    VoxelIndex index;
    Tensor local_points; // n x 3
    int64_t n = 0;
};

/// Default grid anchor: componentwise floor of the cloud's bounding-box
/// minimum to the voxel size. Stable under point reordering.
std::array<double, 3> default_origin(const PointCloud& cloud, double h, double w, double d);

VoxelIndex voxel_index_of(const std::array<double, 3>& p, const VoxelSpec& spec);

VoxelizedCloud partition(const PointCloud& cloud, const VoxelSpec& spec);

LocalVoxel to_local(const VoxelizedCloud& vc, const VoxelIndex& index);
LocalVoxel to_local(const VoxelSpec& spec, const VoxelIndex& index, const Tensor& world_points);

/// Inverse of to_local for one voxel.
Tensor from_local(const VoxelSpec& spec, const VoxelIndex& index, const Tensor& local_points);

/// Concatenates per-voxel local-coordinate reconstructions back into a world
/// cloud, in lexicographic voxel order then within-voxel row order.
PointCloud synthesis(const std::map<VoxelIndex, Tensor>& reconstructed, const VoxelSpec& spec);

} // namespace pct
