#include "pct/voxelize.hpp"

#include "pct/errors.hpp"

#include <cmath>
#include <limits>

namespace pct {

void VoxelSpec::validate() const {
    if (!(h > 0.0 && w > 0.0 && d > 0.0))
        throw ConfigError("voxel sizes must be positive, got " + std::to_string(h) + ", " +
                          std::to_string(w) + ", " + std::to_string(d));
    for (double o : origin)
        if (!std::isfinite(o)) throw ConfigError("voxel origin must be finite");
}

std::array<double, 3> default_origin(const PointCloud& cloud, double h, double w, double d) {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    if (cloud.size() == 0) return lo;
    std::array<double, 3> mn{std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity()};
    for (int64_t i = 0; i < cloud.size(); ++i)
        for (int k = 0; k < 3; ++k) mn[k] = std::min(mn[k], cloud.points(int(i), k));
    std::array<double, 3> sz{h, w, d};
    for (int k = 0; k < 3; ++k) lo[k] = std::floor(mn[k] / sz[k]) * sz[k];
    return lo;
}

VoxelIndex voxel_index_of(const std::array<double, 3>& p, const VoxelSpec& spec) {
    std::array<double, 3> sz = spec.sizes();
    VoxelIndex idx;
    int64_t* out[3] = {&idx.h, &idx.w, &idx.d};
    for (int k = 0; k < 3; ++k)
        *out[k] = int64_t(std::floor((p[k] - spec.origin[k]) / sz[k])) + 1;
    return idx;
}

VoxelizedCloud partition(const PointCloud& cloud, const VoxelSpec& spec) {
    spec.validate();
    struct Staging {
        std::vector<double> coords;
        std::vector<int64_t> ids;
    };
    std::map<VoxelIndex, Staging> cells;
    for (int64_t i = 0; i < cloud.size(); ++i) {
        std::array<double, 3> p{cloud.points(int(i), 0), cloud.points(int(i), 1),
                                cloud.points(int(i), 2)};
        for (double v : p)
            if (!std::isfinite(v))
                throw DataError("non-finite coordinate at point " + std::to_string(i));
        Staging& s = cells[voxel_index_of(p, spec)];
        s.coords.insert(s.coords.end(), p.begin(), p.end());
        s.ids.push_back(i);
    }
    VoxelizedCloud vc;
    vc.spec = spec;
    vc.total_points = cloud.size();
    for (auto& [idx, s] : cells) {
        VoxelCell cell;
        cell.points = Tensor(int(s.ids.size()), 3, std::move(s.coords));
        cell.point_ids = std::move(s.ids);
        vc.voxels.emplace(idx, std::move(cell));
    }
    return vc;
}

LocalVoxel to_local(const VoxelSpec& spec, const VoxelIndex& index, const Tensor& world_points) {
    std::array<double, 3> corner = spec.corner(index);
    std::array<double, 3> sz = spec.sizes();
    LocalVoxel lv;
    lv.index = index;
    lv.n = world_points.rows;
    lv.local_points = Tensor(world_points.rows, 3);
    for (int i = 0; i < world_points.rows; ++i)
        for (int k = 0; k < 3; ++k)
            lv.local_points(i, k) = (world_points(i, k) - corner[k]) / sz[k];
    return lv;
}

LocalVoxel to_local(const VoxelizedCloud& vc, const VoxelIndex& index) {
    auto it = vc.voxels.find(index);
    if (it == vc.voxels.end())
        throw DataError("to_local: voxel (" + std::to_string(index.h) + "," +
                        std::to_string(index.w) + "," + std::to_string(index.d) +
                        ") is empty or unknown");
    return to_local(vc.spec, index, it->second.points);
}

Tensor from_local(const VoxelSpec& spec, const VoxelIndex& index, const Tensor& local_points) {
    if (local_points.cols != 3)
        throw DataError("from_local: expected n x 3 matrix, got " + local_points.shape_str());
    std::array<double, 3> corner = spec.corner(index);
    std::array<double, 3> sz = spec.sizes();
    Tensor world(local_points.rows, 3);
    for (int i = 0; i < local_points.rows; ++i)
        for (int k = 0; k < 3; ++k) world(i, k) = corner[k] + local_points(i, k) * sz[k];
    return world;
}

PointCloud synthesis(const std::map<VoxelIndex, Tensor>& reconstructed, const VoxelSpec& spec) {
    spec.validate();
    int64_t total = 0;
    for (const auto& [idx, pts] : reconstructed) {
        if (pts.cols != 3)
            throw DataError("synthesis: voxel matrix must be n x 3, got " + pts.shape_str());
        total += pts.rows;
    }
    PointCloud out;
    out.points = Tensor(int(total), 3);
    int row = 0;
    for (const auto& [idx, pts] : reconstructed) {
        Tensor world = from_local(spec, idx, pts);
        for (int i = 0; i < world.rows; ++i, ++row)
            for (int k = 0; k < 3; ++k) out.points(row, k) = world(i, k);
    }
    return out;
}

} // namespace pct
