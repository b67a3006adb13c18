#pragma once

#include "pct/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pct {

/// An ordered set of N points in R^3 (meters). Reflectance is carried along
/// when the source format has it so re-serialization is lossless; the codec
/// itself never reads it.
struct PointCloud {
    Tensor points;                               // N x 3
    std::optional<std::vector<double>> reflectance; // length N when present

    int64_t size() const { return points.rows; }
};

struct DatasetSplit {
    std::vector<std::string> train_paths;
    std::vector<std::string> test_paths;
    uint64_t seed = 0;
};

/// Reads a KITTI Velodyne sweep: little-endian float32 quadruples
/// (x, y, z, reflectance), no header.
PointCloud load_kitti_bin(const std::string& path);

/// Re-serializes a cloud in the KITTI layout. load then save is byte-exact.
void save_kitti_bin(const PointCloud& cloud, const std::string& path);

/// Plain-text format: one point per line, three whitespace-separated reals.
PointCloud load_xyz(const std::string& path);
void save_xyz(const PointCloud& cloud, const std::string& path);

/// Seeded shuffle split into floor(train_fraction*n) train paths, rest test.
DatasetSplit split_dataset(const std::vector<std::string>& paths, double train_fraction,
                           uint64_t seed);

} // namespace pct
