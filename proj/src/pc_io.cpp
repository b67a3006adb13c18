#include "pct/pc_io.hpp"

#include "pct/binio.hpp"
#include "pct/errors.hpp"
#include "pct/rng.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pct {

namespace {

float read_f32le(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
    return std::bit_cast<float>(v);
}

void put_f32le(std::vector<uint8_t>& out, float f) {
    uint32_t v = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

} // namespace

PointCloud load_kitti_bin(const std::string& path) {
    std::vector<uint8_t> bytes = binio::read_file(path);
    if (bytes.size() % 16 != 0)
        throw DataError(path + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of 16 (residual " + std::to_string(bytes.size() % 16) +
                        " bytes)");
    int64_t n = int64_t(bytes.size() / 16);
    PointCloud cloud;
    cloud.points = Tensor(int(n), 3);
    cloud.reflectance = std::vector<double>(size_t(n));
    for (int64_t i = 0; i < n; ++i) {
        const uint8_t* rec = bytes.data() + i * 16;
        float v[4];
        for (int k = 0; k < 4; ++k) {
            v[k] = read_f32le(rec + 4 * k);
            if (!std::isfinite(v[k]))
                throw DataError(path + ": non-finite value in record " + std::to_string(i));
        }
        cloud.points(int(i), 0) = v[0];
        cloud.points(int(i), 1) = v[1];
        cloud.points(int(i), 2) = v[2];
        (*cloud.reflectance)[size_t(i)] = v[3];
    }
    return cloud;
}

void save_kitti_bin(const PointCloud& cloud, const std::string& path) {
    std::vector<uint8_t> bytes;
    bytes.reserve(size_t(cloud.size()) * 16);
    for (int64_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) put_f32le(bytes, float(cloud.points(int(i), k)));
        double r = cloud.reflectance ? (*cloud.reflectance)[size_t(i)] : 0.0;
        put_f32le(bytes, float(r));
    }
    binio::write_file(path, bytes);
}

PointCloud load_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> coords;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Skip blank lines.
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        double x, y, z;
        std::string rest;
        if (!(ls >> x >> y >> z) || (ls >> rest))
            throw DataError(path + ": malformed line " + std::to_string(line_no) +
                            " (expected 3 reals)");
        coords.push_back(x);
        coords.push_back(y);
        coords.push_back(z);
    }
    PointCloud cloud;
    cloud.points = Tensor(int(coords.size() / 3), 3, std::move(coords));
    return cloud;
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    char buf[128];
    for (int64_t i = 0; i < cloud.size(); ++i) {
        // 17 significant digits: exact double round-trip.
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", cloud.points(int(i), 0),
                      cloud.points(int(i), 1), cloud.points(int(i), 2));
        out << buf;
    }
    if (!out) throw DataError("write failed on " + path);
}

DatasetSplit split_dataset(const std::vector<std::string>& paths, double train_fraction,
                           uint64_t seed) {
    if (paths.empty()) throw DataError("split_dataset: empty path list");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0, 1), got " +
                          std::to_string(train_fraction));
    std::vector<std::string> shuffled = paths;
    Rng rng(seed);
    rng.shuffle(shuffled);
    size_t n_train = size_t(std::floor(train_fraction * double(paths.size())));
    DatasetSplit split;
    split.seed = seed;
    split.train_paths.assign(shuffled.begin(), shuffled.begin() + n_train);
    split.test_paths.assign(shuffled.begin() + n_train, shuffled.end());
    return split;
}

} // namespace pct
