#pragma once

#include "pct/pc_io.hpp"
#include "pct/rng.hpp"
#include "pct/tensor.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

namespace pct::test {

inline Tensor random_points(Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
    Tensor t(n, 3);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline PointCloud random_cloud(Rng& rng, int n, double lo, double hi) {
    PointCloud c;
    c.points = random_points(rng, n, lo, hi);
    return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pct_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string path() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

} // namespace pct::test
