#pragma once

#include "pct/diff_engine.hpp"
#include "pct/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pct {

/// How retained scalars are counted against the 3N original coordinates.
/// code_only: codes alone (the paper's ell*M). full: codes + normalization
/// sidecars (12 scalars per encoded voxel) + raw-bypass points.
enum class RatioAccounting { code_only, full };

RatioAccounting ratio_accounting_from_string(const std::string& s);
std::string to_string(RatioAccounting acc);

struct MetricsReport {
    double emd = 0.0;
    double cd = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double mse = 0.0;
    double compression_ratio = 1.0;
    int64_t original_points = 0;
    int64_t reconstructed_points = 0;
};

/// Exact nearest-neighbor search over a fixed point set; uniform-grid
/// accelerated, with ring expansion and distance pruning.
class NnIndex {
public:
    explicit NnIndex(const Tensor& points);

    /// Returns (index of nearest point, squared distance). Ties resolve to
    /// the lowest point index.
    std::pair<int, double> nearest(double x, double y, double z) const;

private:
    const Tensor& pts_;
    double cell_ = 1.0;
    std::array<double, 3> lo_{0, 0, 0};
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<int> cell_start_; // CSR layout over flattened cells
    std::vector<int> cell_points_;
    bool brute_ = false;

    int cell_of(double v, int axis) const;
};

/// Symmetric Chamfer distance; each directional sum of squared
/// nearest-neighbor distances is normalized by its own cardinality.
double chamfer(const Tensor& p, const Tensor& q);

/// Differentiable Chamfer head: nearest pairs are selected from current
/// values, then the squared-distance sums are built on the tape.
Value chamfer_loss(Tape& tape, const Tensor& original, Value reconstruction);

/// Exact earth-mover distance under squared Euclidean cost, divided by the
/// matched cardinality. Unequal sizes: the larger set is subsampled (seeded)
/// to the smaller. Matched size is capped at 512.
double emd(const Tensor& p, const Tensor& q, uint64_t seed = 0);

/// Minimum-cost assignment on a square cost matrix; returns per-row column.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct NnStats {
    double mean = 0.0;
    double variance = 0.0; // population variance
    double mse = 0.0;
};

/// Per original point: unsquared distance to its closest reconstruction
/// point. mean/variance over those distances, mse over their squares.
NnStats nn_stats(const Tensor& original, const Tensor& reconstruction);

double compression_ratio(int code_len, int64_t encoded_voxels, int64_t bypass_points,
                         int64_t total_points, RatioAccounting acc);

/// One CSV row in the `method,code_len,ratio,emd,cd,mean,variance,mse` schema.
std::string metrics_csv_row(const std::string& method, int code_len, const MetricsReport& r);
extern const char* const kMetricsCsvHeader;

} // namespace pct
