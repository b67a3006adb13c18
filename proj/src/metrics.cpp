#include "pct/metrics.hpp"

#include "pct/errors.hpp"
#include "pct/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace pct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Tensor& a, int i, const Tensor& b, int j) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = a(i, c) - b(j, c);
        s += d * d;
    }
    return s;
}

void require_points(const Tensor& t, const char* what) {
    if (t.rows == 0) throw DataError(std::string(what) + ": empty point set");
    if (t.cols != 3)
        throw DataError(std::string(what) + ": expected n x 3 matrix, got " + t.shape_str());
}

} // namespace

RatioAccounting ratio_accounting_from_string(const std::string& s) {
    if (s == "code_only") return RatioAccounting::code_only;
    if (s == "full") return RatioAccounting::full;
    throw ConfigError("unknown ratio accounting \"" + s + "\" (code_only|full)");
}

std::string to_string(RatioAccounting acc) {
    return acc == RatioAccounting::code_only ? "code_only" : "full";
}

// --- NnIndex -----------------------------------------------------------

NnIndex::NnIndex(const Tensor& points) : pts_(points) {
    require_points(points, "NnIndex");
    int n = points.rows;
    if (n <= 64) {
        brute_ = true;
        return;
    }
    std::array<double, 3> hi{-kInf, -kInf, -kInf};
    lo_ = {kInf, kInf, kInf};
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            lo_[size_t(c)] = std::min(lo_[size_t(c)], points(i, c));
            hi[size_t(c)] = std::max(hi[size_t(c)], points(i, c));
        }
    double vol = 1.0;
    for (int c = 0; c < 3; ++c) vol *= std::max(hi[size_t(c)] - lo_[size_t(c)], 1e-9);
    // Aim for ~2 points per occupied cell.
    cell_ = std::cbrt(vol * 2.0 / double(n));
    if (!(cell_ > 0.0)) cell_ = 1.0;
    for (int c = 0; c < 3; ++c) {
        double extent = hi[size_t(c)] - lo_[size_t(c)];
        int d = int(std::floor(extent / cell_)) + 1;
        dims_[size_t(c)] = std::clamp(d, 1, 256);
    }
    // Recompute the cell size so the clamped grid still covers everything.
    for (int c = 0; c < 3; ++c) {
        double extent = hi[size_t(c)] - lo_[size_t(c)];
        cell_ = std::max(cell_, extent / double(dims_[size_t(c)]) * (1.0 + 1e-12));
    }
    size_t cells = size_t(dims_[0]) * size_t(dims_[1]) * size_t(dims_[2]);
    std::vector<int> counts(cells + 1, 0);
    auto flat = [&](int gx, int gy, int gz) {
        return (size_t(gx) * size_t(dims_[1]) + size_t(gy)) * size_t(dims_[2]) + size_t(gz);
    };
    std::vector<size_t> point_cell(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        point_cell[size_t(i)] =
            flat(cell_of(points(i, 0), 0), cell_of(points(i, 1), 1), cell_of(points(i, 2), 2));
        counts[point_cell[size_t(i)] + 1]++;
    }
    for (size_t c = 1; c <= cells; ++c) counts[c] += counts[c - 1];
    cell_start_ = counts;
    cell_points_.resize(size_t(n));
    std::vector<int> cursor(counts.begin(), counts.end() - 1);
    for (int i = 0; i < n; ++i) cell_points_[size_t(cursor[point_cell[size_t(i)]]++)] = i;
}

int NnIndex::cell_of(double v, int axis) const {
    int g = int(std::floor((v - lo_[size_t(axis)]) / cell_));
    return std::clamp(g, 0, dims_[size_t(axis)] - 1);
}

std::pair<int, double> NnIndex::nearest(double x, double y, double z) const {
    int n = pts_.rows;
    double best = kInf;
    int best_i = -1;
    auto consider = [&](int i) {
        double d = 0.0;
        double dx = pts_(i, 0) - x, dy = pts_(i, 1) - y, dz = pts_(i, 2) - z;
        d = dx * dx + dy * dy + dz * dz;
        if (d < best || (d == best && i < best_i)) {
            best = d;
            best_i = i;
        }
    };
    if (brute_) {
        for (int i = 0; i < n; ++i) consider(i);
        return {best_i, best};
    }
    int cx = cell_of(x, 0), cy = cell_of(y, 1), cz = cell_of(z, 2);
    int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    for (int r = 0; r <= max_ring; ++r) {
        // Points in cells at Chebyshev ring r are at least (r-1)*cell away.
        if (best_i >= 0 && double(r - 1) * cell_ > std::sqrt(best)) break;
        for (int gx = std::max(0, cx - r); gx <= std::min(dims_[0] - 1, cx + r); ++gx)
            for (int gy = std::max(0, cy - r); gy <= std::min(dims_[1] - 1, cy + r); ++gy)
                for (int gz = std::max(0, cz - r); gz <= std::min(dims_[2] - 1, cz + r); ++gz) {
                    int cheb = std::max({std::abs(gx - cx), std::abs(gy - cy), std::abs(gz - cz)});
                    if (cheb != r) continue; // shell only
                    size_t cell =
                        (size_t(gx) * size_t(dims_[1]) + size_t(gy)) * size_t(dims_[2]) +
                        size_t(gz);
                    for (int s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s)
                        consider(cell_points_[size_t(s)]);
                }
    }
    return {best_i, best};
}

// --- Chamfer ---------------------------------------------------------------

double chamfer(const Tensor& p, const Tensor& q) {
    require_points(p, "chamfer");
    require_points(q, "chamfer");
    NnIndex p_index(p);
    NnIndex q_index(q);
    double sum_q = 0.0;
    for (int j = 0; j < q.rows; ++j) sum_q += p_index.nearest(q(j, 0), q(j, 1), q(j, 2)).second;
    double sum_p = 0.0;
    for (int i = 0; i < p.rows; ++i) sum_p += q_index.nearest(p(i, 0), p(i, 1), p(i, 2)).second;
    return sum_q / double(q.rows) + sum_p / double(p.rows);
}

Value chamfer_loss(Tape& tape, const Tensor& original, Value reconstruction) {
    const Tensor& recon = tape.value(reconstruction);
    require_points(original, "chamfer_loss");
    require_points(recon, "chamfer_loss");
    NnIndex orig_index(original);
    NnIndex recon_index(recon);
    std::vector<int> nearest_orig(size_t(recon.rows));
    for (int j = 0; j < recon.rows; ++j)
        nearest_orig[size_t(j)] = orig_index.nearest(recon(j, 0), recon(j, 1), recon(j, 2)).first;
    std::vector<int> nearest_recon(size_t(original.rows));
    for (int i = 0; i < original.rows; ++i)
        nearest_recon[size_t(i)] =
            recon_index.nearest(original(i, 0), original(i, 1), original(i, 2)).first;

    Value orig_const = tape.constant(original);
    Value d1 = tape.sub(reconstruction, tape.gather_rows(orig_const, std::move(nearest_orig)));
    Value term1 = tape.scale(tape.sum_all(tape.mul(d1, d1)), 1.0 / double(recon.rows));
    Value d2 = tape.sub(tape.gather_rows(reconstruction, std::move(nearest_recon)), orig_const);
    Value term2 = tape.scale(tape.sum_all(tape.mul(d2, d2)), 1.0 / double(original.rows));
    return tape.add(term1, term2);
}

// --- EMD ---------------------------------------------------------------

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    int n = int(cost.size());
    if (n == 0) return {};
    // Shortest augmenting path with potentials, 1-based internals.
    std::vector<double> u(size_t(n) + 1, 0.0), v(size_t(n) + 1, 0.0);
    std::vector<int> p(size_t(n) + 1, 0), way(size_t(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(size_t(n) + 1, kInf);
        std::vector<char> used(size_t(n) + 1, 0);
        do {
            used[size_t(j0)] = 1;
            int i0 = p[size_t(j0)], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[size_t(j)]) continue;
                double cur = cost[size_t(i0 - 1)][size_t(j - 1)] - u[size_t(i0)] - v[size_t(j)];
                if (cur < minv[size_t(j)]) {
                    minv[size_t(j)] = cur;
                    way[size_t(j)] = j0;
                }
                if (minv[size_t(j)] < delta) {
                    delta = minv[size_t(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[size_t(j)]) {
                    u[size_t(p[size_t(j)])] += delta;
                    v[size_t(j)] -= delta;
                } else {
                    minv[size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[size_t(j0)] != 0);
        do {
            int j1 = way[size_t(j0)];
            p[size_t(j0)] = p[size_t(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(size_t(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[size_t(j)] > 0) assignment[size_t(p[size_t(j)] - 1)] = j - 1;
    return assignment;
}

double emd(const Tensor& p, const Tensor& q, uint64_t seed) {
    require_points(p, "emd");
    require_points(q, "emd");
    int n = std::min(p.rows, q.rows);
    if (n > 512)
        throw std::invalid_argument("emd: matched size " + std::to_string(n) +
                                    " exceeds 512; compute EMD per voxel instead");
    auto subsample = [&](const Tensor& t) {
        if (t.rows == n) return t;
        Rng rng(mix_seed(seed, uint64_t(t.rows)));
        std::vector<size_t> keep = rng.sample_without_replacement(size_t(t.rows), size_t(n));
        std::sort(keep.begin(), keep.end());
        Tensor out(n, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) out(i, c) = t(int(keep[size_t(i)]), c);
        return out;
    };
    Tensor a = subsample(p);
    Tensor b = subsample(q);
    std::vector<std::vector<double>> cost(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost[size_t(i)][size_t(j)] = sq_dist(a, i, b, j);
    std::vector<int> assignment = hungarian(cost);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[size_t(i)][size_t(assignment[size_t(i)])];
    return total / double(n);
}

// --- NN statistics -----------------------------------------------------

NnStats nn_stats(const Tensor& original, const Tensor& reconstruction) {
    require_points(original, "nn_stats");
    require_points(reconstruction, "nn_stats");
    NnIndex index(reconstruction);
    int n = original.rows;
    std::vector<double> d(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        d[size_t(i)] = std::sqrt(index.nearest(original(i, 0), original(i, 1), original(i, 2)).second);
    NnStats stats;
    for (double v : d) stats.mean += v;
    stats.mean /= double(n);
    for (double v : d) {
        double c = v - stats.mean;
        stats.variance += c * c;
        stats.mse += v * v;
    }
    stats.variance /= double(n);
    stats.mse /= double(n);
    return stats;
}

// --- Ratio accounting ----------------------------------------------------

double compression_ratio(int code_len, int64_t encoded_voxels, int64_t bypass_points,
                         int64_t total_points, RatioAccounting acc) {
    if (total_points <= 0) throw DataError("compression_ratio: total point count must be > 0");
    double denom = 3.0 * double(total_points);
    double scalars = double(code_len) * double(encoded_voxels);
    if (acc == RatioAccounting::full)
        scalars += 12.0 * double(encoded_voxels) + 3.0 * double(bypass_points);
    return scalars / denom;
}

const char* const kMetricsCsvHeader = "method,code_len,ratio,emd,cd,mean,variance,mse";

std::string metrics_csv_row(const std::string& method, int code_len, const MetricsReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", method.c_str(),
                  code_len, r.compression_ratio, r.emd, r.cd, r.mean, r.variance, r.mse);
    return buf;
}

} // namespace pct
