#pragma once

#include "pct/metrics.hpp"
#include "pct/pct_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pct {

struct TrainConfig {
    ModelConfig model;
    int epochs = 200;
    int batch_size = 64; // voxels per Adam step
    double lr = 1e-3;
    uint64_t seed = 1;
    int64_t n_min = 2; // voxels below this bypass the codec
    RatioAccounting accounting = RatioAccounting::full;

    void validate() const;
};

/// One training unit: a voxel's points in the local unit-cube frame.
struct VoxelSample {
    VoxelIndex index;
    Tensor local_points; // n x 3
};

struct Corpus {
    VoxelSpec spec;
    std::vector<VoxelSample> train;
    std::vector<VoxelSample> heldout;
};

struct EpochStats {
    double train_cd = 0.0;   // mean per-voxel Chamfer (meters^2), world frame
    double heldout_cd = 0.0;
    double seconds = 0.0;    // measured wall time (console only; see to_csv)
};

struct TrainLog {
    std::vector<EpochStats> epochs;

    /// CSV `epoch,train_cd,test_cd,seconds` with `# `-prefixed provenance
    /// lines. The seconds column is written as 0 so logs are byte-identical
    /// across reruns; measured times stay in the in-memory log.
    std::string to_csv(const std::string& provenance) const;
};

struct TrainResult {
    Model model;      // final parameters
    Model best_model; // lowest held-out CD
    int best_epoch = -1;
    TrainLog log;
};

/// Pools all voxels with n >= n_min across sweeps, in sweep order then
/// lexicographic voxel order, with local frames precomputed.
std::vector<VoxelSample> collect_voxels(const std::vector<PointCloud>& sweeps,
                                        const VoxelSpec& spec, int64_t n_min);

Corpus build_corpus(const std::vector<PointCloud>& train_sweeps,
                    const std::vector<PointCloud>& heldout_sweeps, const VoxelSpec& spec,
                    const TrainConfig& config);

/// Mean world-frame Chamfer distance between each sample and its codec
/// reconstruction under the given model.
double mean_voxel_cd(const Model& model, const std::vector<VoxelSample>& samples,
                     const VoxelSpec& spec);

/// Minimizes the summed per-voxel Chamfer distance with Adam over shuffled
/// batches. Deterministic given config + seed, independent of thread count.
TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  bool log_to_console = false);

/// Full codec round-trip on one sweep plus the five metrics and the
/// compression ratio. Per-voxel EMD is averaged over all voxels (bypassed
/// voxels reconstruct exactly and contribute 0); voxels larger than 512
/// points are subsampled to 512 for the EMD matching.
MetricsReport evaluate_sweep(const Model& model, const PointCloud& cloud, const VoxelSpec& spec,
                             int64_t n_min, RatioAccounting accounting);

MetricsReport aggregate_reports(const std::vector<MetricsReport>& reports);

} // namespace pct
