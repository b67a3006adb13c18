#pragma once

#include "pct/trainer.hpp"
#include "pct/voxelize.hpp"

#include <cstdint>
#include <string>

namespace pct {

/// Resolved run configuration: every trainer/model/voxel knob plus paths.
/// Parsed from a `key = value` file; unknown keys are rejected. The resolved
/// state is echoed into every output for provenance.
struct RunConfig {
    std::string data_dir;
    std::string out_dir = "out";
    std::string model_path; // default: <out_dir>/model.pct1
    double train_fraction = 0.8;
    uint64_t seed = 1;
    VoxelSpec voxel; // origin resolved per cloud (floor of bbox min)
    TrainConfig train;

    std::string resolved_model_path() const {
        return model_path.empty() ? out_dir + "/model.pct1" : model_path;
    }

    /// Sorted key = value lines of the full resolved state.
    std::string echo() const;

    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    /// Applies one key (flag overrides reuse the file syntax).
    void set(const std::string& key, const std::string& value);
};

} // namespace pct
