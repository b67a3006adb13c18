#pragma once

#include "pct/diff_engine.hpp"
#include "pct/spatial_graph.hpp"
#include "pct/voxelize.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pct {

enum class Aggregation { mean, max };
enum class EncoderKind { gin, pointnet };
enum class DecoderKind { fully_connected, folding };
/// Frame in which KNN graphs and edge weights are computed: the normalized
/// local frame the encoder sees (default), or raw meter coordinates.
enum class GraphFrame { local, world };

struct ModelConfig {
    int code_len = 18;
    std::vector<int> ks = {1, 4, 8, 16};
    Aggregation aggregation = Aggregation::mean;
    bool use_norm = true;
    EncoderKind encoder = EncoderKind::gin;
    DecoderKind decoder = DecoderKind::fully_connected;
    GraphFrame graph_frame = GraphFrame::local;
    std::vector<int> trunk_widths = {32, 64}; // GIN outputs before the code layer
    int branch_hidden = 8;
    int branch_out = 16;
    int fc_points = 128; // FC decoder output count m
    int fold_grid = 12;  // folding grid side g; output count g*g

    int decoder_points() const {
        return decoder == DecoderKind::folding ? fold_grid * fold_grid : fc_points;
    }
    /// Per-layer output widths of the GIN trunk, ending at code_len.
    std::vector<int> layer_widths() const;
    void validate() const;

    /// key = value lines (model.* keys, sorted); parse ignores foreign keys.
    std::string to_kv() const;
    static ModelConfig from_kv(const std::string& text);
};

/// Per-voxel geometric sidecar: centroid, learned scale, and the 6 raw
/// rotation-head outputs (orthonormalized into R on use).
struct NormalizationParams {
    std::array<double, 3> mu{0.0, 0.0, 0.0};
    std::array<double, 3> s{1.0, 1.0, 1.0};
    std::array<double, 6> rot{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
};

/// Orthonormalization of the 6 rotation parameters: first vector normalized,
/// second Gram-Schmidt'ed, third the cross product. Near-zero inputs
/// (norm < 1e-8) fall back to identity. det R = +1 by construction.
Tensor rotation_from_params(const std::array<double, 6>& rot);

struct VoxelCode {
    VoxelIndex index;
    int64_t n = 0; // original point count
    bool bypass = false;
    std::vector<double> code;  // length code_len; empty when bypassed
    NormalizationParams norm;
    Tensor raw_points;         // bypass only: n x 3 world coordinates
};

struct CodeStream {
    VoxelSpec spec;
    int code_len = 0;
    std::vector<VoxelCode> voxels; // lexicographic index order
};

struct Model {
    ModelConfig config;
    ParamStore params;
};

Model init_model(const ModelConfig& config, uint64_t seed);

/// Checkpoint wrappers; extra_echo lines are appended to the model's own
/// config echo (CLI provenance).
void save_model(const Model& model, const std::string& path, const std::string& extra_echo = "");
Model load_model(const std::string& path);

// --- Tape-level builders (shared by training and inference) -------------

struct NormTapeVals {
    Value mu;   // 1 x 3
    Value s;    // 1 x 3
    Value rot6; // 1 x 6 head outputs
    Value R;    // 3 x 3, columns are the rotated basis
    bool fallback = false;
};

struct EncodeTapeResult {
    Value q;    // n x 3 normalized points
    Value code; // 1 x code_len
    NormTapeVals norm;
};

/// normalize -> KNN graphs on q -> GIN trunk (or PointNet) -> aggregation.
/// sizes: meters per unit-cube axis, used only when graph_frame = world.
EncodeTapeResult encode_on_tape(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg,
                                const Tensor& local_points, const std::array<double, 3>& sizes);

/// Decoder + de-normalization; returns m x 3 points in the local unit-cube
/// frame.
Value decode_on_tape(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg, Value code,
                     const NormTapeVals& norm);

/// One GIN layer (graph inception convolution): per edge h_w([A_ij; x_j-x_i]),
/// summed over each K's neighbor prefix, branch outputs concatenated in
/// ascending-k order, mixed by the g_w linear layer.
struct GraphTape {
    int n = 0;
    std::vector<int> edge_src; // grouped by source point, ascending
    std::vector<int> edge_dst; // sorted by distance within each group
    std::vector<std::vector<int>> branch_edges; // per k: edge subset (nested prefixes)
    Value weight_col;          // E x 1, exp(-d^2) in the graph frame
};

GraphTape build_graph_tape(Tape& tape, const ModelConfig& cfg, Value q,
                           const Tensor& graph_points, bool weights_on_tape);

Value gin_layer(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg, int layer,
                const GraphTape& gt, Value x);

// --- Inference ------------------------------------------------------------

VoxelCode encode_voxel(const Model& model, const LocalVoxel& voxel,
                       const std::array<double, 3>& sizes);

/// Decodes one voxel code to local unit-cube points (bypass codes are not
/// accepted here; the caller re-localizes raw points itself).
Tensor decode_voxel_local(const Model& model, const VoxelCode& code);

struct CodecResult {
    PointCloud reconstruction;
    CodeStream stream;
    int64_t encoded_voxels = 0;
    int64_t bypass_voxels = 0;
    int64_t bypass_points = 0;
    /// Per-voxel original/reconstructed world points, for per-voxel metrics.
    std::map<VoxelIndex, Tensor> original_by_voxel;
    std::map<VoxelIndex, Tensor> recon_by_voxel;
};

/// partition -> per-voxel encode/decode (raw bypass below n_min) -> synthesis.
CodecResult codec_roundtrip(const Model& model, const PointCloud& cloud, const VoxelSpec& spec,
                            int64_t n_min);

/// Reconstruction from a code stream alone (plus the decoder model).
PointCloud decode_stream(const Model& model, const CodeStream& stream);

/// "PCTC" format: magic, u32 version, u32 code length, voxel spec, u64 voxel
/// count, then per-voxel records. Little-endian, byte-exact round-trip.
void save_code_stream(const std::string& path, const CodeStream& stream);
CodeStream load_code_stream(const std::string& path);

} // namespace pct
