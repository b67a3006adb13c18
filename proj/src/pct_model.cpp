#include "pct/pct_model.hpp"

#include "pct/binio.hpp"
#include "pct/errors.hpp"
#include "pct/kv.hpp"
#include "pct/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace pct {

namespace {

constexpr std::array<double, 6> kCanonicalRot{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
constexpr double kDegenerateNorm = 1e-8;

std::string aggregation_name(Aggregation a) { return a == Aggregation::mean ? "mean" : "max"; }
std::string encoder_name(EncoderKind e) { return e == EncoderKind::gin ? "gin" : "pointnet"; }
std::string decoder_name(DecoderKind d) {
    return d == DecoderKind::fully_connected ? "fc" : "folding";
}
std::string frame_name(GraphFrame f) { return f == GraphFrame::local ? "local" : "world"; }

MlpSpec norm_trunk_spec() { return {"norm.mlp", {3, 32, 64}}; }

MlpSpec gin_branch_spec(const ModelConfig& cfg, int layer, int in_width) {
    return {"enc.gin" + std::to_string(layer) + ".h", {1 + in_width, cfg.branch_hidden, cfg.branch_out}};
}

MlpSpec pointnet_spec(const ModelConfig& cfg) { return {"enc.pn", {3, 32, 64, cfg.code_len}}; }

MlpSpec fc_decoder_spec(const ModelConfig& cfg) {
    return {"dec.fc", {cfg.code_len, 256, 256, 3 * cfg.fc_points}};
}

MlpSpec fold1_spec(const ModelConfig& cfg) { return {"dec.fold1", {cfg.code_len + 2, 64, 64, 3}}; }
MlpSpec fold2_spec(const ModelConfig& cfg) { return {"dec.fold2", {cfg.code_len + 3, 64, 64, 3}}; }

/// Builds the rotation from 6 head outputs on a tape. The degenerate test
/// mirrors the tape arithmetic exactly so encode and decode agree.
struct RotBuild {
    Value R;
    bool fallback = false;
};

RotBuild orthonormalize_rot6(Tape& tape, Value hr) {
    const Tensor& h = tape.value(hr);
    double na = std::sqrt(h(0, 0) * h(0, 0) + h(0, 1) * h(0, 1) + h(0, 2) * h(0, 2));
    bool degenerate = na < kDegenerateNorm;
    if (!degenerate) {
        double inv = 1.0 / na;
        double r1[3] = {h(0, 0) * inv, h(0, 1) * inv, h(0, 2) * inv};
        double dot = r1[0] * h(0, 3) + r1[1] * h(0, 4) + r1[2] * h(0, 5);
        double p0 = h(0, 3) - r1[0] * dot;
        double p1 = h(0, 4) - r1[1] * dot;
        double p2 = h(0, 5) - r1[2] * dot;
        degenerate = std::sqrt(p0 * p0 + p1 * p1 + p2 * p2) < kDegenerateNorm;
    }
    if (degenerate) return {tape.constant(Tensor::identity(3)), true};

    Value a = tape.slice_cols(hr, 0, 3);
    Value b = tape.slice_cols(hr, 3, 3);
    Value one = tape.constant(Tensor::full(1, 1, 1.0));
    Value r1 = tape.scale_rows(a, tape.div(one, tape.sqrt(tape.row_sums(tape.mul(a, a)))));
    Value dot = tape.row_sums(tape.mul(r1, b));
    Value bp = tape.sub(b, tape.scale_rows(r1, dot));
    Value r2 = tape.scale_rows(bp, tape.div(one, tape.sqrt(tape.row_sums(tape.mul(bp, bp)))));
    auto comp = [&](Value v, int c) { return tape.slice_cols(v, c, 1); };
    Value r3x = tape.sub(tape.mul(comp(r1, 1), comp(r2, 2)), tape.mul(comp(r1, 2), comp(r2, 1)));
    Value r3y = tape.sub(tape.mul(comp(r1, 2), comp(r2, 0)), tape.mul(comp(r1, 0), comp(r2, 2)));
    Value r3z = tape.sub(tape.mul(comp(r1, 0), comp(r2, 1)), tape.mul(comp(r1, 1), comp(r2, 0)));
    Value r3 = tape.concat_cols({r3x, r3y, r3z});
    // Rows r1,r2,r3 are the rotated basis; R holds them as columns.
    Value R = tape.transpose(tape.concat_rows({r1, r2, r3}));
    return {R, false};
}

struct NormResult {
    Value q;
    NormTapeVals vals;
};

NormResult normalize_points(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg,
                            Value local, int n) {
    Value mu = tape.mean_rows(local);
    Value centered = tape.sub(local, tape.broadcast_row(mu, n));
    if (!cfg.use_norm) {
        NormTapeVals vals;
        vals.mu = mu;
        vals.s = tape.constant(Tensor::full(1, 3, 1.0));
        vals.rot6 = tape.constant(Tensor(1, 6, std::vector<double>(kCanonicalRot.begin(),
                                                                   kCanonicalRot.end())));
        vals.R = tape.constant(Tensor::identity(3));
        return {centered, vals};
    }
    Value feats = mlp_forward(tape, binding, norm_trunk_spec(), centered);
    Value pooled = tape.max_rows(feats);
    Value hs = tape.affine(pooled, binding("norm.scale.w"), binding("norm.scale.b"));
    Value s = tape.exp(hs);
    Value inv_s = tape.exp(tape.scale(hs, -1.0));
    Value hr = tape.affine(pooled, binding("norm.rot.w"), binding("norm.rot.b"));
    RotBuild rot = orthonormalize_rot6(tape, hr);
    Value q = tape.mul_rowvec(tape.matmul(centered, rot.R), inv_s);
    NormTapeVals vals;
    vals.mu = mu;
    vals.s = s;
    vals.rot6 = hr;
    vals.R = rot.R;
    vals.fallback = rot.fallback;
    return {q, vals};
}

} // namespace

// --- ModelConfig ---------------------------------------------------------

std::vector<int> ModelConfig::layer_widths() const {
    std::vector<int> widths = trunk_widths;
    widths.push_back(code_len);
    return widths;
}

void ModelConfig::validate() const {
    if (code_len < 1) throw ConfigError("code_len must be >= 1");
    if (ks.empty() || ks.front() < 1) throw ConfigError("ks must contain values >= 1");
    for (size_t i = 0; i + 1 < ks.size(); ++i)
        if (ks[i] >= ks[i + 1]) throw ConfigError("ks must be strictly increasing");
    for (int w : trunk_widths)
        if (w < 1) throw ConfigError("trunk widths must be >= 1");
    if (branch_hidden < 1 || branch_out < 1)
        throw ConfigError("branch widths must be >= 1");
    if (fc_points < 1) throw ConfigError("fc_points must be >= 1");
    if (fold_grid < 1) throw ConfigError("fold_grid must be >= 1");
}

std::string ModelConfig::to_kv() const {
    std::string s;
    s += "model.aggregation = " + aggregation_name(aggregation) + "\n";
    s += "model.branch_hidden = " + std::to_string(branch_hidden) + "\n";
    s += "model.branch_out = " + std::to_string(branch_out) + "\n";
    s += "model.code_len = " + std::to_string(code_len) + "\n";
    s += "model.decoder = " + decoder_name(decoder) + "\n";
    s += "model.encoder = " + encoder_name(encoder) + "\n";
    s += "model.fc_points = " + std::to_string(fc_points) + "\n";
    s += "model.fold_grid = " + std::to_string(fold_grid) + "\n";
    s += "model.graph_frame = " + frame_name(graph_frame) + "\n";
    s += "model.ks = " + kv::int_list_to_string(ks) + "\n";
    s += "model.trunk_widths = " + kv::int_list_to_string(trunk_widths) + "\n";
    s += "model.use_norm = " + std::string(use_norm ? "true" : "false") + "\n";
    return s;
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
    std::map<std::string, std::string> m = kv::parse(text);
    ModelConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = m.find(key);
        return it == m.end() ? nullptr : &it->second;
    };
    if (auto* v = get("model.aggregation")) {
        if (*v == "mean") cfg.aggregation = Aggregation::mean;
        else if (*v == "max") cfg.aggregation = Aggregation::max;
        else throw ConfigError("model.aggregation: unknown value \"" + *v + "\"");
    }
    if (auto* v = get("model.branch_hidden")) cfg.branch_hidden = int(kv::to_int("model.branch_hidden", *v));
    if (auto* v = get("model.branch_out")) cfg.branch_out = int(kv::to_int("model.branch_out", *v));
    if (auto* v = get("model.code_len")) cfg.code_len = int(kv::to_int("model.code_len", *v));
    if (auto* v = get("model.decoder")) {
        if (*v == "fc") cfg.decoder = DecoderKind::fully_connected;
        else if (*v == "folding") cfg.decoder = DecoderKind::folding;
        else throw ConfigError("model.decoder: unknown value \"" + *v + "\"");
    }
    if (auto* v = get("model.encoder")) {
        if (*v == "gin") cfg.encoder = EncoderKind::gin;
        else if (*v == "pointnet") cfg.encoder = EncoderKind::pointnet;
        else throw ConfigError("model.encoder: unknown value \"" + *v + "\"");
    }
    if (auto* v = get("model.fc_points")) cfg.fc_points = int(kv::to_int("model.fc_points", *v));
    if (auto* v = get("model.fold_grid")) cfg.fold_grid = int(kv::to_int("model.fold_grid", *v));
    if (auto* v = get("model.graph_frame")) {
        if (*v == "local") cfg.graph_frame = GraphFrame::local;
        else if (*v == "world") cfg.graph_frame = GraphFrame::world;
        else throw ConfigError("model.graph_frame: unknown value \"" + *v + "\"");
    }
    if (auto* v = get("model.ks")) cfg.ks = kv::to_int_list("model.ks", *v);
    if (auto* v = get("model.trunk_widths")) cfg.trunk_widths = kv::to_int_list("model.trunk_widths", *v);
    if (auto* v = get("model.use_norm")) cfg.use_norm = kv::to_bool("model.use_norm", *v);
    cfg.validate();
    return cfg;
}

// --- Parameters ------------------------------------------------------------

Tensor rotation_from_params(const std::array<double, 6>& rot) {
    Tape tape;
    Value hr = tape.constant(Tensor(1, 6, std::vector<double>(rot.begin(), rot.end())));
    return tape.value(orthonormalize_rot6(tape, hr).R);
}

Model init_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Model model;
    model.config = config;
    Rng rng(mix_seed(seed, 1));
    if (config.use_norm) {
        init_mlp(model.params, norm_trunk_spec(), rng);
        model.params.add("norm.scale.w", xavier_uniform(64, 3, rng));
        model.params.add("norm.scale.b", Tensor::zeros(1, 3));
        model.params.add("norm.rot.w", xavier_uniform(64, 6, rng));
        model.params.add("norm.rot.b", Tensor::zeros(1, 6));
    }
    if (config.encoder == EncoderKind::gin) {
        int in_width = 3;
        std::vector<int> widths = config.layer_widths();
        for (size_t l = 0; l < widths.size(); ++l) {
            init_mlp(model.params, gin_branch_spec(config, int(l), in_width), rng);
            std::string g = "enc.gin" + std::to_string(l) + ".g";
            model.params.add(g + ".w", xavier_uniform(int(config.ks.size()) * config.branch_out,
                                                      widths[l], rng));
            model.params.add(g + ".b", Tensor::zeros(1, widths[l]));
            in_width = widths[l];
        }
    } else {
        init_mlp(model.params, pointnet_spec(config), rng);
    }
    if (config.decoder == DecoderKind::fully_connected) {
        init_mlp(model.params, fc_decoder_spec(config), rng);
    } else {
        init_mlp(model.params, fold1_spec(config), rng);
        init_mlp(model.params, fold2_spec(config), rng);
    }
    return model;
}

void save_model(const Model& model, const std::string& path, const std::string& extra_echo) {
    std::string echo = model.config.to_kv();
    if (!extra_echo.empty()) echo += extra_echo;
    save_checkpoint(path, model.params, echo);
}

Model load_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    Model model;
    try {
        model.config = ModelConfig::from_kv(ck.config_echo);
    } catch (const ConfigError& e) {
        throw CheckpointError(path + ": bad config echo: " + e.what());
    }
    model.params = std::move(ck.params);
    return model;
}

// --- Graphs on the tape ------------------------------------------------------

GraphTape build_graph_tape(Tape& tape, const ModelConfig& cfg, Value q,
                           const Tensor& graph_points, bool weights_on_tape) {
    GraphSet gs = build_graph_set(graph_points, cfg.ks);
    GraphTape gt;
    gt.n = graph_points.rows;
    const Graph& largest = gs.graphs.back();
    std::vector<int> row_start(size_t(gt.n) + 1, 0);
    for (int i = 0; i < gt.n; ++i) {
        const auto& nb = largest.neighbors[size_t(i)];
        row_start[size_t(i) + 1] = row_start[size_t(i)] + int(nb.size());
        for (int j : nb) {
            gt.edge_src.push_back(i);
            gt.edge_dst.push_back(j);
        }
    }
    gt.branch_edges.resize(cfg.ks.size());
    for (size_t kidx = 0; kidx < cfg.ks.size(); ++kidx) {
        std::vector<int>& subset = gt.branch_edges[kidx];
        for (int i = 0; i < gt.n; ++i) {
            int deg = int(gs.graphs[kidx].neighbors[size_t(i)].size());
            for (int r = 0; r < deg; ++r) subset.push_back(row_start[size_t(i)] + r);
        }
    }
    int edges = int(gt.edge_src.size());
    if (weights_on_tape) {
        Value qi = tape.gather_rows(q, gt.edge_src);
        Value qj = tape.gather_rows(q, gt.edge_dst);
        Value diff = tape.sub(qj, qi);
        gt.weight_col = tape.exp(tape.scale(tape.row_sums(tape.mul(diff, diff)), -1.0));
    } else {
        Tensor w(edges, 1);
        int e = 0;
        for (int i = 0; i < gt.n; ++i)
            for (double wv : largest.weights[size_t(i)]) w(e++, 0) = wv;
        gt.weight_col = tape.constant(std::move(w));
    }
    return gt;
}

Value gin_layer(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg, int layer,
                const GraphTape& gt, Value x) {
    int in_width = tape.value(x).cols;
    Value xi = tape.gather_rows(x, gt.edge_src);
    Value xj = tape.gather_rows(x, gt.edge_dst);
    Value edge_in = tape.concat_cols({gt.weight_col, tape.sub(xj, xi)});
    Value h = mlp_forward(tape, binding, gin_branch_spec(cfg, layer, in_width), edge_in);
    std::vector<Value> branches;
    branches.reserve(gt.branch_edges.size());
    for (const std::vector<int>& subset : gt.branch_edges) {
        std::vector<int> seg;
        seg.reserve(subset.size());
        for (int e : subset) seg.push_back(gt.edge_src[size_t(e)]);
        branches.push_back(tape.segment_sum(tape.gather_rows(h, subset), std::move(seg), gt.n));
    }
    Value cat = branches.size() == 1 ? branches[0] : tape.concat_cols(branches);
    std::string g = "enc.gin" + std::to_string(layer) + ".g";
    return tape.affine(cat, binding(g + ".w"), binding(g + ".b"));
}

// --- Encoder / decoder --------------------------------------------------------

EncodeTapeResult encode_on_tape(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg,
                                const Tensor& local_points, const std::array<double, 3>& sizes) {
    if (local_points.rows == 0) throw DataError("encode: empty voxel");
    if (local_points.cols != 3)
        throw DataError("encode: expected n x 3 input, got " + local_points.shape_str());
    int n = local_points.rows;
    Value local = tape.constant(local_points);

    if (cfg.encoder == EncoderKind::pointnet) {
        // Vanilla PointNet-style encoder: raw coordinates, no normalization.
        Value feats = mlp_forward(tape, binding, pointnet_spec(cfg), local);
        Value code = tape.max_rows(feats);
        NormTapeVals vals;
        vals.mu = tape.constant(Tensor::zeros(1, 3));
        vals.s = tape.constant(Tensor::full(1, 3, 1.0));
        vals.rot6 = tape.constant(
            Tensor(1, 6, std::vector<double>(kCanonicalRot.begin(), kCanonicalRot.end())));
        vals.R = tape.constant(Tensor::identity(3));
        return {local, code, vals};
    }

    NormResult norm = normalize_points(tape, binding, cfg, local, n);
    Value code;
    {
        bool weights_on_tape = cfg.graph_frame == GraphFrame::local;
        Tensor graph_points;
        if (weights_on_tape) {
            graph_points = tape.value(norm.q);
        } else {
            graph_points = local_points;
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < 3; ++c) graph_points(i, c) *= sizes[size_t(c)];
        }
        GraphTape gt = build_graph_tape(tape, cfg, norm.q, graph_points, weights_on_tape);
        std::vector<int> widths = cfg.layer_widths();
        Value x = norm.q;
        for (size_t l = 0; l < widths.size(); ++l) {
            x = gin_layer(tape, binding, cfg, int(l), gt, x);
            if (l + 1 < widths.size()) x = tape.relu(x);
        }
        code = cfg.aggregation == Aggregation::mean ? tape.mean_rows(x) : tape.max_rows(x);
    }
    return {norm.q, code, norm.vals};
}

Value decode_on_tape(Tape& tape, const ParamBinding& binding, const ModelConfig& cfg, Value code,
                     const NormTapeVals& norm) {
    Value q_hat;
    if (cfg.decoder == DecoderKind::fully_connected) {
        Value flat = mlp_forward(tape, binding, fc_decoder_spec(cfg), code);
        q_hat = tape.reshape(flat, cfg.fc_points, 3);
    } else {
        int g = cfg.fold_grid;
        int m = g * g;
        Tensor grid(m, 2);
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j) {
                grid(i * g + j, 0) = g == 1 ? 0.0 : double(i) / double(g - 1);
                grid(i * g + j, 1) = g == 1 ? 0.0 : double(j) / double(g - 1);
            }
        Value u = tape.constant(std::move(grid));
        Value c_rows = tape.broadcast_row(code, m);
        Value f1 = mlp_forward(tape, binding, fold1_spec(cfg), tape.concat_cols({c_rows, u}));
        q_hat = mlp_forward(tape, binding, fold2_spec(cfg), tape.concat_cols({c_rows, f1}));
    }
    // local = q_hat * diag(s) * R^T + mu
    Value scaled = tape.mul_rowvec(q_hat, norm.s);
    Value rotated = tape.matmul(scaled, tape.transpose(norm.R));
    return tape.add_rowvec(rotated, norm.mu);
}

// --- Inference wrappers ------------------------------------------------------

namespace {

VoxelCode extract_code(const Tape& tape, const EncodeTapeResult& enc, const VoxelIndex& index,
                       int64_t n) {
    VoxelCode vc;
    vc.index = index;
    vc.n = n;
    vc.bypass = false;
    vc.code = tape.value(enc.code).data;
    const Tensor& mu = tape.value(enc.norm.mu);
    const Tensor& s = tape.value(enc.norm.s);
    const Tensor& rot6 = tape.value(enc.norm.rot6);
    for (int c = 0; c < 3; ++c) {
        vc.norm.mu[size_t(c)] = mu(0, c);
        vc.norm.s[size_t(c)] = s(0, c);
    }
    for (int c = 0; c < 6; ++c) vc.norm.rot[size_t(c)] = rot6(0, c);
    return vc;
}

NormTapeVals bind_norm_constants(Tape& tape, const NormalizationParams& norm) {
    NormTapeVals vals;
    vals.mu = tape.constant(Tensor::row3(norm.mu[0], norm.mu[1], norm.mu[2]));
    vals.s = tape.constant(Tensor::row3(norm.s[0], norm.s[1], norm.s[2]));
    vals.rot6 =
        tape.constant(Tensor(1, 6, std::vector<double>(norm.rot.begin(), norm.rot.end())));
    vals.R = tape.constant(rotation_from_params(norm.rot));
    return vals;
}

} // namespace

VoxelCode encode_voxel(const Model& model, const LocalVoxel& voxel,
                       const std::array<double, 3>& sizes) {
    Tape tape;
    ParamBinding binding = bind_params(tape, model.params);
    EncodeTapeResult enc = encode_on_tape(tape, binding, model.config, voxel.local_points, sizes);
    return extract_code(tape, enc, voxel.index, voxel.n);
}

Tensor decode_voxel_local(const Model& model, const VoxelCode& code) {
    if (code.bypass) throw DataError("decode_voxel_local: bypass voxel carries raw points");
    if (int(code.code.size()) != model.config.code_len)
        throw DataError("decode_voxel_local: code length " + std::to_string(code.code.size()) +
                        " does not match model code_len " +
                        std::to_string(model.config.code_len));
    Tape tape;
    ParamBinding binding = bind_params(tape, model.params);
    Value c = tape.constant(Tensor(1, model.config.code_len, code.code));
    NormTapeVals norm = bind_norm_constants(tape, code.norm);
    Value out = decode_on_tape(tape, binding, model.config, c, norm);
    return tape.value(out);
}

CodecResult codec_roundtrip(const Model& model, const PointCloud& cloud, const VoxelSpec& spec,
                            int64_t n_min) {
    VoxelizedCloud vc = partition(cloud, spec);
    std::vector<std::pair<const VoxelIndex*, const VoxelCell*>> items;
    items.reserve(vc.voxels.size());
    for (const auto& [idx, cell] : vc.voxels) items.emplace_back(&idx, &cell);

    std::vector<VoxelCode> codes(items.size());
    std::vector<Tensor> recon_world(items.size());
    std::array<double, 3> sizes = spec.sizes();
    parallel_for(int(items.size()), [&](int i) {
        const VoxelIndex& idx = *items[size_t(i)].first;
        const VoxelCell& cell = *items[size_t(i)].second;
        if (cell.points.rows < n_min) {
            VoxelCode& code = codes[size_t(i)];
            code.index = idx;
            code.n = cell.points.rows;
            code.bypass = true;
            code.raw_points = cell.points;
            recon_world[size_t(i)] = cell.points;
            return;
        }
        LocalVoxel lv = to_local(spec, idx, cell.points);
        Tape tape;
        ParamBinding binding = bind_params(tape, model.params);
        EncodeTapeResult enc = encode_on_tape(tape, binding, model.config, lv.local_points, sizes);
        Value dec = decode_on_tape(tape, binding, model.config, enc.code, enc.norm);
        codes[size_t(i)] = extract_code(tape, enc, idx, lv.n);
        recon_world[size_t(i)] = from_local(spec, idx, tape.value(dec));
    });

    CodecResult result;
    result.stream.spec = spec;
    result.stream.code_len = model.config.code_len;
    int64_t total_rows = 0;
    for (const Tensor& t : recon_world) total_rows += t.rows;
    result.reconstruction.points = Tensor(int(total_rows), 3);
    int row = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        const VoxelCode& code = codes[i];
        if (code.bypass) {
            result.bypass_voxels += 1;
            result.bypass_points += code.n;
        } else {
            result.encoded_voxels += 1;
        }
        for (int r = 0; r < recon_world[i].rows; ++r, ++row)
            for (int c = 0; c < 3; ++c)
                result.reconstruction.points(row, c) = recon_world[i](r, c);
        result.original_by_voxel.emplace(*items[i].first, items[i].second->points);
        result.recon_by_voxel.emplace(*items[i].first, std::move(recon_world[i]));
        result.stream.voxels.push_back(std::move(codes[i]));
    }
    return result;
}

PointCloud decode_stream(const Model& model, const CodeStream& stream) {
    if (stream.code_len != model.config.code_len)
        throw DataError("decode_stream: stream code length " + std::to_string(stream.code_len) +
                        " does not match model code_len " +
                        std::to_string(model.config.code_len));
    std::vector<Tensor> recon(stream.voxels.size());
    parallel_for(int(stream.voxels.size()), [&](int i) {
        const VoxelCode& code = stream.voxels[size_t(i)];
        if (code.bypass) {
            recon[size_t(i)] = code.raw_points;
        } else {
            recon[size_t(i)] =
                from_local(stream.spec, code.index, decode_voxel_local(model, code));
        }
    });
    int64_t total = 0;
    for (const Tensor& t : recon) total += t.rows;
    PointCloud out;
    out.points = Tensor(int(total), 3);
    int row = 0;
    for (const Tensor& t : recon)
        for (int r = 0; r < t.rows; ++r, ++row)
            for (int c = 0; c < 3; ++c) out.points(row, c) = t(r, c);
    return out;
}

// --- Code stream serialization ------------------------------------------------

void save_code_stream(const std::string& path, const CodeStream& stream) {
    std::vector<uint8_t> out;
    out.push_back('P');
    out.push_back('C');
    out.push_back('T');
    out.push_back('C');
    binio::put_u32(out, 1); // format version
    binio::put_u32(out, uint32_t(stream.code_len));
    for (double o : stream.spec.origin) binio::put_f64(out, o);
    binio::put_f64(out, stream.spec.h);
    binio::put_f64(out, stream.spec.w);
    binio::put_f64(out, stream.spec.d);
    binio::put_u64(out, stream.voxels.size());
    for (const VoxelCode& vc : stream.voxels) {
        binio::put_i64(out, vc.index.h);
        binio::put_i64(out, vc.index.w);
        binio::put_i64(out, vc.index.d);
        binio::put_u64(out, uint64_t(vc.n));
        out.push_back(vc.bypass ? 1 : 0);
        if (vc.bypass) {
            for (double v : vc.raw_points.data) binio::put_f64(out, v);
        } else {
            if (int(vc.code.size()) != stream.code_len)
                throw DataError("save_code_stream: code length mismatch in voxel record");
            for (double v : vc.code) binio::put_f64(out, v);
            for (double v : vc.norm.mu) binio::put_f64(out, v);
            for (double v : vc.norm.s) binio::put_f64(out, v);
            for (double v : vc.norm.rot) binio::put_f64(out, v);
        }
    }
    binio::write_file(path, out);
}

CodeStream load_code_stream(const std::string& path) {
    std::vector<uint8_t> bytes = binio::read_file(path);
    binio::Reader r(bytes.data(), bytes.size(), path);
    std::string magic = r.str(4);
    if (magic != "PCTC") throw DataError(path + ": bad code stream magic (expected \"PCTC\")");
    uint32_t version = r.u32();
    if (version != 1)
        throw DataError(path + ": unsupported code stream version " + std::to_string(version));
    CodeStream stream;
    stream.code_len = int(r.u32());
    for (double& o : stream.spec.origin) o = r.f64();
    stream.spec.h = r.f64();
    stream.spec.w = r.f64();
    stream.spec.d = r.f64();
    uint64_t count = r.u64();
    stream.voxels.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        VoxelCode vc;
        vc.index.h = r.i64();
        vc.index.w = r.i64();
        vc.index.d = r.i64();
        vc.n = int64_t(r.u64());
        vc.bypass = r.u8() != 0;
        if (vc.bypass) {
            vc.raw_points = Tensor(int(vc.n), 3);
            for (double& v : vc.raw_points.data) v = r.f64();
        } else {
            vc.code.resize(size_t(stream.code_len));
            for (double& v : vc.code) v = r.f64();
            for (double& v : vc.norm.mu) v = r.f64();
            for (double& v : vc.norm.s) v = r.f64();
            for (double& v : vc.norm.rot) v = r.f64();
        }
        stream.voxels.push_back(std::move(vc));
    }
    if (r.remaining() != 0) throw DataError(path + ": trailing bytes after code stream payload");
    return stream;
}

} // namespace pct
