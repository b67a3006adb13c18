#pragma once

#include "pct/rng.hpp"
#include "pct/tensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pct {

/// Handle to a node on a Tape.
struct Value {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. The operation vocabulary is fixed:
/// exactly what the voxel codec needs. One tape is confined to one thread;
/// forward and backward are deterministic (fixed summation order).
class Tape {
public:
    // Leaves.
    Value constant(Tensor v);
    Value param(Tensor v); // participates in gradients

    // Elementwise.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);
    Value scale(Value a, double c);
    Value exp(Value a);
    Value sqrt(Value a);
    Value relu(Value a);

    // Linear algebra.
    Value matmul(Value a, Value b);
    Value transpose(Value a);
    /// x*w + row-broadcast bias (bias is 1 x out).
    Value affine(Value x, Value w, Value bias);
    /// Scales column j of x by r(0, j); r is 1 x cols.
    Value mul_rowvec(Value x, Value r);
    /// Adds r(0, j) to column j of x.
    Value add_rowvec(Value x, Value r);
    /// Scales row i of x by c(i, 0); c is rows x 1.
    Value scale_rows(Value x, Value c);

    // Shape and indexing.
    Value concat_cols(const std::vector<Value>& xs);
    Value concat_rows(const std::vector<Value>& xs);
    Value slice_cols(Value x, int first, int width);
    Value gather_rows(Value x, std::vector<int> idx);
    /// out[seg[e]] += x[e]; out has n_out rows. Accumulation in ascending e.
    Value segment_sum(Value x, std::vector<int> seg, int n_out);
    /// Row-major reinterpretation; rows*cols must match.
    Value reshape(Value x, int rows, int cols);
    /// Replicates a 1 x c row n times.
    Value broadcast_row(Value r, int n) { return gather_rows(r, std::vector<int>(size_t(n), 0)); }

    // Reductions.
    Value mean_rows(Value x); // 1 x c
    Value max_rows(Value x);  // 1 x c, gradient routed to first argmax
    Value sum_all(Value x);   // 1 x 1
    Value row_sums(Value x);  // n x 1

    const Tensor& value(Value v) const;
    /// Gradient of the last backward() target w.r.t. v (zeros if unreached).
    Tensor grad(Value v) const;
    bool requires_grad(Value v) const;

    /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
    /// loss must be 1 x 1.
    void backward(Value loss);

    int node_count() const { return int(nodes_.size()); }

private:
    enum class Op : uint8_t {
        Leaf, Add, Sub, Mul, Div, Scale, Exp, Sqrt, Relu,
        Matmul, Transpose, Affine, MulRowvec, AddRowvec, ScaleRows,
        ConcatCols, ConcatRows, SliceCols, GatherRows, SegmentSum, Reshape,
        MeanRows, MaxRows, SumAll, RowSums,
    };

    struct Node {
        Op op = Op::Leaf;
        Tensor value;
        Tensor grad; // allocated lazily during backward
        bool requires_grad = false;
        std::array<int32_t, 3> in{-1, -1, -1};
        std::vector<int32_t> in_list; // concat inputs
        std::vector<int> idx;         // gather/segment indices, argmax rows
        double c = 0.0;               // scale factor
        int i0 = 0, i1 = 0;           // slice first/width, segment n_out
    };

    Value push(Node n);
    Node& at(Value v);
    const Node& at(Value v) const;
    Tensor& grad_buf(int32_t id);
    void backprop_node(int32_t id);

    std::vector<Node> nodes_;
};

/// Named parameter tensors with deterministic (sorted) iteration order.
struct ParamStore {
    std::map<std::string, Tensor> tensors;

    Tensor& add(const std::string& name, Tensor t);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    size_t scalar_count() const;
};

/// Parameters bound onto one tape for a forward/backward pass.
struct ParamBinding {
    std::map<std::string, Value> values;

    Value operator()(const std::string& name) const;
};

ParamBinding bind_params(Tape& tape, const ParamStore& params);
/// Gradients keyed by parameter name, in store order. Call after backward().
std::map<std::string, Tensor> collect_grads(const Tape& tape, const ParamBinding& binding);

/// Multilayer perceptron: ReLU on hidden layers, linear output. Parameters
/// are named <prefix>.<layer>.{w,b}.
struct MlpSpec {
    std::string prefix;
    std::vector<int> widths; // input width first, output width last

    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
};

/// Xavier-uniform weights, zero biases, drawn in layer order from rng.
void init_mlp(ParamStore& params, const MlpSpec& spec, Rng& rng);
Value mlp_forward(Tape& tape, const ParamBinding& binding, const MlpSpec& spec, Value x);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    int64_t step = 0;
    std::map<std::string, Tensor> m; // first moments
    std::map<std::string, Tensor> v; // second moments
};

/// Bias-corrected Adam update, in place. Missing gradients are treated as 0.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state);

/// A differentiable scalar loss built from bound parameters.
using LossFn = std::function<Value(Tape&, const ParamBinding&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    int checked = 0;
};

/// Compares reverse-mode gradients against central finite differences over
/// every parameter scalar. rel err = |ad - fd| / max(1, |ad|, |fd|).
/// `exclude(name, flat_index)` skips scalars (e.g. at a ReLU kink).
GradCheckResult grad_check(const LossFn& loss, const ParamStore& params, double step = 1e-6,
                           const std::function<bool(const std::string&, int)>& exclude = nullptr);

/// Checkpoint layout: "PCT1", u32 version, u64 record count, sorted records
/// of (u32 name length, name, u32 rank, u64 dims..., f64 payload), then a
/// u32-length-prefixed configuration echo. All little-endian.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_echo);

struct Checkpoint {
    ParamStore params;
    std::string config_echo;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace pct
