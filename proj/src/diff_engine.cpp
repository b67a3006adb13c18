#include "pct/diff_engine.hpp"

#include "pct/binio.hpp"
#include "pct/errors.hpp"
#include "pct/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace pct {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DataError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
}

} // namespace

// --- Tape -------------------------------------------------------------

Value Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{int32_t(nodes_.size() - 1)};
}

Tape::Node& Tape::at(Value v) {
    if (!v.valid() || v.id >= int32_t(nodes_.size())) throw DataError("invalid tape value");
    return nodes_[size_t(v.id)];
}

const Tape::Node& Tape::at(Value v) const {
    if (!v.valid() || v.id >= int32_t(nodes_.size())) throw DataError("invalid tape value");
    return nodes_[size_t(v.id)];
}

const Tensor& Tape::value(Value v) const { return at(v).value; }

bool Tape::requires_grad(Value v) const { return at(v).requires_grad; }

Tensor Tape::grad(Value v) const {
    const Node& n = at(v);
    if (n.grad.size() == 0) return Tensor::zeros(n.value.rows, n.value.cols);
    return n.grad;
}

Value Tape::constant(Tensor v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
}

Value Tape::param(Tensor v) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = true;
    return push(std::move(n));
}

Value Tape::add(Value a, Value b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "add");
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id, -1};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bv.data[i];
    return push(std::move(n));
}

Value Tape::sub(Value a, Value b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "sub");
    Node n;
    n.op = Op::Sub;
    n.in = {a.id, b.id, -1};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= bv.data[i];
    return push(std::move(n));
}

Value Tape::mul(Value a, Value b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "mul");
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id, -1};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bv.data[i];
    return push(std::move(n));
}

Value Tape::div(Value a, Value b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "div");
    Node n;
    n.op = Op::Div;
    n.in = {a.id, b.id, -1};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] /= bv.data[i];
    return push(std::move(n));
}

Value Tape::scale(Value a, double c) {
    Node n;
    n.op = Op::Scale;
    n.in = {a.id, -1, -1};
    n.c = c;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& v : n.value.data) v *= c;
    return push(std::move(n));
}

Value Tape::exp(Value a) {
    Node n;
    n.op = Op::Exp;
    n.in = {a.id, -1, -1};
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n));
}

Value Tape::sqrt(Value a) {
    Node n;
    n.op = Op::Sqrt;
    n.in = {a.id, -1, -1};
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& v : n.value.data) v = std::sqrt(v);
    return push(std::move(n));
}

Value Tape::relu(Value a) {
    Node n;
    n.op = Op::Relu;
    n.in = {a.id, -1, -1};
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Value Tape::matmul(Value a, Value b) {
    Node n;
    n.op = Op::Matmul;
    n.in = {a.id, b.id, -1};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = pct::matmul(value(a), value(b));
    return push(std::move(n));
}

Value Tape::transpose(Value a) {
    Node n;
    n.op = Op::Transpose;
    n.in = {a.id, -1, -1};
    n.requires_grad = requires_grad(a);
    n.value = transposed(value(a));
    return push(std::move(n));
}

Value Tape::affine(Value x, Value w, Value bias) {
    const Tensor& bv = value(bias);
    const Tensor& wv = value(w);
    if (bv.rows != 1 || bv.cols != wv.cols)
        throw DataError("affine: bias must be 1x" + std::to_string(wv.cols) + ", got " +
                        bv.shape_str());
    Node n;
    n.op = Op::Affine;
    n.in = {x.id, w.id, bias.id};
    n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(bias);
    n.value = pct::matmul(value(x), wv);
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value(i, j) += bv(0, j);
    return push(std::move(n));
}

Value Tape::mul_rowvec(Value x, Value r) {
    const Tensor& xv = value(x);
    const Tensor& rv = value(r);
    if (rv.rows != 1 || rv.cols != xv.cols)
        throw DataError("mul_rowvec: expected 1x" + std::to_string(xv.cols) + ", got " +
                        rv.shape_str());
    Node n;
    n.op = Op::MulRowvec;
    n.in = {x.id, r.id, -1};
    n.requires_grad = requires_grad(x) || requires_grad(r);
    n.value = xv;
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value(i, j) *= rv(0, j);
    return push(std::move(n));
}

Value Tape::add_rowvec(Value x, Value r) {
    const Tensor& xv = value(x);
    const Tensor& rv = value(r);
    if (rv.rows != 1 || rv.cols != xv.cols)
        throw DataError("add_rowvec: expected 1x" + std::to_string(xv.cols) + ", got " +
                        rv.shape_str());
    Node n;
    n.op = Op::AddRowvec;
    n.in = {x.id, r.id, -1};
    n.requires_grad = requires_grad(x) || requires_grad(r);
    n.value = xv;
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value(i, j) += rv(0, j);
    return push(std::move(n));
}

Value Tape::scale_rows(Value x, Value c) {
    const Tensor& xv = value(x);
    const Tensor& cv = value(c);
    if (cv.cols != 1 || cv.rows != xv.rows)
        throw DataError("scale_rows: expected " + std::to_string(xv.rows) + "x1, got " +
                        cv.shape_str());
    Node n;
    n.op = Op::ScaleRows;
    n.in = {x.id, c.id, -1};
    n.requires_grad = requires_grad(x) || requires_grad(c);
    n.value = xv;
    for (int i = 0; i < n.value.rows; ++i)
        for (int j = 0; j < n.value.cols; ++j) n.value(i, j) *= cv(i, 0);
    return push(std::move(n));
}

Value Tape::concat_cols(const std::vector<Value>& xs) {
    if (xs.empty()) throw DataError("concat_cols: no inputs");
    int rows = value(xs[0]).rows;
    int cols = 0;
    for (Value v : xs) {
        if (value(v).rows != rows)
            throw DataError("concat_cols: row mismatch " + value(v).shape_str());
        cols += value(v).cols;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Value v : xs) {
        const Tensor& t = value(v);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < t.cols; ++j) n.value(i, off + j) = t(i, j);
        off += t.cols;
        n.in_list.push_back(v.id);
        n.requires_grad = n.requires_grad || requires_grad(v);
    }
    return push(std::move(n));
}

Value Tape::concat_rows(const std::vector<Value>& xs) {
    if (xs.empty()) throw DataError("concat_rows: no inputs");
    int cols = value(xs[0]).cols;
    int rows = 0;
    for (Value v : xs) {
        if (value(v).cols != cols)
            throw DataError("concat_rows: column mismatch " + value(v).shape_str());
        rows += value(v).rows;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Value v : xs) {
        const Tensor& t = value(v);
        for (int i = 0; i < t.rows; ++i)
            for (int j = 0; j < cols; ++j) n.value(off + i, j) = t(i, j);
        off += t.rows;
        n.in_list.push_back(v.id);
        n.requires_grad = n.requires_grad || requires_grad(v);
    }
    return push(std::move(n));
}

Value Tape::slice_cols(Value x, int first, int width) {
    const Tensor& xv = value(x);
    if (first < 0 || width < 1 || first + width > xv.cols)
        throw DataError("slice_cols: range [" + std::to_string(first) + ", " +
                        std::to_string(first + width) + ") out of " + xv.shape_str());
    Node n;
    n.op = Op::SliceCols;
    n.in = {x.id, -1, -1};
    n.i0 = first;
    n.i1 = width;
    n.requires_grad = requires_grad(x);
    n.value = Tensor(xv.rows, width);
    for (int i = 0; i < xv.rows; ++i)
        for (int j = 0; j < width; ++j) n.value(i, j) = xv(i, first + j);
    return push(std::move(n));
}

Value Tape::gather_rows(Value x, std::vector<int> idx) {
    const Tensor& xv = value(x);
    for (int i : idx)
        if (i < 0 || i >= xv.rows)
            throw DataError("gather_rows: index " + std::to_string(i) + " out of " +
                            std::to_string(xv.rows) + " rows");
    Node n;
    n.op = Op::GatherRows;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(int(idx.size()), xv.cols);
    for (size_t e = 0; e < idx.size(); ++e)
        for (int j = 0; j < xv.cols; ++j) n.value(int(e), j) = xv(idx[e], j);
    n.idx = std::move(idx);
    return push(std::move(n));
}

Value Tape::segment_sum(Value x, std::vector<int> seg, int n_out) {
    const Tensor& xv = value(x);
    if (int(seg.size()) != xv.rows)
        throw DataError("segment_sum: " + std::to_string(seg.size()) + " segment ids for " +
                        std::to_string(xv.rows) + " rows");
    for (int s : seg)
        if (s < 0 || s >= n_out)
            throw DataError("segment_sum: segment id " + std::to_string(s) + " out of " +
                            std::to_string(n_out));
    Node n;
    n.op = Op::SegmentSum;
    n.in = {x.id, -1, -1};
    n.i1 = n_out;
    n.requires_grad = requires_grad(x);
    n.value = Tensor(n_out, xv.cols);
    for (size_t e = 0; e < seg.size(); ++e)
        for (int j = 0; j < xv.cols; ++j) n.value(seg[e], j) += xv(int(e), j);
    n.idx = std::move(seg);
    return push(std::move(n));
}

Value Tape::reshape(Value x, int rows, int cols) {
    const Tensor& xv = value(x);
    if (int64_t(rows) * cols != int64_t(xv.rows) * xv.cols)
        throw DataError("reshape: cannot view " + xv.shape_str() + " as " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    Node n;
    n.op = Op::Reshape;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(rows, cols, xv.data);
    return push(std::move(n));
}

Value Tape::mean_rows(Value x) {
    const Tensor& xv = value(x);
    if (xv.rows == 0) throw DataError("mean_rows: empty input");
    Node n;
    n.op = Op::MeanRows;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(1, xv.cols);
    for (int i = 0; i < xv.rows; ++i)
        for (int j = 0; j < xv.cols; ++j) n.value(0, j) += xv(i, j);
    for (int j = 0; j < xv.cols; ++j) n.value(0, j) /= double(xv.rows);
    return push(std::move(n));
}

Value Tape::max_rows(Value x) {
    const Tensor& xv = value(x);
    if (xv.rows == 0) throw DataError("max_rows: empty input");
    Node n;
    n.op = Op::MaxRows;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(1, xv.cols);
    n.idx.assign(size_t(xv.cols), 0);
    for (int j = 0; j < xv.cols; ++j) {
        double best = xv(0, j);
        int arg = 0;
        for (int i = 1; i < xv.rows; ++i)
            if (xv(i, j) > best) {
                best = xv(i, j);
                arg = i;
            }
        n.value(0, j) = best;
        n.idx[size_t(j)] = arg;
    }
    return push(std::move(n));
}

Value Tape::sum_all(Value x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::SumAll;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(1, 1);
    double s = 0.0;
    for (double v : xv.data) s += v;
    n.value(0, 0) = s;
    return push(std::move(n));
}

Value Tape::row_sums(Value x) {
    const Tensor& xv = value(x);
    Node n;
    n.op = Op::RowSums;
    n.in = {x.id, -1, -1};
    n.requires_grad = requires_grad(x);
    n.value = Tensor(xv.rows, 1);
    for (int i = 0; i < xv.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < xv.cols; ++j) s += xv(i, j);
        n.value(i, 0) = s;
    }
    return push(std::move(n));
}

Tensor& Tape::grad_buf(int32_t id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::backward(Value loss) {
    const Node& ln = at(loss);
    if (ln.value.rows != 1 || ln.value.cols != 1)
        throw DataError("backward: loss must be 1x1, got " + ln.value.shape_str());
    if (!std::isfinite(ln.value(0, 0)))
        throw DataError("backward: loss is not finite");
    for (Node& n : nodes_) n.grad = Tensor();
    grad_buf(loss.id)(0, 0) = 1.0;
    for (int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[size_t(id)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        backprop_node(id);
    }
}

void Tape::backprop_node(int32_t id) {
    Node& n = nodes_[size_t(id)];
    const Tensor& g = n.grad;
    auto rg = [&](int slot) { return n.in[size_t(slot)] >= 0 && nodes_[size_t(n.in[size_t(slot)])].requires_grad; };
    auto in_val = [&](int slot) -> const Tensor& { return nodes_[size_t(n.in[size_t(slot)])].value; };

    switch (n.op) {
    case Op::Leaf:
        break;
    case Op::Add: {
        for (int s = 0; s < 2; ++s)
            if (rg(s)) {
                Tensor& d = grad_buf(n.in[size_t(s)]);
                for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
            }
        break;
    }
    case Op::Sub: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] -= g.data[i];
        }
        break;
    }
    case Op::Mul: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            const Tensor& b = in_val(1);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * b.data[i];
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            const Tensor& a = in_val(0);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * a.data[i];
        }
        break;
    }
    case Op::Div: {
        const Tensor& b = in_val(1);
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] / b.data[i];
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            for (size_t i = 0; i < g.data.size(); ++i)
                d.data[i] -= g.data[i] * n.value.data[i] / b.data[i];
        }
        break;
    }
    case Op::Scale: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * n.c;
        }
        break;
    }
    case Op::Exp: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i] * n.value.data[i];
        }
        break;
    }
    case Op::Sqrt: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i)
                d.data[i] += g.data[i] * 0.5 / n.value.data[i];
        }
        break;
    }
    case Op::Relu: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            const Tensor& x = in_val(0);
            for (size_t i = 0; i < g.data.size(); ++i)
                if (x.data[i] > 0.0) d.data[i] += g.data[i];
        }
        break;
    }
    case Op::Matmul: {
        if (rg(0)) add_matmul_nt(grad_buf(n.in[0]), g, in_val(1));
        if (rg(1)) add_matmul_tn(grad_buf(n.in[1]), in_val(0), g);
        break;
    }
    case Op::Transpose: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(j, i) += g(i, j);
        }
        break;
    }
    case Op::Affine: {
        if (rg(0)) add_matmul_nt(grad_buf(n.in[0]), g, in_val(1));
        if (rg(1)) add_matmul_tn(grad_buf(n.in[1]), in_val(0), g);
        if (rg(2)) {
            Tensor& d = grad_buf(n.in[2]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(0, j) += g(i, j);
        }
        break;
    }
    case Op::MulRowvec: {
        const Tensor& x = in_val(0);
        const Tensor& r = in_val(1);
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(i, j) += g(i, j) * r(0, j);
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(0, j) += g(i, j) * x(i, j);
        }
        break;
    }
    case Op::AddRowvec: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(0, j) += g(i, j);
        }
        break;
    }
    case Op::ScaleRows: {
        const Tensor& x = in_val(0);
        const Tensor& c = in_val(1);
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(i, j) += g(i, j) * c(i, 0);
        }
        if (rg(1)) {
            Tensor& d = grad_buf(n.in[1]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(i, 0) += g(i, j) * x(i, j);
        }
        break;
    }
    case Op::ConcatCols: {
        int off = 0;
        for (int32_t in_id : n.in_list) {
            Node& src = nodes_[size_t(in_id)];
            if (src.requires_grad) {
                Tensor& d = grad_buf(in_id);
                for (int i = 0; i < d.rows; ++i)
                    for (int j = 0; j < d.cols; ++j) d(i, j) += g(i, off + j);
            }
            off += src.value.cols;
        }
        break;
    }
    case Op::ConcatRows: {
        int off = 0;
        for (int32_t in_id : n.in_list) {
            Node& src = nodes_[size_t(in_id)];
            if (src.requires_grad) {
                Tensor& d = grad_buf(in_id);
                for (int i = 0; i < d.rows; ++i)
                    for (int j = 0; j < d.cols; ++j) d(i, j) += g(off + i, j);
            }
            off += src.value.rows;
        }
        break;
    }
    case Op::SliceCols: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) d(i, n.i0 + j) += g(i, j);
        }
        break;
    }
    case Op::GatherRows: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t e = 0; e < n.idx.size(); ++e)
                for (int j = 0; j < g.cols; ++j) d(n.idx[e], j) += g(int(e), j);
        }
        break;
    }
    case Op::SegmentSum: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t e = 0; e < n.idx.size(); ++e)
                for (int j = 0; j < g.cols; ++j) d(int(e), j) += g(n.idx[e], j);
        }
        break;
    }
    case Op::Reshape: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (size_t i = 0; i < g.data.size(); ++i) d.data[i] += g.data[i];
        }
        break;
    }
    case Op::MeanRows: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            double inv = 1.0 / double(d.rows);
            for (int i = 0; i < d.rows; ++i)
                for (int j = 0; j < d.cols; ++j) d(i, j) += g(0, j) * inv;
        }
        break;
    }
    case Op::MaxRows: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int j = 0; j < g.cols; ++j) d(n.idx[size_t(j)], j) += g(0, j);
        }
        break;
    }
    case Op::SumAll: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (double& v : d.data) v += g(0, 0);
        }
        break;
    }
    case Op::RowSums: {
        if (rg(0)) {
            Tensor& d = grad_buf(n.in[0]);
            for (int i = 0; i < d.rows; ++i)
                for (int j = 0; j < d.cols; ++j) d(i, j) += g(i, 0);
        }
        break;
    }
    }
}

// --- ParamStore and bindings -------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    auto [it, inserted] = tensors.emplace(name, std::move(t));
    if (!inserted) throw ConfigError("duplicate parameter name: " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("missing parameter tensor: " + name);
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("missing parameter tensor: " + name);
    return it->second;
}

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

Value ParamBinding::operator()(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw DataError("parameter not bound: " + name);
    return it->second;
}

ParamBinding bind_params(Tape& tape, const ParamStore& params) {
    ParamBinding binding;
    for (const auto& [name, t] : params.tensors) binding.values.emplace(name, tape.param(t));
    return binding;
}

std::map<std::string, Tensor> collect_grads(const Tape& tape, const ParamBinding& binding) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, v] : binding.values) grads.emplace(name, tape.grad(v));
    return grads;
}

// --- MLP ----------------------------------------------------------------

Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    Tensor t(fan_in, fan_out);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

void init_mlp(ParamStore& params, const MlpSpec& spec, Rng& rng) {
    if (spec.widths.size() < 2) throw ConfigError("mlp " + spec.prefix + " needs >= 2 widths");
    for (size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        std::string base = spec.prefix + "." + std::to_string(l);
        params.add(base + ".w", xavier_uniform(spec.widths[l], spec.widths[l + 1], rng));
        params.add(base + ".b", Tensor::zeros(1, spec.widths[l + 1]));
    }
}

Value mlp_forward(Tape& tape, const ParamBinding& binding, const MlpSpec& spec, Value x) {
    size_t layers = spec.widths.size() - 1;
    for (size_t l = 0; l < layers; ++l) {
        std::string base = spec.prefix + "." + std::to_string(l);
        x = tape.affine(x, binding(base + ".w"), binding(base + ".b"));
        if (l + 1 < layers) x = tape.relu(x);
    }
    return x;
}

// --- Adam ----------------------------------------------------------------

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state) {
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.cfg.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.cfg.beta2, double(state.step));
    for (auto& [name, theta] : params.tensors) {
        auto git = grads.find(name);
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(theta.rows, theta.cols)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(theta.rows, theta.cols)).first->second;
        if (!m.same_shape(theta) || !v.same_shape(theta))
            throw DataError("adam state shape mismatch for " + name);
        for (size_t i = 0; i < theta.data.size(); ++i) {
            double g = git != grads.end() ? git->second.data[i] : 0.0;
            m.data[i] = state.cfg.beta1 * m.data[i] + (1.0 - state.cfg.beta1) * g;
            v.data[i] = state.cfg.beta2 * v.data[i] + (1.0 - state.cfg.beta2) * g * g;
            double m_hat = m.data[i] / bc1;
            double v_hat = v.data[i] / bc2;
            theta.data[i] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
        }
    }
}

// --- Gradient checking -----------------------------------------------------

namespace {

double eval_loss(const LossFn& loss, const ParamStore& params) {
    Tape tape;
    ParamBinding binding = bind_params(tape, params);
    Value l = loss(tape, binding);
    const Tensor& lv = tape.value(l);
    if (lv.rows != 1 || lv.cols != 1)
        throw DataError("grad_check: loss must be scalar, got " + lv.shape_str());
    if (!std::isfinite(lv(0, 0))) throw DataError("grad_check: loss is not finite");
    return lv(0, 0);
}

} // namespace

GradCheckResult grad_check(const LossFn& loss, const ParamStore& params, double step,
                           const std::function<bool(const std::string&, int)>& exclude) {
    // Reverse-mode gradients once.
    Tape tape;
    ParamBinding binding = bind_params(tape, params);
    Value l = loss(tape, binding);
    if (!std::isfinite(tape.value(l)(0, 0))) throw DataError("grad_check: loss is not finite");
    tape.backward(l);
    std::map<std::string, Tensor> ad = collect_grads(tape, binding);

    struct Slot {
        const std::string* name;
        int index;
    };
    std::vector<Slot> slots;
    for (const auto& [name, t] : params.tensors)
        for (int i = 0; i < int(t.size()); ++i)
            if (!exclude || !exclude(name, i)) slots.push_back({&name, i});

    std::vector<double> rel_err(slots.size(), 0.0);
    int workers = std::max(1, thread_budget());
    int chunk = int((slots.size() + size_t(workers) - 1) / size_t(workers));
    parallel_for(workers, [&](int w) {
        ParamStore local = params; // private copy, perturbed in place
        size_t lo = size_t(w) * size_t(chunk);
        size_t hi = std::min(slots.size(), lo + size_t(chunk));
        for (size_t s = lo; s < hi; ++s) {
            Tensor& t = local.get(*slots[s].name);
            double orig = t.data[size_t(slots[s].index)];
            t.data[size_t(slots[s].index)] = orig + step;
            double f_plus = eval_loss(loss, local);
            t.data[size_t(slots[s].index)] = orig - step;
            double f_minus = eval_loss(loss, local);
            t.data[size_t(slots[s].index)] = orig;
            double fd = (f_plus - f_minus) / (2.0 * step);
            double g = ad.at(*slots[s].name).data[size_t(slots[s].index)];
            rel_err[s] = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
        }
    });

    GradCheckResult res;
    res.checked = int(slots.size());
    for (size_t s = 0; s < slots.size(); ++s) {
        if (rel_err[s] > res.max_rel_err) {
            res.max_rel_err = rel_err[s];
            res.worst_param = *slots[s].name;
            res.worst_index = slots[s].index;
        }
    }
    return res;
}

// --- Checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_echo) {
    std::vector<uint8_t> out;
    out.push_back('P');
    out.push_back('C');
    out.push_back('T');
    out.push_back('1');
    binio::put_u32(out, 1); // format version
    binio::put_u64(out, params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
        binio::put_u32(out, uint32_t(name.size()));
        binio::put_bytes(out, name.data(), name.size());
        binio::put_u32(out, 2); // rank
        binio::put_u64(out, uint64_t(t.rows));
        binio::put_u64(out, uint64_t(t.cols));
        for (double v : t.data) binio::put_f64(out, v);
    }
    binio::put_u32(out, uint32_t(config_echo.size()));
    binio::put_bytes(out, config_echo.data(), config_echo.size());
    binio::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::vector<uint8_t> bytes;
    try {
        bytes = binio::read_file(path);
    } catch (const DataError& e) {
        throw CheckpointError(e.what());
    }
    try {
        binio::Reader r(bytes.data(), bytes.size(), path);
        std::string magic = r.str(4);
        if (magic != "PCT1")
            throw CheckpointError(path + ": bad checkpoint magic (expected \"PCT1\")");
        uint32_t version = r.u32();
        if (version != 1)
            throw CheckpointError(path + ": unsupported checkpoint version " +
                                  std::to_string(version));
        Checkpoint ck;
        uint64_t count = r.u64();
        for (uint64_t rec = 0; rec < count; ++rec) {
            uint32_t name_len = r.u32();
            std::string name = r.str(name_len);
            uint32_t rank = r.u32();
            if (rank != 2)
                throw CheckpointError(path + ": unsupported tensor rank " + std::to_string(rank));
            int rows = int(r.u64());
            int cols = int(r.u64());
            Tensor t(rows, cols);
            for (double& v : t.data) v = r.f64();
            ck.params.add(name, std::move(t));
        }
        uint32_t echo_len = r.u32();
        ck.config_echo = r.str(echo_len);
        if (r.remaining() != 0)
            throw CheckpointError(path + ": trailing bytes after checkpoint payload");
        return ck;
    } catch (const DataError& e) {
        throw CheckpointError(e.what());
    }
}

} // namespace pct
