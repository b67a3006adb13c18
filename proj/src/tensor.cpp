#include "pct/tensor.hpp"

#include "pct/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace pct {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cmap(const Tensor& t) { return CMap(t.data.data(), t.rows, t.cols); }
Map map(Tensor& t) { return Map(t.data.data(), t.rows, t.cols); }

void require_inner(int a, int b, const char* what) {
    if (a != b)
        throw DataError(std::string("matmul dimension mismatch in ") + what + ": " +
                        std::to_string(a) + " vs " + std::to_string(b));
}

} // namespace

Tensor::Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != size_t(r) * size_t(c))
        throw DataError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str());
}

Tensor Tensor::full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::row3(double x, double y, double z) {
    Tensor t(1, 3);
    t(0, 0) = x;
    t(0, 1) = y;
    t(0, 2) = z;
    return t;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_inner(a.cols, b.rows, "A*B");
    Tensor c(a.rows, b.cols);
    map(c).noalias() = cmap(a) * cmap(b);
    return c;
}

void add_matmul(Tensor& c, const Tensor& a, const Tensor& b) {
    require_inner(a.cols, b.rows, "A*B");
    map(c).noalias() += cmap(a) * cmap(b);
}

void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b) {
    require_inner(a.cols, b.cols, "A*B^T");
    map(c).noalias() += cmap(a) * cmap(b).transpose();
}

void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b) {
    require_inner(a.rows, b.rows, "A^T*B");
    map(c).noalias() += cmap(a).transpose() * cmap(b);
}

Tensor transposed(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    map(t) = cmap(a).transpose();
    return t;
}

} // namespace pct
