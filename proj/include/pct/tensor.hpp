#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pct {

/// Dense row-major matrix of 64-bit reals. Vectors are 1 x c or r x 1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // row-major, rows*cols

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), 0.0) {}
    Tensor(int r, int c, std::vector<double> d);

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v);
    static Tensor identity(int n);
    static Tensor row3(double x, double y, double z);

    double& operator()(int i, int j) { return data[size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return data[size_t(i) * cols + j]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
    bool all_finite() const;
};

/// C = A * B
Tensor matmul(const Tensor& a, const Tensor& b);
/// C += A * B
void add_matmul(Tensor& c, const Tensor& a, const Tensor& b);
/// C += A * B^T
void add_matmul_nt(Tensor& c, const Tensor& a, const Tensor& b);
/// C += A^T * B
void add_matmul_tn(Tensor& c, const Tensor& a, const Tensor& b);

Tensor transposed(const Tensor& a);

} // namespace pct
