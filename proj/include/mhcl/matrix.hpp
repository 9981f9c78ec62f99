#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhcl {

// All errors carry a category prefix ("shape:", "parse:", ...) in what().
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& category, const std::string& msg) {
  throw Error(category + ": " + msg);
}

/// Dense row-major matrix of doubles. The only tensor type in the project;
/// scalars are 1x1 matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) fail("shape", "data length != rows*cols");
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
  static Matrix full(std::size_t r, std::size_t c, double v) {
    Matrix m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.data[i * n + i] = 1.0;
    return m;
  }
  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::size_t numel() const { return rows * cols; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool empty() const { return data.empty(); }

  double item() const {
    if (numel() != 1) fail("contract", "item() on non-scalar matrix");
    return data[0];
  }
};

/// Worker count for row-parallel kernels. Reads MHCL_THREADS once; defaults
/// to 1 (single-threaded, the reference execution mode).
int worker_count();
void set_worker_count(int n);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks. Each chunk
/// writes disjoint rows, so results are bitwise identical for any worker
/// count.
void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// C = A * B (shape-checked).
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

}  // namespace mhcl
