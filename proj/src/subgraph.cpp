#include "mhcl/sparse.hpp"

namespace mhcl {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         const std::vector<std::size_t>& r,
                                         const std::vector<std::size_t>& c,
                                         const std::vector<double>& v) {
  if (r.size() != c.size() || r.size() != v.size())
    fail("contract", "from_triplets length mismatch");
  SparseMatrix s;
  s.rows = rows;
  s.cols = cols;
  s.rowptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] >= rows || c[k] >= cols) fail("shape", "triplet index out of range");
    s.rowptr[r[k] + 1] += 1;
  }
  for (std::size_t i = 0; i < rows; ++i) s.rowptr[i + 1] += s.rowptr[i];
  s.colidx.resize(r.size());
  s.values.resize(r.size());
  std::vector<std::size_t> cursor(s.rowptr.begin(), s.rowptr.end() - 1);
  for (std::size_t k = 0; k < r.size(); ++k) {
    const std::size_t slot = cursor[r[k]]++;
    s.colidx[slot] = c[k];
    s.values[slot] = v[k];
  }
  return s;
}

Matrix SparseMatrix::mul(const Matrix& x) const {
  if (cols != x.rows) fail("shape", "sparse mul inner dimensions disagree");
  Matrix y(rows, x.cols);
  parallel_rows(rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* yrow = y.row(i);
      for (std::size_t k = rowptr[i]; k < rowptr[i + 1]; ++k) {
        const double w = values[k];
        const double* xrow = x.row(colidx[k]);
        for (std::size_t j = 0; j < x.cols; ++j) yrow[j] += w * xrow[j];
      }
    }
  });
  return y;
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = rowptr[i]; k < rowptr[i + 1]; ++k) d(i, colidx[k]) += values[k];
  return d;
}

}  // namespace mhcl
