#pragma once

#include <cstddef>
#include <vector>

#include "mhcl/matrix.hpp"

namespace mhcl {

/// CSR sparse matrix. Used for the per-rating normalized adjacency; values
/// are fixed (never differentiated through).
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> rowptr;  // size rows+1
  std::vector<std::size_t> colidx;
  std::vector<double> values;

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    const std::vector<std::size_t>& r,
                                    const std::vector<std::size_t>& c,
                                    const std::vector<double>& v);

  std::size_t nnz() const { return values.size(); }

  /// y = this * x
  Matrix mul(const Matrix& x) const;

  Matrix to_dense() const;
};

}  // namespace mhcl
