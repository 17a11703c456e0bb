#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace kp {

/// Square sparse matrix in compressed-sparse-row form. Column indices are
/// sorted and unique within each row.
struct CsrMatrix {
  int n = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<int> col_idx;
  std::vector<double> values;
  bool symmetric = false;

  std::int64_t nnz() const noexcept { return static_cast<std::int64_t>(col_idx.size()); }
  std::span<const int> row_cols(int row) const {
    return {col_idx.data() + row_ptr[row], static_cast<std::size_t>(row_ptr[row + 1] - row_ptr[row])};
  }
  std::span<const double> row_vals(int row) const {
    return {values.data() + row_ptr[row], static_cast<std::size_t>(row_ptr[row + 1] - row_ptr[row])};
  }
  /// Entry (i, j), zero when not stored. Binary search in the row.
  double at(int i, int j) const;
  std::vector<double> diagonal() const;

  /// Throws InvalidArgument when the structural invariants do not hold.
  void validate() const;
  /// Pattern and values equal their transpose (exact comparison).
  bool is_symmetric() const;

  static CsrMatrix identity(int n);
  static CsrMatrix diagonal(std::span<const double> d);
  static CsrMatrix dense(int n, std::span<const double> row_major);
};

struct Triplet {
  int row;
  int col;
  double value;
};

/// Builds a CSR matrix; duplicate coordinates are summed.
CsrMatrix csr_from_triplets(int n, std::vector<Triplet> entries);

/// Matrix Market coordinate reader. Accepts `real` and `integer` fields with
/// `symmetric` or `general` symmetry; symmetric storage is expanded to the full
/// pattern and `symmetric` is set whenever the result equals its transpose.
CsrMatrix read_matrix_market(std::istream& in);
CsrMatrix load_matrix_market(const std::filesystem::path& path);
void write_matrix_market(std::ostream& out, const CsrMatrix& a);

}  // namespace kp
