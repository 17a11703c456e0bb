#include "kp/csr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "kp/error.hpp"

namespace kp {

double CsrMatrix::at(int i, int j) const {
  auto cols = row_cols(i);
  auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return 0.0;
  return values[row_ptr[i] + (it - cols.begin())];
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(n, 0.0);
  for (int i = 0; i < n; ++i) d[i] = at(i, i);
  return d;
}

void CsrMatrix::validate() const {
  if (n < 0) throw InvalidArgument("negative dimension");
  if (row_ptr.size() != static_cast<std::size_t>(n) + 1) throw InvalidArgument("row_ptr must have n+1 entries");
  if (row_ptr.front() != 0) throw InvalidArgument("row_ptr must start at 0");
  if (col_idx.size() != values.size()) throw InvalidArgument("col_idx/values length mismatch");
  if (row_ptr.back() != nnz()) throw InvalidArgument("row_ptr end does not match nnz");
  for (int i = 0; i < n; ++i) {
    if (row_ptr[i + 1] < row_ptr[i]) throw InvalidArgument("row_ptr not monotone at row " + std::to_string(i));
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      if (col_idx[k] < 0 || col_idx[k] >= n) throw InvalidArgument("column index out of range in row " + std::to_string(i));
      if (k > row_ptr[i] && col_idx[k] <= col_idx[k - 1]) throw InvalidArgument("columns not sorted/unique in row " + std::to_string(i));
      if (!std::isfinite(values[k])) throw InvalidArgument("non-finite value in row " + std::to_string(i));
    }
  }
}

bool CsrMatrix::is_symmetric() const {
  for (int i = 0; i < n; ++i) {
    auto cols = row_cols(i);
    auto vals = row_vals(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const int j = cols[k];
      auto tcols = row_cols(j);
      auto it = std::lower_bound(tcols.begin(), tcols.end(), i);
      if (it == tcols.end() || *it != i) return false;
      if (values[row_ptr[j] + (it - tcols.begin())] != vals[k]) return false;
    }
  }
  return true;
}

CsrMatrix CsrMatrix::identity(int n) {
  std::vector<double> ones(n, 1.0);
  return diagonal(ones);
}

CsrMatrix CsrMatrix::diagonal(std::span<const double> d) {
  CsrMatrix a;
  a.n = static_cast<int>(d.size());
  a.row_ptr.resize(a.n + 1);
  for (int i = 0; i <= a.n; ++i) a.row_ptr[i] = i;
  a.col_idx.resize(a.n);
  for (int i = 0; i < a.n; ++i) a.col_idx[i] = i;
  a.values.assign(d.begin(), d.end());
  a.symmetric = true;
  return a;
}

CsrMatrix CsrMatrix::dense(int n, std::span<const double> row_major) {
  if (row_major.size() != static_cast<std::size_t>(n) * n) throw InvalidArgument("dense: size mismatch");
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (row_major[i * n + j] != 0.0) t.push_back({i, j, row_major[i * n + j]});
  return csr_from_triplets(n, std::move(t));
}

CsrMatrix csr_from_triplets(int n, std::vector<Triplet> entries) {
  for (const auto& t : entries)
    if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n)
      throw InvalidArgument("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) + ") out of range");
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix a;
  a.n = n;
  a.row_ptr.assign(n + 1, 0);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
      a.values.back() += entries[k].value;
      continue;
    }
    a.col_idx.push_back(entries[k].col);
    a.values.push_back(entries[k].value);
    a.row_ptr[entries[k].row + 1]++;
  }
  for (int i = 0; i < n; ++i) a.row_ptr[i + 1] += a.row_ptr[i];
  a.symmetric = a.is_symmetric();
  return a;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

CsrMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty input", 1);
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", lineno);
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix") throw ParseError("unsupported object '" + object + "'", lineno);
  if (format != "coordinate") throw ParseError("only coordinate format is supported", lineno);
  if (field != "real" && field != "integer") throw ParseError("non-real field '" + field + "'", lineno);
  if (symmetry != "symmetric" && symmetry != "general")
    throw ParseError("unsupported symmetry '" + symmetry + "'", lineno);
  const bool sym_storage = symmetry == "symmetric";

  long long rows = -1, cols = -1, count = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream size_line(line);
    if (!(size_line >> rows >> cols >> count)) throw ParseError("malformed size line", lineno);
    break;
  }
  if (rows < 0) throw ParseError("missing size line", lineno);
  if (rows != cols) throw ParseError("matrix is not square (" + std::to_string(rows) + "x" + std::to_string(cols) + ")", lineno);
  if (rows > std::numeric_limits<int>::max()) throw ParseError("dimension too large", lineno);

  const int n = static_cast<int>(rows);
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(sym_storage ? 2 * count : count));
  long long seen = 0;
  while (seen < count && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    long long i, j;
    double v;
    if (!(entry >> i >> j >> v)) throw ParseError("malformed entry", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError("index (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                           std::to_string(rows) + "x" + std::to_string(cols),
                       lineno);
    if (!std::isfinite(v)) throw ParseError("non-finite value", lineno);
    if (sym_storage && j > i) throw ParseError("symmetric storage requires lower-triangle entries", lineno);
    entries.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1), v});
    if (sym_storage && i != j) entries.push_back({static_cast<int>(j - 1), static_cast<int>(i - 1), v});
    ++seen;
  }
  if (seen < count) throw ParseError("expected " + std::to_string(count) + " entries, found " + std::to_string(seen), lineno);
  return csr_from_triplets(n, std::move(entries));
}

CsrMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open matrix file " + path.string());
  return read_matrix_market(in);
}

void write_matrix_market(std::ostream& out, const CsrMatrix& a) {
  const bool sym = a.symmetric;
  std::int64_t count = 0;
  for (int i = 0; i < a.n; ++i)
    for (int c : a.row_cols(i))
      if (!sym || c <= i) ++count;
  out << "%%MatrixMarket matrix coordinate real " << (sym ? "symmetric" : "general") << "\n";
  out << a.n << " " << a.n << " " << count << "\n";
  out << std::setprecision(17);
  for (int i = 0; i < a.n; ++i) {
    auto cols = a.row_cols(i);
    auto vals = a.row_vals(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (!sym || cols[k] <= i) out << i + 1 << " " << cols[k] + 1 << " " << vals[k] << "\n";
  }
}

}  // namespace kp
