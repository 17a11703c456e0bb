#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "kp/csr.hpp"
#include "kp/distributed.hpp"
#include "kp/error.hpp"
#include "kp/exchange.hpp"
#include "kp/harness.hpp"
#include "kp/kernels.hpp"
#include "kp/partition.hpp"
#include "kp/cluster.hpp"
#include "kp/preconditioner.hpp"

using namespace kp;

namespace {

std::vector<double> random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> serial_spmv(const CsrMatrix& a, const std::vector<double>& x) {
  std::vector<double> y(a.n, 0.0);
  for (int i = 0; i < a.n; ++i) {
    auto c = a.row_cols(i);
    auto v = a.row_vals(i);
    for (std::size_t k = 0; k < c.size(); ++k) y[i] += v[k] * x[c[k]];
  }
  return y;
}

}  // namespace

TEST_CASE("matrix market: symmetric storage is expanded") {
  std::istringstream in(
      "%%MatrixMarket matrix coordinate real symmetric\n"
      "% comment\n"
      "2 2 3\n1 1 2\n2 2 2\n2 1 1\n");
  const auto a = read_matrix_market(in);
  CHECK(a.n == 2);
  CHECK(a.nnz() == 4);
  CHECK(a.symmetric);
  CHECK(a.at(0, 1) == 1.0);
  CHECK(a.at(1, 0) == 1.0);
}

TEST_CASE("matrix market: integer field and general symmetry") {
  std::istringstream in("%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 3\n2 2 5\n");
  const auto a = read_matrix_market(in);
  CHECK(a.at(0, 0) == 3.0);
  CHECK(a.at(1, 1) == 5.0);
}

TEST_CASE("matrix market: malformed input is rejected") {
  const char* bad[] = {
      "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
      "%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1\n",
      "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n",
      "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1\n",
      "not a banner\n",
      "",
  };
  for (const char* text : bad) {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_matrix_market(in), ParseError);
  }
}

TEST_CASE("matrix market: write then read round-trips") {
  const auto a = poisson2d(4);
  std::ostringstream out;
  write_matrix_market(out, a);
  std::istringstream in(out.str());
  const auto b = read_matrix_market(in);
  CHECK(b.n == a.n);
  CHECK(b.row_ptr == a.row_ptr);
  CHECK(b.col_idx == a.col_idx);
  CHECK(b.values == a.values);
}

TEST_CASE("csr: triplets sum duplicates and validate") {
  auto a = csr_from_triplets(3, {{0, 0, 1}, {0, 0, 2}, {2, 1, 4}, {1, 2, 4}});
  CHECK(a.at(0, 0) == 3.0);
  CHECK(a.nnz() == 3);
  CHECK(a.is_symmetric());
  a.validate();
  a.col_idx[0] = 7;
  CHECK_THROWS_AS(a.validate(), InvalidArgument);
}

TEST_CASE("generators: poisson2d(3) has 9 rows and 33 stored entries") {
  const auto a = poisson2d(3);
  CHECK(a.n == 9);
  CHECK(a.nnz() == 33);
  CHECK(a.is_symmetric());
}

TEST_CASE("generators: poisson2d(16) times ones is zero exactly on interior rows") {
  const auto a = poisson2d(16);
  const auto y = serial_spmv(a, std::vector<double>(a.n, 1.0));
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const bool interior = i > 0 && i < 15 && j > 0 && j < 15;
      CHECK((y[i * 16 + j] == 0.0) == interior);
    }
}

TEST_CASE("generators: random_spd is symmetric and reproducible") {
  const auto a = random_spd(100, 6, 7);
  const auto b = random_spd(100, 6, 7);
  CHECK(a.is_symmetric());
  CHECK(a.values == b.values);
  CHECK(a.col_idx == b.col_idx);
  const auto c = random_spd(100, 6, 8);
  CHECK(c.col_idx != a.col_idx);
}

TEST_CASE("partition: splits put the larger blocks first") {
  auto ranges = [](int n, int nn) {
    BlockRowPartition p(n, nn);
    std::vector<std::pair<int, int>> out;
    for (int j = 0; j < nn; ++j) out.emplace_back(p.range(j).begin, p.range(j).end);
    return out;
  };
  CHECK(ranges(8, 4) == std::vector<std::pair<int, int>>{{0, 2}, {2, 4}, {4, 6}, {6, 8}});
  CHECK(ranges(7, 3) == std::vector<std::pair<int, int>>{{0, 3}, {3, 5}, {5, 7}});
  CHECK(ranges(5, 5) == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
  CHECK_THROWS_AS(partition(3, 4), InvalidArgument);
  CHECK_THROWS_AS(partition(3, 0), InvalidArgument);
}

TEST_CASE("partition: owner and rows_of agree with the ranges") {
  BlockRowPartition p(23, 5);
  for (int r = 0; r < 23; ++r) CHECK(p.range(p.owner(r)).contains(r));
  const std::vector<int> nodes{1, 3};
  const auto rows = p.rows_of(nodes);
  CHECK(rows.size() == static_cast<std::size_t>(p.size(1) + p.size(3)));
  CHECK(std::is_sorted(rows.begin(), rows.end()));
}

TEST_CASE("distributed spmv: identity returns its input") {
  const int n = 10;
  auto part = make_partition(n, 3);
  const auto dist = distribute(CsrMatrix::identity(n), part);
  ClusterSim cl(3);
  const auto v = DistributedVector::from_global(part, random_vector(n, 1));
  DistributedVector out(part, Role::other);
  spmv_exchange(cl, dist, v, out);
  CHECK(out.gather() == v.gather());
}

TEST_CASE("distributed spmv: tridiag times ones equals the row sums") {
  const auto a = tridiag(8);
  auto part = make_partition(8, 4);
  ClusterSim cl(4);
  DistributedVector ones(part, Role::other, 0, 1.0), out(part, Role::other);
  spmv_exchange(cl, distribute(a, part), ones, out);
  const std::vector<double> expect{1, 0, 0, 0, 0, 0, 0, 1};
  CHECK(out.gather() == expect);
}

TEST_CASE("distributed spmv: matches the sequential product on random input") {
  for (int nn : {1, 3, 7}) {
    const auto a = random_spd(150, 8, 11 + nn);
    auto part = make_partition(a.n, nn);
    ClusterSim cl(nn);
    const auto x = random_vector(a.n, 5);
    DistributedVector out(part, Role::other);
    spmv_exchange(cl, distribute(a, part), DistributedVector::from_global(part, x), out);
    const auto ref = serial_spmv(a, x);
    const auto got = out.gather();
    for (int i = 0; i < a.n; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-14 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST_CASE("distributed matrix: gather inverts distribution") {
  const auto a = random_spd(60, 5, 3);
  const auto g = distribute(a, make_partition(a.n, 4)).gather();
  CHECK(g.row_ptr == a.row_ptr);
  CHECK(g.col_idx == a.col_idx);
  CHECK(g.values == a.values);
}

TEST_CASE("vectors: dot products and axpy") {
  for (int nn : {1, 2, 5}) {
    auto part = make_partition(17, nn);
    std::vector<double> e1(17, 0.0);
    e1[0] = 1;
    const auto v = DistributedVector::from_global(part, e1);
    CHECK(dot(v, v) == 1.0);
    DistributedVector ones(part, Role::other, 0, 1.0);
    CHECK(dot(ones, ones) == 17.0);
  }
  auto part = make_partition(9, 2);
  const auto x = random_vector(9, 2), y = random_vector(9, 3);
  const auto z = axpy(2.0, DistributedVector::from_global(part, x), DistributedVector::from_global(part, y)).gather();
  for (int i = 0; i < 9; ++i) CHECK(z[i] == 2.0 * x[i] + y[i]);
}

TEST_CASE("vectors: discarded blocks cannot be read until restored") {
  auto part = make_partition(6, 3);
  DistributedVector v(part, Role::x, 0, 2.0);
  v.discard(1);
  CHECK(v.lost(1));
  CHECK(v.any_lost());
  CHECK_THROWS_AS(v.block(1), InternalError);
  CHECK_THROWS_AS(v.gather(), InternalError);
  const std::vector<double> vals{5, 6};
  v.restore(1, vals);
  CHECK(v.gather() == std::vector<double>{2, 2, 5, 6, 2, 2});
}

TEST_CASE("kernels: parallel versions agree with the serial reference") {
  const int n = 3 * static_cast<int>(kernels::kDotChunk) + 17;
  const auto x = random_vector(n, 1), v = random_vector(n, 2);
  auto y1 = random_vector(n, 3), y2 = y1;
  kernels::axpy(0.3, x, y1);
  kernels::serial::axpy(0.3, x, y2);
  CHECK(y1 == y2);
  kernels::xpay(x, -1.5, y1);
  kernels::serial::xpay(x, -1.5, y2);
  CHECK(y1 == y2);
  kernels::three_term(1.1, 0.4, -0.1, x, v, y1);
  kernels::serial::three_term(1.1, 0.4, -0.1, x, v, y2);
  CHECK(y1 == y2);
  CHECK(kernels::dot(x, v) == doctest::Approx(kernels::serial::dot(x, v)).epsilon(1e-12));
  // Fixed chunking: repeated calls are bitwise equal.
  CHECK(kernels::dot(x, v) == kernels::dot(x, v));

  const auto a = random_spd(500, 9, 4);
  const auto dist = distribute(a, make_partition(a.n, 1));
  const auto in = random_vector(a.n, 9);
  std::vector<double> o1(a.n), o2(a.n);
  kernels::spmv(dist.local(0).view(), in, o1);
  kernels::serial::spmv(dist.local(0).view(), in, o2);
  CHECK(o1 == o2);
}

TEST_CASE("preconditioners: identity, jacobi and block-jacobi") {
  ClusterSim cl(2);
  SUBCASE("identity") {
    const auto a = tridiag(6);
    auto part = make_partition(6, 2);
    auto p = make_preconditioner(PrecondKind::identity, a, part);
    const auto v = DistributedVector::from_global(part, random_vector(6, 1));
    DistributedVector out(part, Role::u);
    p->apply(cl, v, out);
    CHECK(out.gather() == v.gather());
  }
  SUBCASE("jacobi on diag(2, 4)") {
    const std::vector<double> d{2, 4};
    const auto a = CsrMatrix::diagonal(d);
    auto part = make_partition(2, 2);
    auto p = make_preconditioner(PrecondKind::jacobi, a, part);
    DistributedVector ones(part, Role::r, 0, 1.0), out(part, Role::u);
    p->apply(cl, ones, out);
    CHECK(out.gather() == std::vector<double>{0.5, 0.25});
  }
  SUBCASE("block-jacobi equals a dense solve per block") {
    const auto a = tridiag(8);
    auto part = make_partition(8, 2);
    auto p = make_preconditioner(PrecondKind::block_jacobi, a, part);
    const auto v = random_vector(8, 4);
    DistributedVector out(part, Role::u);
    p->apply(cl, DistributedVector::from_global(part, v), out);
    const auto got = out.gather();
    for (int j = 0; j < 2; ++j) {
      Eigen::MatrixXd blk(4, 4);
      Eigen::VectorXd rhs(4);
      for (int i = 0; i < 4; ++i) {
        rhs(i) = v[4 * j + i];
        for (int k = 0; k < 4; ++k) blk(i, k) = a.at(4 * j + i, 4 * j + k);
      }
      const Eigen::VectorXd y = blk.fullPivLu().solve(rhs);
      for (int i = 0; i < 4; ++i) CHECK(got[4 * j + i] == doctest::Approx(y(i)).epsilon(1e-13));
    }
  }
}

TEST_CASE("preconditioners: v'Pv > 0 on random vectors") {
  const auto a = random_spd(80, 6, 21);
  auto part = make_partition(a.n, 4);
  ClusterSim cl(4);
  const auto pe = neumann1(a);
  for (auto kind : {PrecondKind::identity, PrecondKind::jacobi, PrecondKind::block_jacobi, PrecondKind::explicit_sparse}) {
    auto p = make_preconditioner(kind, a, part, &pe);
    for (int t = 0; t < 100; ++t) {
      const auto v = DistributedVector::from_global(part, random_vector(a.n, 1000 + t));
      DistributedVector out(part, Role::u);
      p->apply(cl, v, out);
      CHECK(dot(v, out) > 0);
    }
  }
}

TEST_CASE("preconditioners: row access agrees with the distributed apply") {
  const auto a = poisson2d(6);
  auto part = make_partition(a.n, 3);
  ClusterSim cl(3);
  const auto pe = neumann1(a);
  const auto y = random_vector(a.n, 8);
  const std::vector<int> nodes{1};
  const auto rows = part->rows_of(nodes);
  for (auto kind : {PrecondKind::jacobi, PrecondKind::block_jacobi, PrecondKind::explicit_sparse}) {
    auto p = make_preconditioner(kind, a, part, &pe);
    DistributedVector out(part, Role::u);
    p->apply(cl, DistributedVector::from_global(part, y), out);
    const auto full = out.gather();
    Eigen::MatrixXd yg(a.n, 1);
    for (int i = 0; i < a.n; ++i) yg(i, 0) = y[i];
    const auto sub = p->apply_rows(rows, yg);
    for (std::size_t i = 0; i < rows.size(); ++i)
      CHECK(sub(static_cast<Eigen::Index>(i), 0) == doctest::Approx(full[rows[i]]).epsilon(1e-13));
  }
}

TEST_CASE("preconditioners: unknown names are rejected") {
  CHECK_THROWS_AS(parse_precond_kind("ilu"), InvalidArgument);
  CHECK(parse_precond_kind("bjacobi") == PrecondKind::block_jacobi);
}
