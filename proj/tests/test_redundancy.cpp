#include <doctest.h>

#include <algorithm>

#include "kp/error.hpp"
#include "kp/harness.hpp"
#include "kp/redundancy.hpp"
#include "support.hpp"

using namespace kp;
using kp::testing::first_uncovered;
using kp::testing::protected_exchange;

namespace {

using Ints = std::vector<int>;

Ints as_vec(std::span<const int> s) { return {s.begin(), s.end()}; }

SendSets sets_for(const CsrMatrix& a, int nn) { return compute_send_sets(distribute(a, make_partition(a.n, nn))); }

}  // namespace

TEST_CASE("send sets: diagonal matrix has no coupling") {
  const std::vector<double> d(12, 3.0);
  const auto s = sets_for(CsrMatrix::diagonal(d), 4);
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) CHECK(s.S(j, k).empty());
    for (int r = s.part->range(j).begin; r < s.part->range(j).end; ++r) CHECK(s.m(j, r) == 0);
  }
}

TEST_CASE("send sets: dense matrix sends every block everywhere") {
  std::vector<double> full(64, 1.0);
  for (int i = 0; i < 8; ++i) full[i * 8 + i] = 10;
  const auto s = sets_for(CsrMatrix::dense(8, full), 4);
  for (int j = 0; j < 4; ++j) {
    const auto r = s.part->range(j);
    for (int k = 0; k < 4; ++k) {
      if (k == j) continue;
      CHECK(as_vec(s.S(j, k)) == Ints{r.begin, r.begin + 1});
    }
    for (int e = r.begin; e < r.end; ++e) CHECK(s.m(j, e) == 3);
  }
}

TEST_CASE("send sets: tridiagonal n=12 over 4 nodes") {
  const auto s = sets_for(tridiag(12), 4);
  CHECK(as_vec(s.S(1, 0)) == Ints{3});
  CHECK(as_vec(s.S(1, 2)) == Ints{5});
  CHECK(s.S(1, 3).empty());
  CHECK(s.m(1, 3) == 1);
  CHECK(s.m(1, 4) == 0);
  CHECK(s.m(1, 5) == 1);
}

TEST_CASE("backup targets alternate next and previous ranks") {
  CHECK(backup_target(0, 1, 4) == 1);
  CHECK(backup_target(0, 2, 4) == 3);
  CHECK(backup_target(3, 3, 4) == 1);
  CHECK(backup_target(3, 1, 4) == 0);
  CHECK_THROWS_AS(backup_target(0, 4, 4), InvalidArgument);
  CHECK_THROWS_AS(backup_target(0, 0, 4), InvalidArgument);
  // The first nn-1 targets of a rank are its nn-1 distinct peers.
  for (int nn : {2, 5, 8})
    for (int j = 0; j < nn; ++j) {
      Ints seen;
      for (int k = 1; k < nn; ++k) seen.push_back(backup_target(j, k, nn));
      std::sort(seen.begin(), seen.end());
      CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
      CHECK(std::find(seen.begin(), seen.end(), j) == seen.end());
    }
}

TEST_CASE("redundant sets: tridiagonal n=12, nn=4, one copy") {
  const auto plan = compute_redundant_sets(sets_for(tridiag(12), 4), 1);
  CHECK(plan.target(1, 1) == 2);
  CHECK(as_vec(plan.R(1, 1)) == Ints{4});
  CHECK(as_vec(plan.extra_to(1, 2)) == Ints{4});
  CHECK(plan.extra_to(1, 0).empty());
}

TEST_CASE("redundant sets: tridiagonal n=8, nn=4 needs copies only at the ends") {
  // Interior ranks send both rows by the pattern. Rows 0 and 7 are read only
  // by their owners, so ranks 0 and 3 must ship them.
  const auto plan = compute_redundant_sets(sets_for(tridiag(8), 4), 1);
  CHECK(as_vec(plan.R(0, 1)) == Ints{0});
  CHECK(plan.R(1, 1).empty());
  CHECK(plan.R(2, 1).empty());
  CHECK(as_vec(plan.R(3, 1)) == Ints{7});
}

TEST_CASE("redundant sets: level must be in [1, nn)") {
  const auto s = sets_for(tridiag(8), 4);
  CHECK_THROWS_AS(compute_redundant_sets(s, 0), InvalidArgument);
  CHECK_THROWS_AS(compute_redundant_sets(s, 4), InvalidArgument);
}

TEST_CASE("coverage and per-element necessity on random patterns") {
  for (int idx = 0; idx < 6; ++idx) {
    const auto a = kp::testing::pattern(idx);
    for (int nn : {4, 8}) {
      const auto dist = distribute(a, make_partition(a.n, nn));
      const auto sets = compute_send_sets(dist);
      for (int n_redu : {1, 2, 3}) {
        CAPTURE(idx);
        CAPTURE(nn);
        CAPTURE(n_redu);
        const auto plan = compute_redundant_sets(sets, n_redu);
        {
          ClusterSim cl(nn);
          protected_exchange(cl, dist, plan, 17);
          CHECK(first_uncovered(cl, dist.partition(), n_redu).owner == -1);
        }
        // Drop the first and last element of every nonempty R_jk.
        for (int j = 0; j < nn; ++j)
          for (int k = 1; k <= n_redu; ++k) {
            const auto r = plan.R(j, k);
            if (r.empty()) continue;
            for (int s : {r.front(), r.back()}) {
              auto cut = plan;
              auto& v = cut.redundant[j][k - 1];
              v.erase(std::find(v.begin(), v.end(), s));
              ClusterSim cl(nn);
              protected_exchange(cl, dist, cut, 17);
              // R_jk protects the SpMV vector; the piggyback copy is independent.
              CHECK(kp::testing::holders(cl, j, s, 2) == n_redu - 1);
              CHECK(kp::testing::holders(cl, j, s, 1) == n_redu);
            }
          }
      }
    }
  }
}

TEST_CASE("threshold rule covers too and matches minimal for one copy") {
  for (int idx = 0; idx < 4; ++idx) {
    const auto a = kp::testing::pattern(idx);
    const auto dist = distribute(a, make_partition(a.n, 8));
    const auto sets = compute_send_sets(dist);
    const auto m1 = compute_redundant_sets(sets, 1, RedundancyRule::minimal);
    const auto t1 = compute_redundant_sets(sets, 1, RedundancyRule::threshold);
    CHECK(m1.redundant == t1.redundant);
    for (int n_redu : {2, 3}) {
      const auto plan = compute_redundant_sets(sets, n_redu, RedundancyRule::threshold);
      ClusterSim cl(8);
      protected_exchange(cl, dist, plan, 3);
      CHECK(first_uncovered(cl, dist.partition(), n_redu).owner == -1);
    }
  }
}

TEST_CASE("piggyback locality: redundant copies go only to nearby backup targets") {
  const auto a = kp::testing::pattern(9);
  for (int n_redu : {1, 2, 3}) {
    const int nn = 8;
    const auto plan = compute_redundant_sets(sets_for(a, nn), n_redu);
    for (int j = 0; j < nn; ++j)
      for (int t = 0; t < nn; ++t) {
        if (plan.extra_to(j, t).empty()) continue;
        const int d = std::min((t - j + nn) % nn, (j - t + nn) % nn);
        CHECK(d <= (n_redu + 1) / 2);
        const auto& tj = plan.targets[j];
        CHECK(std::find(tj.begin(), tj.end(), t) != tj.end());
      }
  }
}

TEST_CASE("piggyback block lands on exactly the first n_redu backup targets") {
  const auto a = kp::testing::pattern(5);
  const int nn = 8;
  const auto dist = distribute(a, make_partition(a.n, nn));
  for (int n_redu : {1, 2, 3}) {
    const auto plan = compute_redundant_sets(compute_send_sets(dist), n_redu);
    ClusterSim cl(nn);
    protected_exchange(cl, dist, plan, 11);
    for (int j = 0; j < nn; ++j) {
      const auto r = dist.partition().range(j);
      for (int k = 0; k < nn; ++k) {
        if (k == j) continue;
        const auto& tj = plan.targets[j];
        const bool target = std::find(tj.begin(), tj.end(), k) != tj.end();
        CHECK(cl.backups(k).entries(j, 1).size() == (target ? static_cast<std::size_t>(r.size()) : 0u));
      }
    }
    CHECK(cl.counters().redundant_by_sender.size() == static_cast<std::size_t>(nn));
  }
}

TEST_CASE("retrieval reassembles lost blocks at both stamps") {
  const auto a = poisson2d(8);
  for (auto [nn, n_redu, victims] : {std::tuple{4, 1, Ints{0}}, std::tuple{4, 1, Ints{3}}, std::tuple{8, 2, Ints{2, 3}},
                                     std::tuple{8, 2, Ints{0, 7}}}) {
    CAPTURE(nn);
    CAPTURE(n_redu);
    const auto dist = distribute(a, make_partition(a.n, nn));
    const auto plan = compute_redundant_sets(compute_send_sets(dist), n_redu);
    ClusterSim cl(nn);
    const auto part = dist.partition_ptr();
    const auto v2 = kp::testing::random_vector(a.n, 17), v1 = kp::testing::random_vector(a.n, 18);
    protected_exchange(cl, dist, plan, 17);
    cl.inject_failure(victims);
    for (int f : victims) cl.spawn_replacement(f);
    const Ints stamps{1, 2};
    const auto got = retrieve_backups(cl, victims.front(), victims, stamps, dist.partition(), n_redu);
    for (int f : victims)
      for (int stamp : stamps) {
        const auto& blk = got.at({f, stamp});
        const auto& ref = stamp == 2 ? v2 : v1;
        const auto r = part->range(f);
        for (int i = 0; i < r.size(); ++i) CHECK(blk[i] == ref[r.begin + i]);
      }
  }
}

TEST_CASE("retrieval with more failures than copies is unrecoverable") {
  const auto a = tridiag(16);
  const auto dist = distribute(a, make_partition(a.n, 4));
  const auto plan = compute_redundant_sets(compute_send_sets(dist), 1);
  ClusterSim cl(4);
  protected_exchange(cl, dist, plan, 5);
  const Ints victims{0, 1};
  cl.inject_failure(victims);
  for (int f : victims) cl.spawn_replacement(f);
  const Ints stamps{2};
  CHECK_THROWS_AS(retrieve_backups(cl, 0, victims, stamps, dist.partition(), 1), UnrecoverableFailure);
}
