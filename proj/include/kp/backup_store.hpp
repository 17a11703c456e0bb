#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace kp {

/// Copies of other nodes' SpMV-input elements held by one node, keyed by
/// (stamp, owner rank, global index). Only the two most recent stamps are
/// retained; older stamps are evicted when a newer exchange begins.
class BackupStore {
 public:
  static constexpr std::size_t kWindow = 2;

  /// Opens the given stamps for writing: re-stored stamps are cleared and
  /// everything older than the kWindow most recent stamps is evicted.
  void begin_exchange(std::span<const int> stamps);
  void store(int owner, int stamp, std::span<const int> indices, std::span<const double> values);

  std::optional<double> find(int owner, int index, int stamp) const;
  /// Sorted (index, value) pairs held for `owner` at `stamp`.
  std::vector<std::pair<int, double>> entries(int owner, int stamp) const;
  std::vector<int> stamps() const;
  std::size_t element_count() const;
  void clear() { data_.clear(); }

 private:
  std::map<int, std::map<int, std::map<int, double>>> data_;  // stamp -> owner -> index -> value
};

/// Identifiers of the reduction results every node keeps a copy of.
enum class Scalar : std::uint8_t {
  alpha, beta, gamma, delta, zeta, eta, theta,
  lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, lambda7, lambda8,
  rnorm2, rnorm2_prev,
};

/// A node's own copies of reduction results; identical on all live nodes.
class ScalarLedger {
 public:
  static constexpr int kKeep = 6;  // stamps retained behind the newest

  void put(Scalar id, int stamp, double value);
  std::optional<double> get(Scalar id, int stamp) const;
  std::size_t size() const noexcept { return data_.size(); }
  void clear() { data_.clear(); newest_ = INT32_MIN; }

 private:
  std::map<std::pair<int, int>, double> data_;  // (stamp, id) -> value
  int newest_ = INT32_MIN;
};

}  // namespace kp
