#pragma once

#include <span>
#include <vector>

namespace kp {

/// Half-open row interval owned by one node.
struct RowRange {
  int begin = 0;
  int end = 0;
  int size() const noexcept { return end - begin; }
  bool contains(int row) const noexcept { return row >= begin && row < end; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Contiguous block-row split of n rows over nn nodes. The first n % nn nodes
/// own ceil(n/nn) rows, the rest floor(n/nn).
class BlockRowPartition {
 public:
  BlockRowPartition() = default;
  BlockRowPartition(int n, int nodes);

  int rows() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  int nodes() const noexcept { return static_cast<int>(offsets_.size()) - 1; }
  RowRange range(int node) const { return {offsets_.at(node), offsets_.at(node + 1)}; }
  int size(int node) const { return range(node).size(); }
  int max_block() const noexcept;
  int owner(int row) const;
  std::span<const int> offsets() const noexcept { return offsets_; }

  /// Sorted global row indices owned by the given nodes.
  std::vector<int> rows_of(std::span<const int> nodes) const;

  friend bool operator==(const BlockRowPartition&, const BlockRowPartition&) = default;

 private:
  std::vector<int> offsets_{0};
};

/// Free-function form of the constructor; rejects nodes < 1 or nodes > n.
BlockRowPartition partition(int n, int nodes);

}  // namespace kp
