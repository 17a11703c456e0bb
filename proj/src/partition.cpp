#include "kp/partition.hpp"

#include <algorithm>
#include <string>

#include "kp/error.hpp"

namespace kp {

BlockRowPartition::BlockRowPartition(int n, int nodes) {
  if (nodes < 1) throw InvalidArgument("partition needs at least one node");
  if (nodes > n) throw InvalidArgument("partition: " + std::to_string(nodes) + " nodes exceed " + std::to_string(n) + " rows");
  offsets_.assign(nodes + 1, 0);
  const int base = n / nodes;
  const int extra = n % nodes;
  for (int j = 0; j < nodes; ++j) offsets_[j + 1] = offsets_[j] + base + (j < extra ? 1 : 0);
}

int BlockRowPartition::max_block() const noexcept {
  int m = 0;
  for (int j = 0; j < nodes(); ++j) m = std::max(m, offsets_[j + 1] - offsets_[j]);
  return m;
}

int BlockRowPartition::owner(int row) const {
  if (row < 0 || row >= rows()) throw InvalidArgument("row " + std::to_string(row) + " outside partition");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), row);
  return static_cast<int>(it - offsets_.begin()) - 1;
}

std::vector<int> BlockRowPartition::rows_of(std::span<const int> nodes) const {
  std::vector<int> sorted(nodes.begin(), nodes.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> out;
  for (int j : sorted) {
    auto r = range(j);
    for (int i = r.begin; i < r.end; ++i) out.push_back(i);
  }
  return out;
}

BlockRowPartition partition(int n, int nodes) { return BlockRowPartition(n, nodes); }

}  // namespace kp
