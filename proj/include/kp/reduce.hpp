#pragma once

#include <span>
#include <vector>

namespace kp {

/// Element-wise sum of per-rank contributions over a fixed binary tree:
/// ranks are paired (0,1), (2,3), ... level by level. The order depends only
/// on the number of ranks, which makes every reduction bitwise reproducible.
inline std::vector<double> tree_sum(std::vector<std::vector<double>> level) {
  if (level.empty()) return {};
  while (level.size() > 1) {
    std::vector<std::vector<double>> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      if (i + 1 == level.size()) {
        next.push_back(std::move(level[i]));
        continue;
      }
      auto sum = std::move(level[i]);
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += level[i + 1][k];
      next.push_back(std::move(sum));
    }
    level = std::move(next);
  }
  return std::move(level.front());
}

inline double tree_sum_scalar(std::span<const double> values) {
  std::vector<std::vector<double>> level;
  level.reserve(values.size());
  for (double v : values) level.push_back({v});
  auto out = tree_sum(std::move(level));
  return out.empty() ? 0.0 : out.front();
}

}  // namespace kp
