#include "kp/backup_store.hpp"

#include <algorithm>

#include "kp/error.hpp"

namespace kp {

void BackupStore::begin_exchange(std::span<const int> stamps) {
  for (int s : stamps) data_[s].clear();
  while (data_.size() > kWindow) data_.erase(data_.begin());
}

void BackupStore::store(int owner, int stamp, std::span<const int> indices, std::span<const double> values) {
  if (indices.size() != values.size()) throw InvalidArgument("backup store: index/value length mismatch");
  auto it = data_.find(stamp);
  if (it == data_.end()) throw InternalError("backup store: stamp " + std::to_string(stamp) + " not opened");
  auto& slot = it->second[owner];
  for (std::size_t k = 0; k < indices.size(); ++k) slot[indices[k]] = values[k];
}

std::optional<double> BackupStore::find(int owner, int index, int stamp) const {
  auto s = data_.find(stamp);
  if (s == data_.end()) return std::nullopt;
  auto o = s->second.find(owner);
  if (o == s->second.end()) return std::nullopt;
  auto e = o->second.find(index);
  if (e == o->second.end()) return std::nullopt;
  return e->second;
}

std::vector<std::pair<int, double>> BackupStore::entries(int owner, int stamp) const {
  std::vector<std::pair<int, double>> out;
  auto s = data_.find(stamp);
  if (s == data_.end()) return out;
  auto o = s->second.find(owner);
  if (o == s->second.end()) return out;
  out.assign(o->second.begin(), o->second.end());
  return out;
}

std::vector<int> BackupStore::stamps() const {
  std::vector<int> out;
  for (const auto& [s, _] : data_) out.push_back(s);
  return out;
}

std::size_t BackupStore::element_count() const {
  std::size_t count = 0;
  for (const auto& [s, owners] : data_)
    for (const auto& [o, entries] : owners) count += entries.size();
  return count;
}

void ScalarLedger::put(Scalar id, int stamp, double value) {
  data_[{stamp, static_cast<int>(id)}] = value;
  if (stamp > newest_) {
    newest_ = stamp;
    while (!data_.empty() && data_.begin()->first.first < newest_ - kKeep) data_.erase(data_.begin());
  }
}

std::optional<double> ScalarLedger::get(Scalar id, int stamp) const {
  auto it = data_.find({stamp, static_cast<int>(id)});
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

}  // namespace kp
