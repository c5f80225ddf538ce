#pragma once

#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>

namespace difflik {

/// Map guarded by a reader/writer lock. Values are copied out; entries are
/// never erased, so a computed value is stable once inserted.
template <class K, class V, class Hash = std::hash<K>>
class ConcurrentMemo {
 public:
  std::optional<V> find(const K& key) const {
    std::shared_lock lock(mutex_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  /// Inserts unless present; returns the stored value.
  V insert(const K& key, V value) {
    std::unique_lock lock(mutex_);
    return map_.try_emplace(key, std::move(value)).first->second;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return map_.size();
  }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<K, V, Hash> map_;
};

}  // namespace difflik
