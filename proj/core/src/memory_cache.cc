#include "em3/memory_bank.h"

namespace em3 {

MemoryCache::MemoryCache(std::size_t capacity) : capacity_(capacity) {}

MemoryCache::Entry MemoryCache::get(std::uint64_t id) {
  std::lock_guard lock(mu_);
  auto it = map_.find(id);
  if (it == map_.end()) {
    ++misses_;
    return nullptr;
  }
  ++hits_;
  order_.splice(order_.begin(), order_, it->second.pos);
  return it->second.memory;
}

void MemoryCache::put(std::uint64_t id, Entry memory) {
  std::lock_guard lock(mu_);
  if (capacity_ == 0) return;
  auto it = map_.find(id);
  if (it != map_.end()) {
    it->second.memory = std::move(memory);
    order_.splice(order_.begin(), order_, it->second.pos);
    return;
  }
  if (map_.size() >= capacity_) {
    map_.erase(order_.back());
    order_.pop_back();
  }
  order_.push_front(id);
  map_.emplace(id, Slot{std::move(memory), order_.begin()});
}

bool MemoryCache::contains(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  return map_.count(id) > 0;
}

void MemoryCache::clear() {
  std::lock_guard lock(mu_);
  map_.clear();
  order_.clear();
}

std::size_t MemoryCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

std::uint64_t MemoryCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::uint64_t MemoryCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::vector<std::uint64_t> MemoryCache::recency() const {
  std::lock_guard lock(mu_);
  return {order_.begin(), order_.end()};
}

}  // namespace em3
