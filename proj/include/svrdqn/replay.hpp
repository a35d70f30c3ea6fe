#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "svrdqn/rng.hpp"

namespace svrdqn {

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

// Fixed-capacity ring of transitions; oldest entry is evicted first and
// sampling is uniform with replacement over the stored entries.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    storage_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }
  std::size_t cursor() const { return cursor_; }

  void push(Transition tr) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(tr));
    } else {
      storage_[cursor_] = std::move(tr);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  // k-th oldest stored transition, k = 0 is the oldest.
  const Transition& oldest(std::size_t k) const {
    if (k >= storage_.size()) throw std::out_of_range("ReplayBuffer: index out of range");
    if (storage_.size() < capacity_) return storage_[k];
    return storage_[(cursor_ + k) % capacity_];
  }

  // Raw slot access (stable identity between pushes); used by the optimizers,
  // which address samples by slot id.
  const Transition& slot(std::size_t i) const { return storage_[i]; }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (storage_.empty()) throw std::runtime_error("ReplayBuffer: sample from empty buffer");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
      out.push_back(storage_[rng.next_below(storage_.size())]);
    return out;
  }

  // restore support for checkpointing
  void restore(std::vector<Transition> storage, std::size_t cursor) {
    if (storage.size() > capacity_) throw std::invalid_argument("ReplayBuffer: restore overflow");
    storage_ = std::move(storage);
    cursor_ = cursor % capacity_;
  }
  const std::vector<Transition>& raw() const { return storage_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;
};

}  // namespace svrdqn
