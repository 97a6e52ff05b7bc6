#pragma once

#include <cstddef>
#include <vector>

#include "resetopt/mdp.hpp"
#include "resetopt/transition.hpp"

namespace resetopt {

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return items_.empty(); }

  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest item once the ring is full
  std::vector<Transition> items_;
};

// Uniform sampling with replacement.
std::vector<Transition> sample_batch(const ReplayBuffer& buffer, std::size_t batch_size, Rng& rng);

}  // namespace resetopt
