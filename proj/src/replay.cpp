#include "resetopt/replay.hpp"

#include <stdexcept>

namespace resetopt {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay buffer index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Transition> sample_batch(const ReplayBuffer& buffer, std::size_t batch_size, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("cannot sample from an empty replay buffer");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<Transition> batch;
  batch.reserve(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) batch.push_back(buffer.at(pick(rng)));
  return batch;
}

}  // namespace resetopt
