#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "l4sllm/model/policy.hpp"
#include "l4sllm/pool/pool.hpp"

namespace l4sllm::train {

struct WindowRef {
  std::size_t trajectory;
  std::size_t end;  // index of the last step in the window
};

// 0-based end positions a window may finish on. Without padding the first
// is w - 1; with padding every step qualifies.
std::vector<std::size_t> valid_end_positions(std::size_t length, std::size_t w, bool pad);

// Uniform sampler over (trajectory, end) pairs of a normalized pool.
class WindowSampler {
 public:
  WindowSampler(const pool::ExperiencePool& pool, std::vector<std::size_t> trajectories, std::size_t w, bool pad);
  std::size_t size() const { return total_; }
  WindowRef draw(std::mt19937_64& rng) const;
  WindowRef at(std::size_t flat) const;

 private:
  std::vector<std::size_t> trajectories_;
  std::vector<std::size_t> first_end_;
  std::vector<std::size_t> cumulative_;
  std::size_t total_ = 0;
};

// Assembles windows into a model batch. Steps before a trajectory's start
// become padding.
model::WindowBatch make_batch(const pool::ExperiencePool& pool, std::span<const WindowRef> refs, std::size_t w);

// Draws batch_size windows; throws when the pool has no usable steps.
model::WindowBatch sample_windows(const pool::ExperiencePool& pool, std::size_t w, std::size_t batch_size,
                                  std::mt19937_64& rng, bool pad = true,
                                  std::vector<WindowRef>* refs_out = nullptr);

}  // namespace l4sllm::train
