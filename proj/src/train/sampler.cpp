#include "l4sllm/train/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace l4sllm::train {

std::vector<std::size_t> valid_end_positions(std::size_t length, std::size_t w, bool pad) {
  if (w == 0) throw std::invalid_argument("window length must be >= 1");
  std::vector<std::size_t> out;
  const std::size_t first = pad ? 0 : w - 1;
  for (std::size_t e = first; e < length; ++e) out.push_back(e);
  return out;
}

WindowSampler::WindowSampler(const pool::ExperiencePool& pool, std::vector<std::size_t> trajectories, std::size_t w,
                             bool pad)
    : trajectories_(std::move(trajectories)) {
  if (!pool.normalized) throw std::invalid_argument("sampler: pool states must be normalized first");
  if (trajectories_.empty()) {
    trajectories_.resize(pool.trajectories.size());
    std::iota(trajectories_.begin(), trajectories_.end(), 0);
  }
  const std::size_t first = pad ? 0 : w - 1;
  for (std::size_t id : trajectories_) {
    const std::size_t len = pool.trajectories.at(id).steps.size();
    const std::size_t n = len > first ? len - first : 0;
    first_end_.push_back(first);
    total_ += n;
    cumulative_.push_back(total_);
  }
  if (total_ == 0) throw std::invalid_argument("sampler: pool holds no window of the requested length");
}

WindowRef WindowSampler::at(std::size_t flat) const {
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), flat);
  const auto k = static_cast<std::size_t>(it - cumulative_.begin());
  const std::size_t before = k == 0 ? 0 : cumulative_[k - 1];
  return {trajectories_[k], first_end_[k] + (flat - before)};
}

WindowRef WindowSampler::draw(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, total_ - 1);
  return at(pick(rng));
}

model::WindowBatch make_batch(const pool::ExperiencePool& pool, std::span<const WindowRef> refs, std::size_t w) {
  model::WindowBatch b = model::WindowBatch::empty(refs.size(), w);
  const double rscale = pool.feature_stats.return_scale;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& steps = pool.trajectories.at(refs[i].trajectory).steps;
    for (std::size_t s = 0; s < w; ++s) {
      const std::size_t slot = i * w + s;
      const auto idx = static_cast<long>(refs[i].end) - static_cast<long>(w - 1 - s);
      if (idx < 0) {
        b.valid[slot] = 0.0;
        continue;
      }
      const pool::Step& st = steps.at(static_cast<std::size_t>(idx));
      b.returns[slot] = st.return_to_go / rscale;
      std::copy(st.state.begin(), st.state.end(), b.states.begin() + static_cast<long>(slot * pool::kStateDim));
      b.actions[slot] = st.action;
      b.time_visible[slot] = st.masked ? 0.0 : 1.0;
    }
  }
  return b;
}

model::WindowBatch sample_windows(const pool::ExperiencePool& pool, std::size_t w, std::size_t batch_size,
                                  std::mt19937_64& rng, bool pad, std::vector<WindowRef>* refs_out) {
  if (batch_size == 0) throw std::invalid_argument("sample_windows: batch size must be >= 1");
  if (pool.step_count() == 0) throw std::invalid_argument("sample_windows: pool has no steps");
  const WindowSampler sampler(pool, {}, w, pad);
  std::vector<WindowRef> refs(batch_size);
  for (auto& r : refs) r = sampler.draw(rng);
  auto batch = make_batch(pool, refs, w);
  if (refs_out != nullptr) *refs_out = std::move(refs);
  return batch;
}

}  // namespace l4sllm::train
