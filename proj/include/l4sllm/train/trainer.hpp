#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "l4sllm/model/checkpoint.hpp"
#include "l4sllm/model/policy.hpp"
#include "l4sllm/pool/pool.hpp"
#include "l4sllm/train/sampler.hpp"

namespace l4sllm::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t accumulation_steps = 1;
  // Optimizer steps per epoch.
  std::size_t steps_per_epoch = 20;
  double lr = 0.05;
  double clip_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double gamma = 0.95;
  std::size_t window = 20;
  std::uint64_t seed = 1;
  double eval_split = 0.25;
  double target_return_percentile = 90.0;
  bool pad_windows = true;
  bool class_weights = false;
  // Stop once held-out accuracy reaches this value (0 disables).
  double target_accuracy = 0.0;
  // Held-out windows scored per epoch (evenly spaced; 0 scores them all).
  std::size_t eval_windows = 2000;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochRow {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double seconds = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  double final_eval_accuracy = 0.0;
  std::size_t best_epoch = 0;
  double target_return = 0.0;
  std::vector<std::size_t> train_trajectories;
  std::vector<std::size_t> eval_trajectories;

  std::string to_json() const;
};

// (1/N) sum 1[pred_i == true_i].
double accuracy(std::span<const int> preds, std::span<const int> truth);

// Disjoint trajectory-level split; throws if either side would be empty.
void split_trajectories(std::size_t count, double eval_split, std::uint64_t seed, std::vector<std::size_t>& train_ids,
                        std::vector<std::size_t>& eval_ids);

// Per-window mean over valid positions, then mean over the batch.
tensor::Tensor window_loss(const tensor::Tensor& logits, const model::WindowBatch& batch,
                           std::span<const double> class_weight = {});

// One training pass of cfg.steps_per_epoch optimizer steps over `sampler`.
class Trainer {
 public:
  Trainer(model::PolicyModel& model, const TrainConfig& cfg);
  EpochRow train_epoch(const pool::ExperiencePool& pool, const WindowSampler& sampler);
  // Last-position accuracy over evenly spaced windows of the given trajectories.
  double evaluate(const pool::ExperiencePool& pool, std::span<const std::size_t> trajectories);
  void set_class_weights(std::vector<double> w) { class_weight_ = std::move(w); }
  std::mt19937_64& rng() { return rng_; }

 private:
  model::PolicyModel& model_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  std::optional<tensor::Sgd> sgd_;
  std::optional<tensor::Adam> adam_;
  std::vector<double> class_weight_;
  std::size_t epoch_ = 0;
};

struct TrainResult {
  TrainReport report;
  model::CheckpointMeta meta;
};

// Splits by trajectory, fits normalization on the training side, trains,
// restores the best held-out epoch into `model`, and writes the checkpoint
// when a path is given.
TrainResult train(model::PolicyModel& model, const pool::ExperiencePool& pool, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "");

// The requested percentile (0-100) of returns over the given trajectories.
double return_percentile(const pool::ExperiencePool& pool, std::span<const std::size_t> trajectories, double pct);

}  // namespace l4sllm::train
