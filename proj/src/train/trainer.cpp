#include "l4sllm/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <set>
#include <numeric>
#include <spdlog/spdlog.h>

#include "l4sllm/pool/normalize.hpp"

namespace l4sllm::train {

using nlohmann::json;
using tensor::Tensor;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (accumulation_steps < 1) fail("accumulation_steps must be >= 1");
  if (steps_per_epoch < 1) fail("steps_per_epoch must be >= 1");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(eval_split > 0.0 && eval_split < 1.0)) fail("eval_split must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (window < 1) fail("window must be >= 1");
  if (!(target_return_percentile >= 0.0 && target_return_percentile <= 100.0)) fail("percentile must lie in [0, 100]");
  if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0)) fail("target_accuracy must lie in [0, 1]");
}

std::string TrainConfig::to_json() const {
  json j = {{"epochs", epochs},
            {"batch_size", batch_size},
            {"accumulation_steps", accumulation_steps},
            {"steps_per_epoch", steps_per_epoch},
            {"lr", lr},
            {"clip_norm", clip_norm},
            {"optimizer", optimizer == OptimizerKind::Sgd ? "sgd" : "adam"},
            {"gamma", gamma},
            {"window", window},
            {"seed", seed},
            {"eval_split", eval_split},
            {"target_return_percentile", target_return_percentile},
            {"pad_windows", pad_windows},
            {"class_weights", class_weights},
            {"target_accuracy", target_accuracy},
            {"eval_windows", eval_windows}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: invalid JSON: ") + e.what());
  }
  std::set<std::string> known;
  auto get = [&j, &known](const char* key, auto& field) {
    known.insert(key);
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("accumulation_steps", c.accumulation_steps);
    get("steps_per_epoch", c.steps_per_epoch);
    get("lr", c.lr);
    get("clip_norm", c.clip_norm);
    known.insert("optimizer");
    if (j.contains("optimizer")) {
      const auto name = j.at("optimizer").get<std::string>();
      if (name == "sgd") c.optimizer = OptimizerKind::Sgd;
      else if (name == "adam") c.optimizer = OptimizerKind::Adam;
      else throw std::invalid_argument("train config: unknown optimizer '" + name + "'");
    }
    get("gamma", c.gamma);
    get("window", c.window);
    get("seed", c.seed);
    get("eval_split", c.eval_split);
    get("target_return_percentile", c.target_return_percentile);
    get("pad_windows", c.pad_windows);
    get("class_weights", c.class_weights);
    get("target_accuracy", c.target_accuracy);
    get("eval_windows", c.eval_windows);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw std::invalid_argument("train config: unknown key '" + item.key() + "'");
  }
  c.validate();
  return c;
}

std::string TrainReport::to_json() const {
  json rows_j = json::array();
  for (const EpochRow& r : rows) {
    rows_j.push_back({{"epoch", r.epoch},
                      {"mean_loss", r.mean_loss},
                      {"mean_accuracy", r.mean_accuracy},
                      {"eval_accuracy", r.eval_accuracy},
                      {"seconds", r.seconds},
                      {"grad_norm_mean", r.grad_norm_mean},
                      {"grad_norm_max", r.grad_norm_max}});
  }
  json j = {{"rows", rows_j},
            {"final_eval_accuracy", final_eval_accuracy},
            {"best_epoch", best_epoch},
            {"target_return", target_return},
            {"train_trajectories", train_trajectories},
            {"eval_trajectories", eval_trajectories}};
  return j.dump(2);
}

double accuracy(std::span<const int> preds, std::span<const int> truth) {
  if (preds.size() != truth.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " labels");
  }
  if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

void split_trajectories(std::size_t count, double eval_split, std::uint64_t seed, std::vector<std::size_t>& train_ids,
                        std::vector<std::size_t>& eval_ids) {
  std::vector<std::size_t> ids(count);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_eval = static_cast<std::size_t>(std::llround(eval_split * static_cast<double>(count)));
  if (n_eval == 0 || n_eval >= count) {
    throw TrainError("train: splitting " + std::to_string(count) + " trajectories at " + std::to_string(eval_split) +
                     " leaves an empty train or eval split");
  }
  eval_ids.assign(ids.begin(), ids.begin() + static_cast<long>(n_eval));
  train_ids.assign(ids.begin() + static_cast<long>(n_eval), ids.end());
  std::sort(eval_ids.begin(), eval_ids.end());
  std::sort(train_ids.begin(), train_ids.end());
}

Tensor window_loss(const Tensor& logits, const model::WindowBatch& batch, std::span<const double> class_weight) {
  const std::size_t B = batch.batch;
  const std::size_t w = batch.window;
  std::vector<double> weights(B * w, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double n = 0.0;
    for (std::size_t t = 0; t < w; ++t) n += batch.valid[b * w + t];
    if (n == 0.0) continue;
    for (std::size_t t = 0; t < w; ++t) {
      const std::size_t i = b * w + t;
      double wt = batch.valid[i] / (n * static_cast<double>(B));
      if (!class_weight.empty() && wt != 0.0) wt *= class_weight[static_cast<std::size_t>(batch.actions[i])];
      weights[i] = wt;
    }
  }
  return tensor::weighted_cross_entropy(tensor::reshape(logits, {B * w, logits.dim(2)}), batch.actions, weights);
}

Trainer::Trainer(model::PolicyModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (cfg_.optimizer == OptimizerKind::Sgd) sgd_.emplace(cfg_.lr, cfg_.clip_norm);
  else adam_.emplace(cfg_.lr, cfg_.clip_norm);
}

EpochRow Trainer::train_epoch(const pool::ExperiencePool& pool, const WindowSampler& sampler) {
  ++epoch_;
  const auto t0 = std::chrono::steady_clock::now();
  const auto params = model_.trainable_parameters();
  EpochRow row;
  row.epoch = epoch_;
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  std::size_t hits = 0;
  std::size_t counted = 0;
  std::vector<WindowRef> refs(cfg_.batch_size);
  for (std::size_t step = 0; step < cfg_.steps_per_epoch; ++step) {
    try {
      for (std::size_t micro = 0; micro < cfg_.accumulation_steps; ++micro) {
        for (auto& r : refs) r = sampler.draw(rng_);
        const model::WindowBatch batch = make_batch(pool, refs, cfg_.window);
        const Tensor logits = model_.forward(batch);
        const Tensor loss = window_loss(logits, batch, class_weight_);
        tensor::backward(loss);
        loss_sum += loss.item();
        ++loss_n;
        const auto lg = logits.data();
        for (std::size_t i = 0; i < batch.valid.size(); ++i) {
          if (batch.valid[i] == 0.0) continue;
          hits += model::argmax_action(&lg[i * 3]) == batch.actions[i] ? 1 : 0;
          ++counted;
        }
      }
      const tensor::StepReport rep = sgd_ ? sgd_->step(params, cfg_.accumulation_steps)
                                          : adam_->step(params, cfg_.accumulation_steps);
      row.grad_norm_mean += rep.grad_norm;
      row.grad_norm_max = std::max(row.grad_norm_max, rep.grad_norm);
    } catch (const tensor::NumericFault& e) {
      tensor::zero_grads(params);
      throw TrainError("train: epoch " + std::to_string(epoch_) + " step " + std::to_string(step) + ": " + e.what());
    }
  }
  row.mean_loss = loss_sum / static_cast<double>(loss_n);
  row.mean_accuracy = counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
  row.grad_norm_mean /= static_cast<double>(cfg_.steps_per_epoch);
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!std::isfinite(row.mean_loss)) throw TrainError("train: non-finite loss in epoch " + std::to_string(epoch_));
  return row;
}

double Trainer::evaluate(const pool::ExperiencePool& pool, std::span<const std::size_t> trajectories) {
  const WindowSampler sampler(pool, {trajectories.begin(), trajectories.end()}, cfg_.window, cfg_.pad_windows);
  const std::size_t total = sampler.size();
  const std::size_t n = cfg_.eval_windows == 0 ? total : std::min(total, cfg_.eval_windows);
  std::vector<int> preds;
  std::vector<int> truth;
  constexpr std::size_t kChunk = 64;
  std::vector<WindowRef> refs;
  for (std::size_t start = 0; start < n; start += kChunk) {
    refs.clear();
    for (std::size_t k = start; k < std::min(n, start + kChunk); ++k) refs.push_back(sampler.at(k * total / n));
    const model::WindowBatch batch = make_batch(pool, refs, cfg_.window);
    const Tensor logits = model_.forward(batch);
    const auto lg = logits.data();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const std::size_t last = i * cfg_.window + cfg_.window - 1;
      preds.push_back(model::argmax_action(&lg[last * 3]));
      truth.push_back(batch.actions[last]);
    }
  }
  return accuracy(preds, truth);
}

double return_percentile(const pool::ExperiencePool& pool, std::span<const std::size_t> trajectories, double pct) {
  std::vector<double> r;
  for (std::size_t id : trajectories) {
    for (const pool::Step& s : pool.trajectories.at(id).steps) r.push_back(s.return_to_go);
  }
  if (r.empty()) throw TrainError("train: no returns to take a percentile of");
  std::sort(r.begin(), r.end());
  const double pos = pct / 100.0 * static_cast<double>(r.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, r.size() - 1);
  return r[lo] + (pos - static_cast<double>(lo)) * (r[hi] - r[lo]);
}

TrainResult train(model::PolicyModel& model, const pool::ExperiencePool& raw, const TrainConfig& cfg,
                  const std::string& checkpoint_path) {
  cfg.validate();
  if (model.config().context_window != cfg.window) {
    throw TrainError("train: config window " + std::to_string(cfg.window) + " != model context window " +
                     std::to_string(model.config().context_window));
  }
  if (std::abs(raw.gamma - cfg.gamma) > 1e-12) {
    throw TrainError("train: pool gamma " + std::to_string(raw.gamma) + " != config gamma " + std::to_string(cfg.gamma));
  }
  raw.validate();

  TrainResult result;
  TrainReport& report = result.report;
  split_trajectories(raw.trajectories.size(), cfg.eval_split, cfg.seed, report.train_trajectories,
                     report.eval_trajectories);
  const pool::ExperiencePool pool =
      raw.normalized ? raw : pool::normalize_states(raw, pool::fit_feature_stats(raw, report.train_trajectories));

  Trainer trainer(model, cfg);
  if (cfg.class_weights) {
    std::array<double, 3> counts{};
    double total = 0.0;
    for (std::size_t id : report.train_trajectories) {
      for (const pool::Step& s : pool.trajectories[id].steps) {
        counts[static_cast<std::size_t>(s.action)] += 1.0;
        total += 1.0;
      }
    }
    std::vector<double> w(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) w[c] = counts[c] > 0.0 ? total / (3.0 * counts[c]) : 0.0;
    trainer.set_class_weights(std::move(w));
  }
  const WindowSampler sampler(pool, report.train_trajectories, cfg.window, cfg.pad_windows);
  report.target_return =
      return_percentile(pool, report.train_trajectories, cfg.target_return_percentile) / pool.feature_stats.return_scale;

  const auto params = model.parameters();
  std::vector<std::vector<double>> best;
  double best_acc = -1.0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochRow row = trainer.train_epoch(pool, sampler);
    row.eval_accuracy = trainer.evaluate(pool, report.eval_trajectories);
    spdlog::info("epoch {:3d} loss {:.4f} train_acc {:.4f} eval_acc {:.4f} grad {:.3f} ({:.1f}s)", row.epoch,
                 row.mean_loss, row.mean_accuracy, row.eval_accuracy, row.grad_norm_mean, row.seconds);
    report.rows.push_back(row);
    if (row.eval_accuracy > best_acc) {
      best_acc = row.eval_accuracy;
      report.best_epoch = row.epoch;
      best.clear();
      for (const auto* p : params) best.emplace_back(p->value.data().begin(), p->value.data().end());
    }
    if (cfg.target_accuracy > 0.0 && row.eval_accuracy >= cfg.target_accuracy) break;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i]->value.mutable_data().begin());
  }
  report.final_eval_accuracy = best_acc;

  result.meta.feature_stats = pool.feature_stats;
  result.meta.gamma = pool.gamma;
  result.meta.target_return = report.target_return;
  result.meta.source_pool = pool.provenance.sources.empty() ? "" : pool.provenance.sources.front();
  if (!checkpoint_path.empty()) model::save_checkpoint(checkpoint_path, model, result.meta);
  return result;
}

}  // namespace l4sllm::train
