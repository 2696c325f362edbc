#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "l4sllm/pool/normalize.hpp"
#include "l4sllm/sim/simulator.hpp"
#include "l4sllm/train/trainer.hpp"

using namespace l4sllm;
using namespace l4sllm::train;

namespace {

pool::ExperiencePool small_pool(std::size_t runs, sim::Micros duration = 2'000'000) {
  pool::ExperiencePool p;
  for (std::size_t s = 1; s <= runs; ++s) {
    sim::ScenarioConfig c = sim::default_scenario();
    c.seed = s;
    c.duration = duration;
    p.trajectories.push_back(pool::build_trajectory(sim::run_scenario(c), {}, "run" + std::to_string(s)));
  }
  return p;
}

pool::ExperiencePool hand_pool() {
  pool::ExperiencePool p;
  for (std::size_t len : {3, 5}) {
    pool::Trajectory t;
    for (std::size_t i = 0; i < len; ++i) {
      pool::Step s;
      s.reward = 1.0 + static_cast<double>(i);
      s.state.fill(static_cast<double>(10 * len + i));
      s.action = static_cast<int>(i % 3);
      t.steps.push_back(s);
    }
    std::vector<double> r;
    for (const auto& s : t.steps) r.push_back(s.reward);
    const auto R = pool::returns_to_go(r, p.gamma);
    for (std::size_t i = 0; i < len; ++i) t.steps[i].return_to_go = R[i];
    t.steps.back().done = true;
    p.trajectories.push_back(t);
  }
  return p;
}

TrainConfig quick_config() {
  TrainConfig tc;
  tc.window = 8;
  tc.epochs = 2;
  tc.steps_per_epoch = 3;
  tc.batch_size = 4;
  tc.eval_windows = 50;
  return tc;
}

}  // namespace

TEST_CASE("window end positions") {
  CHECK(valid_end_positions(5, 3, false) == std::vector<std::size_t>{2, 3, 4});
  CHECK(valid_end_positions(5, 3, true) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(valid_end_positions(2, 3, false).empty());
}

TEST_CASE("accuracy examples") {
  CHECK(accuracy(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(std::vector<int>{2, 2}, std::vector<int>{2, 2}) == 1.0);
  CHECK(accuracy(std::vector<int>{0}, std::vector<int>{1}) == 0.0);
  CHECK_THROWS(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}));
  CHECK_THROWS(accuracy(std::vector<int>{}, std::vector<int>{}));
}

TEST_CASE("trajectory split is disjoint and deterministic") {
  std::vector<std::size_t> tr, ev, tr2, ev2;
  split_trajectories(8, 0.25, 3, tr, ev);
  split_trajectories(8, 0.25, 3, tr2, ev2);
  CHECK(tr == tr2);
  CHECK(ev == ev2);
  CHECK(ev.size() == 2);
  CHECK(tr.size() == 6);
  for (std::size_t e : ev) CHECK(std::find(tr.begin(), tr.end(), e) == tr.end());
  CHECK_THROWS_AS(split_trajectories(1, 0.25, 1, tr, ev), TrainError);
}

TEST_CASE("batches pad on the left and scale returns") {
  pool::ExperiencePool p = pool::normalize_states(hand_pool());
  const std::vector<WindowRef> refs{{0, 1}, {1, 4}};
  const model::WindowBatch b = make_batch(p, refs, 3);
  CHECK(b.batch == 2);
  CHECK(b.window == 3);
  CHECK(b.valid == std::vector<double>{0, 1, 1, 1, 1, 1});
  CHECK(b.actions[1] == 0);
  CHECK(b.actions[2] == 1);
  CHECK(b.actions[5] == 1);
  CHECK(b.returns[2] == doctest::Approx(p.trajectories[0].steps[1].return_to_go / p.feature_stats.return_scale));
  CHECK(b.timesteps == std::vector<std::size_t>{0, 1, 2, 0, 1, 2});
  CHECK_NOTHROW(b.validate(8));

  CHECK_THROWS(WindowSampler(hand_pool(), {}, 3, true));
  const WindowSampler padded(p, {}, 3, true);
  CHECK(padded.size() == 8);
  const WindowSampler unpadded(p, {}, 3, false);
  CHECK(unpadded.size() == 4);
  CHECK(unpadded.at(0).end == 2);
}

TEST_CASE("window loss ignores padding") {
  model::WindowBatch b = model::WindowBatch::empty(1, 2);
  b.actions = {0, 1};
  b.valid = {0, 1};
  const tensor::Tensor logits({1, 2, 3}, {9, -9, 0, 0, 0, 0});
  CHECK(window_loss(logits, b).item() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("training is deterministic and lr zero is a no-op") {
  const pool::ExperiencePool p = small_pool(4);
  const model::ModelConfig mc = model::toy_config();
  TrainConfig tc = quick_config();
  model::PolicyModel a(mc, 1), b(mc, 1);
  const TrainResult ra = train::train(a, p, tc);
  const TrainResult rb = train::train(b, p, tc);
  CHECK(model::parameter_hash(a.parameters()) == model::parameter_hash(b.parameters()));
  CHECK(ra.report.final_eval_accuracy == rb.report.final_eval_accuracy);
  CHECK(ra.report.rows.size() == 2);
  CHECK(ra.report.rows[0].mean_loss > 0.0);
  CHECK(ra.meta.feature_stats.fitted);
  CHECK(ra.report.eval_trajectories.size() == 1);

  model::PolicyModel z(mc, 1), fresh(mc, 1);
  tc.lr = 0.0;
  train::train(z, p, tc);
  CHECK(model::parameter_hash(z.parameters()) == model::parameter_hash(fresh.parameters()));
}

TEST_CASE("LoRA training leaves frozen weights bit-identical") {
  const pool::ExperiencePool p = small_pool(4);
  model::PolicyModel m(model::toy_config(), 2);
  m.enable_lora(3);
  const std::uint64_t frozen_before = model::parameter_hash(m.backbone_base_parameters());
  const std::uint64_t trainable_before = model::parameter_hash(m.trainable_parameters());
  TrainConfig tc = quick_config();
  tc.lr = 0.1;
  train::train(m, p, tc);
  CHECK(model::parameter_hash(m.backbone_base_parameters()) == frozen_before);
  CHECK(model::parameter_hash(m.trainable_parameters()) != trainable_before);
}

TEST_CASE("checkpoint written by training loads back") {
  const auto path = (std::filesystem::temp_directory_path() / "l4sllm_train_test.ckpt").string();
  const pool::ExperiencePool p = small_pool(4);
  model::PolicyModel m(model::toy_config(), 1);
  TrainConfig tc = quick_config();
  tc.epochs = 1;
  const TrainResult r = train::train(m, p, tc, path);
  const model::LoadedCheckpoint l = model::load_checkpoint(path);
  CHECK(model::parameter_hash(l.model->parameters()) == model::parameter_hash(m.parameters()));
  CHECK(l.meta.target_return == r.meta.target_return);
  std::filesystem::remove(path);
}

TEST_CASE("config validation and JSON") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  const TrainConfig back = TrainConfig::from_json(tc.to_json());
  CHECK(back.to_json() == tc.to_json());
  tc.batch_size = 0;
  CHECK_THROWS(tc.validate());
  tc = {};
  tc.eval_split = 1.0;
  CHECK_THROWS(tc.validate());
  tc = {};
  tc.optimizer = OptimizerKind::Adam;
  CHECK(TrainConfig::from_json(tc.to_json()).optimizer == OptimizerKind::Adam);
  CHECK_THROWS(TrainConfig::from_json(R"({"learning_rate": 0.1})"));
  CHECK_THROWS(TrainConfig::from_json(R"({"optimizer": "rmsprop"})"));
}

TEST_CASE("return percentile") {
  const pool::ExperiencePool p = hand_pool();
  const std::vector<std::size_t> ids{0, 1};
  const double p100 = return_percentile(p, ids, 100.0);
  double mx = 0.0;
  for (const auto& t : p.trajectories) {
    for (const auto& s : t.steps) mx = std::max(mx, s.return_to_go);
  }
  CHECK(p100 == doctest::Approx(mx));
  CHECK(return_percentile(p, ids, 0.0) <= return_percentile(p, ids, 90.0));
}
