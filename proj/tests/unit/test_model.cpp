#include <doctest.h>

#include <random>

#include "l4sllm/model/checkpoint.hpp"
#include "l4sllm/model/policy.hpp"
#include "l4sllm/tensor/gradcheck.hpp"

using namespace l4sllm;
using namespace l4sllm::model;

namespace {

WindowBatch random_batch(std::size_t b, std::size_t w, std::uint64_t seed) {
  WindowBatch batch = WindowBatch::empty(b, w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  for (double& x : batch.states) x = n(rng);
  for (double& x : batch.returns) x = n(rng);
  for (std::size_t i = 0; i < batch.actions.size(); ++i) batch.actions[i] = static_cast<int>(rng() % 3);
  return batch;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace

TEST_CASE("config validation and JSON") {
  ModelConfig c = toy_config();
  CHECK_NOTHROW(c.validate());
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  ModelConfig bad = c;
  bad.n_heads = 3;  // does not divide embed_size 32
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.max_timestep = c.context_window - 2;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS_AS(ModelConfig::from_json(R"({"layers": 2})"), std::invalid_argument);
  CHECK(kTokensPerStep == 10);
}

TEST_CASE("sequence and encoder shapes") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 1);
  const WindowBatch b = random_batch(3, c.context_window, 2);
  const auto enc = m.encode_state(Tensor({3, c.context_window, 8}, b.states));
  REQUIRE(enc.size() == 8);
  for (const Tensor& e : enc) CHECK(e.shape() == tensor::Shape{3, c.context_window, c.embed_size});
  const SequenceEmbedding seq = m.build_sequence(b);
  CHECK(seq.modality.shape() == tensor::Shape{3, 10 * c.context_window, c.embed_size});
  CHECK(seq.normalized.shape() == seq.modality.shape());
  CHECK(m.forward(b).shape() == tensor::Shape{3, c.context_window, 3});
}

TEST_CASE("zero time embeddings leave the modality projection") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 1);
  const WindowBatch b = random_batch(2, c.context_window, 3);
  const SequenceEmbedding with = m.build_sequence(b);
  CHECK(max_abs_diff(with.with_time, with.modality) > 0.0);
  for (double& v : m.time_table().value.mutable_data()) v = 0.0;
  const SequenceEmbedding zero = m.build_sequence(b);
  CHECK(values(zero.with_time) == values(zero.modality));
  // Hiding the time index acts the same way.
  PolicyModel m2(c, 1);
  WindowBatch hidden = b;
  std::fill(hidden.time_visible.begin(), hidden.time_visible.end(), 0.0);
  const SequenceEmbedding h = m2.build_sequence(hidden);
  CHECK(values(h.with_time) == values(h.modality));
}

TEST_CASE("padding rows are zero and masked") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 1);
  WindowBatch b = random_batch(1, c.context_window, 4);
  b.valid[0] = 0.0;
  b.valid[1] = 0.0;
  const SequenceEmbedding seq = m.build_sequence(b);
  for (std::size_t i = 0; i < 20 * c.embed_size; ++i) CHECK(seq.modality.at(i) == 0.0);
  // Changing padded content does not change any valid prediction.
  const Tensor a = m.forward(b);
  b.states[0] += 5.0;
  b.returns[1] -= 3.0;
  const Tensor a2 = m.forward(b);
  for (std::size_t i = 6; i < a.numel(); ++i) CHECK(a.at(i) == a2.at(i));
}

TEST_CASE("future tokens never change past predictions") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 7);
  const std::size_t w = c.context_window;
  const WindowBatch base = random_batch(1, w, 5);
  const Tensor ref = m.forward(base);
  std::mt19937_64 rng(9);
  for (std::size_t t = 1; t < w; ++t) {
    for (int kind = 0; kind < 3; ++kind) {
      WindowBatch p = base;
      if (kind == 0) p.returns[t] += 1.7;
      if (kind == 1) p.states[t * 8 + rng() % 8] -= 2.3;
      if (kind == 2) p.actions[t] = (p.actions[t] + 1) % 3;
      const Tensor out = m.forward(p);
      for (std::size_t s = 0; s < t; ++s) {
        for (std::size_t a = 0; a < 3; ++a) CHECK(out.at(s * 3 + a) == ref.at(s * 3 + a));
      }
      // The perturbed step itself sees its own return and state.
      if (kind != 2) CHECK(max_abs_diff(out, ref) > 0.0);
    }
  }
}

TEST_CASE("residual flag off keeps shapes and causality") {
  ModelConfig c = toy_config();
  c.residual_flag = false;
  PolicyModel off(c, 7);
  ModelConfig con = c;
  con.residual_flag = true;
  PolicyModel on(con, 7);
  const WindowBatch b = random_batch(2, c.context_window, 5);
  const Tensor ref = off.forward(b);
  CHECK(ref.shape() == on.forward(b).shape());
  CHECK(max_abs_diff(ref, on.forward(b)) > 0.0);
  WindowBatch p = b;
  p.returns[c.context_window - 1] += 1.0;
  const Tensor out = off.forward(p);
  for (std::size_t i = 0; i < 3 * (c.context_window - 1); ++i) CHECK(out.at(i) == ref.at(i));
}

TEST_CASE("one forward call yields all action distributions") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 1);
  m.reset_forward_count();
  const Tensor logits = m.forward(random_batch(4, c.context_window, 1));
  CHECK(m.forward_count() == 1);
  CHECK(logits.dim(2) == 3);
  const double tie[3] = {1.0, 1.0, 0.5};
  CHECK(argmax_action(tie) == 0);
  const double last[3] = {0.0, 1.0, 2.0};
  CHECK(argmax_action(last) == 2);
}

TEST_CASE("model gradient check") {
  ModelConfig c = toy_config();
  c.context_window = 4;
  c.max_timestep = 4;
  PolicyModel m(c, 5);
  WindowBatch b = random_batch(2, 4, 6);
  b.valid[0] = 0.0;
  const std::vector<int> targets(b.actions);
  const std::vector<double> weights(b.valid);
  auto f = [&] {
    return tensor::weighted_cross_entropy(tensor::reshape(m.forward(b), {8, 3}), targets, weights);
  };
  std::vector<Tensor> inputs;
  for (Parameter* p : m.parameters()) inputs.push_back(p->value);
  tensor::GradCheckOptions o;
  o.max_coords_per_tensor = 4;
  const auto r = tensor::grad_check(f, inputs, o);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("LoRA wrapping") {
  Rng rng(1);
  LoraLinear lin("l", 6, 5, rng);
  const Tensor x({2, 6}, std::vector<double>(12, 0.3));
  const std::vector<double> before = values(lin.forward(x));
  CHECK(lin.wrap(2, 1.0, rng));
  CHECK(lin.base().weight.frozen);
  CHECK(lin.base().bias.frozen);
  CHECK(values(lin.forward(x)) == before);
  CHECK(lin.trainable_count() == 2 * (6 + 5));
  CHECK(lin.frozen_count() == 6 * 5 + 5);
  for (double& v : lin.lora_b()->value.mutable_data()) v = 0.25;
  const Tensor merged = lin.merge();
  const Tensor dense = tensor::linear(x, merged, lin.base().bias.value);
  CHECK(max_abs_diff(dense, lin.forward(x)) < 1e-12);
  const std::vector<double> factored = values(lin.forward(x));
  lin.fold();
  CHECK_FALSE(lin.wrapped());
  for (std::size_t i = 0; i < factored.size(); ++i) CHECK(lin.forward(x).at(i) == doctest::Approx(factored[i]));

  LoraLinear full("f", 3, 3, rng);
  CHECK_FALSE(full.wrap(3, 1.0, rng));
}

TEST_CASE("LoRA on the policy model") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 3);
  const WindowBatch b = random_batch(2, c.context_window, 8);
  const std::vector<double> before = values(m.forward(b));
  REQUIRE(m.enable_lora(11));
  CHECK(m.lora_enabled());
  CHECK(values(m.forward(b)) == before);
  const LoraSummary s = m.lora_summary();
  CHECK(s.wrapped_matrices == c.n_layers * c.lora_targets.size());
  CHECK(s.trainable == s.wrapped_matrices * c.lora_rank * 2 * c.embed_size);
  for (Parameter* p : m.backbone_base_parameters()) CHECK(p->frozen);
  for (Parameter* p : m.trainable_parameters()) CHECK_FALSE(p->frozen);
}

TEST_CASE("checkpoint round trip and corruption") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 2);
  CheckpointMeta meta;
  meta.gamma = 0.9;
  meta.target_return = 3.5;
  meta.source_pool = "p.pool.json";
  meta.feature_stats.fitted = true;
  meta.feature_stats.mean[3] = 12.0;
  meta.feature_stats.stddev[3] = 4.0;
  const std::string bytes = serialize_checkpoint(m, meta);
  LoadedCheckpoint l = deserialize_checkpoint(bytes);
  CHECK(l.model->config() == c);
  CHECK(l.meta.gamma == 0.9);
  CHECK(l.meta.target_return == 3.5);
  CHECK(l.meta.source_pool == "p.pool.json");
  CHECK(l.meta.feature_stats.mean[3] == 12.0);
  CHECK(l.hash == fnv1a(bytes));
  const WindowBatch b = random_batch(2, c.context_window, 1);
  CHECK(values(l.model->forward(b)) == values(m.forward(b)));
  CHECK(parameter_hash(l.model->parameters()) == parameter_hash(m.parameters()));

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CheckpointError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 20)), CheckpointError);
  std::string version = bytes;
  version[8] = 9;
  try {
    (void)deserialize_checkpoint(version);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK((e.kind() == CheckpointError::Kind::Version || e.kind() == CheckpointError::Kind::Corrupt));
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), CheckpointError);

  PolicyModel lm(c, 2);
  lm.enable_lora(1);
  for (Parameter* p : lm.trainable_parameters()) {
    for (double& v : p->value.mutable_data()) v += 0.01;
  }
  LoadedCheckpoint ll = deserialize_checkpoint(serialize_checkpoint(lm, meta));
  CHECK(ll.model->lora_enabled());
  CHECK(values(ll.model->forward(b)) == values(lm.forward(b)));
}

TEST_CASE("merged model matches the factored model") {
  const ModelConfig c = toy_config();
  PolicyModel m(c, 4);
  m.enable_lora(5);
  for (Parameter* p : m.trainable_parameters()) {
    for (double& v : p->value.mutable_data()) v += 0.05;
  }
  const WindowBatch b = random_batch(2, c.context_window, 3);
  const Tensor factored = m.forward(b);
  m.merge_lora();
  CHECK(max_abs_diff(m.forward(b), factored) < 1e-6);
}
