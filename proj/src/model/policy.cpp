#include "l4sllm/model/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace l4sllm::model {

using tensor::AttentionMask;
namespace ops = tensor;

WindowBatch WindowBatch::empty(std::size_t batch, std::size_t window) {
  WindowBatch b;
  b.batch = batch;
  b.window = window;
  const std::size_t n = batch * window;
  b.returns.assign(n, 0.0);
  b.states.assign(n * pool::kStateDim, 0.0);
  b.actions.assign(n, 0);
  b.timesteps.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.timesteps[i] = i % window;
  b.valid.assign(n, 1.0);
  b.time_visible.assign(n, 1.0);
  return b;
}

void WindowBatch::validate(std::size_t state_dim) const {
  const std::size_t n = batch * window;
  if (n == 0) throw std::invalid_argument("window batch: empty");
  if (returns.size() != n || actions.size() != n || timesteps.size() != n || valid.size() != n ||
      time_visible.size() != n) {
    throw std::invalid_argument("window batch: per-step arrays must hold batch * window entries");
  }
  if (states.size() != n * state_dim) {
    throw std::invalid_argument("window batch: expected " + std::to_string(state_dim) + " state features per step, got " +
                                std::to_string(states.size()) + " values for " + std::to_string(n) + " steps");
  }
}

TransformerBlock::TransformerBlock(const std::string& name, const ModelConfig& cfg, Rng& rng)
    : heads_(cfg.n_heads),
      ln1_(name + ".ln1", cfg.embed_size),
      q_(name + ".attn.q", cfg.embed_size, cfg.embed_size, rng),
      k_(name + ".attn.k", cfg.embed_size, cfg.embed_size, rng),
      v_(name + ".attn.v", cfg.embed_size, cfg.embed_size, rng),
      o_(name + ".attn.o", cfg.embed_size, cfg.embed_size, rng,
         1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers))),
      ln2_(name + ".ln2", cfg.embed_size),
      ffn1_(name + ".ffn1", cfg.embed_size, cfg.embed_size * cfg.ffn_mult, rng),
      ffn2_(name + ".ffn2", cfg.embed_size * cfg.ffn_mult, cfg.embed_size, rng,
            1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers))) {}

Tensor TransformerBlock::forward(const Tensor& x, const AttentionMask& mask) const {
  const Tensor h = ln1_.forward(x);
  const Tensor q = ops::split_heads(q_.forward(h), heads_);
  const Tensor k = ops::split_heads(k_.forward(h), heads_);
  const Tensor v = ops::split_heads(v_.forward(h), heads_);
  const Tensor attn = ops::merge_heads(ops::attention(q, k, v, mask));
  const Tensor x1 = ops::add(x, o_.forward(attn));
  const Tensor f = ffn2_.forward(ops::gelu(ffn1_.forward(ln2_.forward(x1))));
  return ops::add(x1, f);
}

void TransformerBlock::collect(std::vector<Parameter*>& out) {
  ln1_.collect(out);
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
  ln2_.collect(out);
  ffn1_.collect(out);
  ffn2_.collect(out);
}

LoraLinear& TransformerBlock::target(const std::string& which) {
  if (which == "q") return q_;
  if (which == "k") return k_;
  if (which == "v") return v_;
  if (which == "o") return o_;
  if (which == "ffn1") return ffn1_;
  if (which == "ffn2") return ffn2_;
  throw std::invalid_argument("unknown LoRA target '" + which + "'");
}

PolicyModel::PolicyModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.embed_size;
  const std::size_t fd = config_.feature_dim;
  for (std::size_t f = 0; f < config_.state_dim; ++f) {
    const std::string name = "encoder." + std::string(pool::feature_names()[f]);
    FeatureEncoder enc;
    enc.scalar = config_.scalar_feature_mask[f];
    if (enc.scalar) {
      enc.lin = Linear(name + ".linear", 1, fd, rng);
    } else {
      for (std::size_t k : config_.conv_kernel_sizes) {
        const std::string kn = name + ".conv" + std::to_string(k);
        enc.kernels.push_back(
            make_param(kn + ".kernel", {config_.conv_channels, 1, k}, 1.0 / std::sqrt(static_cast<double>(k)), rng));
        enc.conv_bias.push_back(make_const_param(kn + ".bias", {config_.conv_channels}, 0.0));
      }
      enc.conv_proj = Linear(name + ".conv_proj", config_.conv_channels * config_.conv_kernel_sizes.size(), fd, rng);
    }
    enc.to_embed = Linear(name + ".embed", fd, d, rng);
    encoders_.push_back(std::move(enc));
  }
  return_embed_ = Linear("embed.return", 1, d, rng);
  action_embed_ = Linear("embed.action", 1, d, rng);
  time_ = make_param("embed.time", {config_.max_timestep + 1, d}, 0.1, rng);
  ln_in_ = LayerNorm("ln_in", d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    blocks_.push_back(std::make_unique<TransformerBlock>("blocks." + std::to_string(l), config_, rng));
  }
  ln_out_ = LayerNorm("ln_out", d);
  head_ = Linear("head", d, config_.action_count, rng);
}

std::vector<Tensor> PolicyModel::encode_state(const Tensor& states) const {
  if (states.rank() != 3 || states.dim(2) != config_.state_dim) {
    throw std::invalid_argument("encode_state: expected [batch, w, " + std::to_string(config_.state_dim) +
                                "], got " + tensor::shape_to_string(states.shape()));
  }
  const std::size_t B = states.dim(0);
  const std::size_t w = states.dim(1);
  const auto data = states.data();
  std::vector<Tensor> out;
  out.reserve(config_.state_dim);
  for (std::size_t f = 0; f < config_.state_dim; ++f) {
    std::vector<double> col(B * w);
    for (std::size_t i = 0; i < B * w; ++i) col[i] = data[i * config_.state_dim + f];
    const FeatureEncoder& enc = encoders_[f];
    Tensor feat;
    if (enc.scalar) {
      feat = enc.lin.forward(Tensor({B, w, 1}, std::move(col)));
    } else {
      const Tensor x({B, 1, w}, std::move(col));
      std::vector<Tensor> parts;
      for (std::size_t k = 0; k < enc.kernels.size(); ++k) {
        const Tensor c = ops::conv1d(x, enc.kernels[k].value, enc.conv_bias[k].value, ops::Padding::Causal);
        parts.push_back(ops::transpose_last2(c));
      }
      feat = enc.conv_proj.forward(ops::concat_last(parts));
    }
    out.push_back(enc.to_embed.forward(feat));
  }
  return out;
}

SequenceEmbedding PolicyModel::build_sequence(const WindowBatch& batch) const {
  batch.validate(config_.state_dim);
  if (batch.window != config_.context_window) {
    throw std::invalid_argument("build_sequence: window length " + std::to_string(batch.window) +
                                " != context window " + std::to_string(config_.context_window));
  }
  const std::size_t B = batch.batch;
  const std::size_t w = batch.window;
  const std::size_t n = w * kTokensPerStep;

  std::vector<Tensor> tokens;
  tokens.reserve(kTokensPerStep);
  tokens.push_back(return_embed_.forward(Tensor({B, w, 1}, batch.returns)));
  for (Tensor& t : encode_state(Tensor({B, w, config_.state_dim}, batch.states))) tokens.push_back(std::move(t));
  std::vector<double> acts(batch.actions.begin(), batch.actions.end());
  tokens.push_back(action_embed_.forward(Tensor({B, w, 1}, std::move(acts))));

  std::vector<double> row_valid(B * n);
  std::vector<double> row_time(B * n);
  std::vector<std::size_t> time_idx(B * n);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < w; ++t) {
      const std::size_t s = b * w + t;
      if (batch.timesteps[s] > config_.max_timestep) {
        throw std::invalid_argument("build_sequence: timestep " + std::to_string(batch.timesteps[s]) +
                                    " exceeds max_timestep");
      }
      for (std::size_t k = 0; k < kTokensPerStep; ++k) {
        const std::size_t r = b * n + t * kTokensPerStep + k;
        row_valid[r] = batch.valid[s];
        row_time[r] = batch.valid[s] * batch.time_visible[s];
        time_idx[r] = batch.timesteps[s];
      }
    }
  }

  SequenceEmbedding seq;
  seq.modality = ops::scale_rows(ops::interleave(tokens), row_valid);
  const Tensor time = ops::scale_rows(ops::embedding(time_.value, time_idx, {B, n}), row_time);
  seq.with_time = ops::add(seq.modality, time);
  seq.normalized = ln_in_.forward(seq.with_time);
  seq.mask.causal = true;
  seq.mask.key_valid = std::move(row_valid);
  seq.mask.groups = B;
  return seq;
}

Tensor PolicyModel::block_forward(std::size_t layer, const Tensor& x, const AttentionMask& mask) const {
  return blocks_.at(layer)->forward(x, mask);
}

Tensor PolicyModel::backbone(const Tensor& x, const AttentionMask& mask) const {
  Tensor h = x;
  for (const auto& blk : blocks_) h = blk->forward(h, mask);
  return h;
}

Tensor PolicyModel::forward(const WindowBatch& batch) const {
  ++forward_count_;
  const SequenceEmbedding seq = build_sequence(batch);
  const Tensor h = backbone(seq.normalized, seq.mask);
  std::vector<std::size_t> positions(batch.window);
  // Last state token of each step, the slot just before its action token.
  for (std::size_t t = 0; t < batch.window; ++t) positions[t] = t * kTokensPerStep + config_.state_dim;
  Tensor out = ln_out_.forward(ops::select_positions(h, positions));
  if (config_.residual_flag) out = ops::add(out, ops::select_positions(seq.normalized, positions));
  return head_.forward(out);
}

bool PolicyModel::enable_lora(std::uint64_t seed) {
  if (lora_enabled_) throw std::logic_error("LoRA is already enabled");
  Rng rng(seed);
  bool low_rank = true;
  for (Parameter* p : backbone_base_parameters()) {
    p->frozen = true;
    p->value.set_requires_grad(false);
    p->value.zero_grad();
  }
  for (auto& blk : blocks_) {
    for (const std::string& t : config_.lora_targets) {
      low_rank = blk->target(t).wrap(config_.lora_rank, config_.lora_scale, rng) && low_rank;
    }
  }
  lora_enabled_ = true;
  return low_rank;
}

LoraSummary PolicyModel::lora_summary() const {
  LoraSummary s;
  for (const auto& blk : blocks_) {
    for (const std::string& t : config_.lora_targets) {
      const LoraLinear& l = blk->target(t);
      if (!l.wrapped()) continue;
      ++s.wrapped_matrices;
      s.trainable += l.trainable_count();
      s.frozen += l.frozen_count();
    }
  }
  return s;
}

void PolicyModel::merge_lora() {
  for (auto& blk : blocks_) {
    for (const std::string& t : config_.lora_targets) blk->target(t).fold();
  }
}

std::vector<Parameter*> PolicyModel::parameters() {
  std::vector<Parameter*> out;
  for (FeatureEncoder& enc : encoders_) {
    if (enc.scalar) {
      enc.lin.collect(out);
    } else {
      for (std::size_t k = 0; k < enc.kernels.size(); ++k) {
        out.push_back(&enc.kernels[k]);
        out.push_back(&enc.conv_bias[k]);
      }
      enc.conv_proj.collect(out);
    }
    enc.to_embed.collect(out);
  }
  return_embed_.collect(out);
  action_embed_.collect(out);
  out.push_back(&time_);
  ln_in_.collect(out);
  for (auto& blk : blocks_) blk->collect(out);
  ln_out_.collect(out);
  head_.collect(out);
  return out;
}

std::vector<Parameter*> PolicyModel::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters()) {
    if (!p->frozen) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> PolicyModel::backbone_base_parameters() {
  std::vector<Parameter*> out;
  for (auto& blk : blocks_) {
    std::vector<Parameter*> ps;
    blk->collect(ps);
    for (Parameter* p : ps) {
      if (p->name.find(".lora_") == std::string::npos) out.push_back(p);
    }
  }
  return out;
}

int argmax_action(const double* logits, std::size_t count) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < count; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace l4sllm::model
