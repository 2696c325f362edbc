#include "l4sllm/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

namespace l4sllm::model {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', '4', 'S', 'L', 'L', 'M', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: truncated file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json stats_json(const pool::FeatureStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"zero_variance", s.zero_variance},
          {"return_scale", s.return_scale}, {"fitted", s.fitted}};
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t parameter_hash(const std::vector<Parameter*>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Parameter* p : params) {
    h = fnv1a(p->name, h);
    const auto data = p->value.data();
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double)), h);
  }
  return h;
}

std::string serialize_checkpoint(PolicyModel& model, const CheckpointMeta& meta) {
  json j;
  j["config"] = json::parse(model.config().to_json());
  j["lora_wrapped"] = model.lora_summary().wrapped_matrices > 0;
  j["feature_stats"] = stats_json(meta.feature_stats);
  j["state_features"] = json::array();
  for (auto name : pool::feature_names()) j["state_features"].push_back(std::string(name));
  j["gamma"] = meta.gamma;
  j["target_return"] = meta.target_return;
  j["source_pool"] = meta.source_pool;
  const std::string text = j.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint8_t>(out, p->frozen ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put<std::uint64_t>(out, d);
    const auto data = p->value.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

LoadedCheckpoint deserialize_checkpoint(std::string_view bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof(kMagic) + 4 + 8) throw CheckpointError(Kind::Corrupt, "checkpoint: truncated file");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(Kind::Corrupt, "checkpoint: bad magic (not a checkpoint file)");
  }
  Reader in(bytes);
  in.take(sizeof(kMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::Version, "checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8 + sizeof(kMagic) + 4) throw CheckpointError(Kind::Corrupt, "checkpoint: truncated file");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);

  const auto meta_len = in.get<std::uint64_t>();
  if (meta_len > body.size()) throw CheckpointError(Kind::Corrupt, "checkpoint: truncated file");
  json j;
  try {
    j = json::parse(in.take(meta_len));
  } catch (const json::exception&) {
    throw CheckpointError(Kind::Corrupt, "checkpoint: metadata is not valid JSON");
  }
  if (fnv1a(body) != stored) throw CheckpointError(Kind::Corrupt, "checkpoint: checksum mismatch (corrupt or truncated)");

  LoadedCheckpoint out;
  try {
    const auto names = j.at("state_features").get<std::vector<std::string>>();
    if (names.size() != pool::kStateDim) throw CheckpointError(Kind::Mismatch, "checkpoint: state width mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != pool::feature_names()[i]) {
        throw CheckpointError(Kind::Mismatch, "checkpoint: state feature order differs at '" + names[i] + "'");
      }
    }
    const ModelConfig cfg = ModelConfig::from_json(j.at("config").dump());
    out.model = std::make_unique<PolicyModel>(cfg, 0);
    if (j.at("lora_wrapped").get<bool>()) out.model->enable_lora(0);
    const json& fs = j.at("feature_stats");
    out.meta.feature_stats.mean = fs.at("mean").get<std::array<double, pool::kStateDim>>();
    out.meta.feature_stats.stddev = fs.at("std").get<std::array<double, pool::kStateDim>>();
    out.meta.feature_stats.zero_variance = fs.at("zero_variance").get<std::array<bool, pool::kStateDim>>();
    out.meta.feature_stats.return_scale = fs.at("return_scale").get<double>();
    out.meta.feature_stats.fitted = fs.at("fitted").get<bool>();
    out.meta.gamma = j.at("gamma").get<double>();
    out.meta.target_return = j.at("target_return").get<double>();
    out.meta.source_pool = j.value("source_pool", std::string());
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::Corrupt, std::string("checkpoint: metadata schema error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::Corrupt, std::string("checkpoint: ") + e.what());
  }

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : out.model->parameters()) by_name[p->name] = p;
  const auto count = in.get<std::uint64_t>();
  if (count != by_name.size()) {
    throw CheckpointError(Kind::Mismatch, "checkpoint: holds " + std::to_string(count) + " tensors, model expects " +
                                              std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    const std::string name(in.take(name_len));
    const bool frozen = in.get<std::uint8_t>() != 0;
    const auto rank = in.get<std::uint32_t>();
    tensor::Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(Kind::Mismatch, "checkpoint: unexpected tensor '" + name + "'");
    Parameter& p = *it->second;
    if (shape != p.value.shape()) {
      throw CheckpointError(Kind::Mismatch, "checkpoint: tensor '" + name + "' has shape " + tensor::shape_to_string(shape) +
                                                ", model expects " + tensor::shape_to_string(p.value.shape()));
    }
    const auto raw = in.take(p.value.numel() * sizeof(double));
    std::memcpy(p.value.mutable_data().data(), raw.data(), raw.size());
    p.frozen = frozen;
    p.value.set_requires_grad(!frozen);
    by_name.erase(it);
  }
  if (in.pos() != body.size()) throw CheckpointError(Kind::Corrupt, "checkpoint: trailing bytes before checksum");
  out.hash = fnv1a(bytes);
  return out;
}

void save_checkpoint(const std::string& path, PolicyModel& model, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path + ": " + e.what());
  }
}

}  // namespace l4sllm::model
