#include "hiercas/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hiercas::io {

using Json = nlohmann::ordered_json;
using ad::Tensor;

namespace {

constexpr char kMagic[4] = {'H', 'C', 'A', 'S'};

Json to_json(const model::HierCasConfig& c) {
  return Json{{"d_user", c.d_user},
              {"d_time", c.d_time},
              {"d_size", c.d_size},
              {"d_hidden", c.d_hidden},
              {"layers", c.layers},
              {"heads", c.heads},
              {"n_sample", c.n_sample},
              {"size_vocab", c.size_vocab},
              {"user_buckets", c.user_buckets},
              {"exact_users", c.exact_users},
              {"no_time", c.no_time},
              {"no_size", c.no_size},
              {"mean_agg", c.mean_agg},
              {"no_multi", c.no_multi},
              {"self_in_kv", c.self_in_kv},
              {"direction", std::string(sampling::to_string(c.direction))},
              {"pool_time", std::string(model::to_string(c.pool_time))}};
}

Json to_json(const data::ObservationConfig& c) {
  return Json{{"t_obs", c.t_obs},
              {"t_pred", c.t_pred},
              {"min_observed", c.min_observed},
              {"max_observed", c.max_observed},
              {"time_unit", c.time_unit}};
}

// `threads` is left out: it does not change any result.
Json to_json(const train::TrainConfig& c) {
  return Json{{"lr", c.lr},
              {"batch_size", c.batch_size},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"weight_decay", c.weight_decay},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"fixed_sampling", c.fixed_sampling},
              {"init_head_bias", c.init_head_bias},
              {"seed", c.seed}};
}

model::HierCasConfig model_from_json(const Json& j) {
  model::HierCasConfig c;
  j.at("d_user").get_to(c.d_user);
  j.at("d_time").get_to(c.d_time);
  j.at("d_size").get_to(c.d_size);
  j.at("d_hidden").get_to(c.d_hidden);
  j.at("layers").get_to(c.layers);
  j.at("heads").get_to(c.heads);
  j.at("n_sample").get_to(c.n_sample);
  j.at("size_vocab").get_to(c.size_vocab);
  j.at("user_buckets").get_to(c.user_buckets);
  j.at("exact_users").get_to(c.exact_users);
  j.at("no_time").get_to(c.no_time);
  j.at("no_size").get_to(c.no_size);
  j.at("mean_agg").get_to(c.mean_agg);
  j.at("no_multi").get_to(c.no_multi);
  j.at("self_in_kv").get_to(c.self_in_kv);
  c.direction = sampling::parse_direction(j.at("direction").get<std::string>());
  c.pool_time = model::parse_pool_time(j.at("pool_time").get<std::string>());
  return c;
}

data::ObservationConfig observation_from_json(const Json& j) {
  data::ObservationConfig c;
  j.at("t_obs").get_to(c.t_obs);
  j.at("t_pred").get_to(c.t_pred);
  j.at("min_observed").get_to(c.min_observed);
  j.at("max_observed").get_to(c.max_observed);
  j.at("time_unit").get_to(c.time_unit);
  return c;
}

train::TrainConfig train_from_json(const Json& j) {
  train::TrainConfig c;
  j.at("lr").get_to(c.lr);
  j.at("batch_size").get_to(c.batch_size);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps").get_to(c.eps);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("patience").get_to(c.patience);
  j.at("clip_norm").get_to(c.clip_norm);
  j.at("fixed_sampling").get_to(c.fixed_sampling);
  j.at("init_head_bias").get_to(c.init_head_bias);
  j.at("seed").get_to(c.seed);
  return c;
}

Json settings(const model::HierCasConfig& m, const data::ObservationConfig& o,
              const train::TrainConfig& t) {
  return Json{{"model", to_json(m)}, {"observation", to_json(o)}, {"train", to_json(t)}};
}

std::vector<std::string> json_diff(const Json& stored, const Json& requested) {
  std::vector<std::string> out;
  for (const auto& [key, value] : stored.items()) {
    const auto it = requested.find(key);
    if (it == requested.end()) {
      out.push_back(key + ": checkpoint=" + value.dump() + " requested=<missing>");
    } else if (*it != value) {
      out.push_back(key + ": checkpoint=" + value.dump() + " requested=" + it->dump());
    }
  }
  return out;
}

// --- little-endian byte writer / reader ------------------------------------

template <typename T>
void put(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

void put_f64(std::string& out, double x) { put(out, std::bit_cast<std::uint64_t>(x)); }

void put_record(std::string& out, const std::string& name, const Tensor& t) {
  if (name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + name);
  if (t.rank() > 0xFF) throw CheckpointError("tensor rank too large: " + name);
  put(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) put(out, static_cast<std::uint64_t>(d));
  for (double x : t.data()) put_f64(out, x);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(
          static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i]))
          << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("truncated checkpoint (needed " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ")");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string settings_json(const model::HierCasConfig& model_cfg,
                          const data::ObservationConfig& observation,
                          const train::TrainConfig& train_cfg) {
  return settings(model_cfg, observation, train_cfg).dump();
}

std::vector<std::string> config_diff(const model::HierCasConfig& stored,
                                     const model::HierCasConfig& requested) {
  return json_diff(to_json(stored), to_json(requested));
}

std::vector<std::string> config_diff(const data::ObservationConfig& stored,
                                     const data::ObservationConfig& requested) {
  return json_diff(to_json(stored), to_json(requested));
}

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out = "checkpoint configuration mismatch:";
  for (const std::string& l : lines) out += "\n  " + l;
  return out;
}

}  // namespace

ConfigMismatchError::ConfigMismatchError(std::vector<std::string> diff)
    : CheckpointError(join_lines(diff)), diff_(std::move(diff)) {}

void require_config(const Checkpoint& ckpt, const model::HierCasConfig& model_cfg) {
  auto diff = config_diff(ckpt.model.config, model_cfg);
  if (!diff.empty()) throw ConfigMismatchError(std::move(diff));
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const model::ModelParams& params = ckpt.model.params;
  if (ckpt.optimizer.m.size() != params.size() || ckpt.optimizer.v.size() != params.size()) {
    throw CheckpointError("optimizer state does not match the parameter list");
  }
  Json header{{"settings", settings(ckpt.model.config, ckpt.observation, ckpt.train)}};
  header["optimizer_step"] = ckpt.optimizer.step;
  header["user_vocab"] = ckpt.model.users.vocab();
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_record(out, params[i].name, params[i].value);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_record(out, "adam.m/" + params[i].name, ckpt.optimizer.m[i]);
    put_record(out, "adam.v/" + params[i].name, ckpt.optimizer.v[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = in.get<std::uint64_t>();
  Json header;
  Checkpoint ckpt;
  std::vector<std::string> vocab;
  std::uint64_t step = 0;
  try {
    header = Json::parse(in.take(header_len));
    const Json& s = header.at("settings");
    ckpt.model.config = model_from_json(s.at("model"));
    ckpt.observation = observation_from_json(s.at("observation"));
    ckpt.train = train_from_json(s.at("train"));
    header.at("optimizer_step").get_to(step);
    header.at("user_vocab").get_to(vocab);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  ckpt.model.config.validate();
  ckpt.model.users = model::UserIndex(ckpt.model.config.user_buckets, std::move(vocab));
  ckpt.model.params =
      model::ModelParams::init(ckpt.model.config, ckpt.model.users.rows(), /*seed=*/0);
  model::ModelParams& params = ckpt.model.params;
  ckpt.optimizer = train::OptimizerState::zeros_like(params);
  ckpt.optimizer.step = step;

  std::vector<bool> seen(3 * params.size(), false);
  while (!in.done()) {
    const auto name_len = in.get<std::uint16_t>();
    const std::string name(in.take(name_len));
    const auto rank = in.get<std::uint8_t>();
    ad::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());

    std::string_view base = name;
    std::size_t slot = 0;
    if (base.starts_with("adam.m/")) {
      base.remove_prefix(7);
      slot = 1;
    } else if (base.starts_with("adam.v/")) {
      base.remove_prefix(7);
      slot = 2;
    }
    const auto idx = params.find(base);
    if (!idx) throw CheckpointError("unexpected tensor '" + name + "' in checkpoint");
    Tensor& target = slot == 0 ? params[*idx].value
                     : slot == 1 ? ckpt.optimizer.m[*idx]
                                 : ckpt.optimizer.v[*idx];
    if (shape != target.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + ad::shape_string(shape) +
                            ", expected " + ad::shape_string(target.shape()));
    }
    if (seen[slot * params.size() + *idx]) {
      throw CheckpointError("duplicate tensor '" + name + "' in checkpoint");
    }
    seen[slot * params.size() + *idx] = true;
    for (double& x : target.data()) x = in.get_f64();
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) {
      const std::string& base = params[k % params.size()].name;
      const char* prefix[] = {"", "adam.m/", "adam.v/"};
      throw CheckpointError(std::string("checkpoint is missing tensor '") +
                            prefix[k / params.size()] + base + "'");
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace hiercas::io
