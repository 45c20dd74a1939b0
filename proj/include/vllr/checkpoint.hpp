#pragma once

// Binary checkpoint container:
//   "VLLRCKPT" | u32 version | u64 header bytes | JSON header | f64 params
// The header records both architectures, the config hash, the step and
// the number of doubles that follow.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/io.hpp"
#include "vllr/policy.hpp"

namespace vllr {

inline constexpr char kCheckpointMagic[8] = {'V', 'L', 'L', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PolicyParams policy;
  std::optional<ValueParams> value;
  std::string config_hash;
  std::int64_t step = 0;
  std::string stage;
};

namespace checkpoint_detail {

template <class T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) fail(ErrorKind::kIo, "checkpoint '" + path + "' is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline Mlp net_from(const nlohmann::json& arch, const std::string& path) {
  if (!arch.is_object() || !arch.contains("layers") || arch.value("activation", "") != "tanh") {
    fail(ErrorKind::kIo, "checkpoint '" + path + "' has an unsupported architecture");
  }
  return Mlp(arch["layers"].get<std::vector<int>>());
}

}  // namespace checkpoint_detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  nlohmann::json header = {{"config_hash", c.config_hash},
                           {"step", c.step},
                           {"stage", c.stage},
                           {"policy", architecture(c.policy.net)},
                           {"policy_params", c.policy.net.params().size()}};
  if (c.value) {
    header["value"] = architecture(c.value->net);
    header["value_params"] = c.value->net.params().size();
  }
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  checkpoint_detail::put(out, kCheckpointVersion);
  checkpoint_detail::put(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  auto append = [&out](const std::vector<double>& v) {
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  };
  append(c.policy.net.params());
  if (c.value) append(c.value->net.params());
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  const std::string data = read_file(path);
  if (data.size() < sizeof(kCheckpointMagic) || std::memcmp(data.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    fail(ErrorKind::kIo, "'" + p + "' is not a checkpoint");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = checkpoint_detail::take<std::uint32_t>(data, pos, p);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kIo, "checkpoint '" + p + "' has version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  const auto hlen = checkpoint_detail::take<std::uint64_t>(data, pos, p);
  if (pos + hlen > data.size()) fail(ErrorKind::kIo, "checkpoint '" + p + "' is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(pos, hlen));
  } catch (const nlohmann::json::parse_error&) {
    fail(ErrorKind::kIo, "checkpoint '" + p + "' has a corrupt header");
  }
  pos += hlen;
  Checkpoint c;
  c.config_hash = header.value("config_hash", "");
  c.step = header.value("step", std::int64_t{0});
  c.stage = header.value("stage", "");
  auto read_params = [&](Mlp& net, std::size_t expected) {
    if (net.params().size() != expected) fail(ErrorKind::kIo, "checkpoint '" + p + "' parameter count mismatch");
    const std::size_t bytes = expected * sizeof(double);
    if (pos + bytes > data.size()) fail(ErrorKind::kIo, "checkpoint '" + p + "' is truncated");
    std::memcpy(net.params().data(), data.data() + pos, bytes);
    pos += bytes;
  };
  c.policy.net = checkpoint_detail::net_from(header["policy"], p);
  read_params(c.policy.net, header.value("policy_params", std::size_t{0}));
  if (header.contains("value")) {
    c.value = ValueParams{checkpoint_detail::net_from(header["value"], p)};
    read_params(c.value->net, header.value("value_params", std::size_t{0}));
  }
  if (pos != data.size()) fail(ErrorKind::kIo, "checkpoint '" + p + "' has trailing bytes");
  if (!c.policy.net.all_finite()) fail(ErrorKind::kIo, "checkpoint '" + p + "' contains non-finite parameters");
  return c;
}

// Rejects checkpoints whose network does not fit the configured environment.
inline void check_compatible(const Checkpoint& c, int obs_dim, int num_actions, const std::string& path) {
  if (c.policy.net.input_size() != obs_dim) {
    fail(ErrorKind::kConfig, "checkpoint '" + path + "' expects observation dim " +
                                 std::to_string(c.policy.net.input_size()) + " but the configured environment produces " +
                                 std::to_string(obs_dim) + " (config hash " + c.config_hash + ")");
  }
  if (c.policy.net.output_size() != num_actions) {
    fail(ErrorKind::kConfig, "checkpoint '" + path + "' has " + std::to_string(c.policy.net.output_size()) +
                                 " actions but the configured environment has " + std::to_string(num_actions));
  }
}

}  // namespace vllr
