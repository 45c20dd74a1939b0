#pragma once

// YAML front end for ExperimentConfig; needs yaml-cpp at link time.

#include <cstdlib>
#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "vllr/config.hpp"

namespace vllr {

namespace yaml_detail {

inline nlohmann::json scalar(const YAML::Node& n) {
  const std::string s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  static const std::regex int_re(R"([-+]?[0-9]+)");
  static const std::regex float_re(R"([-+]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][-+]?[0-9]+)?)");
  if (s == "true" || s == "True" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "no") return false;
  if (std::regex_match(s, int_re)) {
    if (s[0] == '-') return std::stoll(s);
    return std::stoull(s[0] == '+' ? s.substr(1) : s);
  }
  if (std::regex_match(s, float_re)) return std::strtod(s.c_str(), nullptr);
  return s;
}

inline nlohmann::json to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar(n);
    case YAML::NodeType::Sequence: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& item : n) arr.push_back(to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      nlohmann::json obj = nlohmann::json::object();
      for (const auto& kv : n) obj[kv.first.as<std::string>()] = to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

}  // namespace yaml_detail

// Parses a config tree from YAML (or JSON, which is accepted by the same
// parser when the extension is .json).
inline nlohmann::json read_config_tree(const std::filesystem::path& path) {
  if (path.extension() == ".json") return read_json_file(path.string());
  try {
    const YAML::Node root = YAML::LoadFile(path.string());
    if (root.IsNull()) return nlohmann::json::object();
    return yaml_detail::to_json(root);
  } catch (const YAML::BadFile&) {
    fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  } catch (const YAML::Exception& e) {
    fail(ErrorKind::kConfig, "'" + path.string() + "' is not valid YAML: " + e.what());
  }
}

// Defaults, then the file (if any), then --set overrides, then validation.
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json tree = to_json(ExperimentConfig{});
  if (!path.empty()) {
    const nlohmann::json file = read_config_tree(path);
    if (!file.is_object()) fail(ErrorKind::kConfig, "config '" + path + "' must be a mapping at the top level");
    ExperimentConfig scratch;
    config_detail::decode(file, scratch, "");
    tree.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return config_from_json(tree);
}

}  // namespace vllr
