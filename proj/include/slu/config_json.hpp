#pragma once

#include "slu/config.hpp"

#include <json.hpp>

namespace slu {

using Json = nlohmann::json;

Json to_json(const EmbedderConfig& c);
Json to_json(const EncoderConfig& c);
Json to_json(const HeadsConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);

// Missing keys keep their defaults; unknown keys throw ConfigError naming the
// full key path.
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");

/// Tracks which keys of an object were consumed so the rest can be rejected.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path);

  template <typename T>
  void read(const char* key, T& out) {
    const auto it = json_.find(key);
    if (it == json_.end()) return;
    seen_.emplace_back(key);
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) ok = it->is_boolean();
    else if constexpr (std::is_integral_v<T>) ok = it->is_number_integer();
    else if constexpr (std::is_floating_point_v<T>) ok = it->is_number();
    else if constexpr (std::is_same_v<T, std::string>) ok = it->is_string();
    if (!ok) {
      throw ConfigError(path_ + "." + key + ": expected " + expected_type<T>() + ", found " +
                        std::string(it->type_name()));
    }
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": expected " + expected_type<T>() + ", found " +
                        std::string(it->type_name()));
    }
  }
  const Json* child(const char* key);
  void finish() const;
  const std::string& path() const { return path_; }

 private:
  template <typename T>
  static std::string expected_type() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else if constexpr (std::is_same_v<T, std::string>) return "string";
    else return "array";
  }

  const Json& json_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace slu
