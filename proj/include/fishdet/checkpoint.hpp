#pragma once

#include <string>

#include <json.hpp>

#include "fishdet/model.hpp"
#include "fishdet/windows.hpp"

namespace fishdet {

/// A trained model ready for inference.
///
/// On disk: `<path>` is a JSON manifest (config, parameter names/shapes/
/// offsets, normalization statistics and their hash, free-form metadata) and
/// `<path>.bin` holds the parameters as little-endian float32, concatenated in
/// manifest order.
struct Checkpoint {
  model::ModelConfig config;
  model::ModelWeights<float> weights;
  train::NormStats norm;
  nlohmann::json metadata = nlohmann::json::object();

  void save(const std::string& path) const;
  /// Throws IoError on unreadable/short files and ConfigError when the stored
  /// normalization hash does not match the stored statistics or shapes
  /// disagree with the config.
  static Checkpoint load(const std::string& path);
};

}  // namespace fishdet
