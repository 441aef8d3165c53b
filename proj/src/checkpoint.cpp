#include "fishdet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fishdet/errors.hpp"

namespace fishdet {

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

void put_le32(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

float get_le32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  const std::string blob_path = path + ".bin";
  nlohmann::json params = nlohmann::json::array();
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot write " + blob_path);
  std::size_t offset = 0;
  for (const auto* p : weights.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", offset}});
    for (float v : p->value.data) put_le32(blob, v);
    offset += p->value.numel();
  }
  if (!blob) throw IoError("write failed: " + blob_path);

  nlohmann::json manifest = {
      {"format", "fishdet-checkpoint"},
      {"version", 1},
      {"config", config.to_json()},
      {"parameters", params},
      {"blob", std::filesystem::path(blob_path).filename().string()},
      {"blob_floats", offset},
      {"dtype", "float32-le"},
      {"normalization", norm.to_json()},
      {"norm_hash", hex64(norm.hash())},
      {"param_count", model::count_params(config).total},
      {"metadata", metadata}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": invalid manifest: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = model::ModelConfig::from_json(manifest.at("config"));
    ck.norm = train::NormStats::from_json(manifest.at("normalization"));
    ck.metadata = manifest.value("metadata", nlohmann::json::object());
    if (manifest.at("norm_hash").get<std::string>() != hex64(ck.norm.hash())) {
      throw ConfigError(path + ": normalization statistics do not match their hash");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": invalid manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }

  const auto blob_path =
      (std::filesystem::path(path).parent_path() / manifest.value("blob", std::string())).string();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot open checkpoint blob " + blob_path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)),
                                   std::istreambuf_iterator<char>());

  ck.weights = model::zero_weights<float>(ck.config);
  const auto& params = manifest.at("parameters");
  auto targets = ck.weights.parameters();
  if (params.size() != targets.size()) {
    throw ConfigError(path + ": parameter list does not match the model config");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto* p = targets[i];
    const auto& entry = params[i];
    if (entry.at("name").get<std::string>() != p->name ||
        entry.at("shape").get<nn::Shape>() != p->value.shape) {
      throw ConfigError(path + ": parameter '" + p->name + "' has unexpected name or shape");
    }
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if ((offset + p->value.numel()) * 4 > bytes.size()) {
      throw IoError(blob_path + ": truncated parameter blob");
    }
    for (std::size_t k = 0; k < p->value.numel(); ++k) {
      p->value.data[k] = get_le32(bytes.data() + (offset + k) * 4);
    }
  }
  return ck;
}

}  // namespace fishdet
