// Checkpoint container: magic + JSON header (arch, variant, seed, optional
// channel stats) + little-endian float32 tensor payload + FNV-1a checksum.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/detect/model.hpp"
#include "rgbdfuse/fusion.hpp"

namespace rgbdfuse::detect {

inline constexpr char k_checkpoint_magic[8] = {'R', 'G', 'B', 'D', 'C', 'K', 'P', '1'};

inline void save_checkpoint(DetectorModel& model, const std::filesystem::path& path,
                            const std::optional<fusion::ChannelStats>& stats = std::nullopt) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["variant"] = fusion::variant_name(model.variant);
  header["seed"] = model.init_seed;
  header["arch"] = model.arch.to_json();
  if (stats) header["channel_stats"] = {{"mean", stats->mean}, {"std", stats->std}};
  nlohmann::json tensors = nlohmann::json::array();
  for (auto& [name, t] : model.named_parameters())
    tensors.push_back({{"name", name}, {"shape", t->shape}});
  header["tensors"] = tensors;

  const std::string header_str = header.dump();
  std::vector<char> blob;
  blob.insert(blob.end(), k_checkpoint_magic, k_checkpoint_magic + 8);
  const auto header_len = static_cast<std::uint32_t>(header_str.size());
  blob.resize(blob.size() + 4);
  std::memcpy(blob.data() + blob.size() - 4, &header_len, 4);
  blob.insert(blob.end(), header_str.begin(), header_str.end());
  for (auto& [name, t] : model.named_parameters()) {
    const std::size_t offset = blob.size();
    blob.resize(offset + t->data.size() * 4);
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const float f = static_cast<float>(t->data[i]);
      std::memcpy(blob.data() + offset + i * 4, &f, 4);
    }
  }
  const std::uint64_t checksum = fnv1a64(blob.data(), blob.size());
  blob.resize(blob.size() + 8);
  std::memcpy(blob.data() + blob.size() - 8, &checksum, 8);

  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_failure, "cannot write checkpoint: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  require(out.good(), Errc::io_failure, "short write on checkpoint: " + path.string());
}

struct LoadedCheckpoint {
  DetectorModel model;
  std::optional<fusion::ChannelStats> channel_stats;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_failure, "cannot open checkpoint: " + path.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(blob.size() >= 8 + 4 + 8, Errc::malformed_file, "checkpoint too small");
  require(std::memcmp(blob.data(), k_checkpoint_magic, 8) == 0, Errc::malformed_file,
          "bad checkpoint magic");
  std::uint64_t stored_checksum = 0;
  std::memcpy(&stored_checksum, blob.data() + blob.size() - 8, 8);
  const std::uint64_t actual = fnv1a64(blob.data(), blob.size() - 8);
  require(stored_checksum == actual, Errc::malformed_file, "checkpoint checksum mismatch");

  std::uint32_t header_len = 0;
  std::memcpy(&header_len, blob.data() + 8, 4);
  require(blob.size() >= 12 + header_len + 8, Errc::malformed_file, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string(blob.data() + 12, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "checkpoint header parse error: " + std::string(e.what()));
  }

  LoadedCheckpoint out;
  try {
    require(header.at("format_version").get<int>() == 1, Errc::malformed_file,
            "unsupported checkpoint version");
    const auto variant = fusion::variant_from_name(header.at("variant").get<std::string>());
    const auto arch = ArchConfig::from_json(header.at("arch"));
    const auto seed = header.at("seed").get<std::uint64_t>();
    out.model = build_model(variant, arch, seed);
    if (header.contains("channel_stats")) {
      fusion::ChannelStats cs;
      for (int c = 0; c < 4; ++c) {
        cs.mean[static_cast<std::size_t>(c)] =
            header["channel_stats"]["mean"].at(c).get<double>();
        cs.std[static_cast<std::size_t>(c)] = header["channel_stats"]["std"].at(c).get<double>();
      }
      out.channel_stats = cs;
    }
    std::size_t offset = 12 + header_len;
    const auto& tensor_meta = header.at("tensors");
    auto params = out.model.named_parameters();
    require(tensor_meta.size() == params.size(), Errc::malformed_file,
            "checkpoint tensor count does not match architecture");
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
      auto& [name, tensor] = params[ti];
      require(tensor_meta.at(ti).at("name").get<std::string>() == name, Errc::malformed_file,
              "checkpoint tensor order mismatch at " + name);
      const auto shape = tensor_meta.at(ti).at("shape").get<std::vector<int>>();
      require(shape == tensor->shape, Errc::malformed_file, "tensor shape mismatch at " + name);
      const std::size_t bytes = tensor->data.size() * 4;
      require(offset + bytes <= blob.size() - 8, Errc::malformed_file,
              "checkpoint payload truncated at " + name);
      for (std::size_t i = 0; i < tensor->data.size(); ++i) {
        float f = 0.0f;
        std::memcpy(&f, blob.data() + offset + i * 4, 4);
        tensor->data[i] = static_cast<double>(f);
      }
      offset += bytes;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "checkpoint header field error: " + std::string(e.what()));
  }
  return out;
}

}  // namespace rgbdfuse::detect
