// Four-channel RGB-D packing, per-channel dataset statistics, and the
// variant-specific channel selection / input normalization.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/image_io.hpp"

namespace rgbdfuse::fusion {

enum class VariantKind { rgb_only, depth_only, rgbd };

inline int channel_count(VariantKind v) {
  switch (v) {
    case VariantKind::rgb_only: return 3;
    case VariantKind::depth_only: return 1;
    case VariantKind::rgbd: return 4;
  }
  return 0;
}

inline std::string variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::rgb_only: return "rgb";
    case VariantKind::depth_only: return "depth";
    case VariantKind::rgbd: return "rgbd";
  }
  return "";
}

inline VariantKind variant_from_name(const std::string& name) {
  if (name == "rgb") return VariantKind::rgb_only;
  if (name == "depth") return VariantKind::depth_only;
  if (name == "rgbd") return VariantKind::rgbd;
  fail(Errc::config_invalid, "unknown variant name: " + name);
}

// H x W x 4 interleaved (R, G, B, scaled depth)
struct RgbdImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbdImage() = default;
  RgbdImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 4 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 4 + c];
  }

  friend bool operator==(const RgbdImage& a, const RgbdImage& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
  }
};

// Per-channel mean/std on the 0-255 scale, indices 0..2 RGB, 3 depth.
struct ChannelStats {
  std::array<double, 4> mean{};
  std::array<double, 4> std{};
};

inline RgbdImage pack_rgbd(const ImageGrid<std::uint8_t>& rgb,
                           const ImageGrid<std::uint8_t>& depth_channel) {
  require(rgb.channels == 3, Errc::dimension_mismatch, "rgb input must have 3 channels");
  require(depth_channel.channels == 1, Errc::dimension_mismatch,
          "depth channel must be single-channel");
  require(rgb.width == depth_channel.width && rgb.height == depth_channel.height,
          Errc::dimension_mismatch, "rgb and depth dimensions differ");
  RgbdImage out(rgb.width, rgb.height);
  for (std::size_t i = 0; i < out.pixels.size() / 4; ++i) {
    out.pixels[i * 4 + 0] = rgb.data[i * 3 + 0];
    out.pixels[i * 4 + 1] = rgb.data[i * 3 + 1];
    out.pixels[i * 4 + 2] = rgb.data[i * 3 + 2];
    out.pixels[i * 4 + 3] = depth_channel.data[i];
  }
  return out;
}

inline ImageGrid<std::uint8_t> select_channels(const RgbdImage& img, VariantKind variant) {
  const int n = channel_count(variant);
  ImageGrid<std::uint8_t> out(img.width, img.height, n);
  const int first = variant == VariantKind::depth_only ? 3 : 0;
  for (std::size_t i = 0; i < img.pixels.size() / 4; ++i)
    for (int c = 0; c < n; ++c) out.data[i * n + c] = img.pixels[i * 4 + first + c];
  return out;
}

// stats arrays restricted to the variant's channels, in selection order
inline std::pair<std::vector<double>, std::vector<double>> restrict_stats(
    const ChannelStats& stats, VariantKind variant) {
  const int n = channel_count(variant);
  const int first = variant == VariantKind::depth_only ? 3 : 0;
  std::vector<double> mean(static_cast<std::size_t>(n)), std_dev(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    mean[static_cast<std::size_t>(c)] = stats.mean[static_cast<std::size_t>(first + c)];
    std_dev[static_cast<std::size_t>(c)] = stats.std[static_cast<std::size_t>(first + c)];
  }
  return {mean, std_dev};
}

// out[c] = (in[c] - mean[c]) / std[c]
inline ImageGrid<double> normalize_input(const ImageGrid<std::uint8_t>& channels,
                                         const std::vector<double>& mean,
                                         const std::vector<double>& std_dev) {
  require(static_cast<int>(mean.size()) == channels.channels &&
              static_cast<int>(std_dev.size()) == channels.channels,
          Errc::dimension_mismatch, "stats entries must match channel count");
  for (double s : std_dev)
    require(s > 0.0, Errc::zero_std, "zero channel standard deviation");
  ImageGrid<double> out(channels.width, channels.height, channels.channels);
  const int n = channels.channels;
  for (std::size_t i = 0; i < channels.pixel_count(); ++i)
    for (int c = 0; c < n; ++c)
      out.data[i * n + c] =
          (static_cast<double>(channels.data[i * n + c]) - mean[static_cast<std::size_t>(c)]) /
          std_dev[static_cast<std::size_t>(c)];
  return out;
}

// Population mean/std per channel over every pixel of the collection. The
// depth channel keeps its no-data zeros in the statistics: that is what the
// network actually sees.
inline ChannelStats compute_channel_stats(std::span<const RgbdImage> images) {
  require(!images.empty(), Errc::empty_dataset, "channel stats need at least one image");
  std::array<double, 4> sum{}, sum_sq{};
  std::int64_t n = 0;
  for (const RgbdImage& img : images) {
    const std::size_t pixels = img.pixels.size() / 4;
    for (std::size_t i = 0; i < pixels; ++i)
      for (int c = 0; c < 4; ++c) {
        const double v = img.pixels[i * 4 + static_cast<std::size_t>(c)];
        sum[static_cast<std::size_t>(c)] += v;
        sum_sq[static_cast<std::size_t>(c)] += v * v;
      }
    n += static_cast<std::int64_t>(pixels);
  }
  require(n > 0, Errc::empty_dataset, "channel stats over zero pixels");
  ChannelStats stats;
  for (int c = 0; c < 4; ++c) {
    const auto idx = static_cast<std::size_t>(c);
    stats.mean[idx] = sum[idx] / static_cast<double>(n);
    const double var = sum_sq[idx] / static_cast<double>(n) - stats.mean[idx] * stats.mean[idx];
    stats.std[idx] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  return stats;
}

inline ChannelStats compute_channel_stats(const std::vector<RgbdImage>& images) {
  return compute_channel_stats(std::span<const RgbdImage>(images.data(), images.size()));
}

// --- persistence -----------------------------------------------------------

// lossless 4-channel 8-bit PNG; straight (non-premultiplied) alpha
inline void write_rgbd(const RgbdImage& img, const std::filesystem::path& path) {
  ImageGrid<std::uint8_t> grid(img.width, img.height, 4);
  grid.data = img.pixels;
  io::write_png8(grid, path);
}

inline RgbdImage read_rgbd(const std::filesystem::path& path) {
  const auto grid = io::read_png8(path);
  require(grid.channels == 4, Errc::not_four_channel,
          "expected a 4-channel PNG: " + path.string());
  RgbdImage img(grid.width, grid.height);
  img.pixels = grid.data;
  return img;
}

inline void save_channel_stats(const ChannelStats& stats, const std::filesystem::path& path) {
  nlohmann::json j = {{"mean", stats.mean}, {"std", stats.std}};
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write channel stats: " + path.string());
  out << j.dump(2) << "\n";
}

inline ChannelStats load_channel_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open channel stats: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    ChannelStats stats;
    for (int c = 0; c < 4; ++c) {
      stats.mean[static_cast<std::size_t>(c)] = j.at("mean").at(c).get<double>();
      stats.std[static_cast<std::size_t>(c)] = j.at("std").at(c).get<double>();
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "channel stats JSON error: " + std::string(e.what()));
  }
}

}  // namespace rgbdfuse::fusion
