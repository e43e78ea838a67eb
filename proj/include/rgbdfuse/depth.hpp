// Point clouds to depth maps, dataset depth statistics, and the
// normalize/scale transforms that bring metric depth onto the 0-255 scale.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/calib.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/image_io.hpp"

namespace rgbdfuse::depth {

struct PointCloud {
  std::vector<Vec3> points;
};

// Metric per-pixel depth; 0.0 means "no sensor return" at that pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct DepthStats {
  double d_min = 0.0;        // meters, over valid pixels
  double d_max = 0.0;        // meters, over valid pixels
  double mean_scaled = 0.0;  // over scaled values of valid pixels
  double std_scaled = 0.0;   // population std of scaled values
  std::int64_t valid_pixel_count = 0;
};

// Z-buffer projection: each cloud point lands on at most one pixel and the
// smallest camera-frame depth wins. Untouched pixels stay 0.
inline DepthMap point_cloud_to_depth_map(const PointCloud& cloud,
                                         const calib::CalibrationBundle& calib) {
  DepthMap map(calib.intrinsics.width, calib.intrinsics.height);
  for (const Vec3& p : cloud.points) {
    const auto hit = calib::project_point(p, calib);
    if (!hit) continue;
    float& cell = map.at(hit->u, hit->v);
    const auto z = static_cast<float>(hit->z);
    if (cell == 0.0f || z < cell) cell = z;
  }
  return map;
}

// (d - d_min) / (d_max - d_min); no-data zeros pass through as 0
inline double normalize_depth(double d, const DepthStats& stats) {
  if (d == 0.0) return 0.0;
  require(stats.d_max > stats.d_min, Errc::degenerate_range,
          "constant-depth dataset: d_max equals d_min");
  require(d >= stats.d_min && d <= stats.d_max, Errc::out_of_range,
          "depth outside the dataset range");
  return (d - stats.d_min) / (stats.d_max - stats.d_min);
}

// round(d_norm * 255), half away from zero
inline std::uint8_t scale_depth(double d_norm) {
  require(d_norm >= 0.0 && d_norm <= 1.0, Errc::out_of_range, "normalized depth outside [0,1]");
  return static_cast<std::uint8_t>(round_half_away(d_norm * 255.0));
}

inline DepthStats compute_depth_stats(std::span<const DepthMap> maps) {
  DepthStats stats;
  stats.d_min = std::numeric_limits<double>::infinity();
  stats.d_max = -std::numeric_limits<double>::infinity();
  for (const DepthMap& map : maps) {
    for (float v : map.values) {
      if (v <= 0.0f) continue;
      const double d = v;
      stats.d_min = std::min(stats.d_min, d);
      stats.d_max = std::max(stats.d_max, d);
      ++stats.valid_pixel_count;
    }
  }
  require(stats.valid_pixel_count > 0, Errc::no_valid_pixels,
          "no valid pixels across the depth map collection");
  // second pass over the scaled representation
  double sum = 0.0, sum_sq = 0.0;
  if (stats.d_max > stats.d_min) {
    for (const DepthMap& map : maps) {
      for (float v : map.values) {
        if (v <= 0.0f) continue;
        const double s = scale_depth(normalize_depth(v, stats));
        sum += s;
        sum_sq += s * s;
      }
    }
  }  // constant-depth datasets keep scaled moments at 0; normalize would throw
  const auto n = static_cast<double>(stats.valid_pixel_count);
  stats.mean_scaled = sum / n;
  const double var = sum_sq / n - stats.mean_scaled * stats.mean_scaled;
  stats.std_scaled = var > 0.0 ? std::sqrt(var) : 0.0;
  return stats;
}

inline DepthStats compute_depth_stats(const std::vector<DepthMap>& maps) {
  return compute_depth_stats(std::span<const DepthMap>(maps.data(), maps.size()));
}

// normalize then scale per pixel; no-data pixels stay 0
inline ImageGrid<std::uint8_t> depth_map_to_channel(const DepthMap& map, const DepthStats& stats) {
  require(map.width > 0 && map.height > 0, Errc::dimension_mismatch, "empty depth map");
  ImageGrid<std::uint8_t> out(map.width, map.height, 1);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const float v = map.values[i];
    out.data[i] = v == 0.0f ? 0 : scale_depth(normalize_depth(v, stats));
  }
  return out;
}

// --- persistence -----------------------------------------------------------

// ASCII XYZ: one "x y z" triple per line, meters
inline PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_failure, "cannot open point cloud: " + path.string());
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    require(static_cast<bool>(ss >> p.x >> p.y >> p.z), Errc::malformed_file,
            "bad XYZ line: " + line);
    require(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z), Errc::malformed_file,
            "non-finite point coordinates");
    cloud.points.push_back(p);
  }
  return cloud;
}

inline void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write point cloud: " + path.string());
  out.precision(9);
  for (const Vec3& p : cloud.points) out << p.x << " " << p.y << " " << p.z << "\n";
}

// binary little-endian float32 triples
inline PointCloud load_xyzb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_failure, "cannot open point cloud: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() % 12 == 0, Errc::malformed_file, "xyzb size not a multiple of 12 bytes");
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 12);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    float xyz[3];
    std::memcpy(xyz, bytes.data() + i * 12, 12);
    cloud.points[i] = Vec3{xyz[0], xyz[1], xyz[2]};
  }
  return cloud;
}

inline void save_xyzb(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_failure, "cannot write point cloud: " + path.string());
  for (const Vec3& p : cloud.points) {
    const float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                          static_cast<float>(p.z)};
    out.write(reinterpret_cast<const char*>(xyz), 12);
  }
}

// Depth maps persist as 16-bit gray PNG in millimeters. Loading back yields
// mm-quantized meters, so dataset stats are computed over the persisted maps.
inline void save_depth_png16(const DepthMap& map, const std::filesystem::path& path) {
  ImageGrid<std::uint16_t> img(map.width, map.height, 1);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double mm = static_cast<double>(map.values[i]) * 1000.0;
    require(mm >= 0.0 && mm <= 65535.0, Errc::out_of_range, "depth exceeds 16-bit mm range");
    img.data[i] = static_cast<std::uint16_t>(round_half_away(mm));
  }
  io::write_png16_gray(img, path);
}

inline DepthMap load_depth_png16(const std::filesystem::path& path) {
  const auto img = io::read_png16_gray(path);
  DepthMap map(img.width, img.height);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = static_cast<float>(img.data[i] / 1000.0);
  return map;
}

// quantize to the persisted representation without a disk round trip
inline DepthMap quantize_to_mm(const DepthMap& map) {
  DepthMap out(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    out.values[i] = static_cast<float>(round_half_away(map.values[i] * 1000.0) / 1000.0);
  return out;
}

inline void save_depth_stats(const DepthStats& stats, const std::filesystem::path& path) {
  nlohmann::json j = {{"d_min", stats.d_min},
                      {"d_max", stats.d_max},
                      {"mean_scaled", stats.mean_scaled},
                      {"std_scaled", stats.std_scaled},
                      {"valid_pixel_count", stats.valid_pixel_count}};
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write depth stats: " + path.string());
  out << j.dump(2) << "\n";
}

inline DepthStats load_depth_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open depth stats: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DepthStats stats;
    stats.d_min = j.at("d_min").get<double>();
    stats.d_max = j.at("d_max").get<double>();
    stats.mean_scaled = j.at("mean_scaled").get<double>();
    stats.std_scaled = j.at("std_scaled").get<double>();
    stats.valid_pixel_count = j.at("valid_pixel_count").get<std::int64_t>();
    return stats;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "depth stats JSON error: " + std::string(e.what()));
  }
}

}  // namespace rgbdfuse::depth
