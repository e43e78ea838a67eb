// Calibration data model, pinhole projection, and calibration-pair pruning.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"

namespace rgbdfuse::calib {

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, Errc::invalid_intrinsics, "focal lengths must be positive");
    require(width >= 1 && height >= 1, Errc::invalid_intrinsics, "image size must be >= 1");
    require(cx >= 0.0 && cx < width, Errc::invalid_intrinsics, "cx outside image");
    require(cy >= 0.0 && cy < height, Errc::invalid_intrinsics, "cy outside image");
  }
};

// 4x4 row-major homogeneous transform. Rotation block must be orthonormal
// with positive determinant; bottom row fixed to [0,0,0,1].
struct RigidTransform {
  std::array<double, 16> m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static RigidTransform identity() { return RigidTransform{}; }

  static RigidTransform from_rotation_translation(const std::array<double, 9>& r,
                                                  const std::array<double, 3>& t) {
    RigidTransform out;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.m[i * 4 + j] = r[i * 3 + j];
    for (int i = 0; i < 3; ++i) out.m[i * 4 + 3] = t[i];
    return out;
  }

  Vec3 apply(const Vec3& p) const {
    return Vec3{m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
  }

  RigidTransform inverse() const {
    RigidTransform out;
    // R^T block
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.m[i * 4 + j] = m[j * 4 + i];
    // -R^T t
    for (int i = 0; i < 3; ++i) {
      out.m[i * 4 + 3] =
          -(out.m[i * 4 + 0] * m[3] + out.m[i * 4 + 1] * m[7] + out.m[i * 4 + 2] * m[11]);
    }
    return out;
  }

  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform out;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += m[i * 4 + k] * other.m[k * 4 + j];
        out.m[i * 4 + j] = acc;
      }
    return out;
  }

  void validate() const {
    require(m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0,
            Errc::invalid_extrinsics, "bottom row must be [0,0,0,1]");
    // ||R^T R - I||_inf < 1e-6
    double max_dev = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += m[k * 4 + i] * m[k * 4 + j];
        max_dev = std::max(max_dev, std::abs(acc - (i == j ? 1.0 : 0.0)));
      }
    require(max_dev < 1e-6, Errc::invalid_extrinsics, "rotation block not orthonormal");
    const double det = m[0] * (m[5] * m[10] - m[6] * m[9]) -
                       m[1] * (m[4] * m[10] - m[6] * m[8]) +
                       m[2] * (m[4] * m[9] - m[5] * m[8]);
    require(det > 0.0, Errc::invalid_extrinsics, "rotation block must have det > 0");
  }
};

struct CalibrationBundle {
  CameraIntrinsics intrinsics;
  RigidTransform extrinsics;  // depth-sensor frame -> camera frame

  void validate() const {
    intrinsics.validate();
    extrinsics.validate();
  }
};

struct PairError {
  std::string pair_id;
  double translation_error = 0.0;  // meters
  double rotation_error = 0.0;     // degrees
};

// smallest camera-frame depth treated as "in front of the camera"
inline constexpr double k_min_projection_depth = 1e-6;

struct PixelProjection {
  int u = 0, v = 0;       // rounded pixel coordinates
  double z = 0.0;         // camera-frame depth in meters
  double u_precise = 0.0; // pre-rounding column
  double v_precise = 0.0; // pre-rounding row
};

// Pinhole projection of a depth-sensor-frame point. none = behind camera or
// outside the image after rounding.
inline std::optional<PixelProjection> project_point(const Vec3& p, const CalibrationBundle& calib) {
  const Vec3 c = calib.extrinsics.apply(p);
  if (c.z <= k_min_projection_depth) return std::nullopt;
  const auto& k = calib.intrinsics;
  PixelProjection out;
  out.u_precise = k.fx * c.x / c.z + k.cx;
  out.v_precise = k.fy * c.y / c.z + k.cy;
  out.z = c.z;
  out.u = static_cast<int>(round_half_away(out.u_precise));
  out.v = static_cast<int>(round_half_away(out.v_precise));
  if (out.u < 0 || out.u >= k.width || out.v < 0 || out.v >= k.height) return std::nullopt;
  return out;
}

// Iteratively drop the worst pair (largest error normalized by its threshold)
// until the surviving maxima are strictly below both thresholds. Survivors
// keep their input order.
inline std::vector<PairError> prune_calibration_pairs(std::vector<PairError> pairs,
                                                      double max_translation,
                                                      double max_rotation) {
  require(max_translation > 0.0 && max_rotation > 0.0, Errc::config_invalid,
          "pruning thresholds must be positive");
  std::vector<bool> removed(pairs.size(), false);
  std::size_t remaining = pairs.size();
  for (;;) {
    require(remaining > 0, Errc::empty_result, "all calibration pairs pruned");
    double max_t = 0.0, max_r = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (removed[i]) continue;
      max_t = std::max(max_t, pairs[i].translation_error);
      max_r = std::max(max_r, pairs[i].rotation_error);
    }
    if (max_t < max_translation && max_r < max_rotation) break;
    std::size_t worst = pairs.size();
    double worst_score = -1.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (removed[i]) continue;
      const double score = std::max(pairs[i].translation_error / max_translation,
                                    pairs[i].rotation_error / max_rotation);
      if (score > worst_score) {
        worst_score = score;
        worst = i;
      }
    }
    removed[worst] = true;
    --remaining;
  }
  std::vector<PairError> out;
  out.reserve(remaining);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (!removed[i]) out.push_back(std::move(pairs[i]));
  return out;
}

// Calibration JSON layout:
//   {"intrinsics": {"fx":..,"fy":..,"cx":..,"cy":..,"width":..,"height":..},
//    "extrinsic": [16 numbers, row-major]}
inline CalibrationBundle load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open calibration file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "calibration JSON parse error: " + std::string(e.what()));
  }
  CalibrationBundle bundle;
  try {
    const auto& ji = j.at("intrinsics");
    bundle.intrinsics.fx = ji.at("fx").get<double>();
    bundle.intrinsics.fy = ji.at("fy").get<double>();
    bundle.intrinsics.cx = ji.at("cx").get<double>();
    bundle.intrinsics.cy = ji.at("cy").get<double>();
    bundle.intrinsics.width = ji.at("width").get<int>();
    bundle.intrinsics.height = ji.at("height").get<int>();
    const auto& je = j.at("extrinsic");
    require(je.is_array() && je.size() == 16, Errc::malformed_file,
            "extrinsic must hold 16 numbers");
    for (int i = 0; i < 16; ++i) bundle.extrinsics.m[i] = je.at(i).get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "calibration JSON missing field: " + std::string(e.what()));
  }
  bundle.validate();
  return bundle;
}

inline void save_calibration(const CalibrationBundle& bundle, const std::filesystem::path& path) {
  bundle.validate();
  nlohmann::json j;
  j["intrinsics"] = {{"fx", bundle.intrinsics.fx},   {"fy", bundle.intrinsics.fy},
                     {"cx", bundle.intrinsics.cx},   {"cy", bundle.intrinsics.cy},
                     {"width", bundle.intrinsics.width}, {"height", bundle.intrinsics.height}};
  j["extrinsic"] = bundle.extrinsics.m;
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write calibration file: " + path.string());
  out << j.dump(2) << "\n";
}

// CSV with header: pair_id,translation_error_m,rotation_error_deg
inline std::vector<PairError> load_pair_errors_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open pair-error CSV: " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::malformed_file, "empty pair-error CSV");
  std::vector<PairError> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PairError p;
    std::string field;
    require(static_cast<bool>(std::getline(ss, p.pair_id, ',')), Errc::malformed_file,
            "bad CSV row: " + line);
    require(static_cast<bool>(std::getline(ss, field, ',')), Errc::malformed_file,
            "bad CSV row: " + line);
    p.translation_error = std::stod(field);
    require(static_cast<bool>(std::getline(ss, field, ',')), Errc::malformed_file,
            "bad CSV row: " + line);
    p.rotation_error = std::stod(field);
    require(p.translation_error >= 0.0 && p.rotation_error >= 0.0, Errc::malformed_file,
            "pair errors must be >= 0");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rgbdfuse::calib
