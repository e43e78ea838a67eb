// Shared helpers for the unit and acceptance suites.
#pragma once

#include <unistd.h>

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "rgbdfuse/calib.hpp"
#include "rgbdfuse/core.hpp"

namespace testutil {

// unique scratch directory, removed on destruction
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rgbdfuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline rgbdfuse::calib::CameraIntrinsics make_intrinsics(double fx, double fy, double cx,
                                                         double cy, int w, int h) {
  return rgbdfuse::calib::CameraIntrinsics{fx, fy, cx, cy, w, h};
}

inline std::array<double, 9> rotation_about_z(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

// Rodrigues' formula; the independent path for building test rotations
inline std::array<double, 9> rotation_axis_angle(double ax, double ay, double az, double theta) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double c = std::cos(theta), s = std::sin(theta), t = 1.0 - c;
  return {t * ax * ax + c,      t * ax * ay - s * az, t * ax * az + s * ay,
          t * ax * ay + s * az, t * ay * ay + c,      t * ay * az - s * ax,
          t * ax * az - s * ay, t * ay * az + s * ax, t * az * az + c};
}

inline rgbdfuse::calib::CalibrationBundle random_bundle(rgbdfuse::Rng& rng, int w = 320,
                                                        int h = 240) {
  rgbdfuse::calib::CalibrationBundle b;
  b.intrinsics = make_intrinsics(rng.uniform(200.0, 900.0), rng.uniform(200.0, 900.0),
                                 w / 2.0 + rng.uniform(-10.0, 10.0),
                                 h / 2.0 + rng.uniform(-10.0, 10.0), w, h);
  const auto r = rotation_axis_angle(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                     rng.uniform(-1.0, 1.0), rng.uniform(-0.3, 0.3));
  b.extrinsics = rgbdfuse::calib::RigidTransform::from_rotation_translation(
      r, {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)});
  return b;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace testutil
