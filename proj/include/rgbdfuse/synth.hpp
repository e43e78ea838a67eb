// Synthetic fixture scenes: flat-shaded boxes and cylinders standing on a
// plane, rendered through the fixture calibration, with an exact point cloud
// and analytically projected bounding-box annotations.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/calib.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/dataset.hpp"
#include "rgbdfuse/depth.hpp"
#include "rgbdfuse/image_io.hpp"

namespace rgbdfuse::synth {

enum class Shape { box, cylinder };

inline std::string shape_name(Shape s) { return s == Shape::box ? "box" : "cylinder"; }
inline Shape shape_from_name(const std::string& name) {
  if (name == "box") return Shape::box;
  if (name == "cylinder") return Shape::cylinder;
  fail(Errc::config_invalid, "unknown shape: " + name);
}

struct Range {
  double lo = 0.0, hi = 0.0;
};

struct ObjectTemplate {
  int class_id = 0;
  Shape shape = Shape::box;
  std::array<std::uint8_t, 3> color{200, 200, 200};
  Range size_x{0.05, 0.08};   // box footprint x (meters)
  Range size_y{0.05, 0.08};   // box footprint y
  Range radius{0.02, 0.04};   // cylinder
  Range height{0.02, 0.06};
  int points = -1;  // -1: use the scene-level points_per_object
};

struct SceneConfig {
  calib::CalibrationBundle camera;
  double plane_depth = 1.1;  // camera-frame z of the table plane, meters
  std::array<std::uint8_t, 3> background_color{70, 75, 80};
  int objects_min = 2;
  int objects_max = 4;
  int points_per_object = 150;
  int plane_points = 500;
  double side_shade = 0.78;  // brightness factor for lateral faces
  double margin_px = 4.0;    // projected boxes stay this far inside the image
  double min_gap_px = 3.0;   // projected boxes keep this separation
  std::vector<ObjectTemplate> templates;

  void validate() const {
    camera.validate();
    require(plane_depth > 0.0, Errc::config_invalid, "plane depth must be positive");
    require(objects_min >= 0 && objects_max >= objects_min, Errc::config_invalid,
            "invalid object count range");
    require(points_per_object >= 0 && plane_points >= 0, Errc::config_invalid,
            "point budgets must be >= 0");
    require(side_shade > 0.0 && side_shade <= 1.0, Errc::config_invalid,
            "side shade must be in (0,1]");
    require(objects_max == 0 || !templates.empty(), Errc::config_invalid,
            "object templates required when objects are requested");
    for (const ObjectTemplate& t : templates) {
      require(t.class_id >= 0 && t.class_id < 9, Errc::config_invalid,
              "template class_id outside 0..8");
      require(t.height.lo > 0.0 && t.height.hi >= t.height.lo, Errc::config_invalid,
              "template height range invalid");
    }
  }
};

struct PlacedObject {
  int class_id = 0;
  Shape shape = Shape::box;
  std::array<std::uint8_t, 3> color{};
  double center_x = 0.0, center_y = 0.0;  // camera frame, on the plane
  double half_x = 0.0, half_y = 0.0;      // box half extents; radius for cylinders
  double height = 0.0;
  int points = 0;
  dataset::Annotation annotation;  // exact projected bounding box
};

struct SceneData {
  ImageGrid<std::uint8_t> rgb;
  depth::PointCloud cloud;  // depth-sensor frame
  std::vector<dataset::Annotation> annotations;
  std::vector<PlacedObject> objects;
};

namespace detail {

struct ProjectedBounds {
  double u_min, v_min, u_max, v_max;
};

// exact silhouette bounds of a convex solid: extremes of the projected
// vertices (box) or of the two projected discs (cylinder)
inline ProjectedBounds project_object_bounds(const PlacedObject& obj,
                                             const calib::CameraIntrinsics& k,
                                             double plane_depth) {
  const double z_top = plane_depth - obj.height;
  const double z_bot = plane_depth;
  double u_min = std::numeric_limits<double>::infinity(), u_max = -u_min;
  double v_min = u_min, v_max = -u_min;
  const auto take = [&](double x, double y, double z) {
    const double u = k.fx * x / z + k.cx;
    const double v = k.fy * y / z + k.cy;
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
  };
  for (double z : {z_top, z_bot}) {
    if (obj.shape == Shape::box) {
      for (double x : {obj.center_x - obj.half_x, obj.center_x + obj.half_x})
        for (double y : {obj.center_y - obj.half_y, obj.center_y + obj.half_y}) take(x, y, z);
    } else {
      for (double x : {obj.center_x - obj.half_x, obj.center_x + obj.half_x})
        take(x, obj.center_y, z);
      for (double y : {obj.center_y - obj.half_y, obj.center_y + obj.half_y})
        take(obj.center_x, y, z);
    }
  }
  return ProjectedBounds{u_min, v_min, u_max, v_max};
}

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  bool top_face = false;
};

// ray from the camera origin through direction (dx, dy, 1); t equals depth z
inline std::optional<RayHit> intersect_object(const PlacedObject& obj, double dx, double dy,
                                              double plane_depth) {
  const double z_top = plane_depth - obj.height;
  const double z_bot = plane_depth;
  if (obj.shape == Shape::box) {
    const double x0 = obj.center_x - obj.half_x, x1 = obj.center_x + obj.half_x;
    const double y0 = obj.center_y - obj.half_y, y1 = obj.center_y + obj.half_y;
    double t_near = z_top, t_far = z_bot;  // z slab
    bool near_is_top = true;
    for (const auto& [d, lo, hi] : {std::tuple{dx, x0, x1}, std::tuple{dy, y0, y1}}) {
      if (d == 0.0) {
        if (lo > 0.0 || hi < 0.0) return std::nullopt;
        continue;
      }
      double t0 = lo / d, t1 = hi / d;
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > t_near) {
        t_near = t0;
        near_is_top = false;
      }
      t_far = std::min(t_far, t1);
    }
    if (t_near > t_far || t_far <= 0.0) return std::nullopt;
    return RayHit{t_near, near_is_top};
  }
  // cylinder: top cap, then lateral surface
  const double r2 = obj.half_x * obj.half_x;
  {
    const double px = dx * z_top - obj.center_x;
    const double py = dy * z_top - obj.center_y;
    if (px * px + py * py <= r2) return RayHit{z_top, true};
  }
  const double a = dx * dx + dy * dy;
  if (a > 0.0) {
    const double b = -2.0 * (dx * obj.center_x + dy * obj.center_y);
    const double c = obj.center_x * obj.center_x + obj.center_y * obj.center_y - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double t1 = (-b - std::sqrt(disc)) / (2.0 * a);
      if (t1 >= z_top && t1 <= z_bot) return RayHit{t1, false};
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Deterministic under seed: same seed yields byte-identical RGB, cloud, and
// annotations. Objects that cannot be placed inside the margins after 200
// tries are skipped.
inline SceneData generate_synthetic_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  const calib::CameraIntrinsics& k = config.camera.intrinsics;
  Rng rng(seed);
  SceneData scene;
  scene.rgb = ImageGrid<std::uint8_t>(k.width, k.height, 3);

  // visible plane extent in camera coordinates
  const double plane_x_lo = (0.0 - k.cx) * config.plane_depth / k.fx;
  const double plane_x_hi = (k.width - 1.0 - k.cx) * config.plane_depth / k.fx;
  const double plane_y_lo = (0.0 - k.cy) * config.plane_depth / k.fy;
  const double plane_y_hi = (k.height - 1.0 - k.cy) * config.plane_depth / k.fy;

  const int n_objects =
      static_cast<int>(rng.uniform_int(config.objects_min, config.objects_max));
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const auto& tmpl = config.templates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(config.templates.size()) - 1))];
      PlacedObject obj;
      obj.class_id = tmpl.class_id;
      obj.shape = tmpl.shape;
      obj.color = tmpl.color;
      obj.height = rng.uniform(tmpl.height.lo, tmpl.height.hi);
      if (tmpl.shape == Shape::box) {
        obj.half_x = rng.uniform(tmpl.size_x.lo, tmpl.size_x.hi) / 2.0;
        obj.half_y = rng.uniform(tmpl.size_y.lo, tmpl.size_y.hi) / 2.0;
      } else {
        obj.half_x = obj.half_y = rng.uniform(tmpl.radius.lo, tmpl.radius.hi);
      }
      obj.points = tmpl.points >= 0 ? tmpl.points : config.points_per_object;
      obj.center_x = rng.uniform(plane_x_lo + obj.half_x, plane_x_hi - obj.half_x);
      obj.center_y = rng.uniform(plane_y_lo + obj.half_y, plane_y_hi - obj.half_y);

      const auto b = detail::project_object_bounds(obj, k, config.plane_depth);
      if (b.u_min < config.margin_px || b.v_min < config.margin_px ||
          b.u_max > k.width - config.margin_px || b.v_max > k.height - config.margin_px)
        continue;
      bool overlaps = false;
      for (const PlacedObject& other : scene.objects) {
        const auto& oa = other.annotation;
        if (b.u_min < oa.x_max + config.min_gap_px && b.u_max > oa.x_min - config.min_gap_px &&
            b.v_min < oa.y_max + config.min_gap_px && b.v_max > oa.y_min - config.min_gap_px) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      obj.annotation = dataset::Annotation{obj.class_id, b.u_min, b.v_min, b.u_max, b.v_max};
      scene.objects.push_back(obj);
      placed = true;
    }
  }
  for (const PlacedObject& obj : scene.objects) scene.annotations.push_back(obj.annotation);

  // flat-shaded render: nearest hit per pixel ray, plane as backdrop
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const double dx = (u - k.cx) / k.fx;
      const double dy = (v - k.cy) / k.fy;
      double best_t = config.plane_depth;
      const PlacedObject* best_obj = nullptr;
      bool best_top = false;
      for (const PlacedObject& obj : scene.objects) {
        const auto hit = detail::intersect_object(obj, dx, dy, config.plane_depth);
        if (hit && hit->t < best_t) {
          best_t = hit->t;
          best_obj = &obj;
          best_top = hit->top_face;
        }
      }
      for (int c = 0; c < 3; ++c) {
        double value = best_obj ? best_obj->color[static_cast<std::size_t>(c)]
                                : config.background_color[static_cast<std::size_t>(c)];
        if (best_obj && !best_top) value *= config.side_shade;
        scene.rgb.at(u, v, c) = static_cast<std::uint8_t>(round_half_away(value));
      }
    }

  // point cloud: per-object surface samples, then plane backdrop samples;
  // emitted in the depth-sensor frame
  const calib::RigidTransform cam_to_sensor = config.camera.extrinsics.inverse();
  const auto emit = [&](double x, double y, double z) {
    scene.cloud.points.push_back(cam_to_sensor.apply(Vec3{x, y, z}));
  };
  for (const PlacedObject& obj : scene.objects) {
    const double z_top = config.plane_depth - obj.height;
    const int n_top = static_cast<int>(round_half_away(obj.points * 0.6));
    for (int p = 0; p < obj.points; ++p) {
      if (p < n_top) {
        if (obj.shape == Shape::box) {
          emit(rng.uniform(obj.center_x - obj.half_x, obj.center_x + obj.half_x),
               rng.uniform(obj.center_y - obj.half_y, obj.center_y + obj.half_y), z_top);
        } else {
          const double rr = obj.half_x * std::sqrt(rng.uniform01());
          const double th = rng.uniform(0.0, 2.0 * 3.141592653589793238462643383279502884);
          emit(obj.center_x + rr * std::cos(th), obj.center_y + rr * std::sin(th), z_top);
        }
      } else {
        const double z = rng.uniform(z_top, config.plane_depth);
        if (obj.shape == Shape::box) {
          switch ((p - n_top) % 4) {
            case 0:
              emit(obj.center_x - obj.half_x,
                   rng.uniform(obj.center_y - obj.half_y, obj.center_y + obj.half_y), z);
              break;
            case 1:
              emit(obj.center_x + obj.half_x,
                   rng.uniform(obj.center_y - obj.half_y, obj.center_y + obj.half_y), z);
              break;
            case 2:
              emit(rng.uniform(obj.center_x - obj.half_x, obj.center_x + obj.half_x),
                   obj.center_y - obj.half_y, z);
              break;
            default:
              emit(rng.uniform(obj.center_x - obj.half_x, obj.center_x + obj.half_x),
                   obj.center_y + obj.half_y, z);
              break;
          }
        } else {
          const double th = rng.uniform(0.0, 2.0 * 3.141592653589793238462643383279502884);
          emit(obj.center_x + obj.half_x * std::cos(th), obj.center_y + obj.half_x * std::sin(th),
               z);
        }
      }
    }
  }
  for (int p = 0; p < config.plane_points; ++p)
    emit(rng.uniform(plane_x_lo, plane_x_hi), rng.uniform(plane_y_lo, plane_y_hi),
         config.plane_depth);
  return scene;
}

// --- config and dataset-level generation -------------------------------------

inline Range range_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, Errc::config_invalid, "range must hold [lo, hi]");
  Range r{j.at(0).get<double>(), j.at(1).get<double>()};
  require(r.hi >= r.lo, Errc::config_invalid, "range hi must be >= lo");
  return r;
}

inline SceneConfig load_scene_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::config_invalid, "cannot open scene config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_invalid, "scene config parse error: " + std::string(e.what()));
  }
  SceneConfig cfg;
  try {
    const auto& jc = j.at("calibration");
    const auto& ji = jc.at("intrinsics");
    cfg.camera.intrinsics = calib::CameraIntrinsics{
        ji.at("fx").get<double>(), ji.at("fy").get<double>(), ji.at("cx").get<double>(),
        ji.at("cy").get<double>(), ji.at("width").get<int>(),  ji.at("height").get<int>()};
    const auto& je = jc.at("extrinsic");
    for (int i = 0; i < 16; ++i) cfg.camera.extrinsics.m[static_cast<std::size_t>(i)] =
        je.at(i).get<double>();
    cfg.plane_depth = j.at("plane_depth_m").get<double>();
    if (j.contains("background_color"))
      for (int c = 0; c < 3; ++c)
        cfg.background_color[static_cast<std::size_t>(c)] =
            j["background_color"].at(c).get<std::uint8_t>();
    cfg.objects_min = j.at("objects_min").get<int>();
    cfg.objects_max = j.at("objects_max").get<int>();
    if (j.contains("points_per_object")) cfg.points_per_object =
        j["points_per_object"].get<int>();
    if (j.contains("plane_points")) cfg.plane_points = j["plane_points"].get<int>();
    if (j.contains("side_shade")) cfg.side_shade = j["side_shade"].get<double>();
    if (j.contains("margin_px")) cfg.margin_px = j["margin_px"].get<double>();
    if (j.contains("min_gap_px")) cfg.min_gap_px = j["min_gap_px"].get<double>();
    for (const auto& jt : j.at("templates")) {
      ObjectTemplate t;
      t.class_id = jt.at("class_id").get<int>();
      t.shape = shape_from_name(jt.at("shape").get<std::string>());
      for (int c = 0; c < 3; ++c)
        t.color[static_cast<std::size_t>(c)] = jt.at("color").at(c).get<std::uint8_t>();
      if (t.shape == Shape::box) {
        t.size_x = range_from_json(jt.at("size_x_m"));
        t.size_y = range_from_json(jt.at("size_y_m"));
      } else {
        t.radius = range_from_json(jt.at("radius_m"));
      }
      t.height = range_from_json(jt.at("height_m"));
      if (jt.contains("points")) t.points = jt["points"].get<int>();
      cfg.templates.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_invalid, "scene config field error: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

struct GeneratedDataset {
  dataset::Dataset dataset;
  nlohmann::json manifest;
};

// Writes <out>/rgb/<id>.png, <out>/cloud/<id>.xyz, coco.json, manifest.json,
// and calibration.json. Per-scene seeds derive from hash(seed, index).
inline GeneratedDataset generate_dataset(std::uint64_t seed, const SceneConfig& config,
                                         int n_scenes, const std::filesystem::path& out_root) {
  config.validate();
  require(n_scenes >= 0, Errc::config_invalid, "scene count must be >= 0");
  std::filesystem::create_directories(out_root / "rgb");
  std::filesystem::create_directories(out_root / "cloud");

  GeneratedDataset out;
  out.dataset.media_root = out_root;
  out.manifest["seed"] = seed;
  out.manifest["scenes"] = nlohmann::json::array();
  std::int64_t total_annotations = 0;

  for (int i = 0; i < n_scenes; ++i) {
    const std::uint64_t scene_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    const SceneData scene = generate_synthetic_scene(scene_seed, config);
    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "%04d", i);
    const std::string id(id_buf);
    io::write_png8(scene.rgb, out_root / "rgb" / (id + ".png"));
    depth::save_xyz(scene.cloud, out_root / "cloud" / (id + ".xyz"));

    dataset::Example ex;
    ex.id = id;
    ex.rgb_path = out_root / "rgb" / (id + ".png");
    ex.cloud_path = out_root / "cloud" / (id + ".xyz");
    ex.rgbd_path = out_root / "rgbd" / (id + ".png");
    ex.width = config.camera.intrinsics.width;
    ex.height = config.camera.intrinsics.height;
    ex.annotations = scene.annotations;
    out.dataset.examples.push_back(std::move(ex));

    nlohmann::json js;
    js["id"] = id;
    js["seed"] = scene_seed;
    js["objects"] = nlohmann::json::array();
    for (const PlacedObject& obj : scene.objects) {
      js["objects"].push_back(
          {{"class_id", obj.class_id},
           {"shape", shape_name(obj.shape)},
           {"center", {obj.center_x, obj.center_y}},
           {"half_extents", {obj.half_x, obj.half_y}},
           {"height", obj.height},
           {"points", obj.points},
           {"bbox", {obj.annotation.x_min, obj.annotation.y_min, obj.annotation.x_max,
                     obj.annotation.y_max}}});
    }
    js["annotation_count"] = scene.annotations.size();
    total_annotations += static_cast<std::int64_t>(scene.annotations.size());
    out.manifest["scenes"].push_back(std::move(js));
  }
  out.manifest["total_annotations"] = total_annotations;

  dataset::save_coco(out.dataset, out_root / "coco.json");
  {
    std::ofstream mf(out_root / "manifest.json");
    require(mf.good(), Errc::io_failure, "cannot write manifest");
    mf << out.manifest.dump(2) << "\n";
  }
  calib::save_calibration(config.camera, out_root / "calibration.json");
  return out;
}

}  // namespace rgbdfuse::synth
