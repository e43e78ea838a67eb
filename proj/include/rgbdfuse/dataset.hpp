// COCO JSON ingestion, deterministic splitting, class balance reporting, and
// variant dataset views.
#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/fusion.hpp"

namespace rgbdfuse::dataset {

// corner-form box in pixels, class index 0..8
struct Annotation {
  int class_id = 0;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

struct Example {
  std::string id;
  std::filesystem::path rgb_path;
  std::filesystem::path cloud_path;  // may be empty when RGB-D is precomputed
  std::filesystem::path rgbd_path;
  int width = 0, height = 0;
  std::vector<Annotation> annotations;
};

struct ClassCatalog {
  std::vector<std::string> names;

  static ClassCatalog standard() {
    return ClassCatalog{{"large_gear", "small_gear", "usbc_connector", "nut",
                         "waterproof_connector", "small_rect_pin", "large_rect_pin",
                         "small_round_pin", "large_round_pin"}};
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::size_t size() const { return names.size(); }
};

struct Dataset {
  std::vector<Example> examples;
  ClassCatalog catalog = ClassCatalog::standard();
  fusion::VariantKind variant = fusion::VariantKind::rgbd;
  std::filesystem::path media_root;

  const Example* find(const std::string& id) const {
    for (const Example& e : examples)
      if (e.id == id) return &e;
    return nullptr;
  }
};

struct DatasetSplit {
  std::vector<std::string> train, val, test;
};

// Media layout under the root: rgb/<id>.png, cloud/<id>.xyz|.xyzb,
// rgbd/<id>.png. An empty media root skips existence checks (label-only use).
inline Dataset load_coco(const std::filesystem::path& json_path,
                         const std::filesystem::path& media_root = {}) {
  std::ifstream in(json_path);
  require(in.good(), Errc::malformed_json, "cannot open COCO JSON: " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_json, "COCO parse error: " + std::string(e.what()));
  }
  require(j.contains("images") && j.contains("annotations") && j.contains("categories"),
          Errc::malformed_json, "COCO JSON must hold images/annotations/categories");

  Dataset ds;
  ds.media_root = media_root;
  try {
    // categories map by name onto the nine-class catalog
    std::map<std::int64_t, int> category_to_class;
    for (const auto& cat : j["categories"]) {
      const auto name = cat.at("name").get<std::string>();
      const int idx = ds.catalog.index_of(name);
      require(idx >= 0, Errc::unknown_category, "unknown category: " + name);
      category_to_class[cat.at("id").get<std::int64_t>()] = idx;
    }

    std::map<std::int64_t, std::size_t> image_to_example;
    for (const auto& img : j["images"]) {
      Example ex;
      const auto file_name = img.at("file_name").get<std::string>();
      ex.id = std::filesystem::path(file_name).stem().string();
      ex.width = img.at("width").get<int>();
      ex.height = img.at("height").get<int>();
      ex.rgb_path = media_root / file_name;
      ex.cloud_path = media_root / "cloud" / (ex.id + ".xyz");
      ex.rgbd_path = media_root / "rgbd" / (ex.id + ".png");
      if (!media_root.empty()) {
        require(std::filesystem::exists(ex.rgb_path), Errc::missing_media,
                "missing media: " + ex.rgb_path.string());
        if (!std::filesystem::exists(ex.cloud_path))
          ex.cloud_path = media_root / "cloud" / (ex.id + ".xyzb");
      }
      image_to_example[img.at("id").get<std::int64_t>()] = ds.examples.size();
      ds.examples.push_back(std::move(ex));
    }

    for (const auto& ann : j["annotations"]) {
      if (ann.contains("iscrowd") && ann["iscrowd"].get<int>() != 0)
        fail(Errc::malformed_json, "crowd annotations are not supported");
      const auto img_id = ann.at("image_id").get<std::int64_t>();
      const auto it = image_to_example.find(img_id);
      require(it != image_to_example.end(), Errc::malformed_json,
              "annotation references unknown image id " + std::to_string(img_id));
      Example& ex = ds.examples[it->second];
      const auto cat_it = category_to_class.find(ann.at("category_id").get<std::int64_t>());
      require(cat_it != category_to_class.end(), Errc::unknown_category,
              "annotation references unknown category id");
      const auto& b = ann.at("bbox");
      const double x = b.at(0).get<double>(), y = b.at(1).get<double>();
      const double w = b.at(2).get<double>(), h = b.at(3).get<double>();
      require(w > 0.0 && h > 0.0, Errc::degenerate_box, "annotation with non-positive size");
      Annotation a;
      a.class_id = cat_it->second;
      // corner form, clamped to the image
      a.x_min = std::clamp(x, 0.0, static_cast<double>(ex.width));
      a.y_min = std::clamp(y, 0.0, static_cast<double>(ex.height));
      a.x_max = std::clamp(x + w, 0.0, static_cast<double>(ex.width));
      a.y_max = std::clamp(y + h, 0.0, static_cast<double>(ex.height));
      require(a.x_min < a.x_max && a.y_min < a.y_max, Errc::degenerate_box,
              "annotation degenerate after clamping");
      ex.annotations.push_back(a);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_json, "COCO field error: " + std::string(e.what()));
  }
  return ds;
}

inline void save_coco(const Dataset& ds, const std::filesystem::path& path) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  j["annotations"] = nlohmann::json::array();
  j["categories"] = nlohmann::json::array();
  for (std::size_t c = 0; c < ds.catalog.size(); ++c)
    j["categories"].push_back(
        {{"id", static_cast<int>(c) + 1}, {"name", ds.catalog.names[c]}});
  std::int64_t ann_id = 1;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& ex = ds.examples[i];
    const auto img_id = static_cast<std::int64_t>(i) + 1;
    j["images"].push_back({{"id", img_id},
                           {"file_name", "rgb/" + ex.id + ".png"},
                           {"width", ex.width},
                           {"height", ex.height}});
    for (const Annotation& a : ex.annotations) {
      const double w = a.x_max - a.x_min;
      const double h = a.y_max - a.y_min;
      j["annotations"].push_back({{"id", ann_id++},
                                  {"image_id", img_id},
                                  {"category_id", a.class_id + 1},
                                  {"bbox", {a.x_min, a.y_min, w, h}},
                                  {"area", w * h},
                                  {"iscrowd", 0}});
    }
  }
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write COCO JSON: " + path.string());
  out << j.dump(2) << "\n";
}

// Seed-deterministic shuffle, then partition in order: train, val, test.
inline DatasetSplit split_dataset(const Dataset& ds, int n_train, int n_val, int n_test,
                                  std::uint64_t seed) {
  require(n_train >= 0 && n_val >= 0 && n_test >= 0, Errc::count_mismatch,
          "split counts must be non-negative");
  require(static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_val) +
                  static_cast<std::size_t>(n_test) ==
              ds.examples.size(),
          Errc::count_mismatch, "split counts must sum to the dataset size");
  std::vector<std::size_t> order(ds.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DatasetSplit split;
  std::size_t cursor = 0;
  for (int i = 0; i < n_train; ++i) split.train.push_back(ds.examples[order[cursor++]].id);
  for (int i = 0; i < n_val; ++i) split.val.push_back(ds.examples[order[cursor++]].id);
  for (int i = 0; i < n_test; ++i) split.test.push_back(ds.examples[order[cursor++]].id);
  return split;
}

inline void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  nlohmann::json j = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write split manifest: " + path.string());
  out << j.dump(2) << "\n";
}

inline DatasetSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open split manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetSplit split;
    split.train = j.at("train").get<std::vector<std::string>>();
    split.val = j.at("val").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    return split;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_file, "split manifest error: " + std::string(e.what()));
  }
}

struct ClassBalance {
  std::vector<std::int64_t> counts;  // per catalog class
  double min_max_ratio = 0.0;        // min count / max count; 0 when max is 0
};

inline ClassBalance class_balance(const Dataset& ds) {
  ClassBalance bal;
  bal.counts.assign(ds.catalog.size(), 0);
  for (const Example& ex : ds.examples)
    for (const Annotation& a : ex.annotations)
      ++bal.counts[static_cast<std::size_t>(a.class_id)];
  const auto mx = *std::max_element(bal.counts.begin(), bal.counts.end());
  const auto mn = *std::min_element(bal.counts.begin(), bal.counts.end());
  bal.min_max_ratio = mx > 0 ? static_cast<double>(mn) / static_cast<double>(mx) : 0.0;
  return bal;
}

// Same ids, labels, and media; only the channel selection downstream differs.
inline Dataset derive_variant_dataset(const Dataset& ds, fusion::VariantKind variant) {
  Dataset out = ds;
  out.variant = variant;
  return out;
}

}  // namespace rgbdfuse::dataset
