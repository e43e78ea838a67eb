// Command implementations behind the CLI binary. Every command returns a
// process exit code: 0 success, 2 validation error, 1 runtime failure.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/calib.hpp"
#include "rgbdfuse/dataset.hpp"
#include "rgbdfuse/depth.hpp"
#include "rgbdfuse/detect/checkpoint.hpp"
#include "rgbdfuse/evaluate.hpp"
#include "rgbdfuse/fusion.hpp"
#include "rgbdfuse/overlay.hpp"
#include "rgbdfuse/pipeline.hpp"
#include "rgbdfuse/synth.hpp"
#include "rgbdfuse/train.hpp"

namespace rgbdfuse::cli {

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::malformed_file:
    case Errc::malformed_json:
    case Errc::invalid_intrinsics:
    case Errc::invalid_extrinsics:
    case Errc::dimension_mismatch:
    case Errc::not_four_channel:
    case Errc::unknown_category:
    case Errc::missing_media:
    case Errc::degenerate_box:
    case Errc::count_mismatch:
    case Errc::config_invalid:
      return 2;
    default:
      return 1;
  }
}

template <typename Fn>
int run_command(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline void require_directory(const std::filesystem::path& p, const std::string& what) {
  require(std::filesystem::is_directory(p), Errc::config_invalid,
          what + " is not a directory: " + p.string());
}

// sorted stems of files in dir matching any of the extensions
inline std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                                     const std::vector<std::string>& exts) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- project: point clouds -> depth maps + dataset depth stats ---------------

struct ProjectOptions {
  std::filesystem::path calib;
  std::filesystem::path clouds;
  std::filesystem::path out;
};

inline int cmd_project(const ProjectOptions& opts) {
  return run_command([&] {
    const auto bundle = calib::load_calibration(opts.calib);
    require_directory(opts.clouds, "clouds path");
    std::filesystem::create_directories(opts.out);
    const auto files = list_files(opts.clouds, {".xyz", ".xyzb"});
    std::vector<depth::DepthMap> maps;
    maps.reserve(files.size());
    for (const auto& file : files) {
      const depth::PointCloud cloud = file.extension() == ".xyzb" ? depth::load_xyzb(file)
                                                                  : depth::load_xyz(file);
      // stats describe the persisted (mm-quantized) maps
      depth::DepthMap map =
          depth::quantize_to_mm(depth::point_cloud_to_depth_map(cloud, bundle));
      depth::save_depth_png16(map, opts.out / (file.stem().string() + ".png"));
      maps.push_back(std::move(map));
    }
    const depth::DepthStats stats = depth::compute_depth_stats(maps);
    depth::save_depth_stats(stats, opts.out / "depth_stats.json");
    std::cerr << "projected " << files.size() << " clouds; d_min=" << stats.d_min
              << " d_max=" << stats.d_max << "\n";
  });
}

// --- pack: RGB + depth maps -> RGB-D PNGs ------------------------------------

struct PackOptions {
  std::filesystem::path rgb_dir;
  std::filesystem::path depth_dir;
  std::filesystem::path stats;
  std::filesystem::path out;
};

inline int cmd_pack(const PackOptions& opts) {
  return run_command([&] {
    require_directory(opts.rgb_dir, "rgb path");
    require_directory(opts.depth_dir, "depth path");
    const depth::DepthStats stats = depth::load_depth_stats(opts.stats);
    std::filesystem::create_directories(opts.out);
    const auto files = list_files(opts.depth_dir, {".png"});
    for (const auto& file : files) {
      const auto rgb_path = opts.rgb_dir / file.filename();
      require(std::filesystem::exists(rgb_path), Errc::missing_media,
              "no RGB image for depth map: " + rgb_path.string());
      const auto rgb = io::read_png8(rgb_path);
      require(rgb.channels == 3, Errc::dimension_mismatch,
              "expected a 3-channel RGB PNG: " + rgb_path.string());
      const depth::DepthMap map = depth::load_depth_png16(file);
      const auto channel = depth::depth_map_to_channel(map, stats);
      const fusion::RgbdImage packed = fusion::pack_rgbd(rgb, channel);
      fusion::write_rgbd(packed, opts.out / file.filename());
    }
    std::cerr << "packed " << files.size() << " RGB-D images\n";
  });
}

// --- synth: fixture dataset generation ---------------------------------------

struct SynthOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  int count = 0;
};

inline int cmd_synth(const SynthOptions& opts) {
  return run_command([&] {
    const synth::SceneConfig config = synth::load_scene_config(opts.config);
    require(opts.count >= 0, Errc::config_invalid, "scene count must be >= 0");
    const auto generated = synth::generate_dataset(opts.seed, config, opts.count, opts.out);
    std::cerr << "generated " << generated.dataset.examples.size() << " scenes with "
              << generated.manifest["total_annotations"] << " annotations\n";
  });
}

// --- split: deterministic train/val/test manifest -----------------------------

struct SplitOptions {
  std::filesystem::path coco;
  std::filesystem::path out;  // defaults to split.json next to the COCO file
  int n_train = 0, n_val = 0, n_test = 0;
  std::uint64_t seed = 0;
};

inline int cmd_split(const SplitOptions& opts) {
  return run_command([&] {
    const dataset::Dataset ds = dataset::load_coco(opts.coco);  // labels only
    const auto split = dataset::split_dataset(ds, opts.n_train, opts.n_val, opts.n_test,
                                              opts.seed);
    const auto out_path = opts.out.empty() ? opts.coco.parent_path() / "split.json" : opts.out;
    dataset::save_split(split, out_path);
    std::cerr << "split " << ds.examples.size() << " examples into " << split.train.size() << "/"
              << split.val.size() << "/" << split.test.size() << "\n";
  });
}

// --- train / eval / report ----------------------------------------------------

struct PipelineFileConfig {
  train::TrainConfig train_cfg;
  detect::ArchConfig arch;
  pipeline::EvalOptions eval_opts;
};

inline pipeline::EvalOptions eval_options_from_json(const nlohmann::json& j) {
  pipeline::EvalOptions opts;
  try {
    if (j.contains("detection_score_threshold"))
      opts.detection_score_threshold = j["detection_score_threshold"].get<double>();
    if (j.contains("nms_threshold")) opts.nms_threshold = j["nms_threshold"].get<double>();
    if (j.contains("max_detections")) opts.max_detections = j["max_detections"].get<int>();
    if (j.contains("iou_threshold")) opts.iou_threshold = j["iou_threshold"].get<double>();
    if (j.contains("precision_score_threshold"))
      opts.precision_score_threshold = j["precision_score_threshold"].get<double>();
    if (j.contains("ap_points")) opts.ap_points = j["ap_points"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_json, "eval options error: " + std::string(e.what()));
  }
  return opts;
}

// {"train": {...}, "arch": {...}, "eval": {...}}; every section optional
inline PipelineFileConfig load_pipeline_config(const std::filesystem::path& path) {
  PipelineFileConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  require(in.good(), Errc::config_invalid, "cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_json, "config parse error: " + std::string(e.what()));
  }
  if (j.contains("train")) cfg.train_cfg = train::TrainConfig::from_json(j["train"]);
  if (j.contains("arch")) cfg.arch = detect::ArchConfig::from_json(j["arch"]);
  if (j.contains("eval")) cfg.eval_opts = eval_options_from_json(j["eval"]);
  return cfg;
}

struct TrainOptions {
  std::filesystem::path data_root;  // coco.json + split.json + rgbd/ media
  std::filesystem::path config;     // optional pipeline config JSON
  std::filesystem::path out;
  std::string variant = "all";  // rgb | depth | rgbd | all
  int runs = 1;
};

inline std::vector<fusion::VariantKind> variants_for(const std::string& name) {
  if (name == "all")
    return {fusion::VariantKind::depth_only, fusion::VariantKind::rgb_only,
            fusion::VariantKind::rgbd};
  return {fusion::variant_from_name(name)};
}

inline int cmd_train(const TrainOptions& opts) {
  return run_command([&] {
    require_directory(opts.data_root, "data root");
    const auto cfg = load_pipeline_config(opts.config);
    require(opts.runs >= 1, Errc::config_invalid, "--runs must be >= 1");
    const auto variants = variants_for(opts.variant);

    const dataset::Dataset ds = dataset::load_coco(opts.data_root / "coco.json", opts.data_root);
    const dataset::DatasetSplit split = dataset::load_split(opts.data_root / "split.json");
    for (const auto& ids : {split.train, split.val, split.test})
      for (const std::string& id : ids) {
        const dataset::Example* ex = ds.find(id);
        require(ex != nullptr, Errc::missing_media, "split references unknown id: " + id);
        require(std::filesystem::exists(ex->rgbd_path), Errc::missing_media,
                "missing RGB-D media (run pack first): " + ex->rgbd_path.string());
      }

    std::filesystem::create_directories(opts.out);
    const fusion::ChannelStats stats = pipeline::train_split_channel_stats(ds, split.train);
    fusion::save_channel_stats(stats, opts.out / "channel_stats.json");

    for (const fusion::VariantKind variant : variants) {
      const std::string vname = fusion::variant_name(variant);
      const auto variant_ds = dataset::derive_variant_dataset(ds, variant);
      const auto train_split = pipeline::prepare_split(variant_ds, split.train, variant, stats);
      const auto val_split = pipeline::prepare_split(variant_ds, split.val, variant, stats);
      const auto test_split = pipeline::prepare_split(variant_ds, split.test, variant, stats);
      const auto out_dir = opts.out / vname;
      std::filesystem::create_directories(out_dir);

      int run_index = 0;
      const auto metrics = train::run_repeated(
          cfg.train_cfg.seed, opts.runs, [&](std::uint64_t run_seed) -> evaluate::RunMetrics {
            auto artifacts = pipeline::run_single(variant, cfg.arch, cfg.train_cfg, run_seed,
                                                  train_split, val_split, test_split,
                                                  cfg.eval_opts);
            const auto run_dir = out_dir / ("run_" + std::to_string(run_index));
            std::filesystem::create_directories(run_dir);
            detect::save_checkpoint(artifacts.best_model, run_dir / "checkpoint.ckpt", stats);
            train::save_history_csv(artifacts.history, run_dir / "history.csv");
            train::save_history_json(artifacts.history, run_dir / "history.json");
            {
              nlohmann::json jm = {{"map_50", artifacts.test_metrics.map_50},
                                   {"mean_precision", artifacts.test_metrics.mean_precision},
                                   {"best_epoch", artifacts.history.best_epoch},
                                   {"epochs_run", artifacts.history.epochs.size()},
                                   {"seed", run_seed}};
              std::ofstream jf(run_dir / "metrics.json");
              require(jf.good(), Errc::io_failure, "cannot write run metrics");
              jf << jm.dump(2) << "\n";
            }
            std::cerr << vname << " run " << run_index << ": test mAP@0.5="
                      << artifacts.test_metrics.map_50
                      << " meanP=" << artifacts.test_metrics.mean_precision << " (best epoch "
                      << artifacts.history.best_epoch << ")\n";
            ++run_index;
            return artifacts.test_metrics;
          });

      nlohmann::json jr;
      jr["variant"] = vname;
      jr["runs"] = nlohmann::json::array();
      for (const auto& m : metrics)
        jr["runs"].push_back({{"map_50", m.map_50}, {"mean_precision", m.mean_precision}});
      std::ofstream rf(out_dir / "runs.json");
      require(rf.good(), Errc::io_failure, "cannot write runs.json");
      rf << jr.dump(2) << "\n";
    }
  });
}

struct EvalCommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  std::filesystem::path out;  // optional directory for report + detections
  std::string split = "test";
  pipeline::EvalOptions eval_opts;
};

inline int cmd_eval(const EvalCommandOptions& opts) {
  return run_command([&] {
    require_directory(opts.data_root, "data root");
    auto loaded = detect::load_checkpoint(opts.checkpoint);
    require(loaded.channel_stats.has_value(), Errc::config_invalid,
            "checkpoint has no embedded channel stats");
    const dataset::Dataset ds = dataset::load_coco(opts.data_root / "coco.json", opts.data_root);
    const dataset::DatasetSplit split = dataset::load_split(opts.data_root / "split.json");
    const std::vector<std::string>* ids = nullptr;
    if (opts.split == "train")
      ids = &split.train;
    else if (opts.split == "val")
      ids = &split.val;
    else if (opts.split == "test")
      ids = &split.test;
    require(ids != nullptr, Errc::config_invalid, "split must be train, val, or test");

    const auto prepared =
        pipeline::prepare_split(ds, *ids, loaded.model.variant, *loaded.channel_stats);
    const auto report = pipeline::evaluate_model(loaded.model, prepared,
                                                 loaded.model.arch.num_classes, opts.eval_opts);
    nlohmann::json jr;
    jr["split"] = opts.split;
    jr["variant"] = fusion::variant_name(loaded.model.variant);
    jr["map_50"] = report.map_50;
    jr["mean_precision"] = report.mean_precision;
    jr["per_class"] = nlohmann::json::object();
    for (const auto& [cls, metrics] : report.per_class)
      jr["per_class"][ds.catalog.names[static_cast<std::size_t>(cls)]] = {
          {"ap", metrics.ap},
          {"gt_count", metrics.gt_count},
          {"precision_at_threshold", metrics.precision_at_threshold}};
    std::cout << jr.dump(2) << "\n";
    if (!opts.out.empty()) {
      std::filesystem::create_directories(opts.out);
      std::ofstream jf(opts.out / "report.json");
      require(jf.good(), Errc::io_failure, "cannot write report");
      jf << jr.dump(2) << "\n";
      std::vector<evaluate::DetectionRecord> records;
      for (const auto& ex : prepared) {
        const auto dets = detect::predict(loaded.model, ex.input,
                                          opts.eval_opts.detection_score_threshold,
                                          opts.eval_opts.nms_threshold,
                                          opts.eval_opts.max_detections);
        for (const auto& d : dets)
          records.push_back(evaluate::DetectionRecord{ex.id, d.class_id, d.bbox, d.score});
      }
      evaluate::save_detections_coco(records, opts.out / "detections.json");
    }
  });
}

struct ReportOptions {
  std::filesystem::path runs_dir;
  std::filesystem::path out;  // defaults to runs_dir
};

inline int cmd_report(const ReportOptions& opts) {
  return run_command([&] {
    require_directory(opts.runs_dir, "runs directory");
    // canonical row order when present: depth, rgb, rgbd
    std::vector<std::pair<std::string, evaluate::RunAggregate>> rows;
    std::vector<std::pair<std::string, std::filesystem::path>> found;
    for (const auto& entry : std::filesystem::directory_iterator(opts.runs_dir)) {
      if (!entry.is_directory()) continue;
      const auto runs_file = entry.path() / "runs.json";
      if (std::filesystem::exists(runs_file))
        found.emplace_back(entry.path().filename().string(), runs_file);
    }
    std::sort(found.begin(), found.end());
    const std::vector<std::string> canonical{"depth", "rgb", "rgbd"};
    std::stable_sort(found.begin(), found.end(), [&](const auto& a, const auto& b) {
      const auto rank = [&](const std::string& name) {
        const auto it = std::find(canonical.begin(), canonical.end(), name);
        return it == canonical.end() ? canonical.size() : static_cast<std::size_t>(
                                                              it - canonical.begin());
      };
      return rank(a.first) < rank(b.first);
    });
    for (const auto& [name, path] : found) {
      std::ifstream in(path);
      nlohmann::json j;
      try {
        in >> j;
        std::vector<evaluate::RunMetrics> metrics;
        for (const auto& run : j.at("runs"))
          metrics.push_back(evaluate::RunMetrics{run.at("map_50").get<double>(),
                                                 run.at("mean_precision").get<double>()});
        rows.emplace_back(j.at("variant").get<std::string>(),
                          evaluate::aggregate_runs(metrics));
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::malformed_json, "runs.json error in " + path.string() + ": " + e.what());
      }
    }
    require(rows.size() >= 2, Errc::config_invalid,
            "need runs.json for at least two variants under " + opts.runs_dir.string());
    const auto report = evaluate::comparison_report(rows);
    const auto out_dir = opts.out.empty() ? opts.runs_dir : opts.out;
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream f(out_dir / "report.md");
      require(f.good(), Errc::io_failure, "cannot write report.md");
      f << report.to_markdown();
    }
    {
      std::ofstream f(out_dir / "report.csv");
      require(f.good(), Errc::io_failure, "cannot write report.csv");
      f << report.to_csv();
    }
    {
      std::ofstream f(out_dir / "report.json");
      require(f.good(), Errc::io_failure, "cannot write report.json");
      f << report.to_json().dump(2) << "\n";
    }
    std::cout << report.to_markdown();
  });
}

// --- overlay: render detections onto an image ---------------------------------

struct OverlayOptions {
  std::filesystem::path image;
  std::filesystem::path detections;
  std::filesystem::path out;
  double score_min = 0.0;
};

inline int cmd_overlay(const OverlayOptions& opts) {
  return run_command([&] {
    require(std::filesystem::exists(opts.image), Errc::missing_media,
            "image not found: " + opts.image.string());
    const auto records = evaluate::load_detections_coco(opts.detections);
    std::vector<detect::Detection> dets;
    for (const auto& r : records)
      if (r.score >= opts.score_min) dets.push_back(detect::Detection{r.bbox, r.class_id, r.score});
    if (dets.empty()) {
      // contract: an empty detection set leaves the image bytes untouched
      std::filesystem::copy_file(opts.image, opts.out,
                                 std::filesystem::copy_options::overwrite_existing);
      return;
    }
    auto img = io::read_png8(opts.image);
    require(img.channels == 3, Errc::dimension_mismatch, "overlay expects a 3-channel PNG");
    overlay::draw_detections(img, dets);
    io::write_png8(img, opts.out);
  });
}

}  // namespace rgbdfuse::cli
