// Wiring between the dataset, fusion, detector, and evaluation layers:
// prepared tensors per split, train-split channel statistics, and the
// model-evaluation loop used for validation and testing.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rgbdfuse/dataset.hpp"
#include "rgbdfuse/detect/model.hpp"
#include "rgbdfuse/evaluate.hpp"
#include "rgbdfuse/fusion.hpp"
#include "rgbdfuse/train.hpp"

namespace rgbdfuse::pipeline {

struct EvalOptions {
  double detection_score_threshold = 0.05;  // low threshold when gathering for AP
  double nms_threshold = 0.5;
  int max_detections = 100;
  double iou_threshold = 0.5;
  double precision_score_threshold = 0.5;
  int ap_points = 101;
};

struct PreparedExample {
  std::string id;
  detect::Tensor input;
  detect::ImageTargets targets;
};

inline detect::ImageTargets targets_from_annotations(const std::vector<dataset::Annotation>& anns) {
  detect::ImageTargets t;
  for (const dataset::Annotation& a : anns) {
    t.boxes.push_back(detect::Box{a.x_min, a.y_min, a.x_max, a.y_max});
    t.classes.push_back(a.class_id);
  }
  return t;
}

inline PreparedExample prepare_example(const dataset::Example& ex, fusion::VariantKind variant,
                                       const fusion::ChannelStats& stats) {
  const fusion::RgbdImage img = fusion::read_rgbd(ex.rgbd_path);
  const auto channels = fusion::select_channels(img, variant);
  const auto [mean, std_dev] = fusion::restrict_stats(stats, variant);
  PreparedExample out;
  out.id = ex.id;
  out.input = detect::to_chw_tensor(fusion::normalize_input(channels, mean, std_dev));
  out.targets = targets_from_annotations(ex.annotations);
  return out;
}

inline std::vector<PreparedExample> prepare_split(const dataset::Dataset& ds,
                                                  const std::vector<std::string>& ids,
                                                  fusion::VariantKind variant,
                                                  const fusion::ChannelStats& stats) {
  std::vector<PreparedExample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const dataset::Example* ex = ds.find(id);
    require(ex != nullptr, Errc::missing_media, "split references unknown example id: " + id);
    out.push_back(prepare_example(*ex, variant, stats));
  }
  return out;
}

// Normalization statistics come from the training split only.
inline fusion::ChannelStats train_split_channel_stats(const dataset::Dataset& ds,
                                                      const std::vector<std::string>& train_ids) {
  require(!train_ids.empty(), Errc::empty_split, "train split is empty");
  std::vector<fusion::RgbdImage> images;
  images.reserve(train_ids.size());
  for (const std::string& id : train_ids) {
    const dataset::Example* ex = ds.find(id);
    require(ex != nullptr, Errc::missing_media, "split references unknown example id: " + id);
    images.push_back(fusion::read_rgbd(ex->rgbd_path));
  }
  return fusion::compute_channel_stats(images);
}

inline evaluate::EvalReport evaluate_model(const detect::DetectorModel& model,
                                           const std::vector<PreparedExample>& examples,
                                           int num_classes, const EvalOptions& opts) {
  std::vector<evaluate::ImageEval> images;
  images.reserve(examples.size());
  for (const PreparedExample& ex : examples) {
    evaluate::ImageEval ie;
    ie.image_id = ex.id;
    ie.detections = detect::predict(model, ex.input, opts.detection_score_threshold,
                                    opts.nms_threshold, opts.max_detections);
    ie.gt_boxes = ex.targets.boxes;
    ie.gt_classes = ex.targets.classes;
    images.push_back(std::move(ie));
  }
  return evaluate::evaluate_split(images, num_classes, opts.iou_threshold,
                                  opts.precision_score_threshold, opts.ap_points);
}

inline train::Evaluator make_evaluator(std::vector<PreparedExample> val_split, int num_classes,
                                       EvalOptions opts) {
  return [val_split = std::move(val_split), num_classes,
          opts](const detect::DetectorModel& model) -> train::ValMetrics {
    const auto report = evaluate_model(model, val_split, num_classes, opts);
    return train::ValMetrics{report.map_50, report.mean_precision};
  };
}

inline std::vector<train::TrainExample> to_train_examples(
    const std::vector<PreparedExample>& prepared) {
  std::vector<train::TrainExample> out;
  out.reserve(prepared.size());
  for (const PreparedExample& ex : prepared)
    out.push_back(train::TrainExample{ex.input, ex.targets});
  return out;
}

struct RunArtifacts {
  detect::DetectorModel best_model;
  train::TrainHistory history;
  train::ValMetrics best_val;
  evaluate::RunMetrics test_metrics;
};

// One full training run: build, train with early stopping, evaluate the best
// checkpoint on the test split.
inline RunArtifacts run_single(fusion::VariantKind variant, const detect::ArchConfig& arch,
                               train::TrainConfig cfg, std::uint64_t run_seed,
                               const std::vector<PreparedExample>& train_split,
                               const std::vector<PreparedExample>& val_split,
                               const std::vector<PreparedExample>& test_split,
                               const EvalOptions& opts) {
  cfg.seed = run_seed;
  detect::DetectorModel model = build_model(variant, arch, run_seed);
  auto result =
      train::train(model, to_train_examples(train_split),
                   make_evaluator(val_split, arch.num_classes, opts), cfg);
  RunArtifacts artifacts;
  artifacts.history = std::move(result.history);
  artifacts.best_val = result.best_val;
  const auto test_report =
      evaluate_model(result.best_model, test_split, arch.num_classes, opts);
  artifacts.test_metrics = evaluate::RunMetrics{test_report.map_50, test_report.mean_precision};
  artifacts.best_model = std::move(result.best_model);
  return artifacts;
}

}  // namespace rgbdfuse::pipeline
