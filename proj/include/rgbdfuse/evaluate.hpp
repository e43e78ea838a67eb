// Detection-vs-ground-truth matching, per-class AP, mAP@0.5, Mean Precision,
// multi-run aggregation, and the variant comparison report.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/geometry.hpp"

namespace rgbdfuse::evaluate {

struct MatchResult {
  std::vector<bool> detection_tp;  // per detection, in input order
  std::vector<int> matched_gt;     // gt index or -1
  std::vector<bool> gt_matched;    // per gt
};

// Greedy matching for one class on one image: detections in descending-score
// order (ties by input index) each take the unmatched gt with the highest
// IoU when that IoU reaches the threshold.
inline MatchResult match_detections(std::span<const detect::Detection> detections,
                                    std::span<const detect::Box> gt_boxes,
                                    double iou_threshold = 0.5) {
  require(iou_threshold > 0.0 && iou_threshold <= 1.0, Errc::config_invalid,
          "IoU threshold must be in (0,1]");
  MatchResult res;
  res.detection_tp.assign(detections.size(), false);
  res.matched_gt.assign(detections.size(), -1);
  res.gt_matched.assign(gt_boxes.size(), false);
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  for (std::size_t d : order) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      if (res.gt_matched[g]) continue;
      const double v = detect::iou(detections[d].bbox, gt_boxes[g]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) {
      res.detection_tp[d] = true;
      res.matched_gt[d] = best_gt;
      res.gt_matched[static_cast<std::size_t>(best_gt)] = true;
    }
  }
  return res;
}

// Interpolated AP over scored TP/FP flags pooled across a split.
// points = 101 gives the COCO-style grid {0, 0.01, ..., 1}; 11 gives the
// PASCAL variant.
inline double average_precision(std::vector<std::pair<double, bool>> scored_flags,
                                std::int64_t gt_count, int points = 101) {
  require(gt_count >= 1, Errc::no_ground_truth, "AP needs at least one ground-truth box");
  require(points >= 2, Errc::config_invalid, "AP grid needs at least 2 points");
  std::stable_sort(scored_flags.begin(), scored_flags.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t n = scored_flags.size();
  std::vector<double> precision(n), recall(n);
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (scored_flags[i].second ? tp : fp) += 1;
    precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  // max precision at recall >= r, computed right-to-left
  std::vector<double> max_prec_from(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;)
    max_prec_from[i] = std::max(precision[i], max_prec_from[i + 1]);
  double acc = 0.0;
  for (int p = 0; p < points; ++p) {
    const double r = static_cast<double>(p) / (points - 1);
    // first rank reaching recall r
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    acc += it == recall.end() ? 0.0
                              : max_prec_from[static_cast<std::size_t>(it - recall.begin())];
  }
  return acc / points;
}

inline double mean_ap(std::span<const double> per_class_aps) {
  require(!per_class_aps.empty(), Errc::no_classes, "mAP over zero classes");
  double sum = 0.0;
  for (double ap : per_class_aps) sum += ap;
  return sum / static_cast<double>(per_class_aps.size());
}

// per-image detections and ground truth for one split
struct ImageEval {
  std::string image_id;
  std::vector<detect::Detection> detections;
  std::vector<detect::Box> gt_boxes;
  std::vector<int> gt_classes;
};

// Class-averaged precision TP/(TP+FP) over detections scoring at least
// score_threshold, matched greedily at iou_threshold. Classes without ground
// truth are excluded; classes with ground truth but no qualifying detections
// contribute 0.
inline double mean_precision(const std::vector<ImageEval>& images, int num_classes,
                             double score_threshold = 0.5, double iou_threshold = 0.5) {
  std::vector<double> precisions;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t gt_count = 0, tp = 0, fp = 0;
    for (const ImageEval& img : images) {
      std::vector<detect::Detection> dets;
      for (const auto& d : img.detections)
        if (d.class_id == c && d.score >= score_threshold) dets.push_back(d);
      std::vector<detect::Box> gts;
      for (std::size_t g = 0; g < img.gt_boxes.size(); ++g)
        if (img.gt_classes[g] == c) gts.push_back(img.gt_boxes[g]);
      gt_count += static_cast<std::int64_t>(gts.size());
      if (dets.empty()) continue;
      const MatchResult match = match_detections(dets, gts, iou_threshold);
      for (std::size_t d = 0; d < dets.size(); ++d) (match.detection_tp[d] ? tp : fp) += 1;
    }
    if (gt_count == 0) continue;
    precisions.push_back(tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                     : 0.0);
  }
  require(!precisions.empty(), Errc::no_classes, "no class has ground truth in this split");
  return std::accumulate(precisions.begin(), precisions.end(), 0.0) /
         static_cast<double>(precisions.size());
}

struct ClassMetrics {
  double ap = 0.0;
  std::int64_t gt_count = 0;
  std::int64_t tp_at_threshold = 0;  // detections with score >= the precision threshold
  std::int64_t fp_at_threshold = 0;
  double precision_at_threshold = 0.0;
};

struct EvalReport {
  std::map<int, ClassMetrics> per_class;  // classes with ground truth only
  double map_50 = 0.0;
  double mean_precision = 0.0;
  std::int64_t total_gt = 0;
  std::int64_t total_detections = 0;
};

// mAP@iou_threshold plus class-averaged precision at the score threshold.
// Classes absent from the ground truth are excluded from both means; classes
// with ground truth but no predictions contribute precision 0.
inline EvalReport evaluate_split(const std::vector<ImageEval>& images, int num_classes,
                                 double iou_threshold = 0.5, double score_threshold = 0.5,
                                 int ap_points = 101) {
  EvalReport report;
  std::vector<double> aps;
  std::vector<double> precisions;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t gt_count = 0;
    std::vector<std::pair<double, bool>> scored_flags;
    std::int64_t tp_thr = 0, fp_thr = 0;
    for (const ImageEval& img : images) {
      std::vector<detect::Detection> dets;
      for (const auto& d : img.detections)
        if (d.class_id == c) dets.push_back(d);
      std::vector<detect::Box> gts;
      for (std::size_t g = 0; g < img.gt_boxes.size(); ++g)
        if (img.gt_classes[g] == c) gts.push_back(img.gt_boxes[g]);
      gt_count += static_cast<std::int64_t>(gts.size());
      if (dets.empty()) continue;
      const MatchResult match = match_detections(dets, gts, iou_threshold);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        scored_flags.emplace_back(dets[d].score, match.detection_tp[d]);
        if (dets[d].score >= score_threshold)
          (match.detection_tp[d] ? tp_thr : fp_thr) += 1;
      }
    }
    if (gt_count == 0) continue;  // class not present in this split
    ClassMetrics cm;
    cm.gt_count = gt_count;
    cm.ap = scored_flags.empty() ? 0.0 : average_precision(scored_flags, gt_count, ap_points);
    cm.tp_at_threshold = tp_thr;
    cm.fp_at_threshold = fp_thr;
    cm.precision_at_threshold =
        (tp_thr + fp_thr) > 0 ? static_cast<double>(tp_thr) / static_cast<double>(tp_thr + fp_thr)
                              : 0.0;
    aps.push_back(cm.ap);
    precisions.push_back(cm.precision_at_threshold);
    report.per_class[c] = cm;
    report.total_gt += gt_count;
  }
  require(!aps.empty(), Errc::no_classes, "no class has ground truth in this split");
  report.map_50 = mean_ap(aps);
  report.mean_precision =
      std::accumulate(precisions.begin(), precisions.end(), 0.0) /
      static_cast<double>(precisions.size());
  for (const ImageEval& img : images)
    report.total_detections += static_cast<std::int64_t>(img.detections.size());
  return report;
}

struct RunMetrics {
  double map_50 = 0.0;
  double mean_precision = 0.0;
};

struct MetricAggregate {
  double mean = 0.0;
  double std_dev = 0.0;  // population
};

struct RunAggregate {
  int n_runs = 0;
  MetricAggregate map_50;
  MetricAggregate mean_precision;
};

inline MetricAggregate aggregate_metric(std::span<const double> values) {
  require(!values.empty(), Errc::empty_runs, "aggregate over zero runs");
  bool all_equal = true;
  for (double v : values)
    if (v != values.front()) all_equal = false;
  if (all_equal) return MetricAggregate{values.front(), 0.0};  // exact by contract
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  const double var = sq / n;
  return MetricAggregate{mean, var > 0.0 ? std::sqrt(var) : 0.0};
}

inline RunAggregate aggregate_runs(std::span<const RunMetrics> runs) {
  require(!runs.empty(), Errc::empty_runs, "aggregate over zero runs");
  std::vector<double> maps, precisions;
  for (const RunMetrics& r : runs) {
    maps.push_back(r.map_50);
    precisions.push_back(r.mean_precision);
  }
  RunAggregate agg;
  agg.n_runs = static_cast<int>(runs.size());
  agg.map_50 = aggregate_metric(maps);
  agg.mean_precision = aggregate_metric(precisions);
  return agg;
}

inline RunAggregate aggregate_runs(const std::vector<RunMetrics>& runs) {
  return aggregate_runs(std::span<const RunMetrics>(runs.data(), runs.size()));
}

// relative improvement 100*(a-b)/b rounded to one decimal, half away from zero
inline double relative_delta_percent(double a, double b) {
  require(b != 0.0, Errc::division_by_zero, "relative delta against a zero baseline");
  return static_cast<double>(round_half_away(100.0 * (a - b) / b * 10.0)) / 10.0;
}

struct DeltaEntry {
  std::string metric;    // "map_50" or "mean_precision"
  std::string variant;   // a
  std::string baseline;  // b
  double percent = 0.0;
};

struct ComparisonReport {
  std::vector<std::pair<std::string, RunAggregate>> rows;
  std::vector<DeltaEntry> deltas;

  const DeltaEntry* find_delta(const std::string& metric, const std::string& variant,
                               const std::string& baseline) const {
    for (const DeltaEntry& d : deltas)
      if (d.metric == metric && d.variant == variant && d.baseline == baseline) return &d;
    return nullptr;
  }

  std::string to_markdown() const {
    std::ostringstream os;
    os << "| Model | Mean mAP | Mean Precision |\n";
    os << "|---|---|---|\n";
    os.setf(std::ios::fixed);
    os.precision(3);
    for (const auto& [name, agg] : rows)
      os << "| " << name << " | " << agg.map_50.mean << " | " << agg.mean_precision.mean
         << " |\n";
    os << "\n";
    os.precision(1);
    for (const DeltaEntry& d : deltas)
      os << "- " << d.variant << " vs " << d.baseline << " (" << d.metric << "): "
         << (d.percent >= 0.0 ? "+" : "") << d.percent << "%\n";
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "variant,n_runs,map_50_mean,map_50_std,mean_precision_mean,mean_precision_std\n";
    os.precision(12);
    for (const auto& [name, agg] : rows)
      os << name << "," << agg.n_runs << "," << agg.map_50.mean << "," << agg.map_50.std_dev
         << "," << agg.mean_precision.mean << "," << agg.mean_precision.std_dev << "\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& [name, agg] : rows)
      j["rows"].push_back({{"variant", name},
                           {"n_runs", agg.n_runs},
                           {"map_50", {{"mean", agg.map_50.mean}, {"std", agg.map_50.std_dev}}},
                           {"mean_precision",
                            {{"mean", agg.mean_precision.mean},
                             {"std", agg.mean_precision.std_dev}}}});
    j["deltas"] = nlohmann::json::array();
    for (const DeltaEntry& d : deltas)
      j["deltas"].push_back({{"metric", d.metric},
                             {"variant", d.variant},
                             {"baseline", d.baseline},
                             {"percent", d.percent}});
    return j;
  }
};

// Table-style rows plus every ordered pairwise relative improvement.
inline ComparisonReport comparison_report(
    const std::vector<std::pair<std::string, RunAggregate>>& by_variant) {
  require(by_variant.size() >= 2, Errc::config_invalid,
          "comparison report needs at least two variants");
  ComparisonReport report;
  report.rows = by_variant;
  for (const auto& [name_a, agg_a] : by_variant)
    for (const auto& [name_b, agg_b] : by_variant) {
      if (name_a == name_b) continue;
      report.deltas.push_back(DeltaEntry{
          "map_50", name_a, name_b, relative_delta_percent(agg_a.map_50.mean, agg_b.map_50.mean)});
      report.deltas.push_back(
          DeltaEntry{"mean_precision", name_a, name_b,
                     relative_delta_percent(agg_a.mean_precision.mean, agg_b.mean_precision.mean)});
    }
  return report;
}

// --- COCO results-array interchange -----------------------------------------

struct DetectionRecord {
  std::string image_id;
  int class_id = 0;  // catalog index, 0-based
  detect::Box bbox;
  double score = 0.0;
};

// [{"image_id":.., "category_id":.., "bbox":[x,y,w,h], "score":..}, ...]
// category_id follows the COCO export convention: catalog index + 1.
inline void save_detections_coco(const std::vector<DetectionRecord>& records,
                                 const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const DetectionRecord& r : records)
    arr.push_back({{"image_id", r.image_id},
                   {"category_id", r.class_id + 1},
                   {"bbox", {r.bbox.x_min, r.bbox.y_min, r.bbox.width(), r.bbox.height()}},
                   {"score", r.score}});
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write detections: " + path.string());
  out << arr.dump(2) << "\n";
}

inline std::vector<DetectionRecord> load_detections_coco(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::malformed_file, "cannot open detections: " + path.string());
  nlohmann::json arr;
  try {
    in >> arr;
    require(arr.is_array(), Errc::malformed_json, "detections file must hold an array");
    std::vector<DetectionRecord> out;
    for (const auto& j : arr) {
      DetectionRecord r;
      if (j.at("image_id").is_string())
        r.image_id = j.at("image_id").get<std::string>();
      else
        r.image_id = std::to_string(j.at("image_id").get<std::int64_t>());
      r.class_id = j.at("category_id").get<int>() - 1;
      const auto& b = j.at("bbox");
      const double x = b.at(0).get<double>(), y = b.at(1).get<double>();
      const double w = b.at(2).get<double>(), h = b.at(3).get<double>();
      r.bbox = detect::Box{x, y, x + w, y + h};
      r.score = j.at("score").get<double>();
      out.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::malformed_json, "detections JSON error: " + std::string(e.what()));
  }
}

}  // namespace rgbdfuse::evaluate
