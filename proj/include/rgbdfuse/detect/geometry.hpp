// Deterministic detector geometry: anchors, IoU, box delta coding, target
// assignment, NMS, and max-pooled RoI extraction.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/tensor.hpp"

namespace rgbdfuse::detect {

struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  friend bool operator==(const Box& a, const Box& b) {
    return a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max && a.y_max == b.y_max;
  }
};

using Anchor = Box;

struct BoxDelta {
  double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;
};

struct Detection {
  Box bbox;
  int class_id = 0;
  double score = 0.0;
};

inline Box clip_box(const Box& b, double width, double height) {
  return Box{std::clamp(b.x_min, 0.0, width), std::clamp(b.y_min, 0.0, height),
             std::clamp(b.x_max, 0.0, width), std::clamp(b.y_max, 0.0, height)};
}

// One anchor per (cell, scale, ratio); centers at (i+0.5)*stride, area
// scale^2, ratio = h/w. Ordering: row-major cells, then scale, then ratio.
inline std::vector<Anchor> generate_anchors(int feature_w, int feature_h, double stride,
                                            std::span<const double> scales,
                                            std::span<const double> ratios) {
  require(stride >= 1.0, Errc::config_invalid, "anchor stride must be >= 1");
  require(!scales.empty() && !ratios.empty(), Errc::config_invalid,
          "anchor scales and ratios must be non-empty");
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<std::size_t>(feature_w) * feature_h * scales.size() *
                  ratios.size());
  for (int y = 0; y < feature_h; ++y)
    for (int x = 0; x < feature_w; ++x) {
      const double cx = (x + 0.5) * stride;
      const double cy = (y + 0.5) * stride;
      for (double scale : scales)
        for (double ratio : ratios) {
          const double w = scale / std::sqrt(ratio);
          const double h = scale * std::sqrt(ratio);
          anchors.push_back(Anchor{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0});
        }
    }
  return anchors;
}

inline double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// tx=(xc-xa)/wa, ty=(yc-ya)/ha, tw=ln(w/wa), th=ln(h/ha)
inline BoxDelta encode_box(const Box& gt, const Anchor& anchor) {
  require(gt.width() > 0.0 && gt.height() > 0.0 && anchor.width() > 0.0 && anchor.height() > 0.0,
          Errc::non_positive_size, "boxes must have positive width and height");
  return BoxDelta{(gt.center_x() - anchor.center_x()) / anchor.width(),
                  (gt.center_y() - anchor.center_y()) / anchor.height(),
                  std::log(gt.width() / anchor.width()),
                  std::log(gt.height() / anchor.height())};
}

inline Box decode_box(const BoxDelta& delta, const Anchor& anchor) {
  require(anchor.width() > 0.0 && anchor.height() > 0.0, Errc::non_positive_size,
          "anchor must have positive width and height");
  const double cx = anchor.center_x() + delta.tx * anchor.width();
  const double cy = anchor.center_y() + delta.ty * anchor.height();
  const double w = anchor.width() * std::exp(delta.tw);
  const double h = anchor.height() * std::exp(delta.th);
  return Box{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

enum class TargetKind { positive, negative, ignore };

struct AnchorTarget {
  TargetKind kind = TargetKind::negative;
  int gt_index = -1;
  int class_id = -1;
  BoxDelta delta{};
};

// Positive when max-IoU >= pos_iou, or forced as some gt's best anchor;
// negative below neg_iou; ignore in between. Ties break toward the lowest
// index. Forced matches are applied per gt in ascending gt order and
// override the IoU-based label.
inline std::vector<AnchorTarget> assign_targets(std::span<const Anchor> anchors,
                                                std::span<const Box> gt_boxes,
                                                std::span<const int> gt_classes, double pos_iou,
                                                double neg_iou) {
  require(0.0 <= neg_iou && neg_iou <= pos_iou && pos_iou <= 1.0, Errc::config_invalid,
          "need 0 <= neg_iou <= pos_iou <= 1");
  require(gt_boxes.size() == gt_classes.size(), Errc::shape_mismatch,
          "gt boxes and classes differ in length");
  std::vector<AnchorTarget> out(anchors.size());
  if (gt_boxes.empty()) return out;  // all negative

  const auto assign_positive = [&](std::size_t anchor_idx, std::size_t gt_idx) {
    out[anchor_idx].kind = TargetKind::positive;
    out[anchor_idx].gt_index = static_cast<int>(gt_idx);
    out[anchor_idx].class_id = gt_classes[gt_idx];
    out[anchor_idx].delta = encode_box(gt_boxes[gt_idx], anchors[anchor_idx]);
  };

  std::vector<double> best_gt_iou(gt_boxes.size(), -1.0);
  std::vector<std::size_t> best_gt_anchor(gt_boxes.size(), 0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(anchors[i], gt_boxes[g]);
      if (v > best) {
        best = v;
        best_gt = g;
      }
      if (v > best_gt_iou[g]) {
        best_gt_iou[g] = v;
        best_gt_anchor[g] = i;
      }
    }
    if (best >= pos_iou)
      assign_positive(i, best_gt);
    else if (best < neg_iou)
      out[i].kind = TargetKind::negative;
    else
      out[i].kind = TargetKind::ignore;
  }
  for (std::size_t g = 0; g < gt_boxes.size(); ++g) assign_positive(best_gt_anchor[g], g);
  return out;
}

// Greedy class-wise NMS over original indices. Retained indices come back in
// processing order: descending score, ties by lower input index.
inline std::vector<std::size_t> nms_indices(std::span<const Detection> detections,
                                            double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<std::size_t> retained;
  for (std::size_t idx : order) {
    bool keep = true;
    for (std::size_t r : retained) {
      if (detections[r].class_id != detections[idx].class_id) continue;
      if (iou(detections[r].bbox, detections[idx].bbox) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) retained.push_back(idx);
  }
  return retained;
}

inline std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t idx : nms_indices(detections, iou_threshold)) out.push_back(detections[idx]);
  return out;
}

inline std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
  return nms(std::span<const Detection>(detections.data(), detections.size()), iou_threshold);
}

// Max-pool RoI extraction. The box (feature coordinates) is split into k x k
// equal sub-intervals; each output cell takes the max over the feature cells
// its sub-interval touches (floor/ceil bounds, at least one cell). argmax,
// when given, records the flat input index feeding each output for backprop.
inline Tensor roi_pool(const Tensor& features, const Box& box, int k,
                       std::vector<std::int64_t>* argmax = nullptr) {
  const int channels = features.shape[0];
  const int fh = features.shape[1];
  const int fw = features.shape[2];
  const Box b = clip_box(box, fw, fh);
  require(b.width() > 0.0 && b.height() > 0.0, Errc::empty_box,
          "RoI box has no area inside the feature map");
  Tensor out({channels, k, k});
  if (argmax) argmax->assign(static_cast<std::size_t>(channels) * k * k, -1);
  for (int j = 0; j < k; ++j) {
    const double y_start = b.y_min + b.height() * j / k;
    const double y_end = b.y_min + b.height() * (j + 1) / k;
    int row_begin = static_cast<int>(std::floor(y_start));
    int row_end = static_cast<int>(std::ceil(y_end));
    row_begin = std::clamp(row_begin, 0, fh - 1);
    row_end = std::clamp(row_end, row_begin + 1, fh);
    for (int i = 0; i < k; ++i) {
      const double x_start = b.x_min + b.width() * i / k;
      const double x_end = b.x_min + b.width() * (i + 1) / k;
      int col_begin = static_cast<int>(std::floor(x_start));
      int col_end = static_cast<int>(std::ceil(x_end));
      col_begin = std::clamp(col_begin, 0, fw - 1);
      col_end = std::clamp(col_end, col_begin + 1, fw);
      for (int c = 0; c < channels; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (int y = row_begin; y < row_end; ++y)
          for (int x = col_begin; x < col_end; ++x) {
            const double v = features.at3(c, y, x);
            if (v > best) {
              best = v;
              best_idx = (static_cast<std::int64_t>(c) * fh + y) * fw + x;
            }
          }
        out.at3(c, j, i) = best;
        if (argmax) (*argmax)[(static_cast<std::size_t>(c) * k + j) * k + i] = best_idx;
      }
    }
  }
  return out;
}

}  // namespace rgbdfuse::detect
