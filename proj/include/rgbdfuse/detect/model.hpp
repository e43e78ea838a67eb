// The reduced two-stage detector: configurable conv backbone, RPN, and an
// RoI-pooled detection head. The first conv's input-channel count realizes
// the RGB / Depth / RGB-D variants; everything else is shared.
#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/geometry.hpp"
#include "rgbdfuse/detect/net.hpp"
#include "rgbdfuse/fusion.hpp"

namespace rgbdfuse::detect {

struct ArchConfig {
  std::vector<int> backbone_widths{16, 32, 64, 64};
  int conv_kernel = 3;
  int block_stride = 2;
  int rpn_channels = 64;
  std::vector<double> anchor_scales{32.0, 64.0, 128.0};
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  int roi_size = 4;
  int head_hidden = 128;
  int num_classes = 9;
  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  double head_pos_iou = 0.5;
  double head_neg_iou = 0.5;
  double proposal_nms = 0.7;
  int proposals_train = 300;
  int proposals_test = 100;
  double smooth_l1_beta = 1.0;

  int total_stride() const {
    int s = 1;
    for (std::size_t i = 0; i < backbone_widths.size(); ++i) s *= block_stride;
    return s;
  }
  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_ratios.size());
  }

  void validate() const {
    require(!backbone_widths.empty(), Errc::config_invalid, "backbone needs at least one block");
    for (int wdt : backbone_widths)
      require(wdt > 0, Errc::config_invalid, "backbone widths must be positive");
    require(conv_kernel >= 1 && block_stride >= 1 && rpn_channels > 0 && roi_size >= 1 &&
                head_hidden > 0 && num_classes >= 1,
            Errc::config_invalid, "invalid architecture dimensions");
    require(!anchor_scales.empty() && !anchor_ratios.empty(), Errc::config_invalid,
            "anchor scales/ratios must be non-empty");
    require(proposals_train >= 1 && proposals_test >= 1, Errc::config_invalid,
            "proposal limits must be >= 1");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"backbone_widths", backbone_widths},
                          {"conv_kernel", conv_kernel},
                          {"block_stride", block_stride},
                          {"rpn_channels", rpn_channels},
                          {"anchor_scales", anchor_scales},
                          {"anchor_ratios", anchor_ratios},
                          {"roi_size", roi_size},
                          {"head_hidden", head_hidden},
                          {"num_classes", num_classes},
                          {"rpn_pos_iou", rpn_pos_iou},
                          {"rpn_neg_iou", rpn_neg_iou},
                          {"head_pos_iou", head_pos_iou},
                          {"head_neg_iou", head_neg_iou},
                          {"proposal_nms", proposal_nms},
                          {"proposals_train", proposals_train},
                          {"proposals_test", proposals_test},
                          {"smooth_l1_beta", smooth_l1_beta}};
  }

  // missing keys keep their defaults so config files stay short
  static ArchConfig from_json(const nlohmann::json& j) {
    ArchConfig a;
    try {
      if (j.contains("backbone_widths"))
        a.backbone_widths = j["backbone_widths"].get<std::vector<int>>();
      if (j.contains("conv_kernel")) a.conv_kernel = j["conv_kernel"].get<int>();
      if (j.contains("block_stride")) a.block_stride = j["block_stride"].get<int>();
      if (j.contains("rpn_channels")) a.rpn_channels = j["rpn_channels"].get<int>();
      if (j.contains("anchor_scales"))
        a.anchor_scales = j["anchor_scales"].get<std::vector<double>>();
      if (j.contains("anchor_ratios"))
        a.anchor_ratios = j["anchor_ratios"].get<std::vector<double>>();
      if (j.contains("roi_size")) a.roi_size = j["roi_size"].get<int>();
      if (j.contains("head_hidden")) a.head_hidden = j["head_hidden"].get<int>();
      if (j.contains("num_classes")) a.num_classes = j["num_classes"].get<int>();
      if (j.contains("rpn_pos_iou")) a.rpn_pos_iou = j["rpn_pos_iou"].get<double>();
      if (j.contains("rpn_neg_iou")) a.rpn_neg_iou = j["rpn_neg_iou"].get<double>();
      if (j.contains("head_pos_iou")) a.head_pos_iou = j["head_pos_iou"].get<double>();
      if (j.contains("head_neg_iou")) a.head_neg_iou = j["head_neg_iou"].get<double>();
      if (j.contains("proposal_nms")) a.proposal_nms = j["proposal_nms"].get<double>();
      if (j.contains("proposals_train")) a.proposals_train = j["proposals_train"].get<int>();
      if (j.contains("proposals_test")) a.proposals_test = j["proposals_test"].get<int>();
      if (j.contains("smooth_l1_beta")) a.smooth_l1_beta = j["smooth_l1_beta"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_json, "arch config error: " + std::string(e.what()));
    }
    a.validate();
    return a;
  }
};

struct ImageTargets {
  std::vector<Box> boxes;
  std::vector<int> classes;  // 0..num_classes-1
};

struct Losses {
  double rpn_cls = 0.0, rpn_reg = 0.0, det_cls = 0.0, det_reg = 0.0;
  double total() const { return rpn_cls + rpn_reg + det_cls + det_reg; }
  bool finite() const {
    return std::isfinite(rpn_cls) && std::isfinite(rpn_reg) && std::isfinite(det_cls) &&
           std::isfinite(det_reg);
  }
};

struct DetectorModel {
  fusion::VariantKind variant = fusion::VariantKind::rgbd;
  ArchConfig arch;
  std::uint64_t init_seed = 0;

  std::vector<Conv2d> backbone;
  Conv2d rpn_conv, rpn_cls, rpn_reg;
  Linear fc, cls_head, reg_head;

  std::vector<std::pair<std::string, Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
      out.emplace_back("backbone." + std::to_string(i) + ".w", &backbone[i].w);
      out.emplace_back("backbone." + std::to_string(i) + ".b", &backbone[i].b);
    }
    out.emplace_back("rpn_conv.w", &rpn_conv.w);
    out.emplace_back("rpn_conv.b", &rpn_conv.b);
    out.emplace_back("rpn_cls.w", &rpn_cls.w);
    out.emplace_back("rpn_cls.b", &rpn_cls.b);
    out.emplace_back("rpn_reg.w", &rpn_reg.w);
    out.emplace_back("rpn_reg.b", &rpn_reg.b);
    out.emplace_back("fc.w", &fc.w);
    out.emplace_back("fc.b", &fc.b);
    out.emplace_back("cls_head.w", &cls_head.w);
    out.emplace_back("cls_head.b", &cls_head.b);
    out.emplace_back("reg_head.w", &reg_head.w);
    out.emplace_back("reg_head.b", &reg_head.b);
    return out;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::vector<Tensor*> gradients() {
    std::vector<Tensor*> out;
    for (auto& conv : backbone) {
      out.push_back(&conv.gw);
      out.push_back(&conv.gb);
    }
    for (Conv2d* c : {&rpn_conv, &rpn_cls, &rpn_reg}) {
      out.push_back(&c->gw);
      out.push_back(&c->gb);
    }
    for (Linear* l : {&fc, &cls_head, &reg_head}) {
      out.push_back(&l->gw);
      out.push_back(&l->gb);
    }
    return out;
  }

  void zero_grad() {
    for (Tensor* g : gradients()) g->zero();
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (Tensor* p : parameters()) n += p->numel();
    return n;
  }
};

inline DetectorModel build_model(fusion::VariantKind variant, const ArchConfig& arch,
                                 std::uint64_t seed) {
  arch.validate();
  DetectorModel model;
  model.variant = variant;
  model.arch = arch;
  model.init_seed = seed;
  Rng rng(seed);
  int in_ch = fusion::channel_count(variant);
  const int k = arch.conv_kernel;
  for (int width : arch.backbone_widths) {
    model.backbone.emplace_back(in_ch, width, k, arch.block_stride, k / 2);
    model.backbone.back().init_he(rng);
    in_ch = width;
  }
  const int feat_ch = arch.backbone_widths.back();
  const int a = arch.anchors_per_cell();
  model.rpn_conv = Conv2d(feat_ch, arch.rpn_channels, 3, 1, 1);
  model.rpn_conv.init_he(rng);
  model.rpn_cls = Conv2d(arch.rpn_channels, 2 * a, 1, 1, 0);
  model.rpn_cls.init_he(rng);
  model.rpn_reg = Conv2d(arch.rpn_channels, 4 * a, 1, 1, 0);
  model.rpn_reg.init_he(rng);
  const int roi_dim = feat_ch * arch.roi_size * arch.roi_size;
  model.fc = Linear(roi_dim, arch.head_hidden);
  model.fc.init_he(rng);
  model.cls_head = Linear(arch.head_hidden, arch.num_classes + 1);
  model.cls_head.init_he(rng);
  model.reg_head = Linear(arch.head_hidden, 4 * arch.num_classes);
  model.reg_head.init_he(rng);
  return model;
}

namespace detail {

// tw/th clamp before exp; keeps decoded proposals finite while training
inline constexpr double k_delta_clamp = 4.0;

inline Box decode_clamped(const BoxDelta& delta, const Anchor& anchor) {
  BoxDelta d = delta;
  d.tw = std::clamp(d.tw, -k_delta_clamp, k_delta_clamp);
  d.th = std::clamp(d.th, -k_delta_clamp, k_delta_clamp);
  return decode_box(d, anchor);
}

// Proposals are quantized to integer pixel coordinates and enter the
// detection stage as constants: no gradient flows through box coordinates.
inline std::optional<Box> quantize_proposal(const Box& b, int img_w, int img_h) {
  const Box c = clip_box(b, img_w, img_h);
  Box q{static_cast<double>(round_half_away(c.x_min)),
        static_cast<double>(round_half_away(c.y_min)),
        static_cast<double>(round_half_away(c.x_max)),
        static_cast<double>(round_half_away(c.y_max))};
  if (q.width() <= 0.0 || q.height() <= 0.0) return std::nullopt;
  return q;
}

struct RpnOutputs {
  Tensor obj;       // (2A, Hf, Wf)
  Tensor reg;       // (4A, Hf, Wf)
  Tensor mid;       // post-relu RPN conv output
  std::vector<Anchor> anchors;
  int feat_w = 0, feat_h = 0;
};

inline std::size_t anchor_index(int x, int y, int a, int feat_w, int per_cell) {
  return (static_cast<std::size_t>(y) * feat_w + x) * per_cell + a;
}

inline std::vector<Box> select_proposals(const RpnOutputs& rpn, const ArchConfig& arch, int img_w,
                                         int img_h, int limit) {
  const int per_cell = arch.anchors_per_cell();
  std::vector<Detection> candidates;
  std::vector<Box> boxes;
  candidates.reserve(rpn.anchors.size());
  for (int y = 0; y < rpn.feat_h; ++y)
    for (int x = 0; x < rpn.feat_w; ++x)
      for (int a = 0; a < per_cell; ++a) {
        const std::size_t idx = anchor_index(x, y, a, rpn.feat_w, per_cell);
        const double l0 = rpn.obj.at3(a * 2 + 0, y, x);
        const double l1 = rpn.obj.at3(a * 2 + 1, y, x);
        const double fg = 1.0 / (1.0 + std::exp(l0 - l1));
        const BoxDelta d{rpn.reg.at3(a * 4 + 0, y, x), rpn.reg.at3(a * 4 + 1, y, x),
                         rpn.reg.at3(a * 4 + 2, y, x), rpn.reg.at3(a * 4 + 3, y, x)};
        const auto q = quantize_proposal(decode_clamped(d, rpn.anchors[idx]), img_w, img_h);
        if (!q) continue;
        candidates.push_back(Detection{*q, 0, fg});
      }
  const auto retained = nms_indices(candidates, arch.proposal_nms);
  boxes.reserve(std::min<std::size_t>(retained.size(), static_cast<std::size_t>(limit)));
  for (std::size_t i = 0; i < retained.size() && static_cast<int>(i) < limit; ++i)
    boxes.push_back(candidates[retained[i]].bbox);
  return boxes;
}

}  // namespace detail

// Training forward pass over a batch; losses are means over the batch. When
// with_grad is set the parameter gradients are accumulated in place (callers
// zero_grad first). Proposal boxes and target assignment are treated as
// non-differentiable.
inline Losses forward_train(DetectorModel& model, const std::vector<Tensor>& inputs,
                            const std::vector<ImageTargets>& targets, bool with_grad) {
  require(inputs.size() == targets.size(), Errc::shape_mismatch,
          "batch inputs and targets differ in length");
  require(!inputs.empty(), Errc::shape_mismatch, "empty batch");
  const ArchConfig& arch = model.arch;
  const int expected_ch = fusion::channel_count(model.variant);
  const double batch_scale = 1.0 / static_cast<double>(inputs.size());
  Losses total;

  for (std::size_t img_i = 0; img_i < inputs.size(); ++img_i) {
    const Tensor& x = inputs[img_i];
    const ImageTargets& gt = targets[img_i];
    require(x.shape.size() == 3 && x.shape[0] == expected_ch, Errc::shape_mismatch,
            "input channel count does not match the model variant");
    const int img_h = x.shape[1];
    const int img_w = x.shape[2];

    // backbone
    std::vector<Tensor> acts;
    acts.reserve(model.backbone.size() + 1);
    acts.push_back(x);
    for (Conv2d& conv : model.backbone) {
      Tensor z = with_grad ? conv.forward_cached(acts.back()) : conv.forward(acts.back());
      relu_inplace(z);
      acts.push_back(std::move(z));
    }
    const Tensor& feat = acts.back();
    const int feat_h = feat.shape[1];
    const int feat_w = feat.shape[2];

    // RPN heads
    detail::RpnOutputs rpn;
    rpn.feat_w = feat_w;
    rpn.feat_h = feat_h;
    rpn.mid = with_grad ? model.rpn_conv.forward_cached(feat) : model.rpn_conv.forward(feat);
    relu_inplace(rpn.mid);
    rpn.obj = with_grad ? model.rpn_cls.forward_cached(rpn.mid) : model.rpn_cls.forward(rpn.mid);
    rpn.reg = with_grad ? model.rpn_reg.forward_cached(rpn.mid) : model.rpn_reg.forward(rpn.mid);
    rpn.anchors = generate_anchors(feat_w, feat_h, arch.total_stride(), arch.anchor_scales,
                                   arch.anchor_ratios);
    const int per_cell = arch.anchors_per_cell();
    const auto n_anchors = rpn.anchors.size();

    // RPN losses
    const auto rpn_targets = assign_targets(rpn.anchors, gt.boxes, gt.classes, arch.rpn_pos_iou,
                                            arch.rpn_neg_iou);
    Tensor rpn_logits({static_cast<int>(n_anchors), 2});
    std::vector<int> rpn_labels(n_anchors, -1);
    for (int y = 0; y < feat_h; ++y)
      for (int xc = 0; xc < feat_w; ++xc)
        for (int a = 0; a < per_cell; ++a) {
          const std::size_t idx = detail::anchor_index(xc, y, a, feat_w, per_cell);
          rpn_logits.at2(static_cast<int>(idx), 0) = rpn.obj.at3(a * 2 + 0, y, xc);
          rpn_logits.at2(static_cast<int>(idx), 1) = rpn.obj.at3(a * 2 + 1, y, xc);
          switch (rpn_targets[idx].kind) {
            case TargetKind::positive: rpn_labels[idx] = 1; break;
            case TargetKind::negative: rpn_labels[idx] = 0; break;
            case TargetKind::ignore: rpn_labels[idx] = -1; break;
          }
        }
    auto rpn_ce = softmax_cross_entropy(rpn_logits, rpn_labels);
    total.rpn_cls += rpn_ce.loss * batch_scale;

    double rpn_reg_loss = 0.0;
    Tensor d_rpn_reg({4 * per_cell, feat_h, feat_w});
    int rpn_pos = 0;
    for (std::size_t idx = 0; idx < n_anchors; ++idx)
      if (rpn_targets[idx].kind == TargetKind::positive) ++rpn_pos;
    if (rpn_pos > 0) {
      const double inv = 1.0 / (4.0 * rpn_pos);
      for (int y = 0; y < feat_h; ++y)
        for (int xc = 0; xc < feat_w; ++xc)
          for (int a = 0; a < per_cell; ++a) {
            const std::size_t idx = detail::anchor_index(xc, y, a, feat_w, per_cell);
            if (rpn_targets[idx].kind != TargetKind::positive) continue;
            const BoxDelta& t = rpn_targets[idx].delta;
            const double target[4] = {t.tx, t.ty, t.tw, t.th};
            for (int comp = 0; comp < 4; ++comp) {
              const double pred = rpn.reg.at3(a * 4 + comp, y, xc);
              double g = 0.0;
              rpn_reg_loss += smooth_l1(pred - target[comp], arch.smooth_l1_beta, g) * inv;
              d_rpn_reg.at3(a * 4 + comp, y, xc) = g * inv;
            }
          }
    }
    total.rpn_reg += rpn_reg_loss * batch_scale;

    // proposals; ground truth boxes join the pool during training
    std::vector<Box> proposals =
        detail::select_proposals(rpn, arch, img_w, img_h, arch.proposals_train);
    for (const Box& g : gt.boxes) {
      const auto q = detail::quantize_proposal(g, img_w, img_h);
      if (q) proposals.push_back(*q);
    }

    // detection-head losses
    const auto det_targets = assign_targets(proposals, gt.boxes, gt.classes, arch.head_pos_iou,
                                            arch.head_neg_iou);
    const int n_props = static_cast<int>(proposals.size());
    const int roi_dim = arch.backbone_widths.back() * arch.roi_size * arch.roi_size;
    Tensor pooled({n_props, roi_dim});
    std::vector<std::vector<std::int64_t>> argmaxes(static_cast<std::size_t>(n_props));
    const double inv_stride = 1.0 / arch.total_stride();
    for (int n = 0; n < n_props; ++n) {
      const Box fbox{proposals[static_cast<std::size_t>(n)].x_min * inv_stride,
                     proposals[static_cast<std::size_t>(n)].y_min * inv_stride,
                     proposals[static_cast<std::size_t>(n)].x_max * inv_stride,
                     proposals[static_cast<std::size_t>(n)].y_max * inv_stride};
      const Tensor cell = roi_pool(feat, fbox, arch.roi_size,
                                   with_grad ? &argmaxes[static_cast<std::size_t>(n)] : nullptr);
      std::copy(cell.data.begin(), cell.data.end(),
                pooled.data.begin() + static_cast<std::size_t>(n) * roi_dim);
    }
    Tensor hidden = with_grad ? model.fc.forward_cached(pooled) : model.fc.forward(pooled);
    relu_inplace(hidden);
    Tensor cls_logits =
        with_grad ? model.cls_head.forward_cached(hidden) : model.cls_head.forward(hidden);
    Tensor reg_out =
        with_grad ? model.reg_head.forward_cached(hidden) : model.reg_head.forward(hidden);

    std::vector<int> det_labels(static_cast<std::size_t>(n_props), 0);
    int det_pos = 0;
    for (int n = 0; n < n_props; ++n) {
      if (det_targets[static_cast<std::size_t>(n)].kind == TargetKind::positive) {
        det_labels[static_cast<std::size_t>(n)] =
            det_targets[static_cast<std::size_t>(n)].class_id + 1;
        ++det_pos;
      }
    }
    auto det_ce = softmax_cross_entropy(cls_logits, det_labels);
    total.det_cls += det_ce.loss * batch_scale;

    double det_reg_loss = 0.0;
    Tensor d_reg_out({n_props, 4 * arch.num_classes});
    if (det_pos > 0) {
      const double inv = 1.0 / (4.0 * det_pos);
      for (int n = 0; n < n_props; ++n) {
        const auto& tgt = det_targets[static_cast<std::size_t>(n)];
        if (tgt.kind != TargetKind::positive) continue;
        const BoxDelta& t = tgt.delta;
        const double target[4] = {t.tx, t.ty, t.tw, t.th};
        for (int comp = 0; comp < 4; ++comp) {
          const int col = tgt.class_id * 4 + comp;
          double g = 0.0;
          det_reg_loss += smooth_l1(reg_out.at2(n, col) - target[comp], arch.smooth_l1_beta, g) *
                          inv;
          d_reg_out.at2(n, col) = g * inv;
        }
      }
    }
    total.det_reg += det_reg_loss * batch_scale;

    if (!with_grad) continue;

    // ---- backward ----
    // detection head
    for (double& v : det_ce.dlogits.data) v *= batch_scale;
    for (double& v : d_reg_out.data) v *= batch_scale;
    Tensor g_hidden = model.cls_head.backward(det_ce.dlogits);
    {
      Tensor g_hidden_reg = model.reg_head.backward(d_reg_out);
      for (std::size_t i = 0; i < g_hidden.data.size(); ++i)
        g_hidden.data[i] += g_hidden_reg.data[i];
    }
    relu_backward_inplace(g_hidden, hidden);
    Tensor g_pooled = model.fc.backward(g_hidden);

    Tensor g_feat({feat.shape[0], feat_h, feat_w});
    for (int n = 0; n < n_props; ++n) {
      const auto& amax = argmaxes[static_cast<std::size_t>(n)];
      for (std::size_t cell = 0; cell < amax.size(); ++cell) {
        if (amax[cell] < 0) continue;
        g_feat.data[static_cast<std::size_t>(amax[cell])] +=
            g_pooled.data[static_cast<std::size_t>(n) * roi_dim + cell];
      }
    }

    // RPN heads
    Tensor d_obj({2 * per_cell, feat_h, feat_w});
    for (int y = 0; y < feat_h; ++y)
      for (int xc = 0; xc < feat_w; ++xc)
        for (int a = 0; a < per_cell; ++a) {
          const auto idx =
              static_cast<int>(detail::anchor_index(xc, y, a, feat_w, per_cell));
          d_obj.at3(a * 2 + 0, y, xc) = rpn_ce.dlogits.at2(idx, 0) * batch_scale;
          d_obj.at3(a * 2 + 1, y, xc) = rpn_ce.dlogits.at2(idx, 1) * batch_scale;
        }
    for (double& v : d_rpn_reg.data) v *= batch_scale;
    Tensor g_mid = model.rpn_cls.backward(d_obj);
    {
      Tensor g_mid_reg = model.rpn_reg.backward(d_rpn_reg);
      for (std::size_t i = 0; i < g_mid.data.size(); ++i) g_mid.data[i] += g_mid_reg.data[i];
    }
    relu_backward_inplace(g_mid, rpn.mid);
    {
      Tensor g_feat_rpn = model.rpn_conv.backward(g_mid);
      for (std::size_t i = 0; i < g_feat.data.size(); ++i) g_feat.data[i] += g_feat_rpn.data[i];
    }

    // backbone
    Tensor g = std::move(g_feat);
    for (std::size_t i = model.backbone.size(); i-- > 0;) {
      relu_backward_inplace(g, acts[i + 1]);
      g = model.backbone[i].backward(g);
    }
  }
  return total;
}

// Deterministic inference: proposals -> RoI head -> per-class decode ->
// score filter -> class-wise NMS -> top max_detections.
inline std::vector<Detection> predict(const DetectorModel& model, const Tensor& input,
                                      double score_threshold, double nms_threshold,
                                      int max_detections) {
  const ArchConfig& arch = model.arch;
  require(input.shape.size() == 3 && input.shape[0] == fusion::channel_count(model.variant),
          Errc::shape_mismatch, "input channel count does not match the model variant");
  const int img_h = input.shape[1];
  const int img_w = input.shape[2];

  Tensor feat = input;
  for (const Conv2d& conv : model.backbone) {
    feat = conv.forward(feat);
    relu_inplace(feat);
  }
  detail::RpnOutputs rpn;
  rpn.feat_h = feat.shape[1];
  rpn.feat_w = feat.shape[2];
  rpn.mid = model.rpn_conv.forward(feat);
  relu_inplace(rpn.mid);
  rpn.obj = model.rpn_cls.forward(rpn.mid);
  rpn.reg = model.rpn_reg.forward(rpn.mid);
  rpn.anchors = generate_anchors(rpn.feat_w, rpn.feat_h, arch.total_stride(), arch.anchor_scales,
                                 arch.anchor_ratios);
  const std::vector<Box> proposals =
      detail::select_proposals(rpn, arch, img_w, img_h, arch.proposals_test);
  if (proposals.empty()) return {};

  const int roi_dim = arch.backbone_widths.back() * arch.roi_size * arch.roi_size;
  Tensor pooled({static_cast<int>(proposals.size()), roi_dim});
  const double inv_stride = 1.0 / arch.total_stride();
  for (std::size_t n = 0; n < proposals.size(); ++n) {
    const Box fbox{proposals[n].x_min * inv_stride, proposals[n].y_min * inv_stride,
                   proposals[n].x_max * inv_stride, proposals[n].y_max * inv_stride};
    const Tensor cell = roi_pool(feat, fbox, arch.roi_size);
    std::copy(cell.data.begin(), cell.data.end(), pooled.data.begin() + n * roi_dim);
  }
  Tensor hidden = model.fc.forward(pooled);
  relu_inplace(hidden);
  const Tensor cls_logits = model.cls_head.forward(hidden);
  const Tensor reg_out = model.reg_head.forward(hidden);

  std::vector<Detection> candidates;
  for (std::size_t n = 0; n < proposals.size(); ++n) {
    const auto probs = softmax_row(cls_logits, static_cast<int>(n));
    for (int c = 0; c < arch.num_classes; ++c) {
      const double score = probs[static_cast<std::size_t>(c) + 1];
      if (score < score_threshold) continue;
      const BoxDelta d{reg_out.at2(static_cast<int>(n), c * 4 + 0),
                       reg_out.at2(static_cast<int>(n), c * 4 + 1),
                       reg_out.at2(static_cast<int>(n), c * 4 + 2),
                       reg_out.at2(static_cast<int>(n), c * 4 + 3)};
      const Box box = clip_box(detail::decode_clamped(d, proposals[n]), img_w, img_h);
      if (box.width() <= 0.0 || box.height() <= 0.0) continue;
      candidates.push_back(Detection{box, c, score});
    }
  }
  std::vector<Detection> retained = nms(candidates, nms_threshold);
  if (static_cast<int>(retained.size()) > max_detections) retained.resize(max_detections);
  return retained;
}

}  // namespace rgbdfuse::detect
