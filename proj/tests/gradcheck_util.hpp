// Finite-difference gradient checking for the detector.
#pragma once

#include <string>
#include <vector>

#include "rgbdfuse/detect/model.hpp"

namespace testutil {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  long long checked = 0;
};

// Central differences against the analytic gradients for every parameter.
// rel = |a-f| / max(|a|+|f|, 1e-10), with an absolute floor for parameters
// whose gradient is genuinely zero on both paths.
inline GradCheckResult gradcheck(rgbdfuse::detect::DetectorModel& model,
                                 const std::vector<rgbdfuse::detect::Tensor>& inputs,
                                 const std::vector<rgbdfuse::detect::ImageTargets>& targets,
                                 double eps = 1e-6) {
  using rgbdfuse::detect::forward_train;
  model.zero_grad();
  forward_train(model, inputs, targets, true);
  // snapshot the analytic gradients before perturbing anything
  std::vector<std::vector<double>> analytic;
  for (const auto* g : model.gradients()) analytic.push_back(g->data);

  GradCheckResult result;
  auto params = model.named_parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& [name, tensor] = params[t];
    for (std::size_t i = 0; i < tensor->data.size(); ++i) {
      const double saved = tensor->data[i];
      tensor->data[i] = saved + eps;
      const double loss_plus = forward_train(model, inputs, targets, false).total();
      tensor->data[i] = saved - eps;
      const double loss_minus = forward_train(model, inputs, targets, false).total();
      tensor->data[i] = saved;
      const double fd = (loss_plus - loss_minus) / (2.0 * eps);
      const double a = analytic[t][i];
      const double denom = std::max(std::abs(a) + std::abs(fd), 1e-10);
      double rel = std::abs(a - fd) / denom;
      if (std::abs(a - fd) < 1e-10) rel = 0.0;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name + "[" + std::to_string(i) + "]";
      }
      ++result.checked;
    }
  }
  return result;
}

inline rgbdfuse::detect::ArchConfig tiny_arch() {
  rgbdfuse::detect::ArchConfig arch;
  arch.backbone_widths = {3, 4};
  arch.conv_kernel = 3;
  arch.rpn_channels = 4;
  arch.anchor_scales = {6.0};
  arch.anchor_ratios = {1.0};
  arch.roi_size = 2;
  arch.head_hidden = 6;
  arch.num_classes = 2;
  arch.proposals_train = 12;
  arch.proposals_test = 8;
  return arch;
}

}  // namespace testutil
