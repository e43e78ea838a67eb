// SGD with Nesterov momentum, the epoch loop with early stopping on
// validation mAP, best-checkpoint retention, and seeded repeated runs.
#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/model.hpp"
#include "rgbdfuse/evaluate.hpp"

namespace rgbdfuse::train {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  int batch_size = 4;
  int patience_epochs = 10;
  int max_epochs = 200;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0, Errc::config_invalid, "learning rate must be positive");
    require(momentum >= 0.0 && momentum < 1.0, Errc::config_invalid, "momentum must be in [0,1)");
    require(weight_decay >= 0.0, Errc::config_invalid, "weight decay must be >= 0");
    require(batch_size >= 1, Errc::config_invalid, "batch size must be >= 1");
    require(patience_epochs >= 1, Errc::config_invalid, "patience must be >= 1");
    require(max_epochs >= 1, Errc::config_invalid, "max epochs must be >= 1");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"learning_rate", learning_rate}, {"momentum", momentum},
                          {"nesterov", nesterov},           {"weight_decay", weight_decay},
                          {"batch_size", batch_size},       {"patience_epochs", patience_epochs},
                          {"max_epochs", max_epochs},       {"seed", seed}};
  }

  // missing keys keep their defaults so config files stay short
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    try {
      if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
      if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
      if (j.contains("nesterov")) cfg.nesterov = j["nesterov"].get<bool>();
      if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
      if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
      if (j.contains("patience_epochs")) cfg.patience_epochs = j["patience_epochs"].get<int>();
      if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<int>();
      if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::malformed_json, "train config error: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
  }
};

struct SgdState {
  std::vector<detect::Tensor> velocity;

  static SgdState for_params(const std::vector<detect::Tensor*>& params) {
    SgdState s;
    s.velocity.reserve(params.size());
    for (const detect::Tensor* p : params) s.velocity.emplace_back(detect::Tensor(p->shape));
    return s;
  }
};

// g' = grad + wd * param; v <- mu * v + g';
// nesterov: param <- param - lr * (g' + mu * v); classic: param <- param - lr * v
inline void sgd_nesterov_step(const std::vector<detect::Tensor*>& params,
                              const std::vector<const detect::Tensor*>& grads, SgdState& state,
                              const TrainConfig& cfg) {
  require(params.size() == grads.size() && params.size() == state.velocity.size(),
          Errc::shape_mismatch, "optimizer parameter/gradient/state counts differ");
  for (std::size_t t = 0; t < params.size(); ++t) {
    detect::Tensor& p = *params[t];
    const detect::Tensor& g = *grads[t];
    detect::Tensor& v = state.velocity[t];
    require(p.same_shape(g) && p.same_shape(v), Errc::shape_mismatch,
            "optimizer tensor shape mismatch");
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double grad = g.data[i];
      require(std::isfinite(grad), Errc::non_finite_gradient, "non-finite gradient");
      const double adjusted = grad + cfg.weight_decay * p.data[i];
      v.data[i] = cfg.momentum * v.data[i] + adjusted;
      p.data[i] -= cfg.learning_rate *
                   (cfg.nesterov ? adjusted + cfg.momentum * v.data[i] : v.data[i]);
    }
  }
}

struct TrainExample {
  detect::Tensor input;  // normalized (C,H,W)
  detect::ImageTargets targets;
};

struct ValMetrics {
  double map_50 = 0.0;
  double mean_precision = 0.0;
};

using Evaluator = std::function<ValMetrics(const detect::DetectorModel&)>;

struct EpochRecord {
  int epoch = 0;  // 1-based
  double rpn_cls = 0.0, rpn_reg = 0.0, det_cls = 0.0, det_reg = 0.0;
  double val_map = 0.0;
  double val_mean_precision = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; first occurrence of the max val mAP
};

struct TrainResult {
  detect::DetectorModel best_model;
  TrainHistory history;
  ValMetrics best_val;
};

// batch order is a pure function of (seed, epoch)
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

// Trains in place; returns a copy of the model at the best-val-mAP epoch.
// Improvement means strictly greater val mAP; ties do not reset patience.
inline TrainResult train(detect::DetectorModel& model,
                         const std::vector<TrainExample>& train_split, const Evaluator& evaluator,
                         const TrainConfig& cfg) {
  cfg.validate();
  require(!train_split.empty(), Errc::empty_split, "training split is empty");
  require(static_cast<bool>(evaluator), Errc::config_invalid, "evaluator is required");

  auto params = model.parameters();
  SgdState state = SgdState::for_params(params);
  std::vector<const detect::Tensor*> grads;
  for (detect::Tensor* g : model.gradients()) grads.push_back(g);

  TrainResult result;
  double best_map = -1.0;
  int epochs_without_improvement = 0;
  const std::size_t n = train_split.size();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, cfg.seed, epoch);
    detect::Losses epoch_losses;
    std::size_t cursor = 0;
    while (cursor < n) {
      const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, n - cursor);
      std::vector<detect::Tensor> inputs;
      std::vector<detect::ImageTargets> targets;
      inputs.reserve(batch_n);
      targets.reserve(batch_n);
      for (std::size_t i = 0; i < batch_n; ++i) {
        inputs.push_back(train_split[order[cursor + i]].input);
        targets.push_back(train_split[order[cursor + i]].targets);
      }
      cursor += batch_n;
      model.zero_grad();
      const detect::Losses losses = detect::forward_train(model, inputs, targets, true);
      require(losses.finite(), Errc::diverged_loss, "training loss diverged");
      sgd_nesterov_step(params, grads, state, cfg);
      const double w = static_cast<double>(batch_n) / static_cast<double>(n);
      epoch_losses.rpn_cls += losses.rpn_cls * w;
      epoch_losses.rpn_reg += losses.rpn_reg * w;
      epoch_losses.det_cls += losses.det_cls * w;
      epoch_losses.det_reg += losses.det_reg * w;
    }

    const ValMetrics vm = evaluator(model);
    const auto t1 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.rpn_cls = epoch_losses.rpn_cls;
    rec.rpn_reg = epoch_losses.rpn_reg;
    rec.det_cls = epoch_losses.det_cls;
    rec.det_reg = epoch_losses.det_reg;
    rec.val_map = vm.map_50;
    rec.val_mean_precision = vm.mean_precision;
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.epochs.push_back(rec);

    if (vm.map_50 > best_map) {
      best_map = vm.map_50;
      result.best_model = model;
      result.best_val = vm;
      result.history.best_epoch = epoch;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= cfg.patience_epochs) break;
    }
  }
  return result;
}

// runs are seeded base_seed + run_index; any run failure aborts the batch
inline std::vector<evaluate::RunMetrics> run_repeated(
    std::uint64_t base_seed, int n_runs,
    const std::function<evaluate::RunMetrics(std::uint64_t run_seed)>& single_run) {
  require(n_runs >= 1, Errc::config_invalid, "need at least one run");
  std::vector<evaluate::RunMetrics> out;
  out.reserve(static_cast<std::size_t>(n_runs));
  for (int i = 0; i < n_runs; ++i)
    out.push_back(single_run(base_seed + static_cast<std::uint64_t>(i)));
  return out;
}

// CSV layout: epoch,rpn_cls,rpn_reg,det_cls,det_reg,val_map,val_mean_precision,seconds
inline void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write history: " + path.string());
  out << "epoch,rpn_cls,rpn_reg,det_cls,det_reg,val_map,val_mean_precision,seconds\n";
  out.precision(12);
  for (const EpochRecord& r : history.epochs)
    out << r.epoch << "," << r.rpn_cls << "," << r.rpn_reg << "," << r.det_cls << "," << r.det_reg
        << "," << r.val_map << "," << r.val_mean_precision << "," << r.seconds << "\n";
}

inline void save_history_json(const TrainHistory& history, const std::filesystem::path& path) {
  nlohmann::json j;
  j["best_epoch"] = history.best_epoch;
  j["epochs"] = nlohmann::json::array();
  for (const EpochRecord& r : history.epochs)
    j["epochs"].push_back({{"epoch", r.epoch},
                           {"rpn_cls", r.rpn_cls},
                           {"rpn_reg", r.rpn_reg},
                           {"det_cls", r.det_cls},
                           {"det_reg", r.det_reg},
                           {"val_map", r.val_map},
                           {"val_mean_precision", r.val_mean_precision},
                           {"seconds", r.seconds}});
  std::ofstream out(path);
  require(out.good(), Errc::io_failure, "cannot write history: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace rgbdfuse::train
