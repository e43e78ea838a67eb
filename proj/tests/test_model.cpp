#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "gradcheck_util.hpp"
#include "rgbdfuse/detect/checkpoint.hpp"
#include "rgbdfuse/detect/model.hpp"
#include "test_util.hpp"

using namespace rgbdfuse;
using namespace rgbdfuse::detect;
using rgbdfuse::fusion::VariantKind;

namespace {

Tensor random_input(Rng& rng, int channels, int h, int w) {
  Tensor t({channels, h, w});
  for (double& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("build_model is deterministic under the seed") {
  const ArchConfig arch;  // defaults
  auto a = build_model(VariantKind::rgbd, arch, 99);
  auto b = build_model(VariantKind::rgbd, arch, 99);
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);

  auto c = build_model(VariantKind::rgbd, arch, 100);
  bool any_diff = false;
  auto pc = c.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].second->data != pc[i].second->data) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("variant parity: parameter counts differ only by the first conv") {
  const ArchConfig arch;  // k=3, first width 16
  auto rgbd = build_model(VariantKind::rgbd, arch, 1);
  auto rgb = build_model(VariantKind::rgb_only, arch, 1);
  auto depth = build_model(VariantKind::depth_only, arch, 1);
  // (4-3) * 3*3 * 16 = 144
  CHECK(rgbd.parameter_count() - rgb.parameter_count() == 144);
  CHECK(rgb.parameter_count() - depth.parameter_count() == 2 * 144);
  CHECK(depth.backbone[0].in_channels == 1);

  auto pr = rgbd.named_parameters();
  auto pg = rgb.named_parameters();
  REQUIRE(pr.size() == pg.size());
  for (std::size_t i = 0; i < pr.size(); ++i) {
    CHECK(pr[i].first == pg[i].first);
    if (pr[i].first == "backbone.0.w") {
      CHECK(pr[i].second->shape == std::vector<int>{16, 4, 3, 3});
      CHECK(pg[i].second->shape == std::vector<int>{16, 3, 3, 3});
    } else {
      CHECK(pr[i].second->shape == pg[i].second->shape);
    }
  }
}

TEST_CASE("forward_train with no ground truth yields zero regression losses") {
  auto arch = testutil::tiny_arch();
  auto model = build_model(VariantKind::rgbd, arch, 3);
  Rng rng(4);
  const std::vector<Tensor> inputs{random_input(rng, 4, 16, 16)};
  const std::vector<ImageTargets> targets{ImageTargets{}};
  const auto losses = forward_train(model, inputs, targets, false);
  CHECK(losses.rpn_reg == 0.0);
  CHECK(losses.det_reg == 0.0);
  CHECK(losses.rpn_cls > 0.0);
  CHECK(losses.det_cls >= 0.0);
  CHECK(losses.finite());
}

TEST_CASE("all loss components are non-negative and finite") {
  auto arch = testutil::tiny_arch();
  Rng rng(44);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto model = build_model(VariantKind::rgbd, arch, seed);
    const std::vector<Tensor> inputs{random_input(rng, 4, 16, 16)};
    const std::vector<ImageTargets> targets{
        ImageTargets{{Box{1, 1, 8, 8}, Box{9, 9, 15, 15}}, {0, 1}}};
    const auto losses = forward_train(model, inputs, targets, false);
    CHECK(losses.finite());
    CHECK(losses.rpn_cls >= 0.0);
    CHECK(losses.rpn_reg >= 0.0);
    CHECK(losses.det_cls >= 0.0);
    CHECK(losses.det_reg >= 0.0);
    CHECK(losses.total() >= 0.0);
  }
}

TEST_CASE("cross-entropy approaches zero for saturated correct logits") {
  Tensor logits({2, 3});
  logits.at2(0, 1) = 40.0;  // row 0 -> class 1
  logits.at2(1, 0) = 40.0;  // row 1 -> class 0
  const auto res = softmax_cross_entropy(logits, {1, 0});
  CHECK(res.loss < 1e-12);
  CHECK(res.counted == 2);
}

TEST_CASE("softmax cross-entropy skips ignored rows") {
  Tensor logits({3, 2});
  const auto res = softmax_cross_entropy(logits, {0, -1, 1});
  CHECK(res.counted == 2);
  for (int j = 0; j < 2; ++j) CHECK(res.dlogits.at2(1, j) == 0.0);
}

TEST_CASE("forward_train rejects inputs whose channels mismatch the variant") {
  auto model = build_model(VariantKind::rgb_only, testutil::tiny_arch(), 5);
  Rng rng(6);
  const std::vector<Tensor> inputs{random_input(rng, 4, 16, 16)};
  const std::vector<ImageTargets> targets{ImageTargets{}};
  try {
    forward_train(model, inputs, targets, false);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape_mismatch);
  }
}

TEST_CASE("analytic gradients match central finite differences on a tiny model") {
  auto arch = testutil::tiny_arch();
  auto model = build_model(VariantKind::rgbd, arch, 7);
  Rng rng(8);
  std::vector<Tensor> inputs{random_input(rng, 4, 16, 16)};
  std::vector<ImageTargets> targets{
      ImageTargets{{Box{2, 3, 9, 10}, Box{8, 9, 15, 15}}, {0, 1}}};
  const auto result = testutil::gradcheck(model, inputs, targets);
  CAPTURE(result.worst_param);
  CHECK(result.checked > 500);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("predict is deterministic and respects max_detections") {
  auto arch = testutil::tiny_arch();
  auto model = build_model(VariantKind::rgbd, arch, 9);
  Rng rng(10);
  const Tensor input = random_input(rng, 4, 32, 32);
  const auto a = predict(model, input, 0.0, 0.5, 5);
  const auto b = predict(model, input, 0.0, 0.5, 5);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() <= 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].class_id == b[i].class_id);
    CHECK(a[i].bbox == b[i].bbox);
  }
}

TEST_CASE("zeroed classification head yields no detections at threshold 0.5") {
  auto arch = testutil::tiny_arch();  // 2 classes + background
  auto model = build_model(VariantKind::rgbd, arch, 11);
  model.cls_head.w.zero();
  model.cls_head.b.zero();
  Rng rng(12);
  const Tensor input = random_input(rng, 4, 32, 32);
  // softmax of all-zero logits over 3 classes is 1/3 < 0.5 everywhere
  CHECK(predict(model, input, 0.5, 0.5, 10).empty());
}

TEST_CASE("predicted boxes stay inside the image") {
  auto arch = testutil::tiny_arch();
  auto model = build_model(VariantKind::rgbd, arch, 13);
  Rng rng(14);
  const Tensor input = random_input(rng, 4, 24, 40);
  for (const auto& det : predict(model, input, 0.0, 0.7, 50)) {
    CHECK(det.bbox.x_min >= 0.0);
    CHECK(det.bbox.y_min >= 0.0);
    CHECK(det.bbox.x_max <= 40.0);
    CHECK(det.bbox.y_max <= 24.0);
    CHECK(det.score >= 0.0);
    CHECK(det.score <= 1.0);
  }
}

TEST_CASE("checkpoint round trip preserves predictions and metadata") {
  testutil::TempDir dir("ckpt");
  auto arch = testutil::tiny_arch();
  auto model = build_model(VariantKind::depth_only, arch, 15);
  fusion::ChannelStats stats;
  stats.mean = {10, 20, 30, 40};
  stats.std = {1, 2, 3, 4};
  save_checkpoint(model, dir / "m.ckpt", stats);

  auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.model.variant == VariantKind::depth_only);
  CHECK(loaded.model.init_seed == 15);
  CHECK(loaded.model.arch.num_classes == arch.num_classes);
  REQUIRE(loaded.channel_stats.has_value());
  CHECK(loaded.channel_stats->mean == stats.mean);

  auto loaded2 = load_checkpoint(dir / "m.ckpt");
  Rng rng(16);
  const Tensor input = random_input(rng, 1, 32, 32);
  const auto a = predict(loaded.model, input, 0.0, 0.5, 10);
  const auto b = predict(loaded2.model, input, 0.0, 0.5, 10);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].bbox == b[i].bbox);
}

TEST_CASE("checkpoint corruption is detected by the checksum") {
  testutil::TempDir dir("ckpt");
  auto model = build_model(VariantKind::rgbd, testutil::tiny_arch(), 17);
  save_checkpoint(model, dir / "m.ckpt");
  auto bytes = [&] {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  }();
  bytes[bytes.size() / 2] ^= 0x40;
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_checkpoint(dir / "bad.ckpt");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::malformed_file);
  }
}

TEST_CASE("arch config JSON round trip") {
  ArchConfig arch = testutil::tiny_arch();
  arch.proposals_train = 77;
  const auto j = arch.to_json();
  const auto back = ArchConfig::from_json(j);
  CHECK(back.backbone_widths == arch.backbone_widths);
  CHECK(back.anchor_scales == arch.anchor_scales);
  CHECK(back.proposals_train == 77);
  CHECK(back.smooth_l1_beta == arch.smooth_l1_beta);
}
