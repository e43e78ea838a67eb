#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "rgbdfuse/detect/geometry.hpp"
#include "test_util.hpp"

using namespace rgbdfuse;
using namespace rgbdfuse::detect;

namespace {

Box random_box(Rng& rng, double extent) {
  const double x0 = rng.uniform(0.0, extent);
  const double y0 = rng.uniform(0.0, extent);
  return Box{x0, y0, x0 + rng.uniform(1.0, extent / 2.0), y0 + rng.uniform(1.0, extent / 2.0)};
}

// counts unit lattice cells; exact for integer boxes
double iou_pixel_count_oracle(const Box& a, const Box& b) {
  const auto count = [](const Box& box) {
    return static_cast<long long>(box.x_max - box.x_min) *
           static_cast<long long>(box.y_max - box.y_min);
  };
  const long long ix = std::max(0LL, static_cast<long long>(std::min(a.x_max, b.x_max)) -
                                         static_cast<long long>(std::max(a.x_min, b.x_min)));
  const long long iy = std::max(0LL, static_cast<long long>(std::min(a.y_max, b.y_max)) -
                                         static_cast<long long>(std::max(a.y_min, b.y_min)));
  const long long inter = ix * iy;
  const long long uni = count(a) + count(b) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// suppression-matrix NMS oracle, structured differently from the greedy
// implementation: precompute all pairwise IoUs, then walk score order
std::vector<std::size_t> nms_oracle(const std::vector<Detection>& dets, double threshold) {
  const std::size_t n = dets.size();
  std::vector<std::vector<double>> overlap(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) overlap[i][j] = iou(dets[i].bbox, dets[j].bbox);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<bool> suppressed(n, false);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t j : order)
      if (!suppressed[j] && j != i && dets[j].class_id == dets[i].class_id &&
          overlap[i][j] > threshold)
        suppressed[j] = true;
  }
  return kept;
}

}  // namespace

TEST_CASE("single-cell anchor grid") {
  const std::vector<double> scales{16.0};
  const std::vector<double> ratios{1.0};
  const auto anchors = generate_anchors(1, 1, 16.0, scales, ratios);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].center_x() == doctest::Approx(8.0));
  CHECK(anchors[0].center_y() == doctest::Approx(8.0));
  CHECK(anchors[0].width() == doctest::Approx(16.0));
  CHECK(anchors[0].height() == doctest::Approx(16.0));
}

TEST_CASE("anchor area and aspect follow scale and ratio") {
  const std::vector<double> scales{24.0};
  const std::vector<double> ratios{2.0};
  const auto anchors = generate_anchors(1, 1, 8.0, scales, ratios);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].area() == doctest::Approx(24.0 * 24.0).epsilon(1e-6));
  CHECK(anchors[0].height() / anchors[0].width() == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("4x4 grid with 3 scales and 3 ratios matches the nested-loop oracle") {
  const std::vector<double> scales{8.0, 16.0, 32.0};
  const std::vector<double> ratios{0.5, 1.0, 2.0};
  const auto anchors = generate_anchors(4, 4, 16.0, scales, ratios);
  REQUIRE(anchors.size() == 144);
  std::size_t idx = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (double scale : scales)
        for (double ratio : ratios) {
          const double cx = (x + 0.5) * 16.0;
          const double cy = (y + 0.5) * 16.0;
          const double w = scale / std::sqrt(ratio);
          const double h = scale * std::sqrt(ratio);
          CHECK(anchors[idx].x_min == doctest::Approx(cx - w / 2).epsilon(1e-12));
          CHECK(anchors[idx].y_min == doctest::Approx(cy - h / 2).epsilon(1e-12));
          CHECK(anchors[idx].x_max == doctest::Approx(cx + w / 2).epsilon(1e-12));
          CHECK(anchors[idx].y_max == doctest::Approx(cy + h / 2).epsilon(1e-12));
          ++idx;
        }
}

TEST_CASE("iou basics") {
  const Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, Box{5, 5, 7, 7}) == 0.0);
  // (0,0,2,2) vs (1,0,3,2): inter 2, union 6
  CHECK(iou(a, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou matches the pixel-counting oracle on integer boxes") {
  Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    const auto make = [&] {
      const long long x0 = rng.uniform_int(0, 40);
      const long long y0 = rng.uniform_int(0, 40);
      return Box{static_cast<double>(x0), static_cast<double>(y0),
                 static_cast<double>(x0 + rng.uniform_int(1, 30)),
                 static_cast<double>(y0 + rng.uniform_int(1, 30))};
    };
    const Box a = make(), b = make();
    CHECK(std::abs(iou(a, b) - iou_pixel_count_oracle(a, b)) < 1e-9);
  }
}

TEST_CASE("iou symmetry and scale invariance") {
  Rng rng(22);
  for (int i = 0; i < 500; ++i) {
    const Box a = random_box(rng, 50.0);
    const Box b = random_box(rng, 50.0);
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-15));
    const double lam = rng.uniform(0.1, 10.0);
    const Box as{a.x_min * lam, a.y_min * lam, a.x_max * lam, a.y_max * lam};
    const Box bs{b.x_min * lam, b.y_min * lam, b.x_max * lam, b.y_max * lam};
    CHECK(iou(as, bs) == doctest::Approx(iou(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("encode is the identity delta for gt == anchor") {
  const Box b{3, 4, 10, 12};
  const auto d = encode_box(b, b);
  CHECK(d.tx == doctest::Approx(0.0));
  CHECK(d.ty == doctest::Approx(0.0));
  CHECK(d.tw == doctest::Approx(0.0));
  CHECK(d.th == doctest::Approx(0.0));
}

TEST_CASE("doubling the box size gives tw = th = ln 2") {
  const Box anchor{0, 0, 10, 10};
  const Box gt{-5, -5, 15, 15};
  const auto d = encode_box(gt, anchor);
  CHECK(d.tx == doctest::Approx(0.0));
  CHECK(d.tw == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(d.th == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("encode/decode round trip within 1e-6 pixels over 1000 random pairs") {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    const Box gt = random_box(rng, 100.0);
    const Box anchor = random_box(rng, 100.0);
    const Box back = decode_box(encode_box(gt, anchor), anchor);
    CHECK(std::abs(back.x_min - gt.x_min) < 1e-6);
    CHECK(std::abs(back.y_min - gt.y_min) < 1e-6);
    CHECK(std::abs(back.x_max - gt.x_max) < 1e-6);
    CHECK(std::abs(back.y_max - gt.y_max) < 1e-6);
  }
}

TEST_CASE("decode is monotone in tx for a fixed anchor") {
  const Box anchor{10, 10, 30, 40};
  double prev = -1e9;
  for (double tx = -2.0; tx <= 2.0; tx += 0.1) {
    const Box b = decode_box(BoxDelta{tx, 0, 0, 0}, anchor);
    CHECK(b.center_x() > prev);
    prev = b.center_x();
  }
}

TEST_CASE("encode rejects non-positive sizes") {
  try {
    encode_box(Box{0, 0, 0, 5}, Box{0, 0, 5, 5});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_positive_size);
  }
}

TEST_CASE("assign_targets with no gt labels everything negative") {
  const auto anchors = generate_anchors(2, 2, 16.0, std::vector<double>{16.0},
                                        std::vector<double>{1.0});
  const auto targets = assign_targets(anchors, {}, {}, 0.7, 0.3);
  for (const auto& t : targets) CHECK(t.kind == TargetKind::negative);
}

TEST_CASE("an anchor equal to a gt box becomes positive with zero delta") {
  const std::vector<Anchor> anchors{Box{0, 0, 16, 16}, Box{100, 100, 116, 116}};
  const std::vector<Box> gts{Box{0, 0, 16, 16}};
  const std::vector<int> classes{4};
  const auto targets = assign_targets(anchors, gts, classes, 0.7, 0.3);
  CHECK(targets[0].kind == TargetKind::positive);
  CHECK(targets[0].class_id == 4);
  CHECK(targets[0].delta.tx == doctest::Approx(0.0));
  CHECK(targets[1].kind == TargetKind::negative);
}

TEST_CASE("assign_targets matches an exhaustive oracle on random instances") {
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Anchor> anchors;
    for (int i = 0; i < 50; ++i) anchors.push_back(random_box(rng, 80.0));
    std::vector<Box> gts;
    std::vector<int> classes;
    for (int g = 0; g < 5; ++g) {
      gts.push_back(random_box(rng, 80.0));
      classes.push_back(static_cast<int>(rng.uniform_int(0, 8)));
    }
    const double pos = 0.5, neg = 0.2;
    const auto targets =
        assign_targets(anchors, gts, classes, pos, neg);

    // oracle: full IoU table, same documented rule, independent loops
    std::vector<std::vector<double>> table(anchors.size(), std::vector<double>(gts.size()));
    for (std::size_t a = 0; a < anchors.size(); ++a)
      for (std::size_t g = 0; g < gts.size(); ++g) table[a][g] = iou(anchors[a], gts[g]);
    std::vector<int> expected_kind(anchors.size(), 0);  // 0 neg, 1 ignore, 2 pos
    std::vector<int> expected_gt(anchors.size(), -1);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      double best = -1.0;
      int best_g = -1;
      for (std::size_t g = 0; g < gts.size(); ++g)
        if (table[a][g] > best) {
          best = table[a][g];
          best_g = static_cast<int>(g);
        }
      if (best >= pos) {
        expected_kind[a] = 2;
        expected_gt[a] = best_g;
      } else if (best < neg) {
        expected_kind[a] = 0;
      } else {
        expected_kind[a] = 1;
      }
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
      double best = -1.0;
      std::size_t best_a = 0;
      for (std::size_t a = 0; a < anchors.size(); ++a)
        if (table[a][g] > best) {
          best = table[a][g];
          best_a = a;
        }
      expected_kind[best_a] = 2;
      expected_gt[best_a] = static_cast<int>(g);
    }
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const int kind = targets[a].kind == TargetKind::positive
                           ? 2
                           : (targets[a].kind == TargetKind::ignore ? 1 : 0);
      CHECK(kind == expected_kind[a]);
      if (kind == 2) {
        CHECK(targets[a].gt_index == expected_gt[a]);
        CHECK(targets[a].class_id == classes[static_cast<std::size_t>(expected_gt[a])]);
      }
    }
  }
}

TEST_CASE("nms keeps a single detection") {
  const std::vector<Detection> dets{{Box{0, 0, 10, 10}, 2, 0.7}};
  const auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.7);
}

TEST_CASE("nms keeps only the higher-scored of two identical boxes") {
  const std::vector<Detection> dets{{Box{0, 0, 10, 10}, 0, 0.9}, {Box{0, 0, 10, 10}, 0, 0.8}};
  const auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms is class-wise independent") {
  const std::vector<Detection> dets{{Box{0, 0, 10, 10}, 0, 0.9}, {Box{0, 0, 10, 10}, 1, 0.8}};
  const auto kept = nms(dets, 0.5);
  CHECK(kept.size() == 2);
}

TEST_CASE("nms matches the suppression-matrix oracle on 200 random detections") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 200; ++i)
      dets.push_back(Detection{random_box(rng, 60.0), static_cast<int>(rng.uniform_int(0, 3)),
                               rng.uniform(0.0, 1.0)});
    const double thr = rng.uniform(0.2, 0.7);
    const auto kept = nms_indices(dets, thr);
    const auto expected = nms_oracle(dets, thr);
    CHECK(std::set<std::size_t>(kept.begin(), kept.end()) ==
          std::set<std::size_t>(expected.begin(), expected.end()));
  }
}

TEST_CASE("nms output scores are non-increasing and a subset of the input") {
  Rng rng(26);
  std::vector<Detection> dets;
  for (int i = 0; i < 100; ++i)
    dets.push_back(Detection{random_box(rng, 40.0), static_cast<int>(rng.uniform_int(0, 2)),
                             rng.uniform(0.0, 1.0)});
  const auto kept = nms(dets, 0.4);
  CHECK(kept.size() <= dets.size());
  for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1].score >= kept[i].score);
}

TEST_CASE("raising the nms threshold never shrinks the retained set") {
  Rng rng(27);
  std::vector<Detection> dets;
  for (int i = 0; i < 120; ++i)
    dets.push_back(Detection{random_box(rng, 40.0), 0, rng.uniform(0.0, 1.0)});
  std::size_t prev = 0;
  for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto kept = nms_indices(dets, thr);
    CHECK(kept.size() >= prev);
    prev = kept.size();
  }
}

TEST_CASE("roi_pool over the whole map with matching size is the identity") {
  Rng rng(28);
  Tensor feat({3, 4, 4});
  for (double& v : feat.data) v = rng.uniform(-1.0, 1.0);
  const auto out = roi_pool(feat, Box{0, 0, 4, 4}, 4);
  CHECK(out.data == feat.data);
}

TEST_CASE("roi_pool of a constant map is constant") {
  Tensor feat({2, 6, 5});
  for (double& v : feat.data) v = 3.25;
  const auto out = roi_pool(feat, Box{0.7, 1.1, 4.9, 5.3}, 3);
  for (double v : out.data) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("roi_pool rejects boxes with no area inside the map") {
  Tensor feat({1, 4, 4});
  try {
    roi_pool(feat, Box{-5, -5, -1, -1}, 2);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_box);
  }
}

TEST_CASE("roi_pool matches a brute-force per-cell max oracle") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int fh = static_cast<int>(rng.uniform_int(3, 10));
    const int fw = static_cast<int>(rng.uniform_int(3, 10));
    Tensor feat({2, fh, fw});
    for (double& v : feat.data) v = rng.uniform(-5.0, 5.0);
    const double x0 = rng.uniform(0.0, fw - 1.0);
    const double y0 = rng.uniform(0.0, fh - 1.0);
    const Box box{x0, y0, x0 + rng.uniform(0.5, fw - x0), y0 + rng.uniform(0.5, fh - y0)};
    const int k = static_cast<int>(rng.uniform_int(1, 4));
    const auto out = roi_pool(feat, box, k);

    const Box cb = clip_box(box, fw, fh);
    for (int c = 0; c < 2; ++c)
      for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) {
          int rb = static_cast<int>(std::floor(cb.y_min + cb.height() * j / k));
          int re = static_cast<int>(std::ceil(cb.y_min + cb.height() * (j + 1) / k));
          rb = std::clamp(rb, 0, fh - 1);
          re = std::clamp(re, rb + 1, fh);
          int colb = static_cast<int>(std::floor(cb.x_min + cb.width() * i / k));
          int cole = static_cast<int>(std::ceil(cb.x_min + cb.width() * (i + 1) / k));
          colb = std::clamp(colb, 0, fw - 1);
          cole = std::clamp(cole, colb + 1, fw);
          double expected = -1e300;
          for (int y = rb; y < re; ++y)
            for (int x = colb; x < cole; ++x) expected = std::max(expected, feat.at3(c, y, x));
          CHECK(out.at3(c, j, i) == doctest::Approx(expected));
        }
  }
}
