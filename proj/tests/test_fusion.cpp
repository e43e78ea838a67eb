#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rgbdfuse/fusion.hpp"
#include "test_util.hpp"

using namespace rgbdfuse;
using namespace rgbdfuse::fusion;

namespace {

RgbdImage random_rgbd(Rng& rng, int w, int h) {
  RgbdImage img(w, h);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

ImageGrid<std::uint8_t> random_grid(Rng& rng, int w, int h, int c) {
  ImageGrid<std::uint8_t> g(w, h, c);
  for (auto& v : g.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return g;
}

}  // namespace

TEST_CASE("variant channel counts") {
  CHECK(channel_count(VariantKind::rgb_only) == 3);
  CHECK(channel_count(VariantKind::depth_only) == 1);
  CHECK(channel_count(VariantKind::rgbd) == 4);
  CHECK(variant_from_name("rgbd") == VariantKind::rgbd);
  CHECK(variant_name(VariantKind::depth_only) == "depth");
}

TEST_CASE("pack_rgbd keeps RGB and zero depth bit-exact") {
  Rng rng(1);
  const auto rgb = random_grid(rng, 2, 2, 3);
  const ImageGrid<std::uint8_t> depth(2, 2, 1);
  const auto packed = pack_rgbd(rgb, depth);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(packed.at(x, y, c) == rgb.at(x, y, c));
      CHECK(packed.at(x, y, 3) == 0);
    }
}

TEST_CASE("pack_rgbd rejects mismatched dimensions") {
  Rng rng(2);
  const auto rgb = random_grid(rng, 2, 2, 3);
  const auto depth = random_grid(rng, 3, 3, 1);
  try {
    pack_rgbd(rgb, depth);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_mismatch);
  }
}

TEST_CASE("pack then unpack returns both inputs bit-exact") {
  Rng rng(3);
  const auto rgb = random_grid(rng, 17, 13, 3);
  const auto depth = random_grid(rng, 17, 13, 1);
  const auto packed = pack_rgbd(rgb, depth);
  const auto rgb_back = select_channels(packed, VariantKind::rgb_only);
  const auto depth_back = select_channels(packed, VariantKind::depth_only);
  CHECK(rgb_back.data == rgb.data);
  CHECK(depth_back.data == depth.data);
}

TEST_CASE("select_channels rgbd is the identity") {
  Rng rng(4);
  const auto img = random_rgbd(rng, 5, 4);
  const auto all = select_channels(img, VariantKind::rgbd);
  CHECK(all.data == img.pixels);
}

TEST_CASE("rgb plus depth selections partition the rgbd image") {
  Rng rng(5);
  const auto img = random_rgbd(rng, 9, 7);
  const auto rgb = select_channels(img, VariantKind::rgb_only);
  const auto depth = select_channels(img, VariantKind::depth_only);
  const auto rebuilt = pack_rgbd(rgb, depth);
  CHECK(rebuilt == img);
}

TEST_CASE("rgbd PNG round trip is byte-exact") {
  testutil::TempDir dir("rgbd");
  Rng rng(6);
  const auto img = random_rgbd(rng, 33, 21);
  write_rgbd(img, dir / "img.png");
  const auto back = read_rgbd(dir / "img.png");
  CHECK(back == img);
}

TEST_CASE("reading a 3-channel PNG as RGB-D fails with NotFourChannel") {
  testutil::TempDir dir("rgbd");
  Rng rng(7);
  const auto rgb = random_grid(rng, 8, 8, 3);
  io::write_png8(rgb, dir / "rgb.png");
  try {
    read_rgbd(dir / "rgb.png");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_four_channel);
  }
}

TEST_CASE("1920x1200 fixture image round trip preserves the byte hash") {
  testutil::TempDir dir("rgbd");
  Rng rng(8);
  const auto img = random_rgbd(rng, 1920, 1200);
  const std::uint64_t hash_before = fnv1a64(img.pixels.data(), img.pixels.size());
  write_rgbd(img, dir / "big.png");
  const auto back = read_rgbd(dir / "big.png");
  const std::uint64_t hash_after = fnv1a64(back.pixels.data(), back.pixels.size());
  CHECK(hash_before == hash_after);
  CHECK(back.width == 1920);
  CHECK(back.height == 1200);
}

TEST_CASE("normalize_input centers and scales") {
  ImageGrid<std::uint8_t> channels(2, 2, 1);
  for (auto& v : channels.data) v = 77;
  const auto centered = normalize_input(channels, {77.0}, {1.0});
  for (double v : centered.data) CHECK(v == doctest::Approx(0.0));

  Rng rng(9);
  const auto noisy = random_grid(rng, 4, 4, 2);
  const auto scaled = normalize_input(noisy, {0.0, 0.0}, {255.0, 255.0});
  for (double v : scaled.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("normalize_input rejects zero std") {
  ImageGrid<std::uint8_t> channels(2, 2, 1);
  try {
    normalize_input(channels, {0.0}, {0.0});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_std);
  }
}

TEST_CASE("normalize_input is affine in the input") {
  Rng rng(10);
  const auto a = random_grid(rng, 6, 6, 4);
  const auto b = random_grid(rng, 6, 6, 4);
  const std::vector<double> mean{10, 20, 30, 40};
  const std::vector<double> std_dev{3, 5, 7, 9};
  const auto na = normalize_input(a, mean, std_dev);
  const auto nb = normalize_input(b, mean, std_dev);
  for (std::size_t i = 0; i < na.data.size(); ++i) {
    const int c = static_cast<int>(i % 4);
    const double expected =
        (static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])) /
        std_dev[static_cast<std::size_t>(c)];
    CHECK(na.data[i] - nb.data[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("channel stats of a uniform gray image") {
  RgbdImage img(4, 4);
  for (auto& v : img.pixels) v = 128;
  const auto stats = compute_channel_stats(std::vector<RgbdImage>{img});
  for (int c = 0; c < 4; ++c) {
    CHECK(stats.mean[static_cast<std::size_t>(c)] == doctest::Approx(128.0));
    CHECK(stats.std[static_cast<std::size_t>(c)] == doctest::Approx(0.0));
  }
}

TEST_CASE("channel stats of all-0 and all-255 images") {
  RgbdImage dark(2, 2), bright(2, 2);
  for (auto& v : bright.pixels) v = 255;
  const auto stats = compute_channel_stats(std::vector<RgbdImage>{dark, bright});
  for (int c = 0; c < 4; ++c) {
    CHECK(stats.mean[static_cast<std::size_t>(c)] == doctest::Approx(127.5));
    CHECK(stats.std[static_cast<std::size_t>(c)] == doctest::Approx(127.5));
  }
}

TEST_CASE("channel stats match a single-pass oracle") {
  Rng rng(11);
  std::vector<RgbdImage> images;
  for (int i = 0; i < 6; ++i) images.push_back(random_rgbd(rng, 12, 10));
  const auto stats = compute_channel_stats(images);
  for (int c = 0; c < 4; ++c) {
    std::vector<double> values;
    for (const auto& img : images)
      for (std::size_t p = 0; p < img.pixels.size() / 4; ++p)
        values.push_back(img.pixels[p * 4 + static_cast<std::size_t>(c)]);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    CHECK(stats.mean[static_cast<std::size_t>(c)] == doctest::Approx(mean).epsilon(1e-9));
    CHECK(stats.std[static_cast<std::size_t>(c)] ==
          doctest::Approx(std::sqrt(var)).epsilon(1e-9));
  }
}

TEST_CASE("normalizing by a split's own stats yields mean 0 and std 1") {
  Rng rng(12);
  std::vector<RgbdImage> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_rgbd(rng, 16, 16));
  const auto stats = compute_channel_stats(images);
  const auto [mean, std_dev] = restrict_stats(stats, VariantKind::rgbd);
  std::array<double, 4> sum{}, sum_sq{};
  std::int64_t n = 0;
  for (const auto& img : images) {
    const auto channels = select_channels(img, VariantKind::rgbd);
    const auto norm = normalize_input(channels, mean, std_dev);
    for (std::size_t i = 0; i < norm.data.size(); ++i) {
      const auto c = i % 4;
      sum[c] += norm.data[i];
      sum_sq[c] += norm.data[i] * norm.data[i];
    }
    n += static_cast<std::int64_t>(norm.pixel_count());
  }
  for (int c = 0; c < 4; ++c) {
    const double m = sum[static_cast<std::size_t>(c)] / static_cast<double>(n);
    const double v = sum_sq[static_cast<std::size_t>(c)] / static_cast<double>(n) - m * m;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-6);
  }
}

TEST_CASE("restrict_stats picks the variant's channels") {
  ChannelStats stats;
  stats.mean = {1, 2, 3, 4};
  stats.std = {5, 6, 7, 8};
  const auto [rgb_mean, rgb_std] = restrict_stats(stats, VariantKind::rgb_only);
  CHECK(rgb_mean == std::vector<double>{1, 2, 3});
  CHECK(rgb_std == std::vector<double>{5, 6, 7});
  const auto [d_mean, d_std] = restrict_stats(stats, VariantKind::depth_only);
  CHECK(d_mean == std::vector<double>{4});
  CHECK(d_std == std::vector<double>{8});
}

TEST_CASE("channel stats JSON round trip") {
  testutil::TempDir dir("chstats");
  ChannelStats stats;
  stats.mean = {1.5, 2.5, 3.5, 4.5};
  stats.std = {0.1, 0.2, 0.3, 0.4};
  save_channel_stats(stats, dir / "channel_stats.json");
  const auto loaded = load_channel_stats(dir / "channel_stats.json");
  CHECK(loaded.mean == stats.mean);
  CHECK(loaded.std == stats.std);
}

TEST_CASE("png round trip property over random sizes") {
  testutil::TempDir dir("prop");
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(1, 48));
    const int h = static_cast<int>(rng.uniform_int(1, 48));
    const auto img = random_rgbd(rng, w, h);
    write_rgbd(img, dir / "t.png");
    CHECK(read_rgbd(dir / "t.png") == img);
  }
}
