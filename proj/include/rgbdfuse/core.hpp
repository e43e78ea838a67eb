// rgbdfuse: shared primitives (errors, deterministic RNG, image grids).
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rgbdfuse {

enum class Errc {
  malformed_file,
  invalid_intrinsics,
  invalid_extrinsics,
  empty_result,
  no_valid_pixels,
  degenerate_range,
  out_of_range,
  dimension_mismatch,
  io_failure,
  not_four_channel,
  zero_std,
  empty_dataset,
  malformed_json,
  unknown_category,
  missing_media,
  degenerate_box,
  count_mismatch,
  config_invalid,
  non_positive_size,
  empty_box,
  shape_mismatch,
  non_finite_gradient,
  empty_split,
  diverged_loss,
  no_ground_truth,
  no_classes,
  empty_runs,
  division_by_zero,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Deterministic RNG. mt19937_64 output is fully specified by the standard;
// the distributions here are hand-rolled because the std:: distribution
// algorithms are implementation-defined and would break seed replay across
// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53 random bits
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // inclusive bounds
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  // Box-Muller, consumes two draws per pair
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used wherever a per-item seed is derived from a base
// seed and an index so parallel work stays deterministic.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Interleaved row-major pixel grid with a runtime channel count.
template <typename T>
struct ImageGrid {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  ImageGrid() = default;
  ImageGrid(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  T& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool same_shape(const ImageGrid& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }

  friend bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.width == b.width && a.height == b.height && a.channels == b.channels &&
           a.data == b.data;
  }
};

// round half away from zero, the pixel/quantization rule used throughout
inline long long round_half_away(double v) { return std::llround(v); }

// FNV-1a 64-bit; used for content checksums and test-side byte hashing
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rgbdfuse
