// Dense double-precision tensor used by the detector network.
#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "rgbdfuse/core.hpp"

namespace rgbdfuse::detect {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // (C,H,W) indexing
  double& at3(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  // (N,M) indexing
  double& at2(int n, int m) { return data[static_cast<std::size_t>(n) * shape[1] + m]; }
  double at2(int n, int m) const { return data[static_cast<std::size_t>(n) * shape[1] + m]; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline Tensor to_chw_tensor(const ImageGrid<double>& grid) {
  Tensor t({grid.channels, grid.height, grid.width});
  for (int c = 0; c < grid.channels; ++c)
    for (int y = 0; y < grid.height; ++y)
      for (int x = 0; x < grid.width; ++x) t.at3(c, y, x) = grid.at(x, y, c);
  return t;
}

}  // namespace rgbdfuse::detect
