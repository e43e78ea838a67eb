// Minimal trainable layers (conv, linear) with hand-written backward passes,
// plus the loss primitives used by the two detector stages. Everything runs
// in double precision on the CPU and is deterministic.
#pragma once

#include <cmath>
#include <vector>

#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/tensor.hpp"

namespace rgbdfuse::detect {

struct Conv2d {
  int in_channels = 0, out_channels = 0, kernel = 3, stride = 1, pad = 1;
  Tensor w;   // (out, in, k, k)
  Tensor b;   // (out)
  Tensor gw;  // gradient accumulators, same shapes
  Tensor gb;
  Tensor x_cache;  // input saved by forward_cached for backward

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int s, int p)
      : in_channels(in_ch), out_channels(out_ch), kernel(k), stride(s), pad(p),
        w(Tensor({out_ch, in_ch, k, k})), b(Tensor({out_ch})),
        gw(Tensor({out_ch, in_ch, k, k})), gb(Tensor({out_ch})) {}

  void init_he(Rng& rng) {
    const double scale = std::sqrt(2.0 / (in_channels * kernel * kernel));
    for (double& v : w.data) v = rng.normal() * scale;
    b.zero();
  }

  int out_dim(int in_dim) const { return (in_dim + 2 * pad - kernel) / stride + 1; }

  Tensor forward(const Tensor& x) const {
    const int h = x.shape[1], wd = x.shape[2];
    const int ho = out_dim(h), wo = out_dim(wd);
    Tensor y({out_channels, ho, wo});
    for (int co = 0; co < out_channels; ++co) {
      const double bias = b[static_cast<std::size_t>(co)];
      for (int yo = 0; yo < ho; ++yo)
        for (int xo = 0; xo < wo; ++xo) {
          double acc = bias;
          for (int ci = 0; ci < in_channels; ++ci)
            for (int ky = 0; ky < kernel; ++ky) {
              const int yi = yo * stride + ky - pad;
              if (yi < 0 || yi >= h) continue;
              for (int kx = 0; kx < kernel; ++kx) {
                const int xi = xo * stride + kx - pad;
                if (xi < 0 || xi >= wd) continue;
                acc += w.data[((static_cast<std::size_t>(co) * in_channels + ci) * kernel + ky) *
                                  kernel +
                              kx] *
                       x.at3(ci, yi, xi);
              }
            }
          y.at3(co, yo, xo) = acc;
        }
    }
    return y;
  }

  Tensor forward_cached(const Tensor& x) {
    x_cache = x;
    return forward(x);
  }

  // consumes the cached input; accumulates gw/gb and returns grad w.r.t. x
  Tensor backward(const Tensor& gy) {
    const Tensor& x = x_cache;
    const int h = x.shape[1], wd = x.shape[2];
    const int ho = gy.shape[1], wo = gy.shape[2];
    Tensor gx({in_channels, h, wd});
    for (int co = 0; co < out_channels; ++co) {
      for (int yo = 0; yo < ho; ++yo)
        for (int xo = 0; xo < wo; ++xo) {
          const double g = gy.at3(co, yo, xo);
          if (g == 0.0) continue;
          gb[static_cast<std::size_t>(co)] += g;
          for (int ci = 0; ci < in_channels; ++ci)
            for (int ky = 0; ky < kernel; ++ky) {
              const int yi = yo * stride + ky - pad;
              if (yi < 0 || yi >= h) continue;
              for (int kx = 0; kx < kernel; ++kx) {
                const int xi = xo * stride + kx - pad;
                if (xi < 0 || xi >= wd) continue;
                const std::size_t widx =
                    ((static_cast<std::size_t>(co) * in_channels + ci) * kernel + ky) * kernel +
                    kx;
                gw.data[widx] += g * x.at3(ci, yi, xi);
                gx.at3(ci, yi, xi) += g * w.data[widx];
              }
            }
        }
    }
    return gx;
  }
};

struct Linear {
  int in_dim = 0, out_dim = 0;
  Tensor w;   // (out, in)
  Tensor b;   // (out)
  Tensor gw;
  Tensor gb;
  Tensor x_cache;  // (N, in)

  Linear() = default;
  Linear(int in_d, int out_d)
      : in_dim(in_d), out_dim(out_d), w(Tensor({out_d, in_d})), b(Tensor({out_d})),
        gw(Tensor({out_d, in_d})), gb(Tensor({out_d})) {}

  void init_he(Rng& rng) {
    const double scale = std::sqrt(2.0 / in_dim);
    for (double& v : w.data) v = rng.normal() * scale;
    b.zero();
  }

  Tensor forward(const Tensor& x) const {
    const int n = x.shape[0];
    Tensor y({n, out_dim});
    for (int row = 0; row < n; ++row)
      for (int o = 0; o < out_dim; ++o) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < in_dim; ++i)
          acc += w.at2(o, i) * x.at2(row, i);
        y.at2(row, o) = acc;
      }
    return y;
  }

  Tensor forward_cached(const Tensor& x) {
    x_cache = x;
    return forward(x);
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = x_cache;
    const int n = x.shape[0];
    Tensor gx({n, in_dim});
    for (int row = 0; row < n; ++row)
      for (int o = 0; o < out_dim; ++o) {
        const double g = gy.at2(row, o);
        if (g == 0.0) continue;
        gb[static_cast<std::size_t>(o)] += g;
        for (int i = 0; i < in_dim; ++i) {
          gw.at2(o, i) += g * x.at2(row, i);
          gx.at2(row, i) += g * w.at2(o, i);
        }
      }
    return gx;
  }
};

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// grad through relu given the post-activation values
inline void relu_backward_inplace(Tensor& grad, const Tensor& activated) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (activated.data[i] <= 0.0) grad.data[i] = 0.0;
}

// Row-wise softmax cross-entropy. Rows with label < 0 are excluded from both
// the loss and the gradient; the loss is the mean over counted rows and the
// gradient is already divided by that count.
struct SoftmaxCeResult {
  double loss = 0.0;
  int counted = 0;
  Tensor dlogits;  // (N, C)
};

inline SoftmaxCeResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.shape[0];
  const int c = logits.shape[1];
  require(static_cast<int>(labels.size()) == n, Errc::shape_mismatch,
          "label count must match logit rows");
  SoftmaxCeResult res;
  res.dlogits = Tensor({n, c});
  std::vector<double> probs(static_cast<std::size_t>(c));
  for (int row = 0; row < n; ++row) {
    if (labels[static_cast<std::size_t>(row)] < 0) continue;
    ++res.counted;
  }
  if (res.counted == 0) return res;
  const double inv = 1.0 / res.counted;
  for (int row = 0; row < n; ++row) {
    const int label = labels[static_cast<std::size_t>(row)];
    if (label < 0) continue;
    double max_logit = logits.at2(row, 0);
    for (int j = 1; j < c; ++j) max_logit = std::max(max_logit, logits.at2(row, j));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      probs[static_cast<std::size_t>(j)] = std::exp(logits.at2(row, j) - max_logit);
      denom += probs[static_cast<std::size_t>(j)];
    }
    res.loss += -(std::log(probs[static_cast<std::size_t>(label)]) - std::log(denom)) * inv;
    for (int j = 0; j < c; ++j) {
      const double p = probs[static_cast<std::size_t>(j)] / denom;
      res.dlogits.at2(row, j) = (p - (j == label ? 1.0 : 0.0)) * inv;
    }
  }
  return res;
}

// Elementwise smooth L1 with transition beta; returns loss contribution and
// writes d(loss)/d(pred) for a single element, both unscaled.
inline double smooth_l1(double diff, double beta, double& grad) {
  const double a = std::abs(diff);
  if (a < beta) {
    grad = diff / beta;
    return 0.5 * diff * diff / beta;
  }
  grad = diff > 0.0 ? 1.0 : -1.0;
  return a - 0.5 * beta;
}

inline std::vector<double> softmax_row(const Tensor& logits, int row) {
  const int c = logits.shape[1];
  std::vector<double> out(static_cast<std::size_t>(c));
  double max_logit = logits.at2(row, 0);
  for (int j = 1; j < c; ++j) max_logit = std::max(max_logit, logits.at2(row, j));
  double denom = 0.0;
  for (int j = 0; j < c; ++j) {
    out[static_cast<std::size_t>(j)] = std::exp(logits.at2(row, j) - max_logit);
    denom += out[static_cast<std::size_t>(j)];
  }
  for (double& v : out) v /= denom;
  return out;
}

}  // namespace rgbdfuse::detect
