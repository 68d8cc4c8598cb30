#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "eusml/error.hpp"
#include "eusml/util.hpp"

namespace eusml::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// ---------------------------------------------------------------------------
// Layers. Activations are NCHW for spatial layers and NF after pooling.

/// 3x3-style convolution, stride 1, zero padding that preserves H and W.
struct Conv2d {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  Tensor grad_weight;
  Tensor grad_bias;

  Conv2d() = default;
  Conv2d(std::string n, std::size_t in, std::size_t out, std::size_t k = 3)
      : name(std::move(n)), in_channels(in), out_channels(out), kernel(k),
        weight({out, in, k, k}), bias({out}), grad_weight({out, in, k, k}), grad_bias({out}) {
    require(k % 2 == 1, ErrorKind::parameter, "conv kernel must be odd");
  }

  Tensor forward(const Tensor& x) const {
    require(x.shape.size() == 4 && x.shape[1] == in_channels, ErrorKind::input,
            name + ": expected input [N," + std::to_string(in_channels) + ",H,W]");
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    Tensor y({n, out_channels, h, w});
    const int r = static_cast<int>(kernel / 2);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_channels; ++o) {
        double* dst = &y.data[((b * out_channels + o) * h) * w];
        std::fill(dst, dst + h * w, bias.data[o]);
        for (std::size_t c = 0; c < in_channels; ++c) {
          const double* src = &x.data[((b * in_channels + c) * h) * w];
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const double wv = weight.data[((o * in_channels + c) * kernel + ky) * kernel + kx];
              const int dy = static_cast<int>(ky) - r, dx = static_cast<int>(kx) - r;
              const int y0 = std::max(0, -dy), y1 = std::min<int>(h, static_cast<int>(h) - dy);
              const int x0 = std::max(0, -dx), x1 = std::min<int>(w, static_cast<int>(w) - dx);
              for (int yy = y0; yy < y1; ++yy) {
                double* drow = dst + static_cast<std::size_t>(yy) * w;
                const double* srow = src + static_cast<std::size_t>(yy + dy) * w + dx;
                for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
              }
            }
          }
        }
      }
    }
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& grad_y) {
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    Tensor grad_x(x.shape);
    const int r = static_cast<int>(kernel / 2);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_channels; ++o) {
        const double* g = &grad_y.data[((b * out_channels + o) * h) * w];
        double gb = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) gb += g[i];
        grad_bias.data[o] += gb;
        for (std::size_t c = 0; c < in_channels; ++c) {
          const double* src = &x.data[((b * in_channels + c) * h) * w];
          double* gsrc = &grad_x.data[((b * in_channels + c) * h) * w];
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::size_t widx = ((o * in_channels + c) * kernel + ky) * kernel + kx;
              const double wv = weight.data[widx];
              const int dy = static_cast<int>(ky) - r, dx = static_cast<int>(kx) - r;
              const int y0 = std::max(0, -dy), y1 = std::min<int>(h, static_cast<int>(h) - dy);
              const int x0 = std::max(0, -dx), x1 = std::min<int>(w, static_cast<int>(w) - dx);
              double gw = 0.0;
              for (int yy = y0; yy < y1; ++yy) {
                const double* grow = g + static_cast<std::size_t>(yy) * w;
                const double* srow = src + static_cast<std::size_t>(yy + dy) * w + dx;
                double* gsrow = gsrc + static_cast<std::size_t>(yy + dy) * w + dx;
                for (int xx = x0; xx < x1; ++xx) {
                  gw += grow[xx] * srow[xx];
                  gsrow[xx] += wv * grow[xx];
                }
              }
              grad_weight.data[widx] += gw;
            }
          }
        }
      }
    }
    return grad_x;
  }
};

struct Relu {
  std::string name;

  Tensor forward(const Tensor& x) const {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor& grad_y) const {
    Tensor g = grad_y;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(x.data[i] > 0.0)) g.data[i] = 0.0;
    return g;
  }
};

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
/// Ties route the gradient to the first maximum in row-major window order.
struct MaxPool2 {
  std::string name;

  Tensor forward(const Tensor& x) const {
    require(x.shape.size() == 4 && x.shape[2] >= 2 && x.shape[3] >= 2, ErrorKind::input,
            name + ": input too small to pool");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    for (std::size_t p = 0; p < n * c; ++p) {
      const double* src = &x.data[p * h * w];
      double* dst = &y.data[p * oh * ow];
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] = src[argmax_offset(src, w, i, j)];
    }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& grad_y) const {
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor g(x.shape);
    for (std::size_t p = 0; p < n * c; ++p) {
      const double* src = &x.data[p * h * w];
      const double* gy = &grad_y.data[p * oh * ow];
      double* gx = &g.data[p * h * w];
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) gx[argmax_offset(src, w, i, j)] += gy[i * ow + j];
    }
    return g;
  }

  static std::size_t argmax_offset(const double* plane, std::size_t w, std::size_t i, std::size_t j) {
    std::size_t best = (2 * i) * w + 2 * j;
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t dx = 0; dx < 2; ++dx) {
        const std::size_t off = (2 * i + dy) * w + 2 * j + dx;
        if (plane[off] > plane[best]) best = off;
      }
    return best;
  }
};

/// [N,C,H,W] -> [N,C] spatial mean.
struct GlobalAvgPool {
  std::string name;

  Tensor forward(const Tensor& x) const {
    require(x.shape.size() == 4, ErrorKind::input, name + ": expected NCHW input");
    const std::size_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Tensor y({n, c});
    for (std::size_t p = 0; p < n * c; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += x.data[p * hw + i];
      y.data[p] = s / static_cast<double>(hw);
    }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& grad_y) const {
    const std::size_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Tensor g(x.shape);
    for (std::size_t p = 0; p < n * c; ++p) {
      const double v = grad_y.data[p] / static_cast<double>(hw);
      std::fill(&g.data[p * hw], &g.data[p * hw] + hw, v);
    }
    return g;
  }
};

/// Fully connected [N,in] -> [N,out].
struct Dense {
  std::string name;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  Tensor grad_weight;
  Tensor grad_bias;

  Dense() = default;
  Dense(std::string n, std::size_t in, std::size_t out)
      : name(std::move(n)), in_features(in), out_features(out), weight({out, in}), bias({out}),
        grad_weight({out, in}), grad_bias({out}) {}

  Tensor forward(const Tensor& x) const {
    require(x.shape.size() == 2 && x.shape[1] == in_features, ErrorKind::input,
            name + ": expected input [N," + std::to_string(in_features) + "]");
    const std::size_t n = x.shape[0];
    Tensor y({n, out_features});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_features; ++o) {
        double s = bias.data[o];
        for (std::size_t i = 0; i < in_features; ++i)
          s += weight.data[o * in_features + i] * x.data[b * in_features + i];
        y.data[b * out_features + o] = s;
      }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& grad_y) {
    const std::size_t n = x.shape[0];
    Tensor g(x.shape);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_features; ++o) {
        const double gy = grad_y.data[b * out_features + o];
        grad_bias.data[o] += gy;
        for (std::size_t i = 0; i < in_features; ++i) {
          grad_weight.data[o * in_features + i] += gy * x.data[b * in_features + i];
          g.data[b * in_features + i] += gy * weight.data[o * in_features + i];
        }
      }
    return g;
  }
};

using Layer = std::variant<Conv2d, Relu, MaxPool2, GlobalAvgPool, Dense>;

inline const std::string& layer_name(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
}

/// A view of one trainable tensor together with its gradient.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct ForwardResult {
  Tensor logits;                     // [N, k]
  std::vector<Tensor> activations;   // activations[0] = input, activations[i+1] = output of layer i
};

/// Sequential network. Copyable, so a model snapshot is just a value.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::size_t class_count() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      if (auto* d = std::get_if<Dense>(&*it)) return d->out_features;
    }
    return 0;
  }

  ForwardResult forward(const Tensor& input) const {
    ForwardResult r;
    r.activations.reserve(layers_.size() + 1);
    r.activations.push_back(input);
    for (const auto& layer : layers_) {
      r.activations.push_back(
          std::visit([&](const auto& l) { return l.forward(r.activations.back()); }, layer));
    }
    r.logits = r.activations.back();
    return r;
  }

  /// Backpropagates grad_logits from the last layer down to activation index
  /// `stop` (0 = network input). Parameter gradients are accumulated for every
  /// layer passed. Returns dL/d(activations[stop]).
  Tensor backward(const ForwardResult& fwd, const Tensor& grad_logits, std::size_t stop = 0) {
    Tensor grad = grad_logits;
    for (std::size_t i = layers_.size(); i-- > stop;) {
      grad = std::visit([&](auto& l) { return l.backward(fwd.activations[i], grad); }, layers_[i]);
    }
    return grad;
  }

  void zero_grad() {
    for (auto& p : parameters()) std::fill(p.grad->data.begin(), p.grad->data.end(), 0.0);
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& layer : layers_) {
      if (auto* c = std::get_if<Conv2d>(&layer)) {
        out.push_back({c->name + ".weight", &c->weight, &c->grad_weight});
        out.push_back({c->name + ".bias", &c->bias, &c->grad_bias});
      } else if (auto* d = std::get_if<Dense>(&layer)) {
        out.push_back({d->name + ".weight", &d->weight, &d->grad_weight});
        out.push_back({d->name + ".bias", &d->bias, &d->grad_bias});
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
      if (auto* c = std::get_if<Conv2d>(&layer)) n += c->weight.size() + c->bias.size();
      if (auto* d = std::get_if<Dense>(&layer)) n += d->weight.size() + d->bias.size();
    }
    return n;
  }

  /// Index of the named layer, or layers().size() if absent.
  std::size_t find_layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layer_name(layers_[i]) == name) return i;
    return layers_.size();
  }

 private:
  std::vector<Layer> layers_;
};

/// He-normal weights (std = sqrt(2 / fan_in)) from the given seed; zero biases.
inline void he_initialize(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : net.layers()) {
    if (auto* c = std::get_if<Conv2d>(&layer)) {
      const double s = std::sqrt(2.0 / static_cast<double>(c->in_channels * c->kernel * c->kernel));
      for (double& v : c->weight.data) v = s * standard_normal(rng);
      std::fill(c->bias.data.begin(), c->bias.data.end(), 0.0);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      const double s = std::sqrt(2.0 / static_cast<double>(d->in_features));
      for (double& v : d->weight.data) v = s * standard_normal(rng);
      std::fill(d->bias.data.begin(), d->bias.data.end(), 0.0);
    }
  }
}

inline constexpr std::size_t kToyInputSize = 64;

/// conv(3x3,8) relu pool conv(3x3,16) relu pool conv(3x3,32) relu gap dense(32->k).
/// Softmax is applied by the loss and by predict(), not as a layer.
inline Network make_toy_cnn(std::size_t classes, std::uint64_t seed, std::size_t input_channels = 1) {
  require(classes >= 2, ErrorKind::parameter, "classifier needs at least 2 classes");
  Network net({Conv2d("conv1", input_channels, 8), Relu{"relu1"}, MaxPool2{"pool1"},
               Conv2d("conv2", 8, 16), Relu{"relu2"}, MaxPool2{"pool2"},
               Conv2d("conv3", 16, 32), Relu{"relu3"}, GlobalAvgPool{"gap"},
               Dense("fc", 32, classes)});
  he_initialize(net, seed);
  return net;
}

/// Row-wise softmax of [N,k] logits (max-shifted).
inline Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  for (std::size_t b = 0; b < n; ++b) {
    double* row = &p.data[b * k];
    const double m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (row[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < k; ++j) row[j] /= s;
  }
  return p;
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
inline double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    Tensor* grad_logits) {
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  require(labels.size() == n, ErrorKind::input, "label count differs from batch size");
  const Tensor p = softmax(logits);
  double loss = 0.0;
  if (grad_logits) *grad_logits = Tensor(logits.shape);
  for (std::size_t b = 0; b < n; ++b) {
    require(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < k, ErrorKind::input,
            "label out of range");
    const double pb = p.data[b * k + labels[b]];
    loss -= std::log(std::max(pb, 1e-300));
    if (grad_logits) {
      for (std::size_t j = 0; j < k; ++j) {
        grad_logits->data[b * k + j] =
            (p.data[b * k + j] - (static_cast<int>(j) == labels[b] ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return loss / static_cast<double>(n);
}

/// Index of the largest value; ties go to the lowest index.
inline int argmax(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return static_cast<int>(best);
}

}  // namespace eusml::nn
