#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "eusml/error.hpp"
#include "eusml/image.hpp"
#include "eusml/nn/network.hpp"

namespace eusml::nn {

struct Heatmap {
  int width = 0;   // feature-map resolution
  int height = 0;
  std::vector<double> values;  // >= 0, max 1 unless all zero
  int input_width = 0;
  int input_height = 0;
  std::vector<double> upsampled;  // bilinear view at input resolution

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double upsampled_at(int x, int y) const {
    return upsampled[static_cast<std::size_t>(y) * input_width + x];
  }
};

/// Activation index used for Grad-CAM on the named conv layer: the output of
/// the ReLU that follows it, or the conv output itself when none does.
/// An empty name selects the last conv layer.
inline std::size_t gradcam_activation_index(const Network& net, const std::string& layer) {
  const auto& layers = net.layers();
  std::size_t conv = layers.size();
  if (layer.empty()) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (std::holds_alternative<Conv2d>(layers[i])) conv = i;
    require(conv < layers.size(), ErrorKind::parameter, "network has no conv layer");
  } else {
    conv = net.find_layer(layer);
    require(conv < layers.size() && std::holds_alternative<Conv2d>(layers[conv]),
            ErrorKind::parameter, "'" + layer + "' is not a conv layer of this network");
  }
  if (conv + 1 < layers.size() && std::holds_alternative<Relu>(layers[conv + 1])) return conv + 2;
  return conv + 1;
}

inline std::vector<double> upsample_bilinear(const std::vector<double>& src, int sw, int sh,
                                             int dw, int dh) {
  std::vector<double> out(static_cast<std::size_t>(dw) * dh);
  const double sx = static_cast<double>(sw) / dw, sy = static_cast<double>(sh) / dh;
  for (int y = 0; y < dh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, sh - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, sw - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      auto s = [&](int xx, int yy) { return src[static_cast<std::size_t>(yy) * sw + xx]; };
      const double top = s(x0, y0) + wx * (s(x1, y0) - s(x0, y0));
      const double bot = s(x0, y1) + wx * (s(x1, y1) - s(x0, y1));
      out[static_cast<std::size_t>(y) * dw + x] = top + wy * (bot - top);
    }
  }
  return out;
}

/// Gradient-weighted class activation map for one image [1,C,H,W].
/// Channel weights are the spatial mean of d(logit[target])/dA; the map is
/// ReLU(sum_c weight_c * A_c), max-normalized.
inline Heatmap grad_cam(const Network& model, const Tensor& image, int target_class,
                        const std::string& layer = {}) {
  require(image.shape.size() == 4 && image.shape[0] == 1, ErrorKind::input,
          "grad_cam expects a single image [1,C,H,W]");
  const std::size_t k = model.class_count();
  require(target_class >= 0 && static_cast<std::size_t>(target_class) < k, ErrorKind::parameter,
          "target class out of range");
  const std::size_t act_index = gradcam_activation_index(model, layer);

  Network scratch = model;
  const ForwardResult fwd = scratch.forward(image);
  Tensor seed(fwd.logits.shape);
  seed.data[static_cast<std::size_t>(target_class)] = 1.0;
  const Tensor grad = scratch.backward(fwd, seed, act_index);
  const Tensor& act = fwd.activations[act_index];

  const std::size_t channels = act.shape[1], h = act.shape[2], w = act.shape[3];
  Heatmap hm;
  hm.width = static_cast<int>(w);
  hm.height = static_cast<int>(h);
  hm.values.assign(h * w, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) alpha += grad.data[c * h * w + i];
    alpha /= static_cast<double>(h * w);
    for (std::size_t i = 0; i < h * w; ++i) hm.values[i] += alpha * act.data[c * h * w + i];
  }
  double peak = 0.0;
  for (double& v : hm.values) {
    v = v > 0.0 ? v : 0.0;
    peak = std::max(peak, v);
  }
  if (peak > 0.0)
    for (double& v : hm.values) v /= peak;

  hm.input_width = static_cast<int>(image.shape[3]);
  hm.input_height = static_cast<int>(image.shape[2]);
  hm.upsampled = upsample_bilinear(hm.values, hm.width, hm.height, hm.input_width, hm.input_height);
  return hm;
}

/// Jet-style ramp: blue, cyan, green, yellow, red at 0, .25, .5, .75, 1.
inline std::array<double, 3> heat_color(double v) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {{
      {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}};
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * 4.0;
  const int i = std::min(3, static_cast<int>(pos));
  const double t = pos - i;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = stops[i][c] + t * (stops[i + 1][c] - stops[i][c]);
  return out;
}

/// Pseudo-colored heatmap alpha-blended over the grayscale image; RGB output.
inline ImageBuffer overlay(const Heatmap& heatmap, const ImageBuffer& image, double alpha = 0.4) {
  require(heatmap.input_width == image.width() && heatmap.input_height == image.height(),
          ErrorKind::parameter, "heatmap size differs from image size");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::parameter, "alpha must be in [0,1]");
  const ImageBuffer gray = to_grayscale(image);
  ImageBuffer out(image.width(), image.height(), 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto color = heat_color(heatmap.upsampled_at(x, y));
      const double g = gray.at(x, y);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = saturate_u8((1.0 - alpha) * g + alpha * color[c]);
    }
  }
  return out;
}

}  // namespace eusml::nn
