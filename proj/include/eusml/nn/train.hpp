#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eusml/error.hpp"
#include "eusml/image.hpp"
#include "eusml/nn/network.hpp"
#include "eusml/util.hpp"

namespace eusml::nn {

/// Fixed-geometry labeled images stored contiguously as N x C x H x W.
struct ImageSet {
  std::size_t channels = 1;
  std::size_t height = kToyInputSize;
  std::size_t width = kToyInputSize;
  std::vector<double> pixels;
  std::vector<int> labels;

  ImageSet() = default;
  ImageSet(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w) {}

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t sample_size() const noexcept { return channels * height * width; }

  /// Accepts an interleaved (HWC) float image and stores it planar (CHW).
  void add(const FloatImage& img, int label) {
    require(static_cast<std::size_t>(img.channels) == channels &&
                static_cast<std::size_t>(img.height) == height &&
                static_cast<std::size_t>(img.width) == width,
            ErrorKind::input, "image geometry differs from the image set");
    const std::size_t base = pixels.size();
    pixels.resize(base + sample_size());
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
          pixels[base + (c * height + y) * width + x] =
              img.data[(y * width + x) * channels + c];
    labels.push_back(label);
  }

  Tensor batch(std::span<const std::size_t> indices) const {
    Tensor t({indices.size(), channels, height, width});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[b] * sample_size()),
                  sample_size(), t.data.begin() + static_cast<std::ptrdiff_t>(b * sample_size()));
    }
    return t;
  }

  Tensor sample(std::size_t i) const {
    const std::size_t idx[1] = {i};
    return batch(idx);
  }
};

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate() const {
    require(lr >= 0.0 && std::isfinite(lr), ErrorKind::configuration, "lr must be finite and >= 0");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::configuration, "momentum must be in [0,1)");
    require(batch_size >= 1, ErrorKind::configuration, "batch_size must be >= 1");
  }
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&, const Network&)>;

/// Mini-batch SGD with classical momentum on mean softmax cross-entropy.
/// Batch order comes from a seeded Fisher-Yates shuffle per epoch, so equal
/// seeds give bit-identical parameters and history.
inline TrainHistory train(Network& net, const ImageSet& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(data.size() > 0, ErrorKind::input, "training set is empty");
  const std::set<int> classes(data.labels.begin(), data.labels.end());
  require(classes.size() >= 2, ErrorKind::input, "training set needs at least 2 classes");
  require(*classes.rbegin() < static_cast<int>(net.class_count()) && *classes.begin() >= 0,
          ErrorKind::configuration, "labels exceed the model's class count");

  auto params = net.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.value->size(), 0.0);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor x = data.batch(idx);
      std::vector<int> y;
      for (auto i : idx) y.push_back(data.labels[i]);

      const ForwardResult fwd = net.forward(x);
      Tensor grad;
      const double loss = softmax_cross_entropy(fwd.logits, y, &grad);
      loss_sum += loss * static_cast<double>(idx.size());
      const std::size_t k = fwd.logits.shape[1];
      for (std::size_t b = 0; b < idx.size(); ++b)
        if (argmax(&fwd.logits.data[b * k], k) == y[b]) ++correct;

      net.zero_grad();
      net.backward(fwd, grad);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& v = velocity[p];
        auto& w = params[p].value->data;
        const auto& g = params[p].grad->data;
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] - cfg.lr * g[i];
          w[i] += v[i];
        }
      }
    }
    EpochStats stats{loss_sum / static_cast<double>(data.size()),
                     static_cast<double>(correct) / static_cast<double>(data.size())};
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats, net);
  }
  return history;
}

/// Argmax-of-softmax class per sample (ties to the lowest index).
inline std::vector<int> predict(const Network& net, const ImageSet& data,
                                std::size_t batch_size = 64) {
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor logits = net.forward(data.batch(idx)).logits;
    const std::size_t k = logits.shape[1];
    for (std::size_t b = 0; b < idx.size(); ++b) out.push_back(argmax(&logits.data[b * k], k));
  }
  return out;
}

inline double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  require(truth.size() == predicted.size() && !truth.empty(), ErrorKind::input,
          "accuracy needs equal-length non-empty label lists");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckOptions {
  std::size_t min_parameters = 200;
  std::size_t per_tensor_min = 16;  // every parameter tensor gets at least this many probes
  double step = 1e-4;
  std::uint64_t seed = 0;
  bool check_input = true;
  std::size_t input_probes = 32;
  /// Test hook: mutates analytic gradients before comparison.
  std::function<void(Network&)> corrupt;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_tensor;  // "<layer>.weight", "<layer>.bias", "input"
  std::size_t probes = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central finite differences of the single-sample cross-entropy loss versus
/// backprop, on randomly chosen parameters (and input pixels).
inline GradCheckResult gradient_check(const Network& model, const Tensor& sample, int label,
                                      const GradCheckOptions& opt = {}) {
  require(sample.shape.size() == 4 && sample.shape[0] == 1, ErrorKind::input,
          "gradient check expects one sample [1,C,H,W]");
  Network net = model;
  const std::vector<int> y{label};
  net.zero_grad();
  const ForwardResult fwd = net.forward(sample);
  Tensor grad_logits;
  softmax_cross_entropy(fwd.logits, y, &grad_logits);
  const Tensor grad_input = net.backward(fwd, grad_logits);
  if (opt.corrupt) opt.corrupt(net);

  auto loss_at = [&](const Network& n, const Tensor& x) {
    return softmax_cross_entropy(n.forward(x).logits, y, nullptr);
  };

  GradCheckResult result;
  Rng rng(opt.seed);
  auto params = net.parameters();
  std::size_t total_params = 0;
  for (const auto& p : params) total_params += p.value->size();

  for (auto& p : params) {
    const std::size_t n = p.value->size();
    const std::size_t share = std::max<std::size_t>(
        opt.per_tensor_min,
        (opt.min_parameters * n + total_params - 1) / std::max<std::size_t>(total_params, 1));
    std::vector<std::size_t> picks;
    if (share >= n) {
      for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
      for (std::size_t i = 0; i < share; ++i) picks.push_back(uniform_index(rng, n));
    }
    double worst = 0.0;
    for (std::size_t i : picks) {
      double& w = p.value->data[i];
      const double saved = w;
      w = saved + opt.step;
      const double up = loss_at(net, sample);
      w = saved - opt.step;
      const double down = loss_at(net, sample);
      w = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      worst = std::max(worst, relative_error(p.grad->data[i], numeric));
      ++result.probes;
    }
    result.per_tensor[p.name] = worst;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }

  if (opt.check_input) {
    Tensor x = sample;
    double worst = 0.0;
    for (std::size_t k = 0; k < opt.input_probes; ++k) {
      const std::size_t i = uniform_index(rng, x.size());
      const double saved = x.data[i];
      x.data[i] = saved + opt.step;
      const double up = loss_at(net, x);
      x.data[i] = saved - opt.step;
      const double down = loss_at(net, x);
      x.data[i] = saved;
      worst = std::max(worst, relative_error(grad_input.data[i], (up - down) / (2.0 * opt.step)));
      ++result.probes;
    }
    result.per_tensor["input"] = worst;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr}, {"momentum", c.momentum}, {"batch_size", c.batch_size},
       {"epochs", c.epochs}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

inline void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = nlohmann::json::array();
  for (const auto& e : h.epochs) j.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
}

}  // namespace eusml::nn
