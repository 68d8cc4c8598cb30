#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eusml/dataset.hpp"
#include "eusml/error.hpp"
#include "eusml/nn/network.hpp"
#include "eusml/util.hpp"

namespace eusml::nn {

// Layout (little-endian):
//   magic "EUSMLCNN" | u32 version | u32 layer count
//   per layer: u8 kind | str name | kind-specific u64 dims
//   per conv/dense layer: f64 weights, f64 biases
//   NormStats: u32 channels | f64 mean[] | f64 std[]
inline constexpr std::string_view kCheckpointMagic = "EUSMLCNN";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Network network;
  NormStats norm;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void doubles(const std::vector<double>& v) {
    for (double d : v) pod(d);
  }
  const std::string& bytes() const { return bytes_; }
  std::string& raw() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T pod() {
    require(pos_ + sizeof(T) <= bytes_.size(), ErrorKind::input, "checkpoint is truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    require(pos_ + n <= bytes_.size(), ErrorKind::input, "checkpoint is truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(std::vector<double>& v) {
    for (double& d : v) d = pod<double>();
  }
  std::string_view take(std::size_t n) {
    require(pos_ + n <= bytes_.size(), ErrorKind::input, "checkpoint is truncated");
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

enum class LayerTag : std::uint8_t { conv = 1, relu = 2, maxpool = 3, gap = 4, dense = 5 };

}  // namespace detail

inline std::string serialize_checkpoint(const Network& net, const NormStats& norm) {
  detail::Writer w;
  w.raw() += kCheckpointMagic;
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2d>) {
            w.pod(detail::LayerTag::conv);
            w.str(l.name);
            w.pod<std::uint64_t>(l.in_channels);
            w.pod<std::uint64_t>(l.out_channels);
            w.pod<std::uint64_t>(l.kernel);
          } else if constexpr (std::is_same_v<T, Dense>) {
            w.pod(detail::LayerTag::dense);
            w.str(l.name);
            w.pod<std::uint64_t>(l.in_features);
            w.pod<std::uint64_t>(l.out_features);
          } else if constexpr (std::is_same_v<T, Relu>) {
            w.pod(detail::LayerTag::relu);
            w.str(l.name);
          } else if constexpr (std::is_same_v<T, MaxPool2>) {
            w.pod(detail::LayerTag::maxpool);
            w.str(l.name);
          } else {
            w.pod(detail::LayerTag::gap);
            w.str(l.name);
          }
        },
        layer);
  }
  for (const auto& layer : net.layers()) {
    if (auto* c = std::get_if<Conv2d>(&layer)) {
      w.doubles(c->weight.data);
      w.doubles(c->bias.data);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      w.doubles(d->weight.data);
      w.doubles(d->bias.data);
    }
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(norm.mean.size()));
  w.doubles(norm.mean);
  w.doubles(norm.stddev);
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  require(r.take(kCheckpointMagic.size()) == kCheckpointMagic, ErrorKind::input,
          "not a model checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorKind::configuration,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const auto n_layers = r.pod<std::uint32_t>();
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto tag = r.pod<detail::LayerTag>();
    std::string name = r.str();
    switch (tag) {
      case detail::LayerTag::conv: {
        const auto in = r.pod<std::uint64_t>(), out = r.pod<std::uint64_t>(), k = r.pod<std::uint64_t>();
        layers.emplace_back(Conv2d(name, in, out, k));
        break;
      }
      case detail::LayerTag::dense: {
        const auto in = r.pod<std::uint64_t>(), out = r.pod<std::uint64_t>();
        layers.emplace_back(Dense(name, in, out));
        break;
      }
      case detail::LayerTag::relu: layers.emplace_back(Relu{name}); break;
      case detail::LayerTag::maxpool: layers.emplace_back(MaxPool2{name}); break;
      case detail::LayerTag::gap: layers.emplace_back(GlobalAvgPool{name}); break;
      default: fail(ErrorKind::input, "checkpoint has an unknown layer tag");
    }
  }
  Checkpoint ck{Network(std::move(layers)), {}};
  for (auto& layer : ck.network.layers()) {
    if (auto* c = std::get_if<Conv2d>(&layer)) {
      r.doubles(c->weight.data);
      r.doubles(c->bias.data);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      r.doubles(d->weight.data);
      r.doubles(d->bias.data);
    }
  }
  const auto channels = r.pod<std::uint32_t>();
  ck.norm.mean.resize(channels);
  ck.norm.stddev.resize(channels);
  r.doubles(ck.norm.mean);
  r.doubles(ck.norm.stddev);
  require(r.done(), ErrorKind::input, "checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Network& net,
                            const NormStats& norm) {
  write_text_file(path, serialize_checkpoint(net, norm));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text_file(path));
}

}  // namespace eusml::nn
