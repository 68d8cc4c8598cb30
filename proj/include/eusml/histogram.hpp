#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "eusml/error.hpp"
#include "eusml/image.hpp"

namespace eusml {

inline constexpr int kDefaultHistogramBins = 64;

/// Per-channel probability-normalized intensity histograms.
struct ChannelHistograms {
  int bins_per_channel = kDefaultHistogramBins;
  std::vector<std::vector<double>> hist;

  int channels() const noexcept { return static_cast<int>(hist.size()); }
};

namespace detail {
// Nudges the largest bin so the in-order floating-point sum is exactly 1.0.
// Self-comparisons then come out exact (intersection = channels, distance = 0).
inline void make_unit_sum(std::vector<double>& h) {
  if (h.empty()) return;
  const auto largest = std::max_element(h.begin(), h.end()) - h.begin();
  for (int pass = 0; pass < 16; ++pass) {
    double sum = 0.0;
    for (double v : h) sum += v;
    if (sum == 1.0) return;
    h[largest] += 1.0 - sum;
  }
}
}  // namespace detail

/// Bin b covers intensities [b*256/bins, (b+1)*256/bins).
inline int histogram_bin(int value, int bins) noexcept { return value * bins / 256; }

inline ChannelHistograms compute_histogram(const ImageBuffer& img,
                                           int bins = kDefaultHistogramBins) {
  require(bins >= 1 && bins <= 256, ErrorKind::parameter, "histogram bins must be in [1,256]");
  const int ch = img.channels();
  std::vector<std::vector<std::size_t>> counts(ch, std::vector<std::size_t>(bins, 0));
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++counts[i % ch][histogram_bin(data[i], bins)];
  }
  ChannelHistograms out;
  out.bins_per_channel = bins;
  out.hist.resize(ch);
  const double n = static_cast<double>(img.pixel_count());
  for (int c = 0; c < ch; ++c) {
    out.hist[c].resize(bins);
    for (int b = 0; b < bins; ++b) out.hist[c][b] = static_cast<double>(counts[c][b]) / n;
    detail::make_unit_sum(out.hist[c]);
  }
  return out;
}

namespace detail {
inline void require_same_shape(const ChannelHistograms& a, const ChannelHistograms& b) {
  require(a.channels() == b.channels() && a.bins_per_channel == b.bins_per_channel,
          ErrorKind::parameter, "histogram shapes differ");
  for (int c = 0; c < a.channels(); ++c) {
    require(a.hist[c].size() == b.hist[c].size(), ErrorKind::parameter,
            "histogram shapes differ");
  }
}
}  // namespace detail

/// Sum of per-bin minima over all channels; range [0, channels].
inline double hist_intersection(const ChannelHistograms& a, const ChannelHistograms& b) {
  detail::require_same_shape(a, b);
  double score = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    for (std::size_t i = 0; i < a.hist[c].size(); ++i) {
      score += std::min(a.hist[c][i], b.hist[c][i]);
    }
  }
  return score;
}

/// Channel-averaged Bhattacharyya distance sqrt(1 - sum sqrt(a*b)); range [0,1].
inline double hist_bhattacharyya(const ChannelHistograms& a, const ChannelHistograms& b) {
  detail::require_same_shape(a, b);
  if (a.channels() == 0) return 0.0;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double coefficient = 0.0;
    for (std::size_t i = 0; i < a.hist[c].size(); ++i) {
      coefficient += std::sqrt(a.hist[c][i] * b.hist[c][i]);
    }
    total += std::sqrt(std::max(0.0, 1.0 - coefficient));
  }
  return total / a.channels();
}

}  // namespace eusml
