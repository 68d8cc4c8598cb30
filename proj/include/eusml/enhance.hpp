#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eusml/error.hpp"
#include "eusml/fft.hpp"
#include "eusml/image.hpp"

namespace eusml {

enum class EnhanceMethod { none, clahe, gaussian, quantile_cap, nlm, fft_lowpass };

/// Row order of the comparison table.
inline constexpr std::array<EnhanceMethod, 6> kAllEnhanceMethods = {
    EnhanceMethod::none,         EnhanceMethod::clahe,       EnhanceMethod::nlm,
    EnhanceMethod::quantile_cap, EnhanceMethod::fft_lowpass, EnhanceMethod::gaussian};

inline std::string_view to_string(EnhanceMethod m) {
  switch (m) {
    case EnhanceMethod::none: return "none";
    case EnhanceMethod::clahe: return "clahe";
    case EnhanceMethod::gaussian: return "gaussian";
    case EnhanceMethod::quantile_cap: return "quantile_cap";
    case EnhanceMethod::nlm: return "nlm";
    case EnhanceMethod::fft_lowpass: return "fft_lowpass";
  }
  return "none";
}

/// Row label used in the metrics table.
inline std::string_view display_name(EnhanceMethod m) {
  switch (m) {
    case EnhanceMethod::none: return "NO-PRE";
    case EnhanceMethod::clahe: return "CLAHE";
    case EnhanceMethod::gaussian: return "GAUSSIAN Smoothing";
    case EnhanceMethod::quantile_cap: return "QUANTILE CAP";
    case EnhanceMethod::nlm: return "DENOISING";
    case EnhanceMethod::fft_lowpass: return "FFT-Normal";
  }
  return "NO-PRE";
}

inline EnhanceMethod parse_enhance_method(std::string_view name) {
  for (EnhanceMethod m : kAllEnhanceMethods) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::configuration, "unknown enhance method '" + std::string(name) + "'");
}

struct EnhanceConfig {
  EnhanceMethod method = EnhanceMethod::none;
  double clahe_clip = 2.0;  // <= 0 or +inf disables clipping
  int clahe_grid = 8;
  double gaussian_sigma = 1.0;
  int gaussian_ksize = 5;
  double q_low = 0.01;
  double q_high = 0.99;
  double nlm_h = 10.0;
  int nlm_patch = 7;
  int nlm_window = 21;
  double fft_cutoff_frac = 0.12;

  void validate() const {
    auto odd = [](int v) { return v >= 1 && v % 2 == 1; };
    require(odd(gaussian_ksize), ErrorKind::configuration, "gaussian_ksize must be odd");
    require(odd(nlm_patch), ErrorKind::configuration, "nlm_patch must be odd");
    require(odd(nlm_window), ErrorKind::configuration, "nlm_window must be odd");
    require(0.0 <= q_low && q_low < q_high && q_high <= 1.0, ErrorKind::configuration,
            "quantiles must satisfy 0 <= q_low < q_high <= 1");
    require(fft_cutoff_frac > 0.0 && fft_cutoff_frac <= 1.0, ErrorKind::configuration,
            "fft_cutoff_frac must be in (0,1]");
    require(clahe_grid >= 1, ErrorKind::configuration, "clahe_grid must be >= 1");
    require(gaussian_sigma > 0.0, ErrorKind::configuration, "gaussian_sigma must be positive");
    require(nlm_h > 0.0, ErrorKind::configuration, "nlm_h must be positive");
  }
};

namespace detail {

// Symmetric reflection with the edge pixel repeated: ...cba|abc...|cba...
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline ImageBuffer extract_channel(const ImageBuffer& img, int c) {
  ImageBuffer out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) dst[i] = src[i * img.channels() + c];
  return out;
}

inline void insert_channel(ImageBuffer& img, const ImageBuffer& plane, int c) {
  auto src = plane.data();
  auto dst = img.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) dst[i * img.channels() + c] = src[i];
}

template <typename PlaneFn>
ImageBuffer per_channel(const ImageBuffer& img, PlaneFn&& fn) {
  if (img.channels() == 1) return fn(img);
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) insert_channel(out, fn(extract_channel(img, c)), c);
  return out;
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

// Tile index pair and blend weight for coordinate p along an axis split into n tiles.
struct AxisBlend {
  int lo = 0;
  int hi = 0;
  double t = 0.0;
};

inline AxisBlend axis_blend(int p, int length, int tiles) {
  auto center = [&](int k) {
    const int a = k * length / tiles;
    const int b = (k + 1) * length / tiles;
    return 0.5 * (a + b - 1);
  };
  if (tiles == 1 || p <= center(0)) return {0, 0, 0.0};
  if (p >= center(tiles - 1)) return {tiles - 1, tiles - 1, 0.0};
  int k = 0;
  while (k + 1 < tiles - 1 && center(k + 1) <= p) ++k;
  const double c0 = center(k), c1 = center(k + 1);
  return {k, k + 1, (p - c0) / (c1 - c0)};
}

inline ImageBuffer clahe_plane(const ImageBuffer& plane, double clip, int grid) {
  const int w = plane.width(), h = plane.height();
  const bool clipping = clip > 0.0 && std::isfinite(clip);
  std::vector<std::array<double, 256>> luts(static_cast<std::size_t>(grid) * grid);
  for (int ty = 0; ty < grid; ++ty) {
    for (int tx = 0; tx < grid; ++tx) {
      const int x0 = tx * w / grid, x1 = (tx + 1) * w / grid;
      const int y0 = ty * h / grid, y1 = (ty + 1) * h / grid;
      std::array<double, 256> hist{};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[plane.at(x, y)] += 1.0;
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      if (clipping) {
        const double limit = clip * n / 256.0;
        double excess = 0.0;
        for (double& v : hist) {
          if (v > limit) {
            excess += v - limit;
            v = limit;
          }
        }
        const double share = excess / 256.0;
        for (double& v : hist) v += share;
      }
      auto& lut = luts[static_cast<std::size_t>(ty) * grid + tx];
      double cdf = 0.0;
      for (int v = 0; v < 256; ++v) {
        cdf += hist[v];
        lut[v] = 255.0 * cdf / n;
      }
    }
  }
  ImageBuffer out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const AxisBlend by = axis_blend(y, h, grid);
    for (int x = 0; x < w; ++x) {
      const AxisBlend bx = axis_blend(x, w, grid);
      const int v = plane.at(x, y);
      auto lut_at = [&](int ty, int tx) { return luts[static_cast<std::size_t>(ty) * grid + tx][v]; };
      const double top = lerp(lut_at(by.lo, bx.lo), lut_at(by.lo, bx.hi), bx.t);
      const double bottom = lerp(lut_at(by.hi, bx.lo), lut_at(by.hi, bx.hi), bx.t);
      out.at(x, y) = saturate_u8(lerp(top, bottom, by.t));
    }
  }
  return out;
}

}  // namespace detail

/// Contrast-limited adaptive histogram equalization on the luminance channel.
/// RGB input is equalized on BT.601 luma and the luma shift is added back to
/// each channel.
inline ImageBuffer clahe(const ImageBuffer& img, double clip = 2.0, int grid = 8) {
  require(grid >= 1, ErrorKind::parameter, "CLAHE grid must be >= 1");
  require(grid <= img.width() && grid <= img.height(), ErrorKind::parameter,
          "CLAHE grid larger than image dimension");
  if (img.channels() == 1) return detail::clahe_plane(img, clip, grid);
  const ImageBuffer y = to_grayscale(img);
  const ImageBuffer y_eq = detail::clahe_plane(y, clip, grid);
  ImageBuffer out(img.width(), img.height(), 3);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double luma_exact = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    const double shift = y_eq.data()[i] - luma_exact;
    for (int c = 0; c < 3; ++c) dst[3 * i + c] = saturate_u8(src[3 * i + c] + shift);
  }
  return out;
}

/// Normalized 1D Gaussian taps; the 2D kernel is their outer product.
inline std::vector<double> gaussian_kernel_1d(double sigma, int ksize) {
  require(sigma > 0.0, ErrorKind::parameter, "gaussian sigma must be positive");
  require(ksize >= 1 && ksize % 2 == 1, ErrorKind::parameter, "gaussian ksize must be odd");
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with symmetric-reflect borders.
inline ImageBuffer gaussian_smooth(const ImageBuffer& img, double sigma = 1.0, int ksize = 5) {
  const auto k = gaussian_kernel_1d(sigma, ksize);
  const int r = ksize / 2;
  const int w = img.width(), h = img.height(), ch = img.channels();
  FloatImage rows(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(detail::reflect_index(x + i, w), y, c);
        rows.at(x, y, c) = acc;
      }
  FloatImage cols(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * rows.at(x, detail::reflect_index(y + i, h), c);
        cols.at(x, y, c) = acc;
      }
  return to_u8(cols);
}

/// Nearest-rank quantile of an ascending-sorted sample (q in [0,1]).
inline std::uint8_t nearest_rank(const std::vector<std::uint8_t>& sorted, double q) {
  const double n = static_cast<double>(sorted.size());
  // The slack keeps q*n from landing one rank high through representation error.
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

/// Clamps each channel to its [q_low, q_high] nearest-rank quantiles and
/// stretches the result to [0,255]. A channel whose quantiles coincide is left as is.
inline ImageBuffer quantile_cap(const ImageBuffer& img, double q_low = 0.01, double q_high = 0.99) {
  require(0.0 <= q_low && q_low < q_high && q_high <= 1.0, ErrorKind::parameter,
          "quantiles must satisfy 0 <= q_low < q_high <= 1");
  return detail::per_channel(img, [&](const ImageBuffer& plane) {
    std::vector<std::uint8_t> sorted(plane.data().begin(), plane.data().end());
    std::sort(sorted.begin(), sorted.end());
    const int lo = nearest_rank(sorted, q_low);
    const int hi = nearest_rank(sorted, q_high);
    if (lo == hi) return plane;
    ImageBuffer out(plane.width(), plane.height(), 1);
    auto src = plane.data();
    auto dst = out.data();
    // divide last so exact halves stay exact before rounding
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = saturate_u8(255.0 * (std::clamp<int>(src[i], lo, hi) - lo) / (hi - lo));
    }
    return out;
  });
}

/// Noise level from the median absolute deviation of the 4-neighbour
/// Laplacian response, scaled by the kernel's L2 norm (sqrt(20)).
inline double estimate_noise_sigma(const ImageBuffer& plane) {
  const int w = plane.width(), h = plane.height();
  std::vector<double> response;
  response.reserve(plane.pixel_count());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto px = [&](int xx, int yy) {
        return static_cast<double>(plane.at(detail::reflect_index(xx, w), detail::reflect_index(yy, h)));
      };
      response.push_back(px(x - 1, y) + px(x + 1, y) + px(x, y - 1) + px(x, y + 1) - 4.0 * px(x, y));
    }
  }
  auto median = [](std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
      m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
    }
    return m;
  };
  const double med = median(response);
  for (double& v : response) v = std::abs(v - med);
  return 1.4826 * median(response) / std::sqrt(20.0);
}

namespace detail {

inline ImageBuffer nlm_plane(const ImageBuffer& plane, double h, int patch, int window) {
  const int w = plane.width(), ht = plane.height();
  const int pr = patch / 2, wr = window / 2, pad = pr + wr;
  const int pw = w + 2 * pad, ph = ht + 2 * pad;
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      padded[static_cast<std::size_t>(y) * pw + x] =
          plane.at(reflect_index(x - pad, w), reflect_index(y - pad, ht));
  auto P = [&](int x, int y) { return padded[static_cast<std::size_t>(y + pad) * pw + (x + pad)]; };

  const double sigma = estimate_noise_sigma(plane);
  const double bias = 2.0 * sigma * sigma;
  const double h2 = h * h;
  const double patch_area = static_cast<double>(patch) * patch;

  // Squared differences live on the patch-extended image: [-pr, w+pr) x [-pr, ht+pr).
  const int ew = w + 2 * pr, eh = ht + 2 * pr;
  std::vector<double> integral(static_cast<std::size_t>(ew + 1) * (eh + 1));
  std::vector<double> acc(plane.pixel_count(), 0.0), wsum(plane.pixel_count(), 0.0);

  for (int dy = -wr; dy <= wr; ++dy) {
    for (int dx = -wr; dx <= wr; ++dx) {
      for (int y = 0; y < eh; ++y) {
        double row = 0.0;
        for (int x = 0; x < ew; ++x) {
          const double d = P(x - pr, y - pr) - P(x - pr + dx, y - pr + dy);
          row += d * d;
          integral[static_cast<std::size_t>(y + 1) * (ew + 1) + (x + 1)] =
              integral[static_cast<std::size_t>(y) * (ew + 1) + (x + 1)] + row;
        }
      }
      auto I = [&](int x, int y) { return integral[static_cast<std::size_t>(y) * (ew + 1) + x]; };
      for (int y = 0; y < ht; ++y) {
        for (int x = 0; x < w; ++x) {
          // Patch centred at image (x,y) spans extended coords [x, x+patch) x [y, y+patch).
          const double ssd = I(x + patch, y + patch) - I(x, y + patch) - I(x + patch, y) + I(x, y);
          const double dist2 = ssd / patch_area;
          const double weight = std::exp(-std::max(0.0, dist2 - bias) / h2);
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          acc[i] += weight * P(x + dx, y + dy);
          wsum[i] += weight;
        }
      }
    }
  }
  ImageBuffer out(w, ht, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = saturate_u8(acc[i] / wsum[i]);
  return out;
}

}  // namespace detail

/// Non-local means: each pixel becomes the average of its search window,
/// weighted by exp(-max(0, d^2 - 2 sigma^2) / h^2) where d^2 is the mean
/// squared patch difference and sigma is estimated from the image itself.
inline ImageBuffer nlm_denoise(const ImageBuffer& img, double h = 10.0, int patch = 7,
                               int window = 21) {
  require(h > 0.0, ErrorKind::parameter, "NLM h must be positive");
  require(patch >= 1 && patch % 2 == 1 && window >= 1 && window % 2 == 1, ErrorKind::parameter,
          "NLM patch and window sizes must be odd");
  require(window >= patch, ErrorKind::parameter, "NLM window smaller than patch");
  return detail::per_channel(
      img, [&](const ImageBuffer& plane) { return detail::nlm_plane(plane, h, patch, window); });
}

/// Gaussian low-pass transfer function H(u,v) = exp(-D^2 / (2 D0^2)),
/// D measured from the centred DC bin, D0 = cutoff_frac * min(H,W).
inline double lowpass_gain(int u, int v, int width, int height, double cutoff_frac) {
  const double d0 = cutoff_frac * std::min(width, height);
  const double fu = centered_frequency(u, width);
  const double fv = centered_frequency(v, height);
  return std::exp(-(fu * fu + fv * fv) / (2.0 * d0 * d0));
}

inline ImageBuffer fft_lowpass(const ImageBuffer& img, double cutoff_frac = 0.12) {
  require(cutoff_frac > 0.0 && cutoff_frac <= 1.0, ErrorKind::parameter,
          "fft cutoff fraction must be in (0,1]");
  return detail::per_channel(img, [&](const ImageBuffer& plane) {
    const int w = plane.width(), h = plane.height();
    ComplexGrid grid(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) grid.at(x, y) = plane.at(x, y);
    ComplexGrid spectrum = fft2d(grid);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) spectrum.at(u, v) *= lowpass_gain(u, v, w, h, cutoff_frac);
    const ComplexGrid back = ifft2d(spectrum);
    ImageBuffer out(w, h, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(x, y) = saturate_u8(back.at(x, y).real());
    return out;
  });
}

/// Dispatches on cfg.method; `none` is the identity.
inline ImageBuffer apply(const ImageBuffer& img, const EnhanceConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case EnhanceMethod::none: return img;
    case EnhanceMethod::clahe: return clahe(img, cfg.clahe_clip, cfg.clahe_grid);
    case EnhanceMethod::gaussian: return gaussian_smooth(img, cfg.gaussian_sigma, cfg.gaussian_ksize);
    case EnhanceMethod::quantile_cap: return quantile_cap(img, cfg.q_low, cfg.q_high);
    case EnhanceMethod::nlm: return nlm_denoise(img, cfg.nlm_h, cfg.nlm_patch, cfg.nlm_window);
    case EnhanceMethod::fft_lowpass: return fft_lowpass(img, cfg.fft_cutoff_frac);
  }
  fail(ErrorKind::configuration, "unknown enhance method");
}

inline void to_json(nlohmann::json& j, const EnhanceConfig& c) {
  j = {{"method", std::string(to_string(c.method))},
       {"clahe_clip", c.clahe_clip},
       {"clahe_grid", c.clahe_grid},
       {"gaussian_sigma", c.gaussian_sigma},
       {"gaussian_ksize", c.gaussian_ksize},
       {"q_low", c.q_low},
       {"q_high", c.q_high},
       {"nlm_h", c.nlm_h},
       {"nlm_patch", c.nlm_patch},
       {"nlm_window", c.nlm_window},
       {"fft_cutoff_frac", c.fft_cutoff_frac}};
}

inline void from_json(const nlohmann::json& j, EnhanceConfig& c) {
  c = EnhanceConfig{};
  if (j.contains("method")) c.method = parse_enhance_method(j.at("method").get<std::string>());
  c.clahe_clip = j.value("clahe_clip", c.clahe_clip);
  c.clahe_grid = j.value("clahe_grid", c.clahe_grid);
  c.gaussian_sigma = j.value("gaussian_sigma", c.gaussian_sigma);
  c.gaussian_ksize = j.value("gaussian_ksize", c.gaussian_ksize);
  c.q_low = j.value("q_low", c.q_low);
  c.q_high = j.value("q_high", c.q_high);
  c.nlm_h = j.value("nlm_h", c.nlm_h);
  c.nlm_patch = j.value("nlm_patch", c.nlm_patch);
  c.nlm_window = j.value("nlm_window", c.nlm_window);
  c.fft_cutoff_frac = j.value("fft_cutoff_frac", c.fft_cutoff_frac);
  c.validate();
}

}  // namespace eusml
