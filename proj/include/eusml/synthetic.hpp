#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eusml/dataset.hpp"
#include "eusml/frame_pipeline.hpp"
#include "eusml/image.hpp"
#include "eusml/png_io.hpp"
#include "eusml/util.hpp"

// Synthetic stand-ins for EUS recordings: a fixed UI frame around a circular
// ultrasound fan whose speckled content depends on the station.
namespace eusml::synthetic {

struct Rgb {
  std::uint8_t r, g, b;
};

inline constexpr Rgb kUiBase{20, 30, 60};
inline constexpr Rgb kUiText{200, 200, 200};
inline constexpr Rgb kMenuPanel{40, 40, 90};
inline constexpr Rgb kPink{230, 150, 160};
inline constexpr Rgb kPointer{20, 210, 30};

inline void put(ImageBuffer& img, int x, int y, Rgb c) {
  img.at(x, y, 0) = c.r;
  img.at(x, y, 1) = c.g;
  img.at(x, y, 2) = c.b;
}

struct FanGeometry {
  double cx, cy, radius;
  bool inside(int x, int y) const {
    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
};

inline FanGeometry fan_geometry(int w, int h) {
  return {w * 0.5, h * 0.55, 0.42 * std::min(w, h)};
}

/// The UI chrome shared by every frame of a recording: flat border plus a
/// few fixed text-like blocks in the top strip.
inline ImageBuffer ui_frame(int w, int h) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) put(img, x, y, kUiBase);
  Rng rng(0x5eedu);
  const int rows = std::max(1, h / 16);
  for (int r = 0; r < rows; ++r) {
    int x = 2;
    const int y0 = 2 + r * 3;
    if (y0 + 2 > h / 8) break;
    while (x < w / 3) {
      const int len = 2 + static_cast<int>(uniform_index(rng, 5));
      for (int dx = 0; dx < len && x + dx < w; ++dx)
        for (int dy = 0; dy < 2; ++dy) put(img, x + dx, y0 + dy, kUiText);
      x += len + 2;
    }
  }
  return img;
}

/// Menu screen shown when the operator opens the machine's UI: the chrome with
/// a flat panel and menu rules where the fan would be. Serves as the cleaning
/// reference image.
inline ImageBuffer gui_reference(int w, int h) {
  ImageBuffer img = ui_frame(w, h);
  const FanGeometry fan = fan_geometry(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (fan.inside(x, y)) put(img, x, y, (y % 12 == 0) ? kUiText : kMenuPanel);
  return img;
}

/// Station-dependent echo structure, in [0,255], before speckle.
inline double station_pattern(Station s, double u, double v, const std::array<double, 8>& p) {
  // u, v in [-1,1] fan-relative coordinates; p holds per-frame jitter.
  switch (s) {
    case Station::Station1: {
      // layered wall: horizontal echogenic bands
      const double phase = (v + p[0] * 0.2) * 3.2 * 3.14159265;
      return std::sin(phase) > 0.55 ? 205.0 : 85.0;
    }
    case Station::Station2: {
      // anechoic vessel cross-section
      const double dx = u - p[0] * 0.35, dy = v - p[1] * 0.35;
      const double r = 0.38 + 0.08 * p[2];
      return dx * dx + dy * dy < r * r ? 22.0 : 125.0;
    }
    case Station::Station3: {
      // scattered bright foci
      double val = 75.0;
      for (int i = 0; i < 3; ++i) {
        const double fx = p[2 * i] * 0.6, fy = p[2 * i + 1] * 0.6;
        const double dx = u - fx, dy = v - fy;
        if (dx * dx + dy * dy < 0.028) val = 235.0;
      }
      return val;
    }
  }
  return 100.0;
}

inline ImageBuffer clean_frame(Station s, int w, int h, Rng& rng) {
  ImageBuffer img = ui_frame(w, h);
  const FanGeometry fan = fan_geometry(w, h);
  std::array<double, 8> p{};
  for (double& v : p) v = 2.0 * uniform01(rng) - 1.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fan.inside(x, y)) continue;
      const double u = (x + 0.5 - fan.cx) / fan.radius, v = (y + 0.5 - fan.cy) / fan.radius;
      const double base = station_pattern(s, u, v, p);
      const double speckle = 0.6 + 0.8 * uniform01(rng);
      const auto g = saturate_u8(std::max(16.0, base * speckle));
      put(img, x, y, {g, g, g});
    }
  }
  return img;
}

/// Reference menu screen with a small on-screen change (cursor block).
inline ImageBuffer gui_frame(int w, int h, Rng& rng) {
  ImageBuffer img = gui_reference(w, h);
  const int side = std::max(3, std::min(w, h) / 12);
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(w - side)));
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(h - side)));
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) put(img, x, y, {235, 235, 235});
  return img;
}

/// Whole-screen pink artifact (textured, channel-wise within +-12).
inline ImageBuffer pink_frame(int w, int h, Rng& rng) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto jitter = [&](std::uint8_t c) {
        return static_cast<std::uint8_t>(c - 12 + static_cast<int>(uniform_index(rng, 25)));
      };
      put(img, x, y, {jitter(kPink.r), jitter(kPink.g), jitter(kPink.b)});
    }
  return img;
}

/// Screen gone (almost) black, values 0..8.
inline ImageBuffer blackened_frame(int w, int h, Rng& rng) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<std::uint8_t>(uniform_index(rng, 9));
      put(img, x, y, {v, v, v});
    }
  return img;
}

/// Clean frame with a green arrow pointer painted inside the fan.
inline ImageBuffer pointer_frame(Station s, int w, int h, Rng& rng) {
  ImageBuffer img = clean_frame(s, w, h, rng);
  const FanGeometry fan = fan_geometry(w, h);
  const int head = 7;
  const double ang = 2.0 * 3.14159265 * uniform01(rng);
  const double rad = 0.4 * fan.radius * uniform01(rng);
  const int x0 = static_cast<int>(fan.cx + rad * std::cos(ang)) - head / 2;
  const int y0 = static_cast<int>(fan.cy + rad * std::sin(ang)) - head / 2;
  auto paint = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < w && y < h) put(img, x, y, kPointer);
  };
  for (int dy = 0; dy < head; ++dy)
    for (int dx = 0; dx <= dy; ++dx) paint(x0 + dx, y0 + dy);  // triangle head
  for (int t = 0; t < 6; ++t)
    for (int k = 0; k < 2; ++k) paint(x0 + 3 + t + k, y0 + 3 + t);  // stem
  return img;
}

inline ImageBuffer noise_frame(NoiseKind kind, Station s, int w, int h, Rng& rng) {
  switch (kind) {
    case NoiseKind::clean: return clean_frame(s, w, h, rng);
    case NoiseKind::gui: return gui_frame(w, h, rng);
    case NoiseKind::pink: return pink_frame(w, h, rng);
    case NoiseKind::blackened: return blackened_frame(w, h, rng);
    case NoiseKind::green_pointer: return pointer_frame(s, w, h, rng);
  }
  return clean_frame(s, w, h, rng);
}

struct NoiseCorpus {
  ImageBuffer reference;
  std::vector<FrameSample> frames;
  std::vector<NoiseKind> planted;
};

/// `n` frames with kinds cycling through all five, shuffled by `seed`.
inline NoiseCorpus make_noise_corpus(std::size_t n, std::uint64_t seed, int w = 96, int h = 96) {
  Rng rng(seed);
  NoiseCorpus corpus{gui_reference(w, h), {}, {}};
  std::vector<NoiseKind> kinds;
  for (std::size_t i = 0; i < n; ++i) kinds.push_back(kAllNoiseKinds[i % kAllNoiseKinds.size()]);
  shuffle_in_place(kinds, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const Station s = kAllStations[uniform_index(rng, kStationCount)];
    corpus.frames.push_back({"noise", static_cast<double>(i), noise_frame(kinds[i], s, w, h, rng), i});
    corpus.planted.push_back(kinds[i]);
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Quadrant localization set

inline constexpr std::array<double, 4> kQuadrantBackground = {20.0, 50.0, 80.0, 110.0};
inline constexpr double kBlobValue = 220.0;
// the tone boundaries wander per image so tone area alone says little about the label
inline constexpr int kBoundaryJitter = 6;

struct QuadrantSample {
  ImageBuffer image;  // 1 channel
  int label = 0;      // 0 TL, 1 TR, 2 BL, 3 BR
  int blob_x = 0, blob_y = 0, blob_r = 0;
};

/// Four toned regions split at a jittered crossing point, plus one bright blob.
/// The label is the quadrant holding the blob; the blob always sits inside both
/// the fixed geometric quadrant and the matching tone region.
inline std::vector<QuadrantSample> make_quadrant_dataset(std::size_t n, std::uint64_t seed,
                                                         int size = 64) {
  require(size >= 48, ErrorKind::parameter, "quadrant images need size >= 48");
  Rng rng(seed);
  const int half = size / 2;
  const auto pick = [&rng](int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
  };
  std::vector<QuadrantSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    QuadrantSample s;
    s.label = static_cast<int>(i % 4);
    s.blob_r = 5 + static_cast<int>(uniform_index(rng, 3));
    const int cx = pick(half - kBoundaryJitter, half + kBoundaryJitter);
    const int cy = pick(half - kBoundaryJitter, half + kBoundaryJitter);
    const int r = s.blob_r;
    const bool right = s.label % 2 == 1, bottom = s.label / 2 == 1;
    const int xlo = right ? std::max(half, cx) + r + 2 : r + 2;
    const int xhi = right ? size - r - 3 : std::min(half, cx) - r - 3;
    const int ylo = bottom ? std::max(half, cy) + r + 2 : r + 2;
    const int yhi = bottom ? size - r - 3 : std::min(half, cy) - r - 3;
    s.blob_x = pick(xlo, xhi);
    s.blob_y = pick(ylo, yhi);
    s.image = ImageBuffer(size, size, 1);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int q = (x >= cx ? 1 : 0) + (y >= cy ? 2 : 0);
        double v = kQuadrantBackground[q];
        const double dx = x - s.blob_x, dy = y - s.blob_y;
        if (dx * dx + dy * dy <= r * r) v = kBlobValue;
        s.image.at(x, y) = saturate_u8(v + 6.0 * standard_normal(rng));
      }
    out.push_back(std::move(s));
  }
  shuffle_in_place(out, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Procedure recordings on disk

struct CorpusSpec {
  std::size_t procedures = 8;
  double fps = 1.0;
  double min_station_seconds = 10.0;
  double max_station_seconds = 16.0;
  double max_gap_seconds = 4.0;
  double noise_rate = 0.1;
  int width = 96;
  int height = 96;
  std::uint64_t seed = 7;
};

struct ProcedurePlan {
  std::string id;
  std::vector<StationInterval> intervals;
  double duration = 0.0;
  std::vector<NoiseKind> frame_kinds;
};

/// Writes `<frames_root>/<id>/{meta.json,frames/%06d.png}`, labels to
/// `<labels_root>/<id>.csv` and the cleaning reference to `reference_path`.
inline std::vector<ProcedurePlan> write_corpus(const CorpusSpec& spec,
                                               const std::filesystem::path& frames_root,
                                               const std::filesystem::path& labels_root,
                                               const std::filesystem::path& reference_path) {
  Rng rng(spec.seed);
  std::filesystem::create_directories(frames_root);
  std::filesystem::create_directories(labels_root);
  write_png(reference_path, gui_reference(spec.width, spec.height));
  auto seconds_between = [&](double lo, double hi) {
    // whole milliseconds keep the 3-decimal CSV exact
    return std::round((lo + (hi - lo) * uniform01(rng)) * 1000.0) / 1000.0;
  };
  std::vector<ProcedurePlan> plans;
  for (std::size_t p = 0; p < spec.procedures; ++p) {
    ProcedurePlan plan;
    plan.id = "P" + zero_pad(static_cast<long>(p + 1), 3);
    double t = seconds_between(0.0, spec.max_gap_seconds);
    for (Station s : kAllStations) {
      const double len = seconds_between(spec.min_station_seconds, spec.max_station_seconds);
      plan.intervals.push_back({s, t, t + len});
      t += len + seconds_between(0.5, spec.max_gap_seconds);
    }
    plan.duration = t;
    const auto dir = frames_root / plan.id;
    std::filesystem::create_directories(dir / "frames");
    write_procedure_meta(dir, spec.fps, "2024-01-01T00:00:00Z");
    write_text_file(labels_root / (plan.id + ".csv"), write_labels_csv(plan.intervals));
    const auto n_frames = static_cast<std::size_t>(std::floor(plan.duration * spec.fps));
    for (std::size_t i = 0; i < n_frames; ++i) {
      const double ft = static_cast<double>(i) / spec.fps;
      const Station s = station_at(ft, plan.intervals).value_or(
          kAllStations[uniform_index(rng, kStationCount)]);
      NoiseKind kind = NoiseKind::clean;
      if (uniform01(rng) < spec.noise_rate)
        kind = kAllNoiseKinds[1 + uniform_index(rng, kAllNoiseKinds.size() - 1)];
      plan.frame_kinds.push_back(kind);
      write_png(dir / "frames" / frame_file_name(i), noise_frame(kind, s, spec.width, spec.height, rng));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace eusml::synthetic
