#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eusml/error.hpp"
#include "eusml/histogram.hpp"
#include "eusml/image.hpp"
#include "eusml/png_io.hpp"
#include "eusml/util.hpp"

namespace eusml {

struct FrameSample {
  std::string procedure_id;
  double t = 0.0;  // seconds from capture start
  ImageBuffer image;
  std::size_t source_index = 0;
};

// ---------------------------------------------------------------------------
// Sampling

/// Indices of the first timestamp at or after each multiple of 1/target_fps.
/// A frame that covers several missed multiples is emitted once.
inline std::vector<std::size_t> select_sample_indices(std::span<const double> times,
                                                      double target_fps) {
  require(target_fps > 0.0 && std::isfinite(target_fps), ErrorKind::parameter,
          "target_fps must be positive");
  constexpr double kSlack = 1e-9;
  const double period = 1.0 / target_fps;
  std::vector<std::size_t> picked;
  double next_multiple = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    require(std::isfinite(t) && t >= 0.0, ErrorKind::input,
            "frame timestamp must be finite and non-negative");
    if (i > 0) {
      require(t > times[i - 1], ErrorKind::input,
              "frame timestamps must be strictly increasing (index " + std::to_string(i) + ")");
    }
    if (t + kSlack >= next_multiple * period) {
      picked.push_back(i);
      next_multiple = std::floor((t + kSlack) / period) + 1.0;
    }
  }
  return picked;
}

template <typename Range>
std::vector<FrameSample> sample_frames(Range&& source, double target_fps = 1.0) {
  std::vector<FrameSample> all;
  for (auto&& f : source) all.push_back(std::forward<decltype(f)>(f));
  std::vector<double> times;
  times.reserve(all.size());
  for (const auto& f : all) times.push_back(f.t);
  std::vector<FrameSample> out;
  for (std::size_t i : select_sample_indices(times, target_fps)) out.push_back(std::move(all[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Noise detection

enum class NoiseKind { clean, gui, pink, blackened, green_pointer };

inline constexpr std::array<NoiseKind, 5> kAllNoiseKinds = {
    NoiseKind::clean, NoiseKind::gui, NoiseKind::pink, NoiseKind::blackened,
    NoiseKind::green_pointer};

inline std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::clean: return "clean";
    case NoiseKind::gui: return "gui";
    case NoiseKind::pink: return "pink";
    case NoiseKind::blackened: return "blackened";
    case NoiseKind::green_pointer: return "green_pointer";
  }
  return "clean";
}

struct CleaningThresholds {
  double pink_intersection_max = 1.031;
  double pink_bhattacharyya_min = 0.95;
  double gui_intersection_min = 1.42;
  double gui_bhattacharyya_max = 0.18;
  double black_mean_max = 12.0;

  void validate() const {
    for (double v : {pink_intersection_max, pink_bhattacharyya_min, gui_intersection_min,
                     gui_bhattacharyya_max, black_mean_max}) {
      require(std::isfinite(v), ErrorKind::configuration, "cleaning thresholds must be finite");
    }
    require(pink_intersection_max < gui_intersection_min, ErrorKind::configuration,
            "pink_intersection_max must be below gui_intersection_min");
  }
};

/// Green-dominance rule for on-screen pointers.
struct PointerRule {
  int min_green = 100;
  double dominance_ratio = 1.4;
  int min_component = 25;  // pixels, 8-connected, measured before dilation
  int dilation = 2;        // square structuring element radius
};

struct CleaningConfig {
  CleaningThresholds thresholds;
  PointerRule pointer;
  int histogram_bins = kDefaultHistogramBins;
};

struct NoiseScores {
  double mean_intensity = 0.0;
  std::optional<double> intersection;
  std::optional<double> bhattacharyya;
  std::optional<std::size_t> pointer_pixels;
};

struct NoiseVerdict {
  NoiseKind kind = NoiseKind::clean;
  NoiseScores scores;
  Mask pointer_mask;  // populated only for green_pointer verdicts
};

namespace detail {

inline Mask drop_small_components(const Mask& raw, int min_size) {
  Mask kept(raw.width, raw.height);
  std::vector<std::uint8_t> seen(raw.bits.size(), 0);
  std::vector<std::pair<int, int>> stack;
  std::vector<std::pair<int, int>> component;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * raw.width + x;
      if (!raw.bits[idx] || seen[idx]) continue;
      component.clear();
      stack.assign(1, {x, y});
      seen[idx] = 1;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        component.emplace_back(cx, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= raw.width || ny >= raw.height) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * raw.width + nx;
            if (raw.bits[n] && !seen[n]) {
              seen[n] = 1;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      if (static_cast<int>(component.size()) >= min_size) {
        for (auto [px, py] : component) kept.set(px, py);
      }
    }
  }
  return kept;
}

inline Mask dilate_square(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(m.height - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(m.width - 1, x + radius); ++xx) {
          out.set(xx, yy);
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Flags green-dominant pixels, drops components below the size threshold,
/// then dilates what is left.
inline Mask detect_green_pointer(const ImageBuffer& img, const PointerRule& rule = {}) {
  require(img.channels() == 3, ErrorKind::parameter, "green pointer detection needs RGB input");
  Mask raw(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
      if (g >= rule.min_green && g >= rule.dominance_ratio * r && g >= rule.dominance_ratio * b) {
        raw.set(x, y);
      }
    }
  }
  return detail::dilate_square(detail::drop_small_components(raw, rule.min_component),
                               rule.dilation);
}

/// Fills masked pixels by neighbour diffusion: an onion-peel pass seeds each
/// masked pixel from already-known 4-neighbours, then Jacobi sweeps replace
/// every masked pixel with the mean of its in-bounds 4-neighbours until the
/// largest update drops below 0.5 or 500 sweeps have run.
inline ImageBuffer inpaint(const ImageBuffer& img, const Mask& mask) {
  require(mask.width == img.width() && mask.height == img.height(), ErrorKind::parameter,
          "inpaint mask size differs from image");
  const std::size_t masked = mask.count();
  if (masked == 0) return img;
  require(masked < img.pixel_count(), ErrorKind::input, "inpaint mask covers the whole image");

  const int w = img.width(), h = img.height(), ch = img.channels();
  FloatImage work = to_float(img);
  std::vector<std::pair<int, int>> holes;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(x, y)) holes.emplace_back(x, y);

  constexpr std::array<std::pair<int, int>, 4> kNeighbours = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

  std::vector<std::uint8_t> known(static_cast<std::size_t>(w) * h, 1);
  for (auto [x, y] : holes) known[static_cast<std::size_t>(y) * w + x] = 0;
  std::vector<std::pair<int, int>> pending = holes;
  while (!pending.empty()) {
    std::vector<std::pair<int, int>> layer, rest;
    for (auto [x, y] : pending) {
      bool touches = false;
      for (auto [dx, dy] : kNeighbours) {
        const int nx = x + dx, ny = y + dy;
        if (nx >= 0 && ny >= 0 && nx < w && ny < h && known[static_cast<std::size_t>(ny) * w + nx]) {
          touches = true;
          break;
        }
      }
      (touches ? layer : rest).emplace_back(x, y);
    }
    for (auto [x, y] : layer) {
      for (int c = 0; c < ch; ++c) {
        double sum = 0.0;
        int n = 0;
        for (auto [dx, dy] : kNeighbours) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h && known[static_cast<std::size_t>(ny) * w + nx]) {
            sum += work.at(nx, ny, c);
            ++n;
          }
        }
        work.at(x, y, c) = sum / n;
      }
    }
    for (auto [x, y] : layer) known[static_cast<std::size_t>(y) * w + x] = 1;
    pending = std::move(rest);
  }

  std::vector<double> next(holes.size() * ch);
  for (int sweep = 0; sweep < 500; ++sweep) {
    double max_change = 0.0;
    for (std::size_t k = 0; k < holes.size(); ++k) {
      auto [x, y] = holes[k];
      for (int c = 0; c < ch; ++c) {
        double sum = 0.0;
        int n = 0;
        for (auto [dx, dy] : kNeighbours) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h) {
            sum += work.at(nx, ny, c);
            ++n;
          }
        }
        next[k * ch + c] = sum / n;
        max_change = std::max(max_change, std::abs(next[k * ch + c] - work.at(x, y, c)));
      }
    }
    for (std::size_t k = 0; k < holes.size(); ++k) {
      for (int c = 0; c < ch; ++c) work.at(holes[k].first, holes[k].second, c) = next[k * ch + c];
    }
    if (max_change < 0.5) break;
  }

  ImageBuffer out = img;
  for (auto [x, y] : holes) {
    for (int c = 0; c < ch; ++c) out.at(x, y, c) = saturate_u8(work.at(x, y, c));
  }
  return out;
}

/// Applies the noise rules against one reference (GUI template) image.
/// Rule order: blackened, pink, gui, green pointer, clean.
class NoiseClassifier {
 public:
  NoiseClassifier(ImageBuffer reference, CleaningConfig config)
      : reference_(std::move(reference)), config_(config) {
    config_.thresholds.validate();
    reference_hist_ = compute_histogram(reference_, config_.histogram_bins);
  }

  const CleaningConfig& config() const noexcept { return config_; }
  const ImageBuffer& reference() const noexcept { return reference_; }

  NoiseVerdict classify(const ImageBuffer& frame) const {
    require(frame.channels() == reference_.channels(), ErrorKind::configuration,
            "frame channel count differs from the reference image");
    const auto& th = config_.thresholds;
    NoiseVerdict verdict;
    verdict.scores.mean_intensity = mean_intensity(frame);
    if (verdict.scores.mean_intensity < th.black_mean_max) {
      verdict.kind = NoiseKind::blackened;
      return verdict;
    }
    const auto hist = compute_histogram(frame, config_.histogram_bins);
    const double inter = hist_intersection(hist, reference_hist_);
    const double dist = hist_bhattacharyya(hist, reference_hist_);
    verdict.scores.intersection = inter;
    verdict.scores.bhattacharyya = dist;
    if (inter <= th.pink_intersection_max && dist >= th.pink_bhattacharyya_min) {
      verdict.kind = NoiseKind::pink;
      return verdict;
    }
    if (inter >= th.gui_intersection_min && dist <= th.gui_bhattacharyya_max) {
      verdict.kind = NoiseKind::gui;
      return verdict;
    }
    if (frame.channels() == 3) {
      Mask mask = detect_green_pointer(frame, config_.pointer);
      verdict.scores.pointer_pixels = mask.count();
      if (*verdict.scores.pointer_pixels > 0) {
        verdict.kind = NoiseKind::green_pointer;
        verdict.pointer_mask = std::move(mask);
        return verdict;
      }
    } else {
      verdict.scores.pointer_pixels = 0;
    }
    verdict.kind = NoiseKind::clean;
    return verdict;
  }

 private:
  ImageBuffer reference_;
  CleaningConfig config_;
  ChannelHistograms reference_hist_;
};

inline NoiseVerdict classify_noise(const FrameSample& frame, const ImageBuffer& reference,
                                   const CleaningConfig& config = {}) {
  return NoiseClassifier(reference, config).classify(frame.image);
}

// ---------------------------------------------------------------------------
// Stream cleaning

struct CleaningReport {
  std::array<std::size_t, 5> counts{};  // indexed by NoiseKind
  std::size_t frames_in = 0;
  std::size_t frames_out = 0;
  std::vector<std::size_t> dropped_indices;  // positions in the input stream

  std::size_t count(NoiseKind kind) const { return counts[static_cast<std::size_t>(kind)]; }
};

struct CleanResult {
  std::vector<FrameSample> frames;
  CleaningReport report;
  std::vector<NoiseVerdict> verdicts;  // one per input frame
};

/// Drops gui/pink/blackened frames and inpaints green-pointer frames.
/// Output order follows input order for any `jobs`.
inline CleanResult clean_stream(std::vector<FrameSample> frames, const NoiseClassifier& classifier,
                                int jobs = 1) {
  CleanResult result;
  result.verdicts.resize(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) {
    try {
      auto verdict = classifier.classify(frames[i].image);
      if (verdict.kind == NoiseKind::green_pointer) {
        frames[i].image = inpaint(frames[i].image, verdict.pointer_mask);
      }
      result.verdicts[i] = std::move(verdict);
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(i) + ": " + e.what());
    }
  });
  auto& report = result.report;
  report.frames_in = frames.size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const NoiseKind kind = result.verdicts[i].kind;
    ++report.counts[static_cast<std::size_t>(kind)];
    if (kind == NoiseKind::clean || kind == NoiseKind::green_pointer) {
      result.frames.push_back(std::move(frames[i]));
    } else {
      report.dropped_indices.push_back(i);
    }
  }
  report.frames_out = result.frames.size();
  return result;
}

inline CleanResult clean_stream(std::vector<FrameSample> frames, const ImageBuffer& reference,
                                const CleaningConfig& config = {}, int jobs = 1) {
  return clean_stream(std::move(frames), NoiseClassifier(reference, config), jobs);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const CleaningReport& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (NoiseKind k : kAllNoiseKinds) counts[std::string(to_string(k))] = r.count(k);
  j = {{"counts", counts},
       {"dropped_indices", r.dropped_indices},
       {"frames_in", r.frames_in},
       {"frames_out", r.frames_out}};
}

inline void to_json(nlohmann::json& j, const CleaningConfig& c) {
  const auto& t = c.thresholds;
  j = {{"pink_intersection_max", t.pink_intersection_max},
       {"pink_bhattacharyya_min", t.pink_bhattacharyya_min},
       {"gui_intersection_min", t.gui_intersection_min},
       {"gui_bhattacharyya_max", t.gui_bhattacharyya_max},
       {"black_mean_max", t.black_mean_max},
       {"histogram_bins", c.histogram_bins},
       {"pointer_min_green", c.pointer.min_green},
       {"pointer_dominance_ratio", c.pointer.dominance_ratio},
       {"pointer_min_component", c.pointer.min_component},
       {"pointer_dilation", c.pointer.dilation}};
}

inline void from_json(const nlohmann::json& j, CleaningConfig& c) {
  auto& t = c.thresholds;
  t.pink_intersection_max = j.value("pink_intersection_max", t.pink_intersection_max);
  t.pink_bhattacharyya_min = j.value("pink_bhattacharyya_min", t.pink_bhattacharyya_min);
  t.gui_intersection_min = j.value("gui_intersection_min", t.gui_intersection_min);
  t.gui_bhattacharyya_max = j.value("gui_bhattacharyya_max", t.gui_bhattacharyya_max);
  t.black_mean_max = j.value("black_mean_max", t.black_mean_max);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.pointer.min_green = j.value("pointer_min_green", c.pointer.min_green);
  c.pointer.dominance_ratio = j.value("pointer_dominance_ratio", c.pointer.dominance_ratio);
  c.pointer.min_component = j.value("pointer_min_component", c.pointer.min_component);
  c.pointer.dilation = j.value("pointer_dilation", c.pointer.dilation);
  t.validate();
}

// ---------------------------------------------------------------------------
// On-disk frame source: <procedure>/frames/%06d.png + <procedure>/meta.json

struct FrameEntry {
  std::size_t index = 0;
  std::filesystem::path path;
};

struct ProcedureFrames {
  std::string procedure_id;
  std::filesystem::path root;
  double fps = 0.0;
  std::string capture_start;
  std::vector<FrameEntry> entries;  // ascending index

  double time_of(std::size_t index) const { return static_cast<double>(index) / fps; }

  FrameSample load(const FrameEntry& entry) const {
    return FrameSample{procedure_id, time_of(entry.index), read_png(entry.path), entry.index};
  }
};

inline std::string frame_file_name(std::size_t index) {
  return zero_pad(static_cast<long>(index), 6) + ".png";
}

inline ProcedureFrames open_procedure(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ProcedureFrames proc;
  proc.root = dir;
  proc.procedure_id = dir.filename().string();
  const auto meta_path = dir / "meta.json";
  require(fs::exists(meta_path), ErrorKind::input, "missing " + meta_path.string());
  const auto meta = nlohmann::json::parse(read_text_file(meta_path));
  proc.fps = meta.at("fps").get<double>();
  require(proc.fps > 0.0, ErrorKind::input, "meta.json fps must be positive in " + dir.string());
  proc.capture_start = meta.value("capture_start", std::string{});
  const auto frames_dir = dir / "frames";
  if (fs::exists(frames_dir)) {
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      const std::string stem = entry.path().stem().string();
      require(!stem.empty() && std::all_of(stem.begin(), stem.end(),
                                                  [](unsigned char c) { return std::isdigit(c) != 0; }), ErrorKind::input,
              "unexpected frame file name " + entry.path().string());
      proc.entries.push_back({static_cast<std::size_t>(std::stoull(stem)), entry.path()});
    }
  }
  std::sort(proc.entries.begin(), proc.entries.end(),
            [](const FrameEntry& a, const FrameEntry& b) { return a.index < b.index; });
  return proc;
}

/// Procedure directories (those holding a meta.json) under root, sorted by name.
inline std::vector<std::filesystem::path> list_procedures_on_disk(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  require(fs::is_directory(root), ErrorKind::input, "not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

inline void write_procedure_meta(const std::filesystem::path& dir, double fps,
                                 const std::string& capture_start) {
  nlohmann::json meta = {{"fps", fps}, {"capture_start", capture_start}};
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace eusml
