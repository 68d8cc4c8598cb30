#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eusml/enhance.hpp"
#include "eusml/error.hpp"
#include "eusml/image.hpp"
#include "eusml/util.hpp"

namespace eusml {

// ---------------------------------------------------------------------------
// Stations and intervals

enum class Station { Station1 = 0, Station2 = 1, Station3 = 2 };

inline constexpr int kStationCount = 3;
inline constexpr std::array<Station, kStationCount> kAllStations = {
    Station::Station1, Station::Station2, Station::Station3};

inline int station_index(Station s) { return static_cast<int>(s); }

inline std::string_view to_string(Station s) {
  switch (s) {
    case Station::Station1: return "Station1";
    case Station::Station2: return "Station2";
    case Station::Station3: return "Station3";
  }
  return "Station1";
}

inline std::optional<Station> try_parse_station(std::string_view name) {
  for (Station s : kAllStations) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

inline Station parse_station(std::string_view name) {
  if (auto s = try_parse_station(name)) return *s;
  fail(ErrorKind::input, "unknown station '" + std::string(name) + "'");
}

struct StationInterval {
  Station station = Station::Station1;
  double t_start = 0.0;
  double t_end = 0.0;

  bool contains(double t) const { return t >= t_start && t < t_end; }
  friend bool operator==(const StationInterval&, const StationInterval&) = default;
};

/// Checks ordering and pairwise disjointness; names the first offending pair.
inline void validate_intervals(std::span<const StationInterval> intervals) {
  for (const auto& iv : intervals) {
    require(std::isfinite(iv.t_start) && std::isfinite(iv.t_end) && iv.t_start < iv.t_end,
            ErrorKind::input,
            "interval " + std::string(to_string(iv.station)) + " [" + fixed3(iv.t_start) + "," +
                fixed3(iv.t_end) + ") is empty or reversed");
  }
  std::vector<StationInterval> sorted(intervals.begin(), intervals.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const auto& a = sorted[i - 1];
    const auto& b = sorted[i];
    if (b.t_start < a.t_end) {
      fail(ErrorKind::input, "overlapping intervals " + std::string(to_string(a.station)) + " [" +
                                 fixed3(a.t_start) + "," + fixed3(a.t_end) + ") and " +
                                 std::string(to_string(b.station)) + " [" + fixed3(b.t_start) +
                                 "," + fixed3(b.t_end) + ")");
    }
  }
}

inline std::optional<Station> station_at(double t, std::span<const StationInterval> intervals) {
  for (const auto& iv : intervals) {
    if (iv.contains(t)) return iv.station;
  }
  return std::nullopt;
}

/// Pairs every frame whose timestamp falls in [t_start, t_end) of an
/// interval with that interval's station; other frames are dropped.
/// `offset` is subtracted from frame time before lookup (clock alignment).
template <typename Frame>
std::vector<std::pair<Frame, Station>> label_frames(std::span<const Frame> frames,
                                                    std::span<const StationInterval> intervals,
                                                    double offset = 0.0) {
  validate_intervals(intervals);
  std::vector<std::pair<Frame, Station>> out;
  for (const auto& f : frames) {
    if (auto s = station_at(f.t - offset, intervals)) out.emplace_back(f, *s);
  }
  return out;
}

template <typename Frame>
std::vector<std::pair<Frame, Station>> label_frames(const std::vector<Frame>& frames,
                                                    const std::vector<StationInterval>& intervals,
                                                    double offset = 0.0) {
  return label_frames(std::span<const Frame>(frames), std::span<const StationInterval>(intervals),
                      offset);
}

inline constexpr std::string_view kLabelsCsvHeader = "station,t_start,t_end";

inline std::string write_labels_csv(std::span<const StationInterval> intervals) {
  std::string out(kLabelsCsvHeader);
  out += '\n';
  for (const auto& iv : intervals) {
    out += std::string(to_string(iv.station)) + "," + fixed3(iv.t_start) + "," + fixed3(iv.t_end) + "\n";
  }
  return out;
}

inline std::vector<StationInterval> parse_labels_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<StationInterval> out;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      require(line == kLabelsCsvHeader, ErrorKind::input,
              "labels.csv must start with header '" + std::string(kLabelsCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    std::array<std::string, 3> fields;
    std::istringstream row(line);
    for (auto& f : fields) {
      require(static_cast<bool>(std::getline(row, f, ',')), ErrorKind::input,
              "labels.csv line " + std::to_string(line_no) + " needs 3 fields");
    }
    std::string extra;
    require(!std::getline(row, extra, ','), ErrorKind::input,
            "labels.csv line " + std::to_string(line_no) + " has extra fields");
    StationInterval iv;
    iv.station = parse_station(fields[0]);
    try {
      std::size_t used = 0;
      iv.t_start = std::stod(fields[1], &used);
      require(used == fields[1].size(), ErrorKind::input, "bad number");
      iv.t_end = std::stod(fields[2], &used);
      require(used == fields[2].size(), ErrorKind::input, "bad number");
    } catch (const std::logic_error&) {
      fail(ErrorKind::input, "labels.csv line " + std::to_string(line_no) + " has a bad number");
    }
    out.push_back(iv);
  }
  require(header_seen, ErrorKind::input, "labels.csv is empty");
  validate_intervals(out);
  return out;
}

// ---------------------------------------------------------------------------
// Patient-level splitting

using StationCounts = std::array<std::size_t, kStationCount>;

struct ProcedureCounts {
  std::string procedure_id;
  StationCounts counts{};
};

struct SplitAssignment {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
  std::uint64_t seed = 0;
  double test_frac = 0.2;

  bool in_test(const std::string& id) const {
    return std::binary_search(test.begin(), test.end(), id);
  }
  bool in_train(const std::string& id) const {
    return std::binary_search(train.begin(), train.end(), id);
  }
};

namespace detail {

// Sum over stations (with any frames at all) of the squared gap between the
// realised test fraction and the target.
inline double split_cost(const StationCounts& test, const StationCounts& total, double target) {
  double cost = 0.0;
  for (int s = 0; s < kStationCount; ++s) {
    if (total[s] == 0) continue;
    const double gap = static_cast<double>(test[s]) / static_cast<double>(total[s]) - target;
    cost += gap * gap;
  }
  return cost;
}

}  // namespace detail

/// Seeded greedy assignment of whole procedures. Procedures are sorted by id,
/// shuffled with the seed, then each goes to whichever side leaves the
/// per-station test fractions closer to test_frac (ties go to train). If a
/// side ends up empty, the single move that costs least is applied.
inline SplitAssignment assign_splits(std::vector<ProcedureCounts> procedures, double test_frac,
                                     std::uint64_t seed) {
  require(test_frac > 0.0 && test_frac < 1.0, ErrorKind::parameter, "test_frac must be in (0,1)");
  require(procedures.size() >= 2, ErrorKind::input, "need at least 2 procedures to split");
  std::set<std::string> ids;
  for (const auto& p : procedures) {
    std::size_t n = 0;
    for (auto c : p.counts) n += c;
    require(n >= 1, ErrorKind::input, "procedure '" + p.procedure_id + "' has no labeled frames");
    require(ids.insert(p.procedure_id).second, ErrorKind::input,
            "duplicate procedure '" + p.procedure_id + "'");
  }
  std::sort(procedures.begin(), procedures.end(),
            [](const auto& a, const auto& b) { return a.procedure_id < b.procedure_id; });
  Rng rng(seed);
  shuffle_in_place(procedures, rng);

  StationCounts total{};
  for (const auto& p : procedures)
    for (int s = 0; s < kStationCount; ++s) total[s] += p.counts[s];

  StationCounts test{};
  std::vector<bool> to_test(procedures.size(), false);
  for (std::size_t i = 0; i < procedures.size(); ++i) {
    StationCounts with = test;
    for (int s = 0; s < kStationCount; ++s) with[s] += procedures[i].counts[s];
    if (detail::split_cost(with, total, test_frac) < detail::split_cost(test, total, test_frac)) {
      to_test[i] = true;
      test = with;
    }
  }

  const auto n_test = static_cast<std::size_t>(std::count(to_test.begin(), to_test.end(), true));
  if (n_test == 0 || n_test == procedures.size()) {
    const bool move_into_test = n_test == 0;
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < procedures.size(); ++i) {
      StationCounts moved = test;
      for (int s = 0; s < kStationCount; ++s) {
        moved[s] = move_into_test ? moved[s] + procedures[i].counts[s]
                                  : moved[s] - procedures[i].counts[s];
      }
      const double c = detail::split_cost(moved, total, test_frac);
      if (c < best_cost) {
        best_cost = c;
        best = i;
      }
    }
    to_test[best] = move_into_test;
  }

  SplitAssignment out;
  out.seed = seed;
  out.test_frac = test_frac;
  for (std::size_t i = 0; i < procedures.size(); ++i) {
    (to_test[i] ? out.test : out.train).push_back(procedures[i].procedure_id);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// ---------------------------------------------------------------------------
// Normalization statistics

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
  std::vector<double> mean;  // per channel, in [0,1]
  std::vector<double> stddev;  // per channel, >= kStdFloor

  int channels() const { return static_cast<int>(mean.size()); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Exact integer accumulation of per-channel sums; the result does not depend
/// on the order images are added.
class NormAccumulator {
 public:
  void add(const ImageBuffer& img) {
    if (channels_ == 0) {
      channels_ = img.channels();
      sum_.assign(channels_, 0);
      sum_sq_.assign(channels_, 0);
    }
    require(img.channels() == channels_, ErrorKind::input,
            "all images must share a channel count for normalization statistics");
    auto data = img.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint64_t v = data[i];
      sum_[i % channels_] += v;
      sum_sq_[i % channels_] += v * v;
    }
    count_ += img.pixel_count();
  }

  std::size_t pixel_count() const { return count_; }

  NormStats finish() const {
    require(count_ > 0, ErrorKind::input, "normalization statistics need a non-empty train set");
    NormStats stats;
    const auto n = static_cast<unsigned __int128>(count_);
    for (int c = 0; c < channels_; ++c) {
      const auto s1 = static_cast<unsigned __int128>(sum_[c]);
      const auto s2 = static_cast<unsigned __int128>(sum_sq_[c]);
      const unsigned __int128 numerator = n * s2 - s1 * s1;  // N^2 * variance, exact
      const double mean = static_cast<double>(s1) / (static_cast<double>(n) * 255.0);
      const double var = static_cast<double>(numerator) /
                         (static_cast<double>(n) * static_cast<double>(n) * 255.0 * 255.0);
      stats.mean.push_back(mean);
      stats.stddev.push_back(std::max(kStdFloor, std::sqrt(var)));
    }
    return stats;
  }

 private:
  int channels_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> sum_;
  std::vector<std::uint64_t> sum_sq_;
};

/// Population mean/std per channel over all pixels scaled to [0,1].
inline NormStats compute_norm_stats(std::span<const ImageBuffer> train_images) {
  NormAccumulator acc;
  for (const auto& img : train_images) acc.add(img);
  return acc.finish();
}

/// (pixel/255 - mean) / std per channel.
inline FloatImage normalize(const ImageBuffer& img, const NormStats& stats) {
  require(stats.channels() == img.channels(), ErrorKind::parameter,
          "normalization statistics channel count differs from image");
  FloatImage out(img.width(), img.height(), img.channels());
  auto src = img.data();
  const int ch = img.channels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int c = static_cast<int>(i % ch);
    out.data[i] = (src[i] / 255.0 - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestFrame {
  std::string procedure_id;
  std::string path;  // relative to the manifest's frame root
  Station station = Station::Station1;
  Split split = Split::train;

  friend bool operator==(const ManifestFrame&, const ManifestFrame&) = default;
};

struct LabeledFrameRef {
  std::string procedure_id;
  std::string path;
  Station station = Station::Station1;
};

struct DatasetManifest {
  SplitAssignment splits;
  std::vector<ManifestFrame> frames;
  std::array<StationCounts, 2> counts{};  // [split][station]
  NormStats norm;
  EnhanceConfig enhance;

  std::size_t count(Split split, Station s) const {
    return counts[static_cast<int>(split)][station_index(s)];
  }
  std::size_t total(Split split) const {
    std::size_t n = 0;
    for (auto c : counts[static_cast<int>(split)]) n += c;
    return n;
  }
  std::vector<ManifestFrame> frames_in(Split split) const {
    std::vector<ManifestFrame> out;
    for (const auto& f : frames)
      if (f.split == split) out.push_back(f);
    return out;
  }
};

inline DatasetManifest build_manifest(std::span<const LabeledFrameRef> labeled,
                                      const SplitAssignment& splits, const NormStats& norm,
                                      const EnhanceConfig& enhance) {
  require(!splits.test.empty(), ErrorKind::consistency, "test split is empty");
  require(!splits.train.empty(), ErrorKind::consistency, "train split is empty");
  for (const auto& id : splits.train) {
    require(!splits.in_test(id), ErrorKind::consistency,
            "procedure '" + id + "' appears in both splits");
  }
  DatasetManifest m;
  m.splits = splits;
  m.norm = norm;
  m.enhance = enhance;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& f : labeled) {
    Split split;
    if (splits.in_train(f.procedure_id)) {
      split = Split::train;
    } else if (splits.in_test(f.procedure_id)) {
      split = Split::test;
    } else {
      fail(ErrorKind::consistency,
           "frame '" + f.path + "' references procedure '" + f.procedure_id + "' absent from splits");
    }
    require(seen.emplace(f.procedure_id, f.path).second, ErrorKind::consistency,
            "frame '" + f.path + "' listed twice");
    m.frames.push_back({f.procedure_id, f.path, f.station, split});
    ++m.counts[static_cast<int>(split)][station_index(f.station)];
  }
  return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  using nlohmann::json;
  json frames = json::array();
  for (const auto& f : m.frames) {
    frames.push_back({{"proc", f.procedure_id},
                      {"path", f.path},
                      {"station", std::string(to_string(f.station))},
                      {"split", std::string(to_string(f.split))}});
  }
  json counts = json::object();
  for (Split split : {Split::train, Split::test}) {
    json row = json::object();
    for (Station s : kAllStations) row[std::string(to_string(s))] = m.count(split, s);
    row["Total"] = m.total(split);
    counts[std::string(to_string(split))] = row;
  }
  return {{"seed", m.splits.seed},
          {"splits", {{"train", m.splits.train}, {"test", m.splits.test}, {"test_frac", m.splits.test_frac}}},
          {"norm", {{"mean", m.norm.mean}, {"std", m.norm.stddev}}},
          {"enhance", m.enhance},
          {"frames", frames},
          {"counts", counts}};
}

inline std::string serialize_manifest(const DatasetManifest& m) {
  return manifest_to_json(m).dump(2) + "\n";
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.splits.seed = j.at("seed").get<std::uint64_t>();
  m.splits.train = j.at("splits").at("train").get<std::vector<std::string>>();
  m.splits.test = j.at("splits").at("test").get<std::vector<std::string>>();
  m.splits.test_frac = j.at("splits").value("test_frac", 0.2);
  std::sort(m.splits.train.begin(), m.splits.train.end());
  std::sort(m.splits.test.begin(), m.splits.test.end());
  m.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
  m.norm.stddev = j.at("norm").at("std").get<std::vector<double>>();
  m.enhance = j.at("enhance").get<EnhanceConfig>();
  std::vector<LabeledFrameRef> refs;
  for (const auto& f : j.at("frames")) {
    refs.push_back({f.at("proc").get<std::string>(), f.at("path").get<std::string>(),
                    parse_station(f.at("station").get<std::string>())});
  }
  DatasetManifest rebuilt = build_manifest(refs, m.splits, m.norm, m.enhance);
  for (std::size_t i = 0; i < rebuilt.frames.size(); ++i) {
    const auto declared = j.at("frames")[i].at("split").get<std::string>();
    require(declared == to_string(rebuilt.frames[i].split), ErrorKind::consistency,
            "manifest frame '" + rebuilt.frames[i].path + "' has a split that contradicts the split list");
  }
  return rebuilt;
}

}  // namespace eusml
