#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eusml/dataset.hpp"
#include "eusml/enhance.hpp"
#include "eusml/error.hpp"
#include "eusml/frame_pipeline.hpp"
#include "eusml/metrics.hpp"
#include "eusml/nn/checkpoint.hpp"
#include "eusml/nn/grad_cam.hpp"
#include "eusml/nn/network.hpp"
#include "eusml/nn/train.hpp"
#include "eusml/png_io.hpp"
#include "eusml/util.hpp"

namespace eusml::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kStageFile = "stage.json";

/// An upstream artifact is absent or no longer matches its recorded hash.
class PrerequisiteMissing : public Error {
 public:
  explicit PrerequisiteMissing(const std::string& message) : Error(ErrorKind::consistency, message) {}
};

// ---------------------------------------------------------------------------
// Configuration

struct Paths {
  fs::path frames;     // <proc>/frames/%06d.png + meta.json per procedure
  fs::path labels;     // <proc>.csv per procedure
  fs::path reference;  // UI reference frame for noise detection
  fs::path output;
};

struct SplitConfig {
  std::uint64_t seed = 1;
  double test_frac = 0.25;
};

struct GradCamConfig {
  std::size_t count = 8;
  std::string layer = "conv3";
  double alpha = 0.4;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir;
  std::string token;
};

struct PipelineConfig {
  fs::path source;  // the config file itself
  Paths paths;
  CleaningConfig cleaning;
  double sample_fps = 0.0;  // 0 keeps every frame
  EnhanceConfig enhance;
  SplitConfig split;
  nn::TrainConfig train;
  GradCamConfig gradcam;
  ServeConfig serve;
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

template <typename Fn>
auto config_section(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(ErrorKind::configuration, std::string(name) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::configuration, std::string(name) + ": " + e.what());
  }
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir) {
  require(j.is_object(), ErrorKind::configuration, "config must be a JSON object");
  PipelineConfig c;
  detail::config_section("paths", [&] {
    const auto p = j.value("paths", nlohmann::json::object());
    c.paths.frames = detail::resolve(base_dir, p.value("frames", std::string{}));
    c.paths.labels = detail::resolve(base_dir, p.value("labels", std::string{}));
    c.paths.reference = detail::resolve(base_dir, p.value("reference", std::string{}));
    c.paths.output = detail::resolve(base_dir, p.value("output", std::string{}));
    return 0;
  });
  detail::config_section("cleaning", [&] {
    if (j.contains("cleaning")) c.cleaning = j["cleaning"].get<CleaningConfig>();
    c.sample_fps = j.value("sample_fps", 0.0);
    require(c.sample_fps >= 0.0, ErrorKind::configuration, "sample_fps must be >= 0");
    return 0;
  });
  detail::config_section("enhance", [&] {
    if (j.contains("enhance")) c.enhance = j["enhance"].get<EnhanceConfig>();
    return 0;
  });
  detail::config_section("split", [&] {
    const auto s = j.value("split", nlohmann::json::object());
    c.split.seed = s.value("seed", c.split.seed);
    c.split.test_frac = s.value("test_frac", c.split.test_frac);
    require(c.split.test_frac > 0.0 && c.split.test_frac < 1.0, ErrorKind::configuration,
            "test_frac must be in (0,1)");
    return 0;
  });
  detail::config_section("train", [&] {
    if (j.contains("train")) c.train = j["train"].get<nn::TrainConfig>();
    return 0;
  });
  detail::config_section("gradcam", [&] {
    const auto g = j.value("gradcam", nlohmann::json::object());
    c.gradcam.count = g.value("count", c.gradcam.count);
    c.gradcam.layer = g.value("layer", c.gradcam.layer);
    c.gradcam.alpha = g.value("alpha", c.gradcam.alpha);
    return 0;
  });
  detail::config_section("serve", [&] {
    const auto s = j.value("serve", nlohmann::json::object());
    c.serve.host = s.value("host", c.serve.host);
    c.serve.port = s.value("port", c.serve.port);
    c.serve.data_dir = detail::resolve(base_dir, s.value("data_dir", std::string{}));
    c.serve.token = s.value("token", std::string{});
    return 0;
  });
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  require(fs::is_regular_file(path), ErrorKind::configuration,
          "config file not found: " + path.string());
  const auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  require(!j.is_discarded(), ErrorKind::configuration, path.string() + " is not valid JSON");
  PipelineConfig c = parse_config(j, fs::absolute(path).parent_path());
  c.source = path;
  return c;
}

inline void require_path(const fs::path& p, const char* key, bool directory) {
  require(!p.empty(), ErrorKind::configuration, std::string("paths.") + key + " is not set");
  const bool ok = directory ? fs::is_directory(p) : fs::is_regular_file(p);
  require(ok, ErrorKind::configuration,
          std::string("paths.") + key + " does not exist: " + p.string());
}

// ---------------------------------------------------------------------------
// Stage manifests and hash chaining

inline std::string hash_json(const nlohmann::json& j) { return sha256_hex(j.dump()); }

inline std::string clean_config_hash(const PipelineConfig& c) {
  return hash_json({{"cleaning", c.cleaning}, {"sample_fps", c.sample_fps}});
}
inline std::string enhance_config_hash(const EnhanceConfig& e) { return hash_json({{"enhance", e}}); }
inline std::string split_config_hash(const PipelineConfig& c) {
  return hash_json({{"seed", c.split.seed}, {"test_frac", c.split.test_frac}});
}
inline std::string train_config_hash(const PipelineConfig& c) { return hash_json({{"train", c.train}}); }
inline std::string eval_config_hash() { return hash_json({{"eval", nlohmann::json::object()}}); }
inline std::string gradcam_config_hash(const PipelineConfig& c) {
  return hash_json({{"count", c.gradcam.count}, {"layer", c.gradcam.layer}, {"alpha", c.gradcam.alpha}});
}

struct StageRecord {
  std::string stage;
  std::string method;
  std::string tool_version;
  std::string config_hash;
  std::map<std::string, std::string> input_hashes;
  std::string output_hash;
};

inline nlohmann::json to_json(const StageRecord& r) {
  nlohmann::json j = {{"stage", r.stage},
                      {"tool_version", r.tool_version},
                      {"config_hash", r.config_hash},
                      {"input_hashes", r.input_hashes},
                      {"output_hash", r.output_hash}};
  if (!r.method.empty()) j["method"] = r.method;
  return j;
}

inline StageRecord read_stage(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_text_file(dir / kStageFile));
  StageRecord r;
  r.stage = j.at("stage").get<std::string>();
  r.method = j.value("method", std::string{});
  r.tool_version = j.at("tool_version").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
  r.output_hash = j.at("output_hash").get<std::string>();
  return r;
}

/// Hashes the finished stage directory and writes its stage.json.
inline StageRecord finish_stage(const fs::path& dir, std::string stage, std::string method,
                                std::string config_hash, std::map<std::string, std::string> inputs) {
  StageRecord r{std::move(stage), std::move(method), std::string(kToolVersion), std::move(config_hash),
                std::move(inputs), sha256_tree(dir, kStageFile)};
  write_text_file(dir / kStageFile, to_json(r).dump(2) + "\n");
  return r;
}

struct RunOptions {
  int jobs = 1;
  bool force = false;
  std::ostream* log = &std::cerr;
};

/// Validates an upstream stage directory and returns its output hash.
/// `command` is what the user runs to (re)produce it.
inline std::string require_upstream(const fs::path& dir, const std::string& command,
                                    const std::string& expected_config_hash,
                                    const RunOptions& opts) {
  if (!fs::exists(dir / kStageFile)) {
    throw PrerequisiteMissing("missing upstream artifact " + dir.string() + "; run `" + command +
                              "` first");
  }
  const StageRecord r = read_stage(dir);
  if (sha256_tree(dir, kStageFile) != r.output_hash) {
    throw PrerequisiteMissing("artifact " + dir.string() +
                              " changed after it was produced (checksum mismatch); rerun `" +
                              command + "`");
  }
  if (r.config_hash != expected_config_hash || r.tool_version != kToolVersion) {
    const std::string msg = "stale artifact " + dir.string() +
                            " was produced with a different configuration or tool version; rerun `" +
                            command + "`";
    if (!opts.force) fail(ErrorKind::validation, msg + " or pass --force to use it anyway");
    *opts.log << "warning: " << msg << " (continuing because of --force)\n";
  }
  return r.output_hash;
}

inline std::string command_hint(const PipelineConfig& c, const std::string& sub,
                                EnhanceMethod m = EnhanceMethod::none, bool with_method = false) {
  std::string s = "eusml " + sub + " --config " + c.source.string();
  if (with_method) s += " --method " + std::string(to_string(m));
  return s;
}

// Stage directories under paths.output
inline fs::path clean_dir(const PipelineConfig& c) { return c.paths.output / "clean"; }
inline fs::path enhance_dir(const PipelineConfig& c, EnhanceMethod m) {
  return c.paths.output / "enhance" / std::string(to_string(m));
}
inline fs::path split_dir(const PipelineConfig& c, EnhanceMethod m) {
  return c.paths.output / "split" / std::string(to_string(m));
}
inline fs::path train_dir(const PipelineConfig& c, EnhanceMethod m) {
  return c.paths.output / "train" / std::string(to_string(m));
}
inline fs::path eval_dir(const PipelineConfig& c, EnhanceMethod m) {
  return c.paths.output / "eval" / std::string(to_string(m));
}
inline fs::path gradcam_dir(const PipelineConfig& c, EnhanceMethod m) {
  return c.paths.output / "gradcam" / std::string(to_string(m));
}

inline EnhanceConfig enhance_for(const PipelineConfig& c, EnhanceMethod m) {
  EnhanceConfig e = c.enhance;
  e.method = m;
  return e;
}

inline void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

// ---------------------------------------------------------------------------
// Stages

/// Noise-frame removal and pointer inpainting for every procedure.
inline nlohmann::json cmd_clean(const PipelineConfig& c, const RunOptions& opts) {
  require_path(c.paths.frames, "frames", true);
  require_path(c.paths.reference, "reference", false);
  require(!c.paths.output.empty(), ErrorKind::configuration, "paths.output is not set");
  const NoiseClassifier classifier(read_png(c.paths.reference), c.cleaning);
  const auto procs = list_procedures_on_disk(c.paths.frames);
  require(!procs.empty(), ErrorKind::input,
          "no procedure directories (with meta.json) under " + c.paths.frames.string());

  const fs::path out = clean_dir(c);
  reset_dir(out);
  nlohmann::json per_proc = nlohmann::json::object();
  CleaningReport total;
  for (const auto& dir : procs) {
    const ProcedureFrames proc = open_procedure(dir);
    std::vector<FrameEntry> entries = proc.entries;
    if (c.sample_fps > 0.0) {
      std::vector<double> times;
      for (const auto& e : entries) times.push_back(proc.time_of(e.index));
      std::vector<FrameEntry> kept;
      for (auto i : select_sample_indices(times, c.sample_fps)) kept.push_back(entries[i]);
      entries = std::move(kept);
    }
    std::vector<FrameSample> frames(entries.size());
    parallel_for(entries.size(), opts.jobs, [&](std::size_t i) { frames[i] = proc.load(entries[i]); });
    CleanResult result = clean_stream(std::move(frames), classifier, opts.jobs);

    const fs::path pdir = out / proc.procedure_id;
    fs::create_directories(pdir / "frames");
    write_procedure_meta(pdir, proc.fps, proc.capture_start);
    parallel_for(result.frames.size(), opts.jobs, [&](std::size_t i) {
      const auto& f = result.frames[i];
      write_png(pdir / "frames" / frame_file_name(f.source_index), f.image);
    });

    nlohmann::json rep = result.report;
    std::vector<std::size_t> dropped_frames;
    for (auto i : result.report.dropped_indices) dropped_frames.push_back(entries[i].index);
    rep["dropped_frames"] = dropped_frames;
    per_proc[proc.procedure_id] = rep;
    for (std::size_t k = 0; k < total.counts.size(); ++k) total.counts[k] += result.report.counts[k];
    total.frames_in += result.report.frames_in;
    total.frames_out += result.report.frames_out;
    *opts.log << "clean " << proc.procedure_id << ": " << result.report.frames_in << " in, "
              << result.report.frames_out << " kept\n";
  }
  nlohmann::json counts = nlohmann::json::object();
  for (NoiseKind k : kAllNoiseKinds) counts[std::string(to_string(k))] = total.count(k);
  const nlohmann::json report = {{"procedures", per_proc},
                                 {"counts", counts},
                                 {"frames_in", total.frames_in},
                                 {"frames_out", total.frames_out}};
  write_text_file(out / "report.json", report.dump(2) + "\n");
  finish_stage(out, "clean", "", clean_config_hash(c),
               {{"frames", sha256_tree(c.paths.frames)}, {"reference", sha256_file(c.paths.reference)}});
  return report;
}

inline void cmd_enhance(const PipelineConfig& c, EnhanceMethod m, const RunOptions& opts) {
  const std::string upstream =
      require_upstream(clean_dir(c), command_hint(c, "clean"), clean_config_hash(c), opts);
  const EnhanceConfig ecfg = enhance_for(c, m);
  const fs::path out = enhance_dir(c, m);
  reset_dir(out);
  std::size_t n = 0;
  for (const auto& dir : list_procedures_on_disk(clean_dir(c))) {
    const ProcedureFrames proc = open_procedure(dir);
    const fs::path pdir = out / proc.procedure_id;
    fs::create_directories(pdir / "frames");
    write_procedure_meta(pdir, proc.fps, proc.capture_start);
    parallel_for(proc.entries.size(), opts.jobs, [&](std::size_t i) {
      const auto& e = proc.entries[i];
      write_png(pdir / "frames" / e.path.filename(), apply(read_png(e.path), ecfg));
    });
    n += proc.entries.size();
  }
  *opts.log << "enhance " << to_string(m) << ": " << n << " frames\n";
  finish_stage(out, "enhance", std::string(to_string(m)), enhance_config_hash(ecfg),
               {{"clean", upstream}});
}

struct TimedFrame {
  std::string path;  // relative to paths.output
  double t = 0.0;
};

inline DatasetManifest cmd_split(const PipelineConfig& c, EnhanceMethod m, const RunOptions& opts) {
  const EnhanceConfig ecfg = enhance_for(c, m);
  const std::string upstream = require_upstream(
      enhance_dir(c, m), command_hint(c, "enhance", m, true), enhance_config_hash(ecfg), opts);
  require_path(c.paths.labels, "labels", true);

  std::vector<LabeledFrameRef> labeled;
  std::vector<ProcedureCounts> counts;
  for (const auto& dir : list_procedures_on_disk(enhance_dir(c, m))) {
    const ProcedureFrames proc = open_procedure(dir);
    const fs::path label_file = c.paths.labels / (proc.procedure_id + ".csv");
    require(fs::is_regular_file(label_file), ErrorKind::input,
            "no labels for procedure " + proc.procedure_id + " (expected " + label_file.string() + ")");
    std::vector<StationInterval> intervals;
    try {
      intervals = parse_labels_csv(read_text_file(label_file));
    } catch (const Error& e) {
      throw Error(e.kind(), label_file.string() + ": " + e.what());
    }
    std::vector<TimedFrame> frames;
    for (const auto& e : proc.entries) {
      frames.push_back({fs::relative(e.path, c.paths.output).generic_string(), proc.time_of(e.index)});
    }
    ProcedureCounts pc{proc.procedure_id, {}};
    for (const auto& [frame, station] : label_frames(frames, intervals)) {
      labeled.push_back({proc.procedure_id, frame.path, station});
      ++pc.counts[station_index(station)];
    }
    std::size_t n = 0;
    for (auto v : pc.counts) n += v;
    if (n == 0) {
      *opts.log << "warning: procedure " << proc.procedure_id << " has no labeled frames; skipped\n";
      continue;
    }
    counts.push_back(pc);
  }
  const SplitAssignment splits = assign_splits(counts, c.split.test_frac, c.split.seed);

  // Train-only normalization statistics; images are loaded in chunks and
  // accumulated in manifest order.
  std::vector<std::string> train_paths;
  for (const auto& f : labeled)
    if (splits.in_train(f.procedure_id)) train_paths.push_back(f.path);
  NormAccumulator acc;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < train_paths.size(); start += chunk) {
    const std::size_t n = std::min(chunk, train_paths.size() - start);
    std::vector<ImageBuffer> imgs(n, ImageBuffer(1, 1, 1));
    parallel_for(n, opts.jobs,
                 [&](std::size_t i) { imgs[i] = read_png(c.paths.output / train_paths[start + i]); });
    for (const auto& img : imgs) acc.add(img);
  }
  const DatasetManifest manifest = build_manifest(labeled, splits, acc.finish(), ecfg);

  const fs::path out = split_dir(c, m);
  reset_dir(out);
  write_text_file(out / "manifest.json", serialize_manifest(manifest));
  *opts.log << "split " << to_string(m) << ": " << manifest.total(Split::train) << " train / "
            << manifest.total(Split::test) << " test frames\n";
  finish_stage(out, "split", std::string(to_string(m)), split_config_hash(c),
               {{"enhance", upstream}, {"labels", sha256_tree(c.paths.labels)}});
  return manifest;
}

inline DatasetManifest load_manifest(const fs::path& split_stage_dir) {
  return manifest_from_json(nlohmann::json::parse(read_text_file(split_stage_dir / "manifest.json")));
}

/// Model input: the stored frame resized to the network's input size and
/// normalized with the manifest's train statistics.
inline FloatImage model_input(const ImageBuffer& img, const NormStats& norm) {
  return normalize(resize_bilinear(img, static_cast<int>(nn::kToyInputSize),
                                   static_cast<int>(nn::kToyInputSize)),
                   norm);
}

inline nn::ImageSet load_split(const fs::path& root, const DatasetManifest& m, Split split, int jobs) {
  const auto frames = m.frames_in(split);
  std::vector<FloatImage> inputs(frames.size());
  parallel_for(frames.size(), jobs,
               [&](std::size_t i) { inputs[i] = model_input(read_png(root / frames[i].path), m.norm); });
  nn::ImageSet set(m.norm.channels(), nn::kToyInputSize, nn::kToyInputSize);
  for (std::size_t i = 0; i < frames.size(); ++i) set.add(inputs[i], station_index(frames[i].station));
  return set;
}

/// Argmax predictions for one split, aligned with its labels.
inline std::pair<std::vector<int>, std::vector<int>> predict_frames(const nn::Network& model,
                                                                    const fs::path& root,
                                                                    const DatasetManifest& m,
                                                                    Split split, int jobs) {
  require(model.class_count() == static_cast<std::size_t>(kStationCount), ErrorKind::configuration,
          "model has " + std::to_string(model.class_count()) + " classes but the dataset has " +
              std::to_string(kStationCount) + " stations");
  const nn::ImageSet set = load_split(root, m, split, jobs);
  return {set.labels, nn::predict(model, set)};
}

inline nn::TrainHistory cmd_train(const PipelineConfig& c, EnhanceMethod m, const RunOptions& opts) {
  const EnhanceConfig ecfg = enhance_for(c, m);
  const std::string enh = require_upstream(enhance_dir(c, m), command_hint(c, "enhance", m, true),
                                           enhance_config_hash(ecfg), opts);
  const std::string spl =
      require_upstream(split_dir(c, m), command_hint(c, "split", m, true), split_config_hash(c), opts);
  const DatasetManifest manifest = load_manifest(split_dir(c, m));
  const nn::ImageSet train_set = load_split(c.paths.output, manifest, Split::train, opts.jobs);

  nn::Network net = nn::make_toy_cnn(kStationCount, c.train.seed, manifest.norm.channels());
  const auto history = nn::train(net, train_set, c.train,
                                 [&](std::size_t epoch, const nn::EpochStats& s, const nn::Network&) {
                                   *opts.log << "train " << to_string(m) << " epoch " << epoch + 1
                                             << "/" << c.train.epochs << " loss " << s.loss
                                             << " acc " << s.accuracy << "\n";
                                 });
  const fs::path out = train_dir(c, m);
  reset_dir(out);
  nn::save_checkpoint(out / "model.ckpt", net, manifest.norm);
  nlohmann::json hist = history;
  write_text_file(out / "history.json", hist.dump(2) + "\n");
  finish_stage(out, "train", std::string(to_string(m)), train_config_hash(c),
               {{"enhance", enh}, {"split", spl}});
  return history;
}

struct EvalResult {
  EnhanceMethod method = EnhanceMethod::none;
  ConfusionMatrix cm{kStationCount};
  EvalReport report;
  std::string row;
};

inline EvalResult cmd_eval(const PipelineConfig& c, EnhanceMethod m, const RunOptions& opts) {
  const EnhanceConfig ecfg = enhance_for(c, m);
  const std::string enh = require_upstream(enhance_dir(c, m), command_hint(c, "enhance", m, true),
                                           enhance_config_hash(ecfg), opts);
  const std::string spl =
      require_upstream(split_dir(c, m), command_hint(c, "split", m, true), split_config_hash(c), opts);
  const std::string trn =
      require_upstream(train_dir(c, m), command_hint(c, "train", m, true), train_config_hash(c), opts);
  const DatasetManifest manifest = load_manifest(split_dir(c, m));
  const nn::Checkpoint ck = nn::load_checkpoint(train_dir(c, m) / "model.ckpt");
  const auto [labels, preds] = predict_frames(ck.network, c.paths.output, manifest, Split::test, opts.jobs);

  EvalResult r;
  r.method = m;
  r.cm = confusion_matrix(labels, preds, kStationCount);
  r.report = evaluate(r.cm);
  r.row = format_table_row(std::string(display_name(m)), r.report);

  const fs::path out = eval_dir(c, m);
  reset_dir(out);
  const nlohmann::json metrics = {{"method", std::string(to_string(m))},
                                  {"display_name", std::string(display_name(m))},
                                  {"confusion_matrix", r.cm},
                                  {"report", r.report},
                                  {"test_frames", labels.size()}};
  write_text_file(out / "metrics.json", metrics.dump(2) + "\n");
  write_text_file(out / "row.txt", r.row + "\n");
  finish_stage(out, "eval", std::string(to_string(m)), eval_config_hash(),
               {{"enhance", enh}, {"split", spl}, {"train", trn}});
  return r;
}

inline std::string format_table(const std::vector<EvalResult>& results) {
  std::string t = format_table_header() + "\n";
  for (const auto& r : results) t += r.row + "\n";
  return t;
}

inline nlohmann::json cmd_gradcam(const PipelineConfig& c, EnhanceMethod m, const RunOptions& opts) {
  const EnhanceConfig ecfg = enhance_for(c, m);
  const std::string enh = require_upstream(enhance_dir(c, m), command_hint(c, "enhance", m, true),
                                           enhance_config_hash(ecfg), opts);
  const std::string spl =
      require_upstream(split_dir(c, m), command_hint(c, "split", m, true), split_config_hash(c), opts);
  const std::string trn =
      require_upstream(train_dir(c, m), command_hint(c, "train", m, true), train_config_hash(c), opts);
  const DatasetManifest manifest = load_manifest(split_dir(c, m));
  const nn::Checkpoint ck = nn::load_checkpoint(train_dir(c, m) / "model.ckpt");
  nn::gradcam_activation_index(ck.network, c.gradcam.layer);  // reject a bad layer up front

  auto frames = manifest.frames_in(Split::test);
  if (frames.size() > c.gradcam.count) frames.resize(c.gradcam.count);
  const fs::path out = gradcam_dir(c, m);
  reset_dir(out);
  std::vector<nlohmann::json> entries(frames.size());
  parallel_for(frames.size(), opts.jobs, [&](std::size_t i) {
    const ImageBuffer img = read_png(c.paths.output / frames[i].path);
    const ImageBuffer small = resize_bilinear(img, static_cast<int>(nn::kToyInputSize),
                                              static_cast<int>(nn::kToyInputSize));
    nn::ImageSet one(manifest.norm.channels(), nn::kToyInputSize, nn::kToyInputSize);
    one.add(normalize(small, manifest.norm), station_index(frames[i].station));
    const nn::Tensor x = one.sample(0);
    const nn::Tensor logits = ck.network.forward(x).logits;
    const int predicted = nn::argmax(logits.data.data(), logits.data.size());
    const nn::Heatmap hm = nn::grad_cam(ck.network, x, predicted, c.gradcam.layer);
    const std::string name = frames[i].procedure_id + "_" + fs::path(frames[i].path).stem().string() + ".png";
    write_png(out / name, nn::overlay(hm, small, c.gradcam.alpha));
    entries[i] = {{"frame", frames[i].path},
                  {"station", std::string(to_string(frames[i].station))},
                  {"predicted", std::string(to_string(kAllStations[static_cast<std::size_t>(predicted)]))},
                  {"overlay", name}};
  });
  const nlohmann::json index = entries;
  write_text_file(out / "index.json", index.dump(2) + "\n");
  finish_stage(out, "gradcam", std::string(to_string(m)), gradcam_config_hash(c),
               {{"enhance", enh}, {"split", spl}, {"train", trn}});
  return index;
}

}  // namespace eusml::pipeline
