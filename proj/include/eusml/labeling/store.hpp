#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <openssl/rand.h>

#include "eusml/dataset.hpp"
#include "eusml/error.hpp"
#include "eusml/util.hpp"

namespace eusml::labeling {

// Times are held as integer milliseconds from session start, so the
// 3-decimal CSV export is exact and round-trips.
using Millis = std::int64_t;

inline double to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

inline Millis to_millis(double seconds) {
  require(std::isfinite(seconds) && seconds >= 0.0, ErrorKind::validation,
          "t must be a finite non-negative number of seconds");
  require(seconds < 1e12, ErrorKind::validation, "t is out of range");
  return static_cast<Millis>(std::llround(seconds * 1000.0));
}

enum class EventKind { station_start, station_stop, fna };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::station_start: return "station_start";
    case EventKind::station_stop: return "station_stop";
    case EventKind::fna: return "fna";
  }
  return "fna";
}

inline EventKind parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::station_start, EventKind::station_stop, EventKind::fna})
    if (to_string(k) == s) return k;
  fail(ErrorKind::validation,
       "unknown event kind '" + std::string(s) + "' (expected station_start, station_stop or fna)");
}

enum class SessionState { live, finalized };

inline std::string_view to_string(SessionState s) {
  return s == SessionState::live ? "live" : "finalized";
}

inline SessionState parse_session_state(std::string_view s) {
  if (s == "live") return SessionState::live;
  if (s == "finalized") return SessionState::finalized;
  fail(ErrorKind::validation, "unknown state '" + std::string(s) + "' (expected live or finalized)");
}

struct LabelEvent {
  EventKind kind = EventKind::fna;
  std::optional<Station> station;
  Millis t = 0;
  friend bool operator==(const LabelEvent&, const LabelEvent&) = default;
};

/// Incoming event; t absent means "now" on the server clock.
struct EventRequest {
  EventKind kind = EventKind::fna;
  std::optional<Station> station;
  std::optional<double> t;
};

struct ProcedureRecord {
  std::string id;
  std::string patient_ref;
  std::vector<StationInterval> intervals;
  std::vector<double> fna_times;
  double session_duration = 0.0;
  std::vector<std::string> warnings;
};

/// Folds a legal event sequence into intervals. With an `end`, an interval
/// still open is closed there with a warning (or dropped if it would be
/// empty); without one it is left out.
inline ProcedureRecord fold_events(std::span<const LabelEvent> events, std::optional<Millis> end) {
  ProcedureRecord rec;
  std::optional<LabelEvent> open;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::station_start: open = e; break;
      case EventKind::station_stop:
        rec.intervals.push_back({*open->station, to_seconds(open->t), to_seconds(e.t)});
        open.reset();
        break;
      case EventKind::fna: rec.fna_times.push_back(to_seconds(e.t)); break;
    }
  }
  if (open && end) {
    const std::string name(to_string(*open->station));
    if (*end > open->t) {
      rec.intervals.push_back({*open->station, to_seconds(open->t), to_seconds(*end)});
      rec.warnings.push_back(name + " was still open at finalize and was closed at " +
                             fixed3(to_seconds(*end)) + " s");
    } else {
      rec.warnings.push_back(name + " was opened at finalize time and was discarded (empty interval)");
    }
  }
  if (end) {
    rec.session_duration = to_seconds(*end);
  } else if (!events.empty()) {
    rec.session_duration = to_seconds(events.back().t);
  }
  return rec;
}

struct ProcedureSummary {
  std::string id;
  std::string patient_ref;
  SessionState state = SessionState::live;
  std::size_t event_count = 0;
  std::size_t station_events = 0;
  std::size_t fna_events = 0;
  Millis created_at = 0;  // wall clock, ms since epoch
};

/// Consistent snapshot of one session.
struct SessionView {
  ProcedureRecord record;
  SessionState state = SessionState::live;
  std::vector<LabelEvent> events;
};

using WallClock = std::function<Millis()>;

inline Millis system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline std::string random_session_id() {
  unsigned char bytes[16];
  require(RAND_bytes(bytes, sizeof bytes) == 1, ErrorKind::io, "random id generation failed");
  return to_hex(bytes);
}

inline bool valid_session_id(std::string_view id) {
  return id.size() == 32 && std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

namespace detail {

/// Appends one line and fsyncs before returning.
inline void append_durable(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  require(fd >= 0, ErrorKind::io, "cannot open " + path.string() + " for append");
  std::string buf = line + "\n";
  std::size_t off = 0;
  while (off < buf.size()) {
    const ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      ::close(fd);
      fail(ErrorKind::io, "write to " + path.string() + " failed");
    }
    off += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  require(synced, ErrorKind::io, "fsync of " + path.string() + " failed");
}

inline void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace detail

/// Live procedure sessions persisted as one append-only JSON-lines log each
/// (`<id>.jsonl`). Every mutation is on disk before it is acknowledged.
class LabelStore {
 public:
  explicit LabelStore(std::filesystem::path root, WallClock clock = system_now_ms)
      : root_(std::move(root)), clock_(std::move(clock)) {
    std::filesystem::create_directories(root_);
    load();
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  std::string create(const std::string& patient_ref) {
    require(!patient_ref.empty(), ErrorKind::validation, "patient_ref must be non-empty");
    std::unique_lock lock(map_mutex_);
    std::string id;
    do id = random_session_id();
    while (sessions_.count(id));
    auto s = std::make_shared<Session>();
    s->id = id;
    s->patient_ref = patient_ref;
    s->created_at = clock_();
    s->order = next_order_++;
    detail::append_durable(log_path(id), nlohmann::json{{"op", "create"},
                                                         {"id", id},
                                                         {"patient_ref", patient_ref},
                                                         {"created_at", s->created_at},
                                                         {"order", s->order}}
                                             .dump());
    detail::fsync_dir(root_);
    sessions_.emplace(id, s);
    return id;
  }

  /// Returns the stored event (with its assigned t) once it is durable.
  LabelEvent record_event(const std::string& id, const EventRequest& req) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require(s->state == SessionState::live, ErrorKind::immutable,
            "procedure " + id + " is finalized; events can no longer be recorded");
    if (req.kind == EventKind::fna) {
      require(!req.station, ErrorKind::validation, "fna events take no station");
    } else {
      require(req.station.has_value(), ErrorKind::validation,
              std::string(to_string(req.kind)) + " requires a station");
    }
    const Millis last = s->events.empty() ? 0 : s->events.back().t;
    LabelEvent e{req.kind, req.station, 0};
    if (req.t) {
      e.t = to_millis(*req.t);
      require(e.t >= last, ErrorKind::validation,
              "t=" + fixed3(to_seconds(e.t)) + " precedes the previous event at " +
                  fixed3(to_seconds(last)));
    } else {
      e.t = std::max(last, elapsed(*s));
    }
    if (req.kind == EventKind::station_start) {
      if (s->open)
        fail(ErrorKind::state, std::string(to_string(*s->open->station)) +
                                   " is still open; stop it before starting another station");
    } else if (req.kind == EventKind::station_stop) {
      require(s->open.has_value(), ErrorKind::state, "station_stop without an open station");
      require(s->open->station == req.station, ErrorKind::state,
              "station_stop for " + std::string(to_string(*req.station)) + " but " +
                  std::string(to_string(*s->open->station)) + " is open");
      require(e.t > s->open->t, ErrorKind::validation,
              "station_stop at the start time would make an empty interval");
    }
    nlohmann::json line = {{"op", "event"}, {"kind", to_string(e.kind)}, {"t", e.t}};
    if (e.station) line["station"] = to_string(*e.station);
    detail::append_durable(log_path(id), line.dump());
    apply(*s, e);
    return e;
  }

  ProcedureRecord finalize(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require(s->state == SessionState::live, ErrorKind::immutable,
            "procedure " + id + " is already finalized");
    const Millis last = s->events.empty() ? 0 : s->events.back().t;
    const Millis end = std::max(last, elapsed(*s));
    detail::append_durable(log_path(id), nlohmann::json{{"op", "finalize"}, {"t", end}}.dump());
    s->state = SessionState::finalized;
    s->end = end;
    const ProcedureRecord rec = record_of(*s);
    write_text_file(root_ / (id + ".record.json"), record_to_json(rec, s->state).dump(2) + "\n");
    return rec;
  }

  ProcedureRecord record(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return record_of(*s);
  }

  SessionView view(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return {record_of(*s), s->state, s->events};
  }

  SessionState state(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->state;
  }

  std::vector<LabelEvent> events(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->events;
  }

  std::string export_csv(const std::string& id) const {
    return write_labels_csv(finalized_record(id).intervals);
  }

  nlohmann::json export_json(const std::string& id) const {
    return record_to_json(finalized_record(id), SessionState::finalized);
  }

  std::vector<ProcedureSummary> list(std::optional<SessionState> filter = std::nullopt) const {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::shared_lock lock(map_mutex_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a->order < b->order; });
    std::vector<ProcedureSummary> out;
    for (const auto& s : all) {
      std::lock_guard lock(s->mutex);
      if (filter && s->state != *filter) continue;
      ProcedureSummary sum{s->id, s->patient_ref, s->state, s->events.size(), 0, 0, s->created_at};
      for (const auto& e : s->events) (e.kind == EventKind::fna ? sum.fna_events : sum.station_events)++;
      out.push_back(sum);
    }
    return out;
  }

  static nlohmann::json record_to_json(const ProcedureRecord& r, SessionState state) {
    nlohmann::json iv = nlohmann::json::array();
    for (const auto& i : r.intervals)
      iv.push_back({{"station", to_string(i.station)}, {"t_start", i.t_start}, {"t_end", i.t_end}});
    return {{"id", r.id},
            {"patient_ref", r.patient_ref},
            {"state", to_string(state)},
            {"intervals", iv},
            {"fna_times", r.fna_times},
            {"session_duration", r.session_duration},
            {"warnings", r.warnings}};
  }

 private:
  struct Session {
    mutable std::mutex mutex;
    std::string id;
    std::string patient_ref;
    Millis created_at = 0;
    std::uint64_t order = 0;
    SessionState state = SessionState::live;
    std::vector<LabelEvent> events;
    std::optional<LabelEvent> open;
    Millis end = 0;
  };

  std::filesystem::path log_path(const std::string& id) const { return root_ / (id + ".jsonl"); }

  Millis elapsed(const Session& s) const { return std::max<Millis>(0, clock_() - s.created_at); }

  static void apply(Session& s, const LabelEvent& e) {
    s.events.push_back(e);
    if (e.kind == EventKind::station_start) s.open = e;
    if (e.kind == EventKind::station_stop) s.open.reset();
  }

  static ProcedureRecord record_of(const Session& s) {
    // A live view leaves an open station out rather than inventing its end.
    ProcedureRecord r = fold_events(
        s.events, s.state == SessionState::finalized ? std::optional<Millis>(s.end) : std::nullopt);
    r.id = s.id;
    r.patient_ref = s.patient_ref;
    return r;
  }

  ProcedureRecord finalized_record(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    require(s->state == SessionState::finalized, ErrorKind::state,
            "procedure " + id + " is live; finalize it before exporting");
    return record_of(*s);
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    require(it != sessions_.end(), ErrorKind::not_found, "no procedure with id '" + id + "'");
    return it->second;
  }

  void load() {
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      const auto& p = entry.path();
      if (p.extension() != ".jsonl" || !valid_session_id(p.stem().string())) continue;
      auto s = replay(p);
      if (!s) continue;
      next_order_ = std::max(next_order_, s->order + 1);
      sessions_.emplace(s->id, s);
    }
  }

  /// Rebuilds a session from its log. A torn final line (crash mid-append,
  /// never acknowledged) is ignored and cut off so later appends stay valid.
  static std::shared_ptr<Session> replay(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::shared_ptr<Session> s;
    std::size_t pos = 0, good_end = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;
      const std::string line = text.substr(pos, nl - pos);
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) break;
      const std::string op = j.value("op", "");
      if (op == "create") {
        s = std::make_shared<Session>();
        s->id = j.at("id").get<std::string>();
        s->patient_ref = j.at("patient_ref").get<std::string>();
        s->created_at = j.at("created_at").get<Millis>();
        s->order = j.at("order").get<std::uint64_t>();
      } else if (s && op == "event") {
        LabelEvent e{parse_event_kind(j.at("kind").get<std::string>()), std::nullopt, j.at("t").get<Millis>()};
        if (j.contains("station")) e.station = parse_station(j["station"].get<std::string>());
        apply(*s, e);
      } else if (s && op == "finalize") {
        s->state = SessionState::finalized;
        s->end = j.at("t").get<Millis>();
      } else {
        fail(ErrorKind::io, path.string() + ": unexpected log entry '" + line + "'");
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end < text.size()) std::filesystem::resize_file(path, good_end);
    return s;
  }

  std::filesystem::path root_;
  WallClock clock_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_order_ = 0;
};

inline nlohmann::json summary_to_json(const ProcedureSummary& s) {
  return {{"id", s.id},
          {"patient_ref", s.patient_ref},
          {"state", to_string(s.state)},
          {"event_count", s.event_count},
          {"station_events", s.station_events},
          {"fna_events", s.fna_events},
          {"created_at", s.created_at}};
}

}  // namespace eusml::labeling
