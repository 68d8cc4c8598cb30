#pragma once

// Shared helpers for the unit tests and the acceptance binary.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "eusml/labeling/store.hpp"
#include "eusml/util.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using eusml::Station;
using eusml::labeling::EventKind;
using eusml::labeling::LabelEvent;
using eusml::labeling::Millis;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::string pattern = (fs::temp_directory_path() / ("eusml_" + tag + "_XXXXXX")).string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// Runs a program to completion and collects its output.
inline RunResult run(const std::vector<std::string>& argv) {
  std::string cmd;
  for (const auto& a : argv) cmd += shell_quote(a) + " ";
  cmd += "2>&1";
  RunResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// `eusml serve` as a child process on a free port.
class ServerProcess {
 public:
  ServerProcess(const std::string& cli, const fs::path& config, const fs::path& data_dir) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execl(cli.c_str(), cli.c_str(), "serve", "--config", config.c_str(), "--port", "0",
              "--data-dir", data_dir.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    std::string line;
    char c;
    while (::read(fds[0], &c, 1) == 1 && c != '\n') line += c;
    ::close(fds[0]);
    std::smatch m;
    static const std::regex re(R"(listening on http://([^:]+):(\d+))");
    if (!std::regex_search(line, m, re)) {
      kill();
      throw std::runtime_error("server did not start: '" + line + "'");
    }
    host_ = m[1];
    port_ = std::stoi(m[2]);
  }
  ~ServerProcess() { kill(); }
  ServerProcess(const ServerProcess&) = delete;
  ServerProcess& operator=(const ServerProcess&) = delete;

  void kill() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }
  const std::string& host() const { return host_; }
  int port() const { return port_; }

 private:
  pid_t pid_ = -1;
  std::string host_;
  int port_ = 0;
};

// ---------------------------------------------------------------------------
// Event sequences

/// Random sequence obeying the one-open-station rule, with strictly
/// positive interval lengths and non-decreasing times.
inline std::vector<LabelEvent> random_legal_events(eusml::Rng& rng, std::size_t n) {
  std::vector<LabelEvent> out;
  std::optional<LabelEvent> open;
  Millis t = static_cast<Millis>(eusml::uniform_index(rng, 3000));
  for (std::size_t i = 0; i < n; ++i) {
    t += static_cast<Millis>(eusml::uniform_index(rng, 4)) * static_cast<Millis>(eusml::uniform_index(rng, 2500));
    const bool fna = eusml::uniform_index(rng, 4) == 0;
    LabelEvent e;
    e.t = t;
    if (fna) {
      e.kind = EventKind::fna;
    } else if (open) {
      e.kind = EventKind::station_stop;
      e.station = open->station;
      if (e.t <= open->t) e.t = t = open->t + 1;
      open.reset();
    } else {
      e.kind = EventKind::station_start;
      e.station = static_cast<Station>(eusml::uniform_index(rng, 3));
      open = e;
    }
    out.push_back(e);
  }
  return out;
}

struct OracleInterval {
  Station station;
  Millis start, end;
};

/// Recomputes the open station after every event by rescanning from the
/// start, then reads intervals off the runs. `end` closes a trailing run.
inline std::vector<OracleInterval> brute_force_intervals(const std::vector<LabelEvent>& ev,
                                                         std::optional<Millis> end) {
  auto open_after = [&](std::size_t i) {
    std::optional<Station> s;
    for (std::size_t j = 0; j <= i; ++j) {
      if (ev[j].kind == EventKind::station_start) s = ev[j].station;
      if (ev[j].kind == EventKind::station_stop) s.reset();
    }
    return s;
  };
  std::vector<OracleInterval> out;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const auto now = open_after(i);
    const auto before = i == 0 ? std::nullopt : open_after(i - 1);
    if (!now || before) continue;
    std::optional<Millis> close;
    for (std::size_t j = i + 1; j < ev.size() && !close; ++j)
      if (!open_after(j)) close = ev[j].t;
    if (!close && end && *end > ev[i].t) close = *end;
    if (close) out.push_back({*now, ev[i].t, *close});
  }
  return out;
}

inline bool same_intervals(const std::vector<eusml::StationInterval>& got,
                           const std::vector<OracleInterval>& want) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].station != want[i].station) return false;
    if (got[i].t_start != eusml::labeling::to_seconds(want[i].start)) return false;
    if (got[i].t_end != eusml::labeling::to_seconds(want[i].end)) return false;
  }
  return true;
}

struct IllegalCase {
  eusml::labeling::EventRequest request;
  eusml::ErrorKind expected;
  std::string what;
};

/// An event that must be refused after the legal prefix `ev` (session live).
inline IllegalCase random_illegal_event(eusml::Rng& rng, const std::vector<LabelEvent>& ev) {
  using eusml::ErrorKind;
  using eusml::labeling::to_seconds;
  std::optional<LabelEvent> open;
  for (const auto& e : ev) {
    if (e.kind == EventKind::station_start) open = e;
    if (e.kind == EventKind::station_stop) open.reset();
  }
  const Millis last = ev.empty() ? 0 : ev.back().t;
  const double now = to_seconds(last) + 1.0;
  auto other = [&](Station s) { return static_cast<Station>((static_cast<int>(s) + 1 + eusml::uniform_index(rng, 2)) % 3); };
  std::vector<IllegalCase> options = {
      {{EventKind::fna, Station::Station2, now}, ErrorKind::validation, "fna with station"},
      {{EventKind::station_start, std::nullopt, now}, ErrorKind::validation, "start without station"},
      {{EventKind::station_stop, std::nullopt, now}, ErrorKind::validation, "stop without station"},
      {{EventKind::fna, std::nullopt, -1.0}, ErrorKind::validation, "negative t"}};
  if (last > 0)
    options.push_back({{EventKind::fna, std::nullopt, to_seconds(last - 1)}, ErrorKind::validation, "t goes back"});
  if (open) {
    options.push_back({{EventKind::station_start, static_cast<Station>(eusml::uniform_index(rng, 3)), now},
                       ErrorKind::state, "second start"});
    options.push_back({{EventKind::station_stop, other(*open->station), now}, ErrorKind::state, "stop for other station"});
    if (last == open->t)
      options.push_back({{EventKind::station_stop, open->station, to_seconds(last)}, ErrorKind::validation,
                         "empty interval"});
  } else {
    options.push_back({{EventKind::station_stop, static_cast<Station>(eusml::uniform_index(rng, 3)), now},
                       ErrorKind::state, "stop without start"});
  }
  return options[eusml::uniform_index(rng, options.size())];
}

inline eusml::labeling::EventRequest as_request(const LabelEvent& e) {
  return {e.kind, e.station, eusml::labeling::to_seconds(e.t)};
}

}  // namespace testsupport
