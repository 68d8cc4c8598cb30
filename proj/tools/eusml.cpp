#include <csignal>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "eusml/labeling/server.hpp"
#include "eusml/labeling/store.hpp"
#include "eusml/pipeline.hpp"

namespace {

namespace pl = eusml::pipeline;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitRuntime = 4;

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<eusml::EnhanceMethod> selected_methods(const pl::PipelineConfig& cfg,
                                                   const std::string& method, bool all) {
  if (all) return {eusml::kAllEnhanceMethods.begin(), eusml::kAllEnhanceMethods.end()};
  if (!method.empty()) return {eusml::parse_enhance_method(method)};
  return {cfg.enhance.method};
}

int serve(const pl::PipelineConfig& cfg, std::string host, int port, std::string data_dir) {
  if (data_dir.empty()) {
    if (const char* env = std::getenv("EUSML_DATA_DIR"); env && *env) data_dir = env;
  }
  if (data_dir.empty()) data_dir = cfg.serve.data_dir.string();
  eusml::require(!data_dir.empty(), eusml::ErrorKind::configuration,
                 "no storage root: set EUSML_DATA_DIR or serve.data_dir");
  std::string token = cfg.serve.token;
  if (const char* env = std::getenv("EUSML_TOKEN"); env && *env) token = env;

  eusml::labeling::LabelStore store(data_dir);
  httplib::Server server;
  eusml::labeling::register_routes(server, store, token);
  if (host.empty()) host = cfg.serve.host;
  if (port < 0) port = cfg.serve.port;
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  eusml::require(bound > 0, eusml::ErrorKind::io,
                 "cannot listen on " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << host << ":" << bound << " (data " << data_dir << ")"
            << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EUS station-classification pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  int jobs = eusml::default_jobs();
  bool force = false;
  std::string method;
  bool all_methods = false;
  std::string host;
  int port = -1;
  std::string data_dir;

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"clean", "drop noise frames and inpaint pointers"},
      {"enhance", "apply the enhancement method to cleaned frames"},
      {"split", "label frames, split by procedure, compute train-only normalization"},
      {"train", "train the toy CNN"},
      {"eval", "evaluate on the test split and print the metrics row"},
      {"gradcam", "write Grad-CAM overlays for test frames"},
      {"serve", "run the labeling service"}};
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "pipeline.json")->required();
    sub->add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "use stale upstream artifacts anyway");
    if (name != "clean" && name != "serve") {
      sub->add_option("--method", method, "enhance method (default: enhance.method in the config)");
      sub->add_flag("--all-methods", all_methods, "run for all six enhance methods");
    }
    if (name == "serve") {
      sub->add_option("--host", host, "bind address");
      sub->add_option("--port", port, "port (0 picks a free one)");
      sub->add_option("--data-dir", data_dir, "storage root (overrides EUSML_DATA_DIR)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const pl::PipelineConfig cfg = pl::load_config(config_path);
    pl::RunOptions opts{jobs, force, &std::cerr};
    if (cmd == "serve") return serve(cfg, host, port, data_dir);
    if (cmd == "clean") {
      const auto report = pl::cmd_clean(cfg, opts);
      std::cout << report["counts"].dump() << "\n";
      return kExitOk;
    }
    std::vector<pl::EvalResult> rows;
    for (eusml::EnhanceMethod m : selected_methods(cfg, method, all_methods)) {
      if (cmd == "enhance") pl::cmd_enhance(cfg, m, opts);
      if (cmd == "split") pl::cmd_split(cfg, m, opts);
      if (cmd == "train") pl::cmd_train(cfg, m, opts);
      if (cmd == "eval") rows.push_back(pl::cmd_eval(cfg, m, opts));
      if (cmd == "gradcam") pl::cmd_gradcam(cfg, m, opts);
    }
    if (cmd == "eval") {
      const std::string table = pl::format_table(rows);
      std::cout << table;
      if (all_methods) eusml::write_text_file(cfg.paths.output / "eval" / "table.txt", table);
    }
    return kExitOk;
  } catch (const pl::PrerequisiteMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPrerequisite;
  } catch (const eusml::Error& e) {
    std::cerr << "error (" << eusml::to_string(e.kind()) << "): " << e.what() << "\n";
    switch (e.kind()) {
      case eusml::ErrorKind::parameter:
      case eusml::ErrorKind::configuration:
      case eusml::ErrorKind::validation:
      case eusml::ErrorKind::input: return kExitValidation;
      default: return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
