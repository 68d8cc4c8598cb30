// Writes a synthetic EUS corpus plus a ready-to-run pipeline.json.
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "eusml/synthetic.hpp"
#include "eusml/util.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic EUS recording corpus"};
  std::string out_dir;
  eusml::synthetic::CorpusSpec spec;
  std::size_t epochs = 8;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--procedures", spec.procedures, "number of procedures");
  app.add_option("--fps", spec.fps, "frames per second");
  app.add_option("--noise-rate", spec.noise_rate, "fraction of planted noise frames");
  app.add_option("--size", spec.width, "frame width and height");
  app.add_option("--seed", spec.seed, "generator seed");
  app.add_option("--epochs", epochs, "train.epochs written to pipeline.json");
  CLI11_PARSE(app, argc, argv);
  spec.height = spec.width;

  try {
    const std::filesystem::path root(out_dir);
    const auto plans = eusml::synthetic::write_corpus(spec, root / "frames", root / "labels",
                                                      root / "reference.png");
    const nlohmann::json cfg = {
        {"paths", {{"frames", "frames"}, {"labels", "labels"}, {"reference", "reference.png"}, {"output", "out"}}},
        {"enhance", {{"method", "none"}}},
        {"split", {{"seed", 1}, {"test_frac", 0.25}}},
        {"train", {{"lr", 0.01}, {"momentum", 0.9}, {"batch_size", 32}, {"epochs", epochs}, {"seed", 0}}},
        {"gradcam", {{"count", 8}, {"layer", "conv3"}}},
        {"serve", {{"host", "127.0.0.1"}, {"port", 8080}, {"data_dir", "labeling-data"}}}};
    eusml::write_text_file(root / "pipeline.json", cfg.dump(2) + "\n");
    std::size_t frames = 0;
    for (const auto& p : plans) frames += p.frame_kinds.size();
    std::cout << plans.size() << " procedures, " << frames << " frames written to " << root.string()
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
