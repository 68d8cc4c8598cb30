// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "eusml/enhance.hpp"
#include "eusml/fft.hpp"
#include "eusml/frame_pipeline.hpp"
#include "eusml/labeling/server.hpp"
#include "eusml/pipeline.hpp"
#include "eusml/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eusml;
namespace fs = std::filesystem;
using testsupport::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed check; the first few reasons end up on the line.
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || failures < 3) detail << (pass ? "" : "; ") << "FAILED " << what;
    pass = false;
    ++failures;
  }
  int failures = 0;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome noise_detector() {
  Outcome o;
  const auto corpus = synthetic::make_noise_corpus(200, 2024);
  const auto t0 = Clock::now();
  const NoiseClassifier clf(corpus.reference, {});
  std::size_t hit = 0;
  for (std::size_t i = 0; i < corpus.frames.size(); ++i)
    hit += clf.classify(corpus.frames[i].image).kind == corpus.planted[i];
  const double dt = seconds_since(t0);
  std::set<NoiseKind> kinds(corpus.planted.begin(), corpus.planted.end());
  o.check(kinds.size() == kAllNoiseKinds.size(), "corpus does not plant every kind");
  o.check(hit == corpus.frames.size(), "recovered " + std::to_string(hit) + "/200");
  o.check(dt < 5.0, "took " + fmt(dt) + " s");
  o.detail << (o.pass ? "" : "; ") << hit << "/" << corpus.frames.size() << " frames recovered in " << fmt(dt)
           << " s";
  return o;
}

Outcome histogram_oracles() {
  Outcome o;
  Rng rng(77);
  double worst = 0;
  bool self_exact = true;
  for (int i = 0; i < 1000; ++i) {
    const ImageBuffer a = oracle::random_image(rng, 32, 32, 3);
    const ImageBuffer b = oracle::random_image(rng, 32, 32, 3);
    const auto ha = compute_histogram(a), hb = compute_histogram(b);
    const auto oa = oracle::histogram(a, kDefaultHistogramBins), ob = oracle::histogram(b, kDefaultHistogramBins);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < kDefaultHistogramBins; ++k) worst = std::max(worst, std::abs(ha.hist[c][k] - oa[c][k]));
    worst = std::max(worst, std::abs(hist_intersection(ha, hb) - oracle::intersection(oa, ob)));
    worst = std::max(worst, std::abs(hist_bhattacharyya(ha, hb) - oracle::bhattacharyya(oa, ob)));
    self_exact = self_exact && hist_intersection(ha, ha) == 3.0 && hist_bhattacharyya(ha, ha) == 0.0;
  }
  o.check(worst <= 1e-9, "max deviation " + sci(worst));
  o.check(self_exact, "self-comparison not exact");
  o.detail << (o.pass ? "" : "; ") << "1000 images, max deviation " << sci(worst)
           << ", self-intersection 3.0 and self-distance 0.0 exact";
  return o;
}

Outcome enhancement_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(91);

  double fft_err = 0;
  for (int size : {16, 33, 64, 100, 128}) {
    ComplexGrid g(size, size);
    for (auto& v : g.data) v = static_cast<double>(uniform_index(rng, 256));
    const ComplexGrid back = ifft2d(fft2d(g));
    for (std::size_t i = 0; i < g.data.size(); ++i) fft_err = std::max(fft_err, std::abs(back.data[i] - g.data[i]));
  }
  o.check(fft_err < 1e-6, "fft round trip " + sci(fft_err));

  int gauss_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const ImageBuffer img = oracle::random_image(rng, 64, 64, trial % 2 ? 3 : 1);
    const double sigma = 0.5 + 2.0 * uniform01(rng);
    const int ksize = 3 + 2 * static_cast<int>(uniform_index(rng, 4));
    const ImageBuffer got = gaussian_smooth(img, sigma, ksize), want = oracle::dense_gaussian(img, sigma, ksize);
    for (std::size_t i = 0; i < got.data().size(); ++i)
      gauss_err = std::max(gauss_err, std::abs(int(got.data()[i]) - int(want.data()[i])));
  }
  o.check(gauss_err <= 1, "gaussian off by " + std::to_string(gauss_err));

  bool he_equal = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 16 + static_cast<int>(uniform_index(rng, 80)), h = 16 + static_cast<int>(uniform_index(rng, 80));
    ImageBuffer img(w, h, 1);
    const int lo = static_cast<int>(uniform_index(rng, 128)), span = 1 + static_cast<int>(uniform_index(rng, 128));
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + uniform_index(rng, span));
    he_equal = he_equal && clahe(img, std::numeric_limits<double>::infinity(), 1) == oracle::global_he(img);
  }
  o.check(he_equal, "clahe(grid 1, no clip) differs from global HE");

  const ImageBuffer clean(64, 64, 1, 128);
  const ImageBuffer noisy = oracle::noisy_constant(64, 128.0, 20.0, 6);
  const ImageBuffer denoised = nlm_denoise(noisy, 10.0, 7, 21);
  const double var_ratio = oracle::variance(denoised) / oracle::variance(noisy);
  const double psnr_gain = oracle::psnr(denoised, clean) - oracle::psnr(noisy, clean);
  o.check(var_ratio <= 0.5, "nlm variance ratio " + fmt(var_ratio));
  o.check(psnr_gain > 0.0, "nlm psnr gain " + fmt(psnr_gain));

  bool qc_equal = true;
  for (int trial = 0; trial < 50; ++trial) {
    ImageBuffer img(24, 24, trial % 2 ? 3 : 1);
    const int lo = static_cast<int>(uniform_index(rng, 100)), span = 2 + static_cast<int>(uniform_index(rng, 150));
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + uniform_index(rng, span));
    qc_equal = qc_equal && quantile_cap(img, 0.0, 1.0) == oracle::minmax_rescale(img);
  }
  o.check(qc_equal, "quantile_cap(0,1) differs from min-max");

  const double dt = seconds_since(t0);
  o.check(dt < 60.0, "suite took " + fmt(dt) + " s");
  o.detail << (o.pass ? "" : "; ") << "fft " << sci(fft_err) << ", gaussian max diff " << gauss_err
           << ", CLAHE=HE " << (he_equal ? "exact" : "no") << ", NLM variance x" << fmt(var_ratio)
           << " PSNR +" << fmt(psnr_gain, 2) << " dB, quantile_cap=minmax " << (qc_equal ? "exact" : "no")
           << ", " << fmt(dt, 1) << " s";
  return o;
}

Outcome metrics() {
  Outcome o;
  Rng rng(31);
  double worst = 0, recall_vs_trace = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(uniform_index(rng, 5));
    const auto cm = oracle::random_cm(rng, k, 40);
    const auto [t, p] = oracle::expand(cm);
    const auto want = oracle::from_labels(t, p, k);
    worst = std::max({worst, std::abs(balanced_accuracy(cm) - want.balanced_accuracy),
                      std::abs(weighted_precision(cm) - want.weighted_precision),
                      std::abs(weighted_recall(cm) - want.weighted_recall)});
    recall_vs_trace = std::max(recall_vs_trace,
                               std::abs(weighted_recall(cm) - double(cm.trace()) / double(cm.total())));
  }
  const double ba = balanced_accuracy(ConfusionMatrix(2, {8, 2, 4, 6}));
  o.check(worst <= 1e-12, "oracle deviation " + sci(worst));
  o.check(recall_vs_trace <= 1e-12, "weighted recall vs trace/total " + sci(recall_vs_trace));
  o.check(std::abs(ba - 0.7) <= 1e-12, "[[8,2],[4,6]] BA " + fmt(ba, 6));
  o.detail << (o.pass ? "" : "; ") << "1000 matrices, max deviation " << sci(worst)
           << ", weighted_recall=trace/total within " << sci(recall_vs_trace) << ", BA([[8,2],[4,6]])="
           << fmt(ba, 6);
  return o;
}

Outcome splits() {
  Outcome o;
  const auto t0 = Clock::now();
  std::ostream quiet(nullptr);
  Rng rng(55);
  double worst_dev = 0, worst_norm = 0;
  std::size_t leaks = 0;
  for (int corpus = 0; corpus < 100; ++corpus) {
    TempDir dir("accept_split");
    synthetic::CorpusSpec spec;
    spec.procedures = 12 + uniform_index(rng, 32);
    spec.width = spec.height = 32;
    spec.seed = rng();
    write_corpus(spec, dir / "frames", dir / "labels", dir / "reference.png");
    pipeline::PipelineConfig cfg;
    cfg.paths = {dir / "frames", dir / "labels", dir / "reference.png", dir / "out"};
    cfg.split.seed = rng();
    cfg.split.test_frac = 0.15 + 0.2 * uniform01(rng);
    const pipeline::RunOptions opts{1, false, &quiet};
    pipeline::cmd_clean(cfg, opts);
    pipeline::cmd_enhance(cfg, EnhanceMethod::none, opts);
    pipeline::cmd_split(cfg, EnhanceMethod::none, opts);
    const auto m = pipeline::load_manifest(pipeline::split_dir(cfg, EnhanceMethod::none));

    const std::set<std::string> train(m.splits.train.begin(), m.splits.train.end());
    for (const auto& id : m.splits.test) leaks += train.count(id);
    std::array<double, 3> test{}, total{};
    std::vector<long double> sum(3, 0), sq(3, 0);
    long double n = 0;
    for (const auto& f : m.frames) {
      const int s = station_index(f.station);
      total[s] += 1;
      if (m.splits.in_test(f.procedure_id)) test[s] += 1;
      leaks += (f.split == Split::train) != (train.count(f.procedure_id) == 1);
      if (f.split != Split::train) continue;
      const ImageBuffer img = read_png(cfg.paths.output / f.path);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          for (int c = 0; c < 3; ++c) {
            const long double v = img.at(x, y, c) / 255.0L;
            sum[c] += v;
            sq[c] += v * v;
          }
      n += img.width() * img.height();
    }
    for (int s = 0; s < 3; ++s) worst_dev = std::max(worst_dev, std::abs(test[s] / total[s] - cfg.split.test_frac));
    for (int c = 0; c < 3; ++c) {
      const long double mean = sum[c] / n;
      const long double sd = std::max<long double>(std::sqrt(sq[c] / n - mean * mean), kStdFloor);
      worst_norm = std::max({worst_norm, std::abs(m.norm.mean[c] - static_cast<double>(mean)),
                             std::abs(m.norm.stddev[c] - static_cast<double>(sd))});
    }
  }
  o.check(leaks == 0, std::to_string(leaks) + " procedures in both splits");
  o.check(worst_dev <= 0.10, "station fraction off by " + fmt(worst_dev));
  o.check(worst_norm <= 1e-9, "norm stats off by " + sci(worst_norm));
  o.detail << (o.pass ? "" : "; ") << "100 corpora, 0 shared procedures" << (leaks ? " (violated)" : "")
           << ", worst station fraction deviation " << fmt(worst_dev) << ", train-only stats within "
           << sci(worst_norm) << ", " << fmt(seconds_since(t0), 1) << " s";
  return o;
}

Outcome gradients_and_determinism() {
  Outcome o;
  using namespace nn;
  Rng rng(7);
  struct Case {
    const char* what;
    Network net;
    std::vector<std::size_t> shape;
  };
  std::vector<Case> cases;
  cases.push_back({"dense", Network({GlobalAvgPool{"gap"}, Dense("fc", 3, 4)}), {1, 3, 4, 4}});
  cases.push_back({"conv", Network({Conv2d("conv", 2, 3), GlobalAvgPool{"gap"}, Dense("fc", 3, 3)}), {1, 2, 6, 6}});
  cases.push_back({"relu", Network({Conv2d("conv", 1, 4), Relu{"relu"}, GlobalAvgPool{"gap"}, Dense("fc", 4, 3)}), {1, 1, 6, 6}});
  cases.push_back({"maxpool", Network({Conv2d("conv", 1, 3), MaxPool2{"pool"}, GlobalAvgPool{"gap"}, Dense("fc", 3, 2)}), {1, 1, 8, 8}});
  cases.push_back({"gap", Network({GlobalAvgPool{"gap"}, Dense("fc", 2, 3)}), {1, 2, 5, 3}});
  cases.push_back({"toy", make_toy_cnn(3, 11, 3), {1, 3, 64, 64}});
  std::ostringstream per;
  for (auto& c : cases) {
    he_initialize(c.net, 21);
    for (auto& p : c.net.parameters())
      for (double& v : p.value->data) v += 0.1 * standard_normal(rng);
    Tensor x(c.shape);
    for (double& v : x.data) v = standard_normal(rng);
    GradCheckOptions opt;
    // on the full net a 1e-4 nudge to a first-layer weight moves thousands of
    // activations, and some cross a relu/max kink
    if (std::string(c.what) == "toy") opt.step = 1e-5;
    const double err = gradient_check(c.net, x, 1, opt).max_relative_error;
    o.check(err < 1e-4, std::string(c.what) + " relative error " + sci(err));
    per << " " << c.what << "=" << sci(err);
  }

  ImageSet data(1, 16, 16);
  for (int i = 0; i < 48; ++i) {
    FloatImage img(16, 16, 1);
    for (double& v : img.data) v = standard_normal(rng) + (i % 3);
    data.add(img, i % 3);
  }
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 4;
  Network a = make_toy_cnn(3, 5), b = make_toy_cnn(3, 5);
  train(a, data, cfg);
  train(b, data, cfg);
  const bool same = serialize_checkpoint(a, {}) == serialize_checkpoint(b, {});
  o.check(same, "seeded training diverged");
  o.detail << (o.pass ? "" : "; ") << "max relative error" << per.str() << "; seeded training "
           << (same ? "bit-identical" : "differs");
  return o;
}

Outcome quadrant_experiment() {
  Outcome o;
  using namespace nn;
  const auto t0 = Clock::now();
  const auto samples = synthetic::make_quadrant_dataset(700, 3);
  const std::size_t n_train = 600;
  // normalization from the training images only
  long double sum = 0, sq = 0, cnt = 0;
  for (std::size_t i = 0; i < n_train; ++i)
    for (auto v : samples[i].image.data()) {
      sum += v / 255.0L;
      sq += (v / 255.0L) * (v / 255.0L);
      ++cnt;
    }
  const double mean = static_cast<double>(sum / cnt);
  const double sd = static_cast<double>(std::sqrt(sq / cnt - (sum / cnt) * (sum / cnt)));
  const NormStats norm{{mean}, {sd}};
  ImageSet train_set(1, 64, 64), holdout(1, 64, 64);
  for (std::size_t i = 0; i < samples.size(); ++i)
    (i < n_train ? train_set : holdout).add(normalize(samples[i].image, norm), samples[i].label);

  Network net = make_toy_cnn(4, 0, 1);
  TrainConfig cfg;
  cfg.epochs = 20;
  std::size_t first_95 = 0;
  std::vector<double> accs;
  train(net, train_set, cfg, [&](std::size_t epoch, const EpochStats&, const Network& model) {
    const double acc = accuracy(holdout.labels, predict(model, holdout));
    accs.push_back(acc);
    if (!first_95 && acc >= 0.95) first_95 = epoch + 1;
  });
  const double train_seconds = seconds_since(t0);
  const double final_acc = accuracy(holdout.labels, predict(net, holdout));

  double mass_sum = 0;
  bool all_zero = true;
  Network negative = net;
  auto& fc = std::get<Dense>(negative.layers().back());
  for (std::size_t i = 0; i < fc.in_features; ++i) fc.weight.data[i] = -std::abs(fc.weight.data[i]) - 1e-3;
  for (std::size_t i = 0; i < holdout.size(); ++i) {
    const Tensor x = holdout.sample(i);
    const int label = holdout.labels[i];
    const Heatmap hm = grad_cam(net, x, label);
    double inside = 0, total = 0;
    for (int y = 0; y < hm.input_height; ++y)
      for (int x2 = 0; x2 < hm.input_width; ++x2) {
        const double v = hm.upsampled_at(x2, y);
        total += v;
        const int q = (x2 >= hm.input_width / 2) + 2 * (y >= hm.input_height / 2);
        if (q == label) inside += v;
      }
    mass_sum += total > 0 ? inside / total : 0.0;
    const Heatmap neg = grad_cam(negative, x, 0);
    for (double v : neg.values) all_zero = all_zero && v == 0.0;
    for (double v : neg.upsampled) all_zero = all_zero && v == 0.0;
  }
  const double mass = mass_sum / static_cast<double>(holdout.size());
  o.check(final_acc >= 0.95, "holdout accuracy " + fmt(final_acc));
  o.check(train_seconds < 600.0, "training took " + fmt(train_seconds, 1) + " s");
  o.check(mass >= 0.60, "Grad-CAM quadrant mass " + fmt(mass));
  o.check(all_zero, "all-negative weights gave a nonzero heatmap");
  o.detail << (o.pass ? "" : "; ") << "holdout accuracy " << fmt(final_acc) << " after 20 epochs (first >=0.95 at epoch "
           << first_95 << "), trained in " << fmt(train_seconds, 1) << " s, mean Grad-CAM mass in labeled quadrant "
           << fmt(mass) << " over 100 images, all-negative heatmap " << (all_zero ? "exactly zero" : "nonzero");
  return o;
}

Outcome labeling_service() {
  Outcome o;
  using namespace labeling;
  Rng rng(401);

  // legal sequences through the store, folded at finalize
  std::size_t fold_ok = 0;
  {
    TempDir dir("accept_fold");
    auto now = std::make_shared<Millis>(1'000'000);
    LabelStore store(dir.path(), [now] { return *now; });
    for (int trial = 0; trial < 1000; ++trial) {
      *now = 1'000'000;
      const auto ev = testsupport::random_legal_events(rng, 1 + uniform_index(rng, 25));
      const auto id = store.create("P");
      bool acked = true;
      for (const auto& e : ev) acked = acked && store.record_event(id, testsupport::as_request(e)) == e;
      const Millis end = ev.back().t + static_cast<Millis>(uniform_index(rng, 2)) * 1'500;
      *now += end;
      const auto rec = store.finalize(id);
      fold_ok += acked && testsupport::same_intervals(rec.intervals, testsupport::brute_force_intervals(ev, end));
    }
  }
  o.check(fold_ok == 1000, std::to_string(1000 - fold_ok) + " sequences folded differently");

  // illegal events over HTTP: status and code
  std::size_t illegal_ok = 0;
  {
    TempDir dir("accept_http");
    LabelStore store(dir.path());
    httplib::Server server;
    register_routes(server, store);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto prefix = testsupport::random_legal_events(rng, uniform_index(rng, 6));
      const auto id = store.create("P");
      for (const auto& e : prefix) store.record_event(id, testsupport::as_request(e));
      const auto bad = testsupport::random_illegal_event(rng, prefix);
      nlohmann::json body = {{"kind", to_string(bad.request.kind)}};
      if (bad.request.station) body["station"] = to_string(*bad.request.station);
      if (bad.request.t) body["t"] = *bad.request.t;
      const auto r = client.Post("/procedures/" + id + "/events", body.dump(), "application/json");
      const bool ok = r && r->status == http_status(bad.expected) &&
                      nlohmann::json::parse(r->body)["code"] == to_string(bad.expected) &&
                      store.events(id) == prefix;
      illegal_ok += ok;
    }
    // finalized sessions refuse everything
    const auto id = store.create("F");
    store.finalize(id);
    const auto r = client.Post("/procedures/" + id + "/events", R"({"kind":"fna"})", "application/json");
    illegal_ok += r && r->status == 409 && nlohmann::json::parse(r->body)["code"] == "immutable";
    server.stop();
    th.join();
  }
  o.check(illegal_ok == 1001, std::to_string(1001 - illegal_ok) + " illegal events got a wrong answer");

  // kill -9 the real server while events stream in
  std::size_t acked_total = 0, lost = 0;
  {
    TempDir dir("accept_kill");
    const auto cfg = dir / "pipeline.json";
    write_text_file(cfg, "{}\n");
    std::string id;
    std::vector<double> acked;
    for (int round = 0; round < 5; ++round) {
      testsupport::ServerProcess server(EUSML_CLI_PATH, cfg, dir / "data");
      httplib::Client client(server.host(), server.port());
      if (id.empty())
        id = nlohmann::json::parse(client.Post("/procedures", R"({"patient_ref":"K"})", "application/json")->body)["id"];
      const auto stored = nlohmann::json::parse(client.Get("/procedures/" + id)->body)["events"];
      for (std::size_t i = 0; i < acked.size(); ++i) lost += i >= stored.size() || stored[i]["t"].get<double>() != acked[i];
      for (std::size_t i = acked.size(); i < stored.size(); ++i) acked.push_back(stored[i]["t"]);
      std::atomic<bool> stop{false};
      std::thread writer([&] {
        httplib::Client c(server.host(), server.port());
        double t = acked.empty() ? 0.0 : acked.back();
        while (!stop) {
          t += 0.001;
          const auto r = c.Post("/procedures/" + id + "/events", nlohmann::json{{"kind", "fna"}, {"t", t}}.dump(),
                                "application/json");
          if (!r || r->status != 201) break;
          acked.push_back(nlohmann::json::parse(r->body)["t_assigned"]);
        }
      });
      std::this_thread::sleep_for(std::chrono::milliseconds(100 + uniform_index(rng, 300)));
      server.kill();
      stop = true;
      writer.join();
    }
    testsupport::ServerProcess server(EUSML_CLI_PATH, cfg, dir / "data");
    httplib::Client client(server.host(), server.port());
    const auto stored = nlohmann::json::parse(client.Get("/procedures/" + id)->body)["events"];
    for (std::size_t i = 0; i < acked.size(); ++i) lost += i >= stored.size() || stored[i]["t"].get<double>() != acked[i];
    acked_total = acked.size();
  }
  o.check(acked_total > 0 && lost == 0, std::to_string(lost) + " acknowledged events lost");

  // export -> labels.csv -> label_frames
  std::size_t export_ok = 0;
  {
    TempDir dir("accept_export");
    LabelStore store(dir.path());
    for (int trial = 0; trial < 100; ++trial) {
      const auto ev = testsupport::random_legal_events(rng, 2 + uniform_index(rng, 20));
      const auto id = store.create("P");
      for (const auto& e : ev) store.record_event(id, testsupport::as_request(e));
      const auto rec = store.finalize(id);
      const auto parsed = parse_labels_csv(store.export_csv(id));
      bool ok = parsed.size() == rec.intervals.size();
      for (std::size_t i = 0; ok && i < parsed.size(); ++i)
        ok = parsed[i].station == rec.intervals[i].station && parsed[i].t_start == rec.intervals[i].t_start &&
             parsed[i].t_end == rec.intervals[i].t_end;
      struct F {
        double t;
      };
      std::vector<F> frames;
      for (double t = 0; t < rec.session_duration + 1; t += 0.5) frames.push_back({t});
      const auto labeled = label_frames(frames, parsed);
      std::size_t expected = 0;
      for (const auto& f : frames)
        for (const auto& iv : rec.intervals) expected += f.t >= iv.t_start && f.t < iv.t_end;
      ok = ok && labeled.size() == expected;
      for (const auto& [f, s] : labeled) {
        bool inside = false;
        for (const auto& iv : rec.intervals) inside = inside || (iv.station == s && f.t >= iv.t_start && f.t < iv.t_end);
        ok = ok && inside;
      }
      export_ok += ok;
    }
  }
  o.check(export_ok == 100, std::to_string(100 - export_ok) + " exports did not round-trip");
  o.detail << (o.pass ? "" : "; ") << fold_ok << "/1000 folds match the reconstructor, " << illegal_ok
           << "/1001 illegal events rejected with the right code, " << acked_total
           << " acknowledged events across 5 kills with " << lost << " lost, " << export_ok
           << "/100 CSV exports round-trip through label_frames";
  return o;
}

Outcome reproducibility() {
  Outcome o;
  const auto t0 = Clock::now();
  TempDir dir("accept_e2e");
  std::string table;
  for (const char* name : {"a", "b"}) {
    const fs::path root = dir / name;
    auto r = testsupport::run({EUSML_SYNTH_PATH, "--out", root.string(), "--procedures", "8", "--size", "64",
                               "--seed", "5", "--epochs", "3"});
    o.check(r.exit_code == 0, std::string("synth ") + name + ": " + r.output);
    for (const char* stage : {"clean", "enhance", "split", "train", "eval"}) {
      std::vector<std::string> argv = {EUSML_CLI_PATH, stage, "--config", (root / "pipeline.json").string()};
      if (std::string(stage) != "clean") argv.push_back("--all-methods");
      r = testsupport::run(argv);
      o.check(r.exit_code == 0, std::string(stage) + " exited " + std::to_string(r.exit_code));
      if (std::string(stage) == "eval" && std::string(name) == "a") table = r.output;
    }
  }
  std::size_t compared = 0, differing = 0;
  for (EnhanceMethod m : kAllEnhanceMethods) {
    const std::string method(to_string(m));
    for (const std::string rel : {"out/split/" + method + "/manifest.json", "out/train/" + method + "/model.ckpt",
                                  "out/eval/" + method + "/metrics.json"}) {
      ++compared;
      const bool same = fs::exists(dir / "a" / rel) && sha256_file(dir / "a" / rel) == sha256_file(dir / "b" / rel);
      differing += !same;
      o.check(same, rel + " differs");
    }
  }
  std::size_t rows = 0;
  std::istringstream lines(read_text_file(dir / "a" / "out" / "eval" / "table.txt"));
  std::string line;
  for (EnhanceMethod m : kAllEnhanceMethods) {
    bool found = false;
    std::istringstream again(read_text_file(dir / "a" / "out" / "eval" / "table.txt"));
    while (std::getline(again, line)) found = found || line.rfind(std::string(display_name(m)), 0) == 0;
    rows += found;
  }
  std::size_t nonblank = 0;
  while (std::getline(lines, line)) nonblank += !line.empty();
  o.check(rows == 6 && nonblank == 7, "eval table has " + std::to_string(nonblank - 1) + " rows");
  o.check(table.find("NO-PRE") != std::string::npos, "eval did not print the table");
  o.detail << (o.pass ? "" : "; ") << compared - differing << "/" << compared
           << " manifests, checkpoints and metric reports byte-identical across two runs, eval table has "
           << rows << " method rows, " << fmt(seconds_since(t0), 1) << " s";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"noise detector", noise_detector},
      {"histogram oracles", histogram_oracles},
      {"enhancement suite", enhancement_suite},
      {"metrics", metrics},
      {"splits", splits},
      {"gradient check and determinism", gradients_and_determinism},
      {"quadrant experiment", quadrant_experiment},
      {"labeling service", labeling_service},
      {"reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
