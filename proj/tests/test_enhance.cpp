#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "eusml/enhance.hpp"
#include "eusml/fft.hpp"
#include "eusml/util.hpp"
#include "oracles.hpp"

using namespace eusml;

using oracle::dense_gaussian;
using oracle::global_he;
using oracle::noisy_constant;
using oracle::psnr;
using oracle::random_image;
using oracle::variance;

TEST(Fft, RoundTripBelowMicro) {
  Rng rng(1);
  for (auto [w, h] : {std::pair{8, 8}, {17, 9}, {64, 64}, {128, 128}, {100, 36}}) {
    ComplexGrid g(w, h);
    for (auto& v : g.data) v = static_cast<double>(uniform_index(rng, 256));
    const ComplexGrid back = ifft2d(fft2d(g));
    double worst = 0;
    for (std::size_t i = 0; i < g.data.size(); ++i) worst = std::max(worst, std::abs(back.data[i] - g.data[i]));
    EXPECT_LT(worst, 1e-6) << w << "x" << h;
  }
}

TEST(Fft, MatchesNaiveDft) {
  Rng rng(2);
  ComplexGrid g(6, 5);
  for (auto& v : g.data) v = {uniform01(rng), uniform01(rng)};
  const ComplexGrid f = fft2d(g);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 6; ++u) {
      std::complex<double> acc = 0;
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x)
          acc += g.at(x, y) * std::polar(1.0, -2 * std::numbers::pi * (double(u * x) / 6 + double(v * y) / 5));
      EXPECT_LT(std::abs(acc - f.at(u, v)), 1e-9);
    }
}

TEST(FftLowpass, ConstantUnchangedAndDcKept) {
  const ImageBuffer flat(32, 24, 3, 93);
  EXPECT_EQ(fft_lowpass(flat), flat);
  EXPECT_EQ(lowpass_gain(0, 0, 32, 24, 0.12), 1.0);
}

TEST(FftLowpass, AttenuatesHighFrequency) {
  const int n = 64;
  const int k = 24;  // 3/4 of Nyquist (32)
  ImageBuffer img(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      img.at(x, y) = saturate_u8(128 + 60 * std::cos(2 * std::numbers::pi * k * x / n));
  auto band_energy = [&](const ImageBuffer& im) {
    ComplexGrid g(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) g.at(x, y) = im.at(x, y);
    const ComplexGrid f = fft2d(g);
    return std::norm(f.at(k, 0)) + std::norm(f.at(n - k, 0));
  };
  const double before = band_energy(img);
  const double after = band_energy(fft_lowpass(img, 0.12));
  EXPECT_LE(after, 0.1 * before);
}

TEST(Gaussian, ConstantAndImpulse) {
  const ImageBuffer flat(20, 20, 1, 140);
  EXPECT_EQ(gaussian_smooth(flat, 1.0, 5), flat);

  ImageBuffer impulse(21, 21, 1, 0);
  impulse.at(10, 10) = 255;
  const ImageBuffer out = gaussian_smooth(impulse, 1.0, 5);
  const auto k = gaussian_kernel_1d(1.0, 5);
  long mass = 0;
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x) {
      mass += out.at(x, y);
      const int dx = x - 10, dy = y - 10;
      const double want =
          (std::abs(dx) <= 2 && std::abs(dy) <= 2) ? 255.0 * k[dx + 2] * k[dy + 2] : 0.0;
      EXPECT_LE(std::abs(out.at(x, y) - want), 0.5 + 1e-9);
    }
  EXPECT_NEAR(static_cast<double>(mass), 255.0, 13.0);
  EXPECT_THROW(gaussian_smooth(flat, 0.0, 5), Error);
  EXPECT_THROW(gaussian_smooth(flat, 1.0, 4), Error);
}

TEST(Gaussian, DenseOracleWithinOne) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const ImageBuffer img = random_image(rng, 64, 64, trial % 2 ? 3 : 1);
    const double sigma = 0.5 + 2.0 * uniform01(rng);
    const int ksize = 3 + 2 * static_cast<int>(uniform_index(rng, 4));
    const ImageBuffer got = gaussian_smooth(img, sigma, ksize);
    const ImageBuffer want = dense_gaussian(img, sigma, ksize);
    for (std::size_t i = 0; i < got.data().size(); ++i)
      ASSERT_LE(std::abs(int(got.data()[i]) - int(want.data()[i])), 1);
    if (img.channels() == 1) EXPECT_LT(variance(got), variance(img));
  }
}

TEST(Clahe, ConstantImageStaysConstant) {
  const ImageBuffer flat(40, 40, 1, 90);
  const ImageBuffer out = clahe(flat, 2.0, 4);
  for (auto v : out.data()) EXPECT_EQ(v, out.data()[0]);
}

TEST(Clahe, WidensLowContrastRamp) {
  ImageBuffer ramp(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ramp.at(x, y) = static_cast<std::uint8_t>(100 + (x * 30) / 63);
  const ImageBuffer out = clahe(ramp, 2.0, 8);
  const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
  EXPECT_GT(*hi - *lo, 30);
}

TEST(Clahe, GridOneNoClipIsGlobalHe) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 8 + static_cast<int>(uniform_index(rng, 60));
    const int h = 8 + static_cast<int>(uniform_index(rng, 60));
    ImageBuffer img(w, h, 1);
    const int lo = static_cast<int>(uniform_index(rng, 128));
    const int span = 1 + static_cast<int>(uniform_index(rng, 127));
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + uniform_index(rng, span));
    EXPECT_EQ(clahe(img, std::numeric_limits<double>::infinity(), 1), global_he(img));
  }
}

TEST(Clahe, GridLargerThanImage) {
  try {
    clahe(ImageBuffer(4, 4, 1), 2.0, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parameter);
  }
}

TEST(QuantileCap, ConstantAndOutliers) {
  const ImageBuffer flat(10, 10, 1, 77);
  EXPECT_EQ(quantile_cap(flat), flat);

  // 98 zeros then two 255s: rank 99 is 255, rank 98 is 0
  ImageBuffer img(10, 10, 1, 0);
  img.data()[98] = img.data()[99] = 255;
  std::vector<std::uint8_t> sorted(img.data().begin(), img.data().end());
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(nearest_rank(sorted, 0.99), 255);
  EXPECT_EQ(nearest_rank(sorted, 0.98), 0);
  EXPECT_EQ(quantile_cap(img, 0.01, 0.98), img);

  // 97 values of 10, then 50, 200, 250: q_high 0.98 caps at 50.
  ImageBuffer mixed(10, 10, 1, 10);
  mixed.data()[0] = 50;
  mixed.data()[1] = 200;
  mixed.data()[2] = 250;
  const ImageBuffer capped = quantile_cap(mixed, 0.01, 0.98);
  EXPECT_EQ(capped.data()[0], 255);
  EXPECT_EQ(capped.data()[1], 255);
  EXPECT_EQ(capped.data()[2], 255);
  EXPECT_EQ(capped.data()[3], 0);
}

TEST(QuantileCap, FullRangeIsMinMax) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    ImageBuffer img(16, 16, trial % 2 ? 3 : 1);
    const int lo = static_cast<int>(uniform_index(rng, 100));
    const int span = 2 + static_cast<int>(uniform_index(rng, 150));
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(lo + uniform_index(rng, span));
    const ImageBuffer got = quantile_cap(img, 0.0, 1.0);
    for (int c = 0; c < img.channels(); ++c) {
      int mn = 255, mx = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          mn = std::min<int>(mn, img.at(x, y, c));
          mx = std::max<int>(mx, img.at(x, y, c));
        }
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          const int want = mn == mx ? img.at(x, y, c)
                                    : int(std::lround(255.0 * (img.at(x, y, c) - mn) / (mx - mn)));
          ASSERT_EQ(got.at(x, y, c), want);
        }
    }
  }
  ImageBuffer full(16, 1, 1);
  for (int x = 0; x < 16; ++x) full.at(x, 0) = static_cast<std::uint8_t>(x * 17);
  EXPECT_EQ(quantile_cap(full, 0.0, 1.0), full);
  EXPECT_THROW(quantile_cap(full, 0.5, 0.5), Error);
}

TEST(Nlm, ConstantUnchanged) {
  const ImageBuffer flat(24, 24, 1, 128);
  EXPECT_EQ(nlm_denoise(flat, 10.0, 7, 21), flat);
  EXPECT_THROW(nlm_denoise(flat, 10.0, 7, 5), Error);
}

TEST(Nlm, HalvesNoiseVarianceAndRaisesPsnr) {
  const ImageBuffer clean(64, 64, 1, 128);
  const ImageBuffer noisy = noisy_constant(64, 128.0, 20.0, 6);
  const ImageBuffer out = nlm_denoise(noisy, 10.0, 7, 21);
  EXPECT_LE(variance(out), 0.5 * variance(noisy));
  EXPECT_GT(psnr(out, clean), psnr(noisy, clean));
}

TEST(Nlm, Deterministic) {
  const ImageBuffer noisy = noisy_constant(32, 100.0, 15.0, 7);
  EXPECT_EQ(nlm_denoise(noisy), nlm_denoise(noisy));
}

TEST(Apply, DispatchMatchesDirectCalls) {
  Rng rng(8);
  const ImageBuffer img = random_image(rng, 48, 40, 3);
  EnhanceConfig cfg;
  EXPECT_EQ(apply(img, cfg), img);
  cfg.method = EnhanceMethod::gaussian;
  EXPECT_EQ(apply(img, cfg), gaussian_smooth(img, 1.0, 5));
  cfg.method = EnhanceMethod::clahe;
  EXPECT_EQ(apply(img, cfg), clahe(img, 2.0, 8));
  cfg.method = EnhanceMethod::quantile_cap;
  EXPECT_EQ(apply(img, cfg), quantile_cap(img, 0.01, 0.99));
  cfg.method = EnhanceMethod::nlm;
  EXPECT_EQ(apply(img, cfg), nlm_denoise(img, 10.0, 7, 21));
  cfg.method = EnhanceMethod::fft_lowpass;
  EXPECT_EQ(apply(img, cfg), fft_lowpass(img, 0.12));
}

TEST(Apply, ShapesPreserved) {
  Rng rng(9);
  const ImageBuffer img = random_image(rng, 37, 29, 3);
  for (EnhanceMethod m : kAllEnhanceMethods) {
    EnhanceConfig cfg;
    cfg.method = m;
    const ImageBuffer out = apply(img, cfg);
    EXPECT_EQ(out.width(), 37);
    EXPECT_EQ(out.height(), 29);
    EXPECT_EQ(out.channels(), 3);
  }
}

TEST(EnhanceConfig, JsonAndValidation) {
  EXPECT_THROW(parse_enhance_method("sharpen"), Error);
  try {
    parse_enhance_method("sharpen");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
  EnhanceConfig c;
  c.method = EnhanceMethod::nlm;
  c.nlm_h = 7.5;
  const nlohmann::json j = c;
  const EnhanceConfig back = j.get<EnhanceConfig>();
  EXPECT_EQ(back.method, EnhanceMethod::nlm);
  EXPECT_EQ(back.nlm_h, 7.5);
  EnhanceConfig bad;
  bad.gaussian_ksize = 4;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.q_low = 0.9;
  bad.q_high = 0.1;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.fft_cutoff_frac = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}
