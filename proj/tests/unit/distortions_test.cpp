#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "addmark/distortions.hpp"
#include "addmark/synthetic.hpp"

using namespace addmark;

namespace {

ImageTensor field(Shape s, std::uint64_t seed) {
  SeededRng rng(seed);
  return smooth_gaussian_field(s, rng);
}

double inner(const ImageTensor& a, const ImageTensor& b) { return dot(a.data(), b.data()); }

}  // namespace

TEST(Distortions, AffineKinds) {
  const ImageTensor x = field({3, 12, 12}, 1);
  SeededRng rng(0);
  EXPECT_EQ(apply(DistortionSpec::make(DistortionKind::identity), x, rng).data()[7], x.data()[7]);
  auto b = DistortionSpec::make(DistortionKind::brightness);
  b.brightness = 1.5;
  EXPECT_NEAR(apply(b, x, rng).data()[5], 1.5 * x.data()[5], 1e-15);
  auto c = DistortionSpec::make(DistortionKind::contrast);
  c.contrast = 2.0;
  EXPECT_NEAR(apply(c, x, rng).data()[5], 0.5 + 2.0 * (x.data()[5] - 0.5), 1e-15);
  // Outputs are never clipped, so they may leave the declared range.
  ImageTensor white({1, 2, 2}, std::vector<double>(4, 1.0), ValueRange::unit);
  EXPECT_EQ(apply(b, white, rng).data()[0], 1.5);
}

TEST(Distortions, NoiseIsSeededAndScaled) {
  const ImageTensor x = field({1, 64, 64}, 2);
  auto n = DistortionSpec::make(DistortionKind::gaussian_noise);
  n.noise_sigma = 0.1;
  SeededRng r1(5), r2(5);
  const ImageTensor a = apply(n, x, r1), b = apply(n, x, r2);
  EXPECT_EQ(a, b);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(a.data()[i] - x.data()[i], 2);
  EXPECT_NEAR(std::sqrt(ss / x.size()), 0.1, 0.005);

  ImageTensor bytes({1, 64, 64}, std::vector<double>(4096, 128.0), ValueRange::byte);
  SeededRng r3(5);
  const ImageTensor nb = apply(n, bytes, r3);
  ss = 0.0;
  for (double v : nb.data()) ss += (v - 128.0) * (v - 128.0);
  EXPECT_NEAR(std::sqrt(ss / 4096), 25.5, 1.5);
}

TEST(Distortions, BlurPreservesConstantsAndIsSelfAdjointInside) {
  ImageTensor flat({2, 10, 10}, std::vector<double>(200, 0.3), ValueRange::unit);
  SeededRng rng(0);
  const auto blur = DistortionSpec::make(DistortionKind::gaussian_blur);
  const ImageTensor blurred = apply(blur, flat, rng);
  for (double v : blurred.data()) EXPECT_NEAR(v, 0.3, 1e-12);

  // Vectors supported away from the border do not see the reflection.
  const Shape s{1, 20, 20};
  ImageTensor u(s, ValueRange::unbounded), v(s, ValueRange::unbounded);
  SeededRng g(3);
  for (int h = 6; h < 14; ++h)
    for (int w = 6; w < 14; ++w) {
      u.at(0, h, w) = g.normal();
      v.at(0, h, w) = g.normal();
    }
  const ImageTensor au = apply(blur, u, rng);
  std::vector<double> atv(v.data().begin(), v.data().end());
  backward_in_place(blur, atv, s);
  EXPECT_NEAR(inner(au, v), dot(u.data(), atv), 1e-12);
}

TEST(Distortions, GeometricKindsKeepShape) {
  const ImageTensor x = field({3, 32, 32}, 4);
  SeededRng rng(1);
  for (const auto& spec : default_pool()) {
    const ImageTensor y = apply(spec, x, rng);
    EXPECT_EQ(y.shape(), x.shape()) << spec.label();
    // Relabelled with the input range only when every value still fits.
    const bool fits = std::all_of(y.data().begin(), y.data().end(), [](double v) { return v >= 0.0 && v <= 1.0; });
    EXPECT_EQ(y.value_range(), fits ? ValueRange::unit : ValueRange::unbounded) << spec.label();
  }
  auto crop = DistortionSpec::make(DistortionKind::center_crop);
  crop.crop_fraction = 1.0;
  const ImageTensor same = apply(crop, x, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(same.data()[i], x.data()[i], 1e-12);
  auto rot = DistortionSpec::make(DistortionKind::rotation);
  rot.rotation_degrees = 0.0;
  const ImageTensor r0 = apply(rot, x, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r0.data()[i], x.data()[i], 1e-12);
}

TEST(Distortions, JpegLikeQuantizes) {
  const ImageTensor x = field({3, 16, 16}, 6);
  const ImageTensor lo = jpeg_like(x, 10), hi = jpeg_like(x, 95);
  double elo = 0.0, ehi = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    elo += std::pow(lo.data()[i] - x.data()[i], 2);
    ehi += std::pow(hi.data()[i] - x.data()[i], 2);
  }
  EXPECT_GT(elo, ehi);
  EXPECT_GT(elo, 0.0);
}

TEST(Distortions, RandomEraseZeroesAFraction) {
  ImageTensor x({1, 20, 20}, std::vector<double>(400, 0.7), ValueRange::unit);
  auto e = DistortionSpec::make(DistortionKind::random_erase);
  e.erase_fraction = 0.25;
  SeededRng rng(9);
  const ImageTensor y = apply(e, x, rng);
  int changed = 0;
  for (double v : y.data()) changed += v != 0.7;
  EXPECT_NEAR(changed, 100, 25);
}

TEST(DistortionPool, ValidationSamplingAndJson) {
  const auto pool = default_pool();
  EXPECT_EQ(pool.size(), 9u);
  EXPECT_NO_THROW(validate_pool(pool));
  auto bad = pool;
  bad[0].weight += 0.5;
  EXPECT_THROW(validate_pool(bad), std::invalid_argument);
  auto blur = DistortionSpec::make(DistortionKind::gaussian_blur);
  blur.blur_sigma = -1;
  EXPECT_THROW(blur.validate(), std::invalid_argument);

  std::vector<DistortionSpec> two{DistortionSpec::make(DistortionKind::identity, 0.25),
                                  DistortionSpec::make(DistortionKind::brightness, 0.75)};
  SeededRng rng(2);
  int bright = 0;
  for (int i = 0; i < 4000; ++i) bright += sample_channel(two, rng).kind == DistortionKind::brightness;
  EXPECT_NEAR(bright / 4000.0, 0.75, 0.03);

  for (const auto& spec : pool) {
    const nlohmann::json j = spec;
    const auto back = j.get<DistortionSpec>();
    EXPECT_EQ(nlohmann::json(back), j);
  }
  EXPECT_THROW(parse_distortion_kind("sharpen"), std::invalid_argument);
}
