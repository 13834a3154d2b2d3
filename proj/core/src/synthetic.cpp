#include "addmark/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "addmark/distortions.hpp"
#include "addmark/image_io.hpp"

namespace addmark {

namespace {

std::vector<double> unit_field(int h, int w, double smoothness, SeededRng& rng) {
  ImageTensor noise({1, h, w}, ValueRange::unbounded);
  for (double& v : noise.data()) v = rng.normal();
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * smoothness)));
  const ImageTensor blurred = gaussian_blur(noise, radius, smoothness);
  std::vector<double> f(blurred.data().begin(), blurred.data().end());
  double mean = 0.0, sq = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(f.size()));
  for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return f;
}

}  // namespace

ImageTensor smooth_gaussian_field(Shape shape, SeededRng& rng, const FieldParams& params) {
  if (shape.size() == 0) throw std::invalid_argument("synthetic image shape must be nonempty");
  const std::vector<double> common = unit_field(shape.height, shape.width, params.smoothness, rng);
  const double a = std::sqrt(1.0 - params.channel_mix), b = std::sqrt(params.channel_mix);
  ImageTensor img(shape, ValueRange::unit);
  for (int c = 0; c < shape.channels; ++c) {
    const std::vector<double> own = unit_field(shape.height, shape.width, params.smoothness, rng);
    auto ch = img.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i)
      ch[i] = std::clamp(0.5 + params.contrast * (a * common[i] + b * own[i]), 0.0, 1.0);
  }
  return img;
}

std::vector<ImageTensor> synthetic_images(std::size_t n, Shape shape, std::uint64_t seed,
                                          const FieldParams& params) {
  std::vector<ImageTensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SeededRng rng(seed, i);
    out.push_back(smooth_gaussian_field(shape, rng, params));
  }
  return out;
}

void write_synthetic_dir(const std::filesystem::path& dir, const std::vector<ImageTensor>& images) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    write_png(dir / name, images[i]);
  }
}

}  // namespace addmark
