#pragma once

#include <filesystem>
#include <vector>

#include "addmark/tensor.hpp"

namespace addmark {

/// Smoothed Gaussian random fields in the unit range: white noise blurred
/// with a Gaussian of `smoothness` pixels, rescaled to standard deviation
/// `contrast` around 0.5 and clipped to [0, 1]. Channels share a common
/// field plus an independent per-channel component weighted by
/// `channel_mix`.
struct FieldParams {
  double smoothness = 6.0;
  double contrast = 0.15;
  double channel_mix = 0.3;
};

ImageTensor smooth_gaussian_field(Shape shape, SeededRng& rng, const FieldParams& params = {});

/// Image i uses stream (seed, i), so subsets are reproducible on their own.
std::vector<ImageTensor> synthetic_images(std::size_t n, Shape shape, std::uint64_t seed,
                                          const FieldParams& params = {});

/// Writes img_00000.png ... into `dir` (created if missing), 8-bit.
void write_synthetic_dir(const std::filesystem::path& dir, const std::vector<ImageTensor>& images);

}  // namespace addmark
