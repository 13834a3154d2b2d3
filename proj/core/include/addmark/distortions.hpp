#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "addmark/tensor.hpp"

namespace addmark {

enum class DistortionKind {
  identity,
  gaussian_blur,
  jpeg_like,
  brightness,
  contrast,
  gaussian_noise,
  rotation,
  center_crop,
  random_erase,
};

std::string_view to_string(DistortionKind kind);
DistortionKind parse_distortion_kind(std::string_view name);

/// One member of a distortion pool. Only the parameters of `kind` are read.
/// Strengths for noise are expressed in unit-range terms and rescaled for
/// byte images.
struct DistortionSpec {
  DistortionKind kind = DistortionKind::identity;
  double weight = 1.0;

  int blur_radius = 3;
  double blur_sigma = 1.0;
  int jpeg_quality = 50;
  double brightness = 1.3;
  double contrast = 1.3;
  double noise_sigma = 0.05;
  double rotation_degrees = 9.0;
  double crop_fraction = 0.7;
  double erase_fraction = 0.1;
  int erase_count = 1;

  static DistortionSpec make(DistortionKind kind, double weight = 1.0);
  std::string label() const;

  /// Throws std::invalid_argument when a parameter is out of range.
  void validate() const;
};

/// Applies one distortion. Deterministic given (spec, img, rng state); only
/// gaussian_noise and random_erase consume randomness. Output keeps the
/// input shape and declared range; values are not clipped.
ImageTensor apply(const DistortionSpec& spec, const ImageTensor& img, SeededRng& rng);

/// Transpose-Jacobian surrogate used to push gradients through `spec` during
/// training. Exact for the affine kinds (identity, brightness, contrast,
/// noise) and for blur up to boundary reflection; straight-through (identity)
/// for jpeg_like, rotation, center_crop and random_erase.
void backward_in_place(const DistortionSpec& spec, std::span<double> grad, Shape shape);

/// Categorical draw by weight. Weights must be nonnegative and sum to 1.
const DistortionSpec& sample_channel(const std::vector<DistortionSpec>& pool, SeededRng& rng);

void validate_pool(const std::vector<DistortionSpec>& pool);

/// Identity plus the eight default-strength distortions, equally weighted.
std::vector<DistortionSpec> default_pool();

void to_json(nlohmann::json& j, const DistortionSpec& spec);
void from_json(const nlohmann::json& j, DistortionSpec& spec);

// Building blocks, exposed for tests and tools.
ImageTensor gaussian_blur(const ImageTensor& img, int radius, double sigma);
ImageTensor jpeg_like(const ImageTensor& img, int quality);
ImageTensor rotate(const ImageTensor& img, double degrees);
ImageTensor center_crop_resize(const ImageTensor& img, double fraction);
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

}  // namespace addmark
