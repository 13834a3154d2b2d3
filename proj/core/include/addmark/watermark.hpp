#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "addmark/tensor.hpp"

namespace addmark {

/// K fixed watermark vectors in R^D (row k of vectors() is w_k) together with
/// the image layout they were trained for.
class WatermarkSet {
 public:
  WatermarkSet() = default;
  WatermarkSet(Eigen::MatrixXd vectors, Shape image_shape, ValueRange range);

  std::size_t bits() const { return static_cast<std::size_t>(vectors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const Shape& image_shape() const { return shape_; }
  ValueRange value_range() const { return range_; }

  const Eigen::MatrixXd& vectors() const { return vectors_; }
  Eigen::VectorXd vector(std::size_t k) const { return vectors_.row(static_cast<Eigen::Index>(k)); }
  Eigen::VectorXd squared_norms() const { return vectors_.rowwise().squaredNorm(); }

  /// Free-form provenance written into the file header (loss, beta, seed, ...).
  nlohmann::json metadata;
  std::string config_digest;

 private:
  Eigen::MatrixXd vectors_;
  Shape shape_{};
  ValueRange range_ = ValueRange::unit;
};

// .addwm layout: one line of JSON text terminated by '\n' carrying K, D, the
// image shape, value range and provenance, then K*D little-endian f32 values
// (w_1 first).
void save_watermark(const std::filesystem::path& path, const WatermarkSet& w);
WatermarkSet load_watermark(const std::filesystem::path& path);

/// 64-bit FNV-1a of `text`, hex encoded.
std::string fnv1a_hex(std::string_view text);

}  // namespace addmark
