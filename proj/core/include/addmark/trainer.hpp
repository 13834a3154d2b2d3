#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "addmark/distortions.hpp"
#include "addmark/losses.hpp"
#include "addmark/tensor.hpp"
#include "addmark/watermark.hpp"

namespace addmark {

enum class FeatureKind { identity_downsample, frozen_random_projection };

/// Frozen linear feature map psi: R^D -> R^{d_f}.
class FeatureExtractor {
 public:
  /// Area-averages each channel onto a grid_h x grid_w grid.
  static FeatureExtractor identity_downsample(Shape input, int grid_h, int grid_w);
  /// P has i.i.d. N(0, 1/D) entries drawn from `seed`.
  static FeatureExtractor random_projection(Shape input, int output_dim, std::uint64_t seed);
  /// Projection with an explicit matrix (rows = output features).
  static FeatureExtractor from_matrix(Shape input, Eigen::MatrixXd projection);

  FeatureKind kind() const { return kind_; }
  int output_dim() const { return static_cast<int>(projection_.rows()); }
  const Shape& input_shape() const { return input_; }

  Eigen::VectorXd extract(const ImageTensor& img) const;
  Eigen::VectorXd extract(const Eigen::VectorXd& flat) const;

  nlohmann::json describe() const;

 private:
  FeatureKind kind_ = FeatureKind::frozen_random_projection;
  Shape input_{};
  Eigen::MatrixXd projection_;  // d_f x D; both kinds are linear
  nlohmann::json description_;
};

Eigen::VectorXd extract_features(const FeatureExtractor& psi, const ImageTensor& img);

/// g_k(f) = b_k (constant) or b_k + U_k f (affine).
enum class MapKind { constant, affine };
enum class LrSchedule { constant, cosine };

std::string_view to_string(MapKind kind);
MapKind parse_map_kind(std::string_view name);

struct TrainConfig {
  std::size_t bits = 8;
  /// Penalty weight as written in the minibatch loss, i.e. divided by D
  /// before use; the objective's beta equals beta_alg / D.
  double beta_alg = 0.05 * 128;
  MarginLoss loss{LossKind::hinge};
  int epochs = 30;
  int batch_size = 64;
  /// Multiplies D / mean ||x||^2 to give the base learning rate.
  double lr_scale = 0.05;
  /// When positive, used as the base learning rate directly.
  double learning_rate = 0.0;
  LrSchedule lr_schedule = LrSchedule::cosine;
  double momentum = 0.9;
  /// Fraction of the final SGD steps whose iterates are averaged (0 = last iterate).
  double tail_average = 0.25;
  /// Initial ||w_k|| (random direction).
  double init_norm = 0.1;
  bool project_to_ball = true;
  MapKind map_kind = MapKind::constant;
  std::vector<DistortionSpec> distortion_pool{DistortionSpec::make(DistortionKind::identity)};
  std::uint64_t seed = 0;

  double beta_theory(std::size_t dim) const { return beta_alg / static_cast<double>(dim); }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
std::string config_digest(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;     // V-terms averaged over images
  double penalty = 0.0;       // beta_theory * sum_k ||w_k||^2 at epoch end
  double min_sq_norm = 0.0;
  double max_sq_norm = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  WatermarkSet watermark;
  std::vector<EpochStats> log;
  double base_learning_rate = 0.0;
  std::size_t steps = 0;
  bool projected = false;  // the returned solution hit the R-ball
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch SGD. Rows of `data` are flattened training images of `shape`.
/// Throws std::invalid_argument on empty data and TrainingDiverged when the
/// minibatch loss becomes non-finite.
TrainResult train(const Eigen::MatrixXd& data, Shape shape, ValueRange range,
                  const TrainConfig& cfg, const FeatureExtractor* psi = nullptr);

TrainResult train(const std::vector<ImageTensor>& images, const TrainConfig& cfg,
                  const FeatureExtractor* psi = nullptr);

/// Minibatch loss and its analytic gradient for constant maps; rows of
/// `batch` are images, `messages` is batch x K with entries +-1. Identity
/// distortion. Exposed for gradient checks.
double minibatch_loss(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& batch,
                      const Eigen::MatrixXd& messages, const MarginLoss& loss, double beta_alg,
                      Eigen::MatrixXd* gradient = nullptr);

/// R with R^2 = K (V(0) - inf V) / beta_theory.
double feasible_ball_radius(const TrainConfig& cfg, std::size_t dim);
double feasible_ball_radius(const MarginLoss& loss, std::size_t bits, double beta_theory);

/// High-probability bound on sup |L_n - L| over the feasible ball.
double uniform_deviation_bound(std::size_t n, double delta, std::size_t bits, double lipschitz,
                               double radius, double trace_sigma_x);

void write_training_log(const std::filesystem::path& csv, const std::vector<EpochStats>& log);

}  // namespace addmark
