#include "addmark/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "addmark/parallel.hpp"

namespace addmark {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kImagesPerChunk = 8;

// Forward/backward for one image with per-image watermark rows `w` (K x D).
// Adds d(sum_k V(t_k))/dw to `grad` and returns sum_k V(t_k).
double accumulate_image(const RowMatrix& w, const Eigen::VectorXd& x, const Eigen::VectorXd& m,
                        const MarginLoss& loss, const DistortionSpec& distortion, Shape shape,
                        ValueRange range, SeededRng& rng, RowMatrix& grad) {
  Eigen::VectorXd marked = x + w.transpose() * m;
  if (distortion.kind != DistortionKind::identity) {
    ImageTensor img(shape, std::vector<double>(marked.data(), marked.data() + marked.size()),
                    ValueRange::unbounded);
    const ImageTensor out = apply(distortion, relabel_if_fits(img, range), rng);
    auto d = out.data();
    marked = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  }
  const Eigen::VectorXd inner = w * marked;
  const auto K = w.rows();
  Eigen::VectorXd c(K);
  double value = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double t = m(k) * inner(k);
    value += loss.value(t);
    c(k) = loss.subgradient(t) * m(k);
  }
  // dt_k/dw_l = delta_kl m_k x' + m_k m_l J^T w_k, with J the distortion Jacobian.
  Eigen::VectorXd u = w.transpose() * c;
  if (distortion.kind != DistortionKind::identity)
    backward_in_place(distortion, std::span<double>(u.data(), static_cast<std::size_t>(u.size())),
                      shape);
  grad.noalias() += c * marked.transpose();
  grad.noalias() += m * u.transpose();
  return value;
}

double mean_squared_norm(const Eigen::MatrixXd& data) {
  return data.rowwise().squaredNorm().mean();
}

double cosine_rate(double base, std::size_t step, std::size_t total, LrSchedule schedule) {
  if (schedule == LrSchedule::constant || total <= 1) return base;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                       static_cast<double>(total)));
}

void project_ball(RowMatrix& w, double radius_sq, bool& projected) {
  const double total = w.squaredNorm();
  if (total > radius_sq) {
    w *= std::sqrt(radius_sq / total);
    projected = true;
  }
}

EpochStats describe_epoch(int epoch, double loss_sum, std::size_t images, const RowMatrix& w,
                          double beta_theory, double lr) {
  EpochStats s;
  s.epoch = epoch;
  s.mean_loss = loss_sum / static_cast<double>(std::max<std::size_t>(images, 1));
  const Eigen::VectorXd norms = w.rowwise().squaredNorm();
  s.penalty = beta_theory * norms.sum();
  s.min_sq_norm = norms.minCoeff();
  s.max_sq_norm = norms.maxCoeff();
  s.learning_rate = lr;
  return s;
}

[[noreturn]] void diverged(double lr, std::size_t step, double value) {
  std::ostringstream os;
  os << "training diverged: non-finite loss " << value << " at step " << step
     << " (learning rate " << lr << "); lower lr_scale or learning_rate";
  throw TrainingDiverged(os.str());
}

}  // namespace

FeatureExtractor FeatureExtractor::identity_downsample(Shape input, int grid_h, int grid_w) {
  if (grid_h <= 0 || grid_w <= 0 || grid_h > input.height || grid_w > input.width)
    throw std::invalid_argument("downsample grid must fit inside the image");
  FeatureExtractor fx;
  fx.kind_ = FeatureKind::identity_downsample;
  fx.input_ = input;
  const int out_dim = input.channels * grid_h * grid_w;
  fx.projection_ = Eigen::MatrixXd::Zero(out_dim, static_cast<Eigen::Index>(input.size()));
  for (int c = 0; c < input.channels; ++c)
    for (int gy = 0; gy < grid_h; ++gy)
      for (int gx = 0; gx < grid_w; ++gx) {
        const int y0 = gy * input.height / grid_h, y1 = (gy + 1) * input.height / grid_h;
        const int x0 = gx * input.width / grid_w, x1 = (gx + 1) * input.width / grid_w;
        const double area = static_cast<double>((y1 - y0) * (x1 - x0));
        const int row = (c * grid_h + gy) * grid_w + gx;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x)
            fx.projection_(row, (static_cast<Eigen::Index>(c) * input.height + y) * input.width + x) =
                1.0 / area;
      }
  fx.description_ = {{"kind", "identity_downsample"}, {"grid", {grid_h, grid_w}}};
  return fx;
}

FeatureExtractor FeatureExtractor::random_projection(Shape input, int output_dim,
                                                     std::uint64_t seed) {
  const auto D = static_cast<Eigen::Index>(input.size());
  if (output_dim <= 0 || output_dim >= D)
    throw std::invalid_argument("random projection needs 0 < d_f < D");
  SeededRng rng(seed, 0xFEA7);
  FeatureExtractor fx;
  fx.kind_ = FeatureKind::frozen_random_projection;
  fx.input_ = input;
  fx.projection_.resize(output_dim, D);
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  for (Eigen::Index r = 0; r < output_dim; ++r)
    for (Eigen::Index c = 0; c < D; ++c) fx.projection_(r, c) = scale * rng.normal();
  fx.description_ = {{"kind", "frozen_random_projection"}, {"d_f", output_dim}, {"seed", seed}};
  return fx;
}

FeatureExtractor FeatureExtractor::from_matrix(Shape input, Eigen::MatrixXd projection) {
  if (projection.cols() != static_cast<Eigen::Index>(input.size()) || projection.rows() < 1)
    throw std::invalid_argument("projection matrix must be d_f x D");
  FeatureExtractor fx;
  fx.kind_ = FeatureKind::frozen_random_projection;
  fx.input_ = input;
  fx.projection_ = std::move(projection);
  fx.description_ = {{"kind", "frozen_random_projection"}, {"d_f", fx.projection_.rows()},
                     {"seed", nullptr}};
  return fx;
}

Eigen::VectorXd FeatureExtractor::extract(const ImageTensor& img) const {
  if (!(img.shape() == input_))
    throw std::invalid_argument("feature extractor expects " + to_string(input_) + ", got " +
                                to_string(img.shape()));
  auto d = img.data();
  return projection_ * Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

Eigen::VectorXd FeatureExtractor::extract(const Eigen::VectorXd& flat) const {
  if (flat.size() != projection_.cols())
    throw std::invalid_argument("feature extractor input has the wrong length");
  return projection_ * flat;
}

nlohmann::json FeatureExtractor::describe() const { return description_; }

Eigen::VectorXd extract_features(const FeatureExtractor& psi, const ImageTensor& img) {
  return psi.extract(img);
}

std::string_view to_string(MapKind kind) { return kind == MapKind::constant ? "constant" : "affine"; }

MapKind parse_map_kind(std::string_view name) {
  if (name == "constant") return MapKind::constant;
  if (name == "affine") return MapKind::affine;
  throw std::invalid_argument("unknown map kind '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (bits < 1) throw std::invalid_argument("K must be at least 1");
  if (!(beta_alg > 0.0)) throw std::invalid_argument("beta_alg must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(lr_scale > 0.0) && !(learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(tail_average >= 0.0 && tail_average < 1.0))
    throw std::invalid_argument("tail_average must be in [0, 1)");
  if (!(init_norm >= 0.0)) throw std::invalid_argument("init_norm must be nonnegative");
  validate_pool(distortion_pool);
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"K", cfg.bits},
                     {"beta_alg", cfg.beta_alg},
                     {"loss", to_string(cfg.loss.kind)},
                     {"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"lr_scale", cfg.lr_scale},
                     {"learning_rate", cfg.learning_rate},
                     {"lr_schedule", cfg.lr_schedule == LrSchedule::cosine ? "cosine" : "constant"},
                     {"momentum", cfg.momentum},
                     {"tail_average", cfg.tail_average},
                     {"init_norm", cfg.init_norm},
                     {"project_to_ball", cfg.project_to_ball},
                     {"map_kind", to_string(cfg.map_kind)},
                     {"distortion_pool", cfg.distortion_pool},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  TrainConfig d;
  cfg.bits = j.value("K", d.bits);
  cfg.beta_alg = j.value("beta_alg", d.beta_alg);
  cfg.loss.kind = parse_loss_kind(j.value("loss", std::string(to_string(d.loss.kind))));
  cfg.epochs = j.value("epochs", d.epochs);
  cfg.batch_size = j.value("batch_size", d.batch_size);
  cfg.lr_scale = j.value("lr_scale", d.lr_scale);
  cfg.learning_rate = j.value("learning_rate", d.learning_rate);
  const auto schedule = j.value("lr_schedule", std::string("cosine"));
  if (schedule != "cosine" && schedule != "constant")
    throw std::invalid_argument("lr_schedule must be 'constant' or 'cosine'");
  cfg.lr_schedule = schedule == "cosine" ? LrSchedule::cosine : LrSchedule::constant;
  cfg.momentum = j.value("momentum", d.momentum);
  cfg.tail_average = j.value("tail_average", d.tail_average);
  cfg.init_norm = j.value("init_norm", d.init_norm);
  cfg.project_to_ball = j.value("project_to_ball", d.project_to_ball);
  cfg.map_kind = parse_map_kind(j.value("map_kind", std::string("constant")));
  if (j.contains("distortion_pool"))
    cfg.distortion_pool = j.at("distortion_pool").get<std::vector<DistortionSpec>>();
  else
    cfg.distortion_pool = d.distortion_pool;
  cfg.seed = j.value("seed", d.seed);
}

std::string config_digest(const TrainConfig& cfg) {
  return fnv1a_hex(nlohmann::json(cfg).dump());
}

double feasible_ball_radius(const MarginLoss& loss, std::size_t bits, double beta_theory) {
  return std::sqrt(static_cast<double>(bits) * (loss.at_zero() - loss.infimum()) / beta_theory);
}

double feasible_ball_radius(const TrainConfig& cfg, std::size_t dim) {
  return feasible_ball_radius(cfg.loss, cfg.bits, cfg.beta_theory(dim));
}

double uniform_deviation_bound(std::size_t n, double delta, std::size_t bits, double lipschitz,
                               double radius, double trace_sigma_x) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  const double nn = static_cast<double>(n);
  const double log4d = std::log(4.0 / delta);
  const double first = (4.0 + 25.0 / 3.0 * std::sqrt(log4d)) / std::sqrt(nn);
  const double second = 75.0 * std::log(2.0 * std::numbers::e) / (2.0 * std::numbers::ln2) *
                        std::log(4.0 * nn / delta) * log4d / nn;
  return lipschitz * radius * std::sqrt(static_cast<double>(bits) * trace_sigma_x) *
         (first + second);
}

double minibatch_loss(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& batch,
                      const Eigen::MatrixXd& messages, const MarginLoss& loss, double beta_alg,
                      Eigen::MatrixXd* gradient) {
  const auto K = watermarks.rows();
  const auto D = watermarks.cols();
  if (batch.cols() != D || messages.rows() != batch.rows() || messages.cols() != K)
    throw std::invalid_argument("minibatch shapes disagree");
  const RowMatrix w = watermarks;
  RowMatrix grad = RowMatrix::Zero(K, D);
  const auto identity = DistortionSpec::make(DistortionKind::identity);
  SeededRng unused;
  double value = 0.0;
  const Shape shape{1, 1, static_cast<int>(D)};
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    value += accumulate_image(w, batch.row(i).transpose(), messages.row(i).transpose(), loss,
                              identity, shape, ValueRange::unbounded, unused, grad);
  const double inv = 1.0 / static_cast<double>(batch.rows());
  const double beta = beta_alg / static_cast<double>(D);
  if (gradient) *gradient = grad * inv + 2.0 * beta * watermarks;
  return value * inv + beta * watermarks.squaredNorm();
}

TrainResult train(const Eigen::MatrixXd& data, Shape shape, ValueRange range,
                  const TrainConfig& cfg, const FeatureExtractor* psi) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(data.rows());
  if (n == 0) throw std::invalid_argument("training set is empty");
  const auto D = data.cols();
  if (static_cast<std::size_t>(D) != shape.size())
    throw std::invalid_argument("training rows do not match image shape " + to_string(shape));
  const auto K = static_cast<Eigen::Index>(cfg.bits);
  const bool affine = cfg.map_kind == MapKind::affine;
  if (affine && psi == nullptr) throw std::invalid_argument("affine watermark maps need a feature extractor");
  if (psi && psi->input_shape().size() != static_cast<std::size_t>(D))
    throw std::invalid_argument("feature extractor input does not match the training images");

  const double beta = cfg.beta_theory(static_cast<std::size_t>(D));
  const double radius_sq = std::pow(feasible_ball_radius(cfg, static_cast<std::size_t>(D)), 2);
  // Automatic rate: data-scaled, capped so the momentum-effective step on the
  // penalty curvature 2*beta stays below one.
  const double base_lr =
      cfg.learning_rate > 0.0
          ? cfg.learning_rate
          : std::min(cfg.lr_scale * static_cast<double>(D) / std::max(mean_squared_norm(data), 1e-12),
                     (1.0 - cfg.momentum) / (2.0 * beta));

  SeededRng rng(cfg.seed, 0x7A1);
  RowMatrix bias(K, D);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < D; ++i) bias(k, i) = rng.normal();
    const double norm = bias.row(k).norm();
    if (norm > 0.0) bias.row(k) *= cfg.init_norm / norm;
  }

  const int d_f = psi ? psi->output_dim() : 0;
  Eigen::MatrixXd features;  // n x d_f
  std::vector<Eigen::MatrixXd> maps;  // K of D x d_f
  if (affine) {
    features.resize(static_cast<Eigen::Index>(n), d_f);
    for (std::size_t i = 0; i < n; ++i)
      features.row(static_cast<Eigen::Index>(i)) =
          psi->extract(Eigen::VectorXd(data.row(static_cast<Eigen::Index>(i)))).transpose();
    maps.assign(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(D, d_f));
  }

  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const auto tail_start = static_cast<std::size_t>(
      std::floor((1.0 - cfg.tail_average) * static_cast<double>(total_steps)));

  RowMatrix velocity_b = RowMatrix::Zero(K, D);
  std::vector<Eigen::MatrixXd> velocity_u(maps.size(), Eigen::MatrixXd::Zero(D, d_f));
  RowMatrix tail_b = RowMatrix::Zero(K, D);
  std::vector<Eigen::MatrixXd> tail_u(maps.size(), Eigen::MatrixXd::Zero(D, d_f));
  std::size_t tail_count = 0;
  bool projected = false;

  TrainResult result;
  result.base_learning_rate = base_lr;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double epoch_loss = 0.0;
    double lr = base_lr;
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(n, begin + batch);
      const std::size_t size = end - begin;
      lr = cosine_rate(base_lr, step, total_steps, cfg.lr_schedule);

      Eigen::MatrixXd messages(static_cast<Eigen::Index>(size), K);
      for (Eigen::Index r = 0; r < messages.rows(); ++r)
        for (Eigen::Index k = 0; k < K; ++k) messages(r, k) = rng.sign();
      const DistortionSpec& distortion = sample_channel(cfg.distortion_pool, rng);
      const SeededRng step_rng = rng.split(step);

      double batch_loss = 0.0;
      RowMatrix grad_b = RowMatrix::Zero(K, D);
      if (!affine) {
        const std::size_t chunks = (size + kImagesPerChunk - 1) / kImagesPerChunk;
        std::vector<RowMatrix> partial(chunks, RowMatrix::Zero(K, D));
        std::vector<double> partial_loss(chunks, 0.0);
        parallel_for(chunks, [&](std::size_t c) {
          const std::size_t lo = c * kImagesPerChunk, hi = std::min(size, lo + kImagesPerChunk);
          for (std::size_t r = lo; r < hi; ++r) {
            SeededRng image_rng = step_rng.split(r);
            partial_loss[c] += accumulate_image(
                bias, data.row(static_cast<Eigen::Index>(order[begin + r])).transpose(),
                messages.row(static_cast<Eigen::Index>(r)).transpose(), cfg.loss, distortion, shape,
                range, image_rng, partial[c]);
          }
        });
        for (std::size_t c = 0; c < chunks; ++c) {
          grad_b += partial[c];
          batch_loss += partial_loss[c];
        }
        grad_b /= static_cast<double>(size);
        grad_b += 2.0 * beta * bias;
      } else {
        std::vector<Eigen::MatrixXd> grad_u(maps.size(), Eigen::MatrixXd::Zero(D, d_f));
        RowMatrix w(K, D), g(K, D);
        for (std::size_t r = 0; r < size; ++r) {
          const auto idx = static_cast<Eigen::Index>(order[begin + r]);
          const Eigen::VectorXd f = features.row(idx).transpose();
          for (Eigen::Index k = 0; k < K; ++k)
            w.row(k) = bias.row(k) + (maps[static_cast<std::size_t>(k)] * f).transpose();
          g.setZero();
          SeededRng image_rng = step_rng.split(r);
          batch_loss += accumulate_image(w, data.row(idx).transpose(),
                                         messages.row(static_cast<Eigen::Index>(r)).transpose(),
                                         cfg.loss, distortion, shape, range, image_rng, g);
          g += 2.0 * beta * w;
          grad_b += g;
          for (Eigen::Index k = 0; k < K; ++k)
            grad_u[static_cast<std::size_t>(k)].noalias() += g.row(k).transpose() * f.transpose();
        }
        const double inv = 1.0 / static_cast<double>(size);
        grad_b *= inv;
        for (std::size_t k = 0; k < maps.size(); ++k) {
          velocity_u[k] = cfg.momentum * velocity_u[k] + grad_u[k] * inv;
          maps[k] -= lr * velocity_u[k];
        }
      }

      if (!std::isfinite(batch_loss)) diverged(lr, step, batch_loss);
      epoch_loss += batch_loss;

      velocity_b = cfg.momentum * velocity_b + grad_b;
      bias -= lr * velocity_b;
      if (!bias.allFinite()) diverged(lr, step, std::numeric_limits<double>::quiet_NaN());
      if (cfg.project_to_ball && !affine) project_ball(bias, radius_sq, projected);

      if (step >= tail_start) {
        tail_b += bias;
        for (std::size_t k = 0; k < maps.size(); ++k) tail_u[k] += maps[k];
        ++tail_count;
      }
    }
    result.log.push_back(describe_epoch(epoch, epoch_loss, n, bias, beta, lr));
  }

  if (tail_count > 0) {
    bias = tail_b / static_cast<double>(tail_count);
    for (std::size_t k = 0; k < maps.size(); ++k) maps[k] = tail_u[k] / static_cast<double>(tail_count);
  }

  // Dataset-level averages of the frozen maps.
  RowMatrix final_w = bias;
  if (affine) {
    const Eigen::VectorXd mean_f = features.colwise().mean().transpose();
    for (Eigen::Index k = 0; k < K; ++k)
      final_w.row(k) += (maps[static_cast<std::size_t>(k)] * mean_f).transpose();
  }
  bool final_projected = false;
  project_ball(final_w, radius_sq, final_projected);

  result.watermark = WatermarkSet(Eigen::MatrixXd(final_w), shape, range);
  nlohmann::json meta = cfg;
  meta["beta_theory"] = beta;
  meta["n"] = n;
  if (psi) meta["feature_extractor"] = psi->describe();
  result.watermark.metadata = meta;
  result.watermark.config_digest = config_digest(cfg);
  result.steps = step;
  result.projected = projected || final_projected;
  return result;
}

TrainResult train(const std::vector<ImageTensor>& images, const TrainConfig& cfg,
                  const FeatureExtractor* psi) {
  if (images.empty()) throw std::invalid_argument("training set is empty");
  const Shape shape = images.front().shape();
  Eigen::MatrixXd data(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(shape.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i].shape() == shape))
      throw std::invalid_argument("training images must share one shape; image " +
                                  std::to_string(i) + " is " + to_string(images[i].shape()));
    auto d = images[i].data();
    data.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  }
  return train(data, shape, images.front().value_range(), cfg, psi);
}

void write_training_log(const std::filesystem::path& csv, const std::vector<EpochStats>& log) {
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "epoch,mean_loss,penalty,min_sq_norm,max_sq_norm,learning_rate\n";
  out.precision(10);
  for (const auto& s : log)
    out << s.epoch << ',' << s.mean_loss << ',' << s.penalty << ',' << s.min_sq_norm << ','
        << s.max_sq_norm << ',' << s.learning_rate << '\n';
}

}  // namespace addmark
