#include <gtest/gtest.h>

#include <cmath>

#include "addmark/codec.hpp"
#include "addmark/lowdim.hpp"
#include "addmark/synthetic.hpp"
#include "addmark/trainer.hpp"
#include "test_util.hpp"

using namespace addmark;

namespace {

struct Batch {
  Eigen::MatrixXd w, x, m;
};

Batch random_batch(int K, int D, int n, std::uint64_t seed) {
  SeededRng rng(seed);
  Batch b{Eigen::MatrixXd(K, D), Eigen::MatrixXd(n, D), Eigen::MatrixXd(n, K)};
  for (Eigen::Index i = 0; i < b.w.size(); ++i) b.w(i) = 0.3 * rng.normal();
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x(i) = rng.normal();
  for (Eigen::Index i = 0; i < b.m.size(); ++i) b.m(i) = rng.sign();
  return b;
}

// Direct transcription of the minibatch objective.
double direct_loss(const Batch& b, const MarginLoss& loss, double beta_alg) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    const Eigen::VectorXd y = b.x.row(i).transpose() + b.w.transpose() * b.m.row(i).transpose();
    for (Eigen::Index k = 0; k < b.w.rows(); ++k) v += loss.value(b.m(i, k) * b.w.row(k).dot(y));
  }
  return v / static_cast<double>(b.x.rows()) + beta_alg / static_cast<double>(b.w.cols()) * b.w.squaredNorm();
}

double min_hinge_gap(const Batch& b) {
  double gap = 1e300;
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    const Eigen::VectorXd y = b.x.row(i).transpose() + b.w.transpose() * b.m.row(i).transpose();
    for (Eigen::Index k = 0; k < b.w.rows(); ++k)
      gap = std::min(gap, std::abs(b.m(i, k) * b.w.row(k).dot(y) - 1.0));
  }
  return gap;
}

}  // namespace

TEST(MinibatchLoss, ValueMatchesDefinition) {
  const Batch b = random_batch(3, 10, 7, 1);
  for (auto kind : {LossKind::hinge, LossKind::logistic}) {
    const MarginLoss loss{kind};
    EXPECT_NEAR(minibatch_loss(b.w, b.x, b.m, loss, 2.5), direct_loss(b, loss, 2.5), 1e-12);
  }
}

TEST(MinibatchLoss, GradientMatchesFiniteDifferences) {
  for (auto kind : {LossKind::logistic, LossKind::hinge}) {
    const MarginLoss loss{kind};
    Batch b = random_batch(4, 16, 12, 21);
    // Central differences are only valid away from the hinge kink.
    ASSERT_GT(min_hinge_gap(b), 1e-3);
    Eigen::MatrixXd g;
    minibatch_loss(b.w, b.x, b.m, loss, 3.0, &g);
    SeededRng pick(4);
    int checked = 0;
    while (checked < 20) {
      const auto k = static_cast<Eigen::Index>(pick.index(4));
      const auto j = static_cast<Eigen::Index>(pick.index(16));
      if (std::abs(g(k, j)) < 1e-3) continue;
      const double h = 1e-6;
      const double w0 = b.w(k, j);
      b.w(k, j) = w0 + h;
      const double up = direct_loss(b, loss, 3.0);
      b.w(k, j) = w0 - h;
      const double down = direct_loss(b, loss, 3.0);
      b.w(k, j) = w0;
      const double fd = (up - down) / (2 * h);
      EXPECT_LE(std::abs(fd - g(k, j)), 1e-4 * std::abs(g(k, j)))
          << to_string(kind) << " (" << k << "," << j << ") fd=" << fd << " analytic=" << g(k, j);
      ++checked;
    }
  }
}

TEST(FeasibleBall, RadiusFromLossAtZero) {
  EXPECT_NEAR(std::pow(feasible_ball_radius(MarginLoss{LossKind::hinge}, 8, 0.05), 2), 160.0, 1e-9);
  EXPECT_NEAR(std::pow(feasible_ball_radius(MarginLoss{LossKind::hinge}, 1, 1.0), 2), 1.0, 1e-12);
  EXPECT_NEAR(std::pow(feasible_ball_radius(MarginLoss{LossKind::logistic}, 2, 0.5), 2), 4.0 * std::log(2.0),
              1e-12);
  TrainConfig cfg;
  cfg.bits = 8;
  cfg.beta_alg = 0.05 * 128;
  EXPECT_NEAR(std::pow(feasible_ball_radius(cfg, 128), 2), 160.0, 1e-9);
}

TEST(UniformDeviation, ShrinksWithN) {
  const double a = uniform_deviation_bound(1000, 0.05, 8, 1.0, std::sqrt(160.0), 160.0);
  const double b = uniform_deviation_bound(4000, 0.05, 8, 1.0, std::sqrt(160.0), 160.0);
  EXPECT_GT(a, b);
  EXPECT_GT(b, 0.0);
  // The 1/sqrt(n) term dominates for large n.
  const double big = uniform_deviation_bound(100000000, 0.05, 8, 1.0, std::sqrt(160.0), 160.0);
  const double bigger = uniform_deviation_bound(400000000, 0.05, 8, 1.0, std::sqrt(160.0), 160.0);
  EXPECT_GT(big / bigger, 2.0);
  EXPECT_LT(big / bigger, 2.05);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.bits = 5;
  cfg.loss.kind = LossKind::logistic;
  cfg.distortion_pool = default_pool();
  cfg.seed = 77;
  const nlohmann::json j = cfg;
  const TrainConfig back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(config_digest(back), config_digest(cfg));
  cfg.seed = 78;
  EXPECT_NE(config_digest(back), config_digest(cfg));

  TrainConfig bad;
  bad.bits = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.tail_average = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Train, LearnsSeparableWatermarkAndIsDeterministic) {
  SeededRng rng(8);
  const LowDimModel model = LowDimModel::random(32, 2, 4.0, 0.3, rng);
  const Eigen::MatrixXd data = sample_matrix(model, 600, rng);
  TrainConfig cfg;
  cfg.bits = 4;
  cfg.beta_alg = 0.05 * 32;
  cfg.epochs = 40;
  cfg.seed = 3;
  const Shape shape{1, 1, 32};
  const TrainResult a = train(data, shape, ValueRange::unbounded, cfg);
  const TrainResult b = train(data, shape, ValueRange::unbounded, cfg);
  EXPECT_EQ(a.watermark.vectors(), b.watermark.vectors());
  EXPECT_EQ(a.log.size(), 40u);
  EXPECT_EQ(a.watermark.config_digest, config_digest(cfg));

  SeededRng test_rng(99);
  double correct = 0.0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    const Message m = sample_uniform_message(4, test_rng);
    Eigen::VectorXd x = model.draw(test_rng);
    for (int k = 0; k < 4; ++k) x += m[k] * a.watermark.vectors().row(k).transpose();
    const Message got = decode_sign(inner_products(x, a.watermark.vectors()));
    for (int k = 0; k < 4; ++k) correct += got[k] == m[k];
  }
  EXPECT_GT(correct / (4.0 * trials), 0.97);
}

TEST(Train, ImagesWithDistortionPool) {
  const auto imgs = synthetic_images(24, {3, 16, 16}, 2);
  TrainConfig cfg;
  cfg.bits = 4;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.distortion_pool = default_pool();
  const TrainResult r = train(imgs, cfg);
  EXPECT_EQ(r.watermark.bits(), 4u);
  EXPECT_EQ(r.watermark.image_shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(r.steps, 6u);
  EXPECT_TRUE(r.watermark.vectors().allFinite());

  cfg.map_kind = MapKind::affine;
  EXPECT_THROW(train(imgs, cfg), std::invalid_argument);
  const auto psi = FeatureExtractor::identity_downsample({3, 16, 16}, 2, 2);
  EXPECT_EQ(psi.output_dim(), 12);
  EXPECT_TRUE(train(imgs, cfg, &psi).watermark.vectors().allFinite());
}

TEST(Train, DivergenceIsReported) {
  SeededRng rng(1);
  Eigen::MatrixXd data(64, 8);
  for (Eigen::Index i = 0; i < data.size(); ++i) data(i) = 1e150 * rng.normal();
  TrainConfig cfg;
  cfg.bits = 2;
  cfg.learning_rate = 1e150;
  cfg.project_to_ball = false;
  cfg.loss.kind = LossKind::logistic;
  EXPECT_THROW(train(data, {1, 1, 8}, ValueRange::unbounded, cfg), TrainingDiverged);
}

TEST(FeatureExtractor, DownsampleAveragesBlocks) {
  ImageTensor img({1, 4, 4}, ValueRange::unit);
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 4; ++w) img.at(0, h, w) = h < 2 ? 0.2 : 0.6;
  const auto psi = FeatureExtractor::identity_downsample({1, 4, 4}, 2, 1);
  const Eigen::VectorXd f = psi.extract(img);
  ASSERT_EQ(f.size(), 2);
  EXPECT_NEAR(f(0), 0.2, 1e-15);
  EXPECT_NEAR(f(1), 0.6, 1e-15);
  const auto p1 = FeatureExtractor::random_projection({1, 4, 4}, 3, 5);
  const auto p2 = FeatureExtractor::random_projection({1, 4, 4}, 3, 5);
  EXPECT_EQ(p1.extract(img), p2.extract(img));
}

TEST(TrainingLog, WritesCsv) {
  test::TempDir dir;
  write_training_log(dir / "log.csv", {EpochStats{1, 0.5, 0.1, 0.2, 0.3, 0.01}});
  std::ifstream in(dir / "log.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_NE(header.find("epoch"), std::string::npos);
  EXPECT_EQ(row.substr(0, 2), "1,");
}
