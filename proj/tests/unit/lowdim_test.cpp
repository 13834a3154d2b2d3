#include <gtest/gtest.h>

#include "addmark/lowdim.hpp"
#include "test_util.hpp"

using namespace addmark;

TEST(LowDimModel, RandomModelIsOrthonormal) {
  SeededRng rng(3);
  const LowDimModel m = LowDimModel::random(20, 4, 4.0, 0.3, rng);
  const Eigen::MatrixXd& q = m.orthonormal_basis();
  EXPECT_TRUE((q.transpose() * q).isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-12));
  // q spans the same space as B.
  const Eigen::MatrixXd resid = m.basis() - q * (q.transpose() * m.basis());
  EXPECT_LT(resid.norm(), 1e-10);
}

TEST(LowDimModel, CovarianceAndProjections) {
  Eigen::MatrixXd b(3, 1);
  b << 1.0, 2.0, 2.0;
  Eigen::MatrixXd sz(1, 1);
  sz << 4.0;
  const LowDimModel m(b, sz, 0.5);
  Eigen::MatrixXd want = 4.0 * b * b.transpose();
  want.diagonal().array() += 0.25;
  EXPECT_TRUE(m.covariance().isApprox(want, 1e-14));
  EXPECT_NEAR(m.covariance_trace(), 4.0 * 9.0 + 0.75, 1e-12);

  Eigen::Vector3d v(1.0, 0.0, -1.0);
  const Eigen::VectorXd pu = m.project_onto_U(v);
  EXPECT_TRUE(pu.isApprox(b.col(0) * (b.col(0).dot(v) / 9.0), 1e-14));
  EXPECT_TRUE((pu + m.project_onto_U_perp(v)).isApprox(v, 1e-14));
}

TEST(LowDimModel, RejectsDegenerateInputs) {
  Eigen::MatrixXd b(3, 2);
  b << 1, 2, 1, 2, 1, 2;
  EXPECT_THROW(LowDimModel(b, Eigen::MatrixXd::Identity(2, 2), 0.1), std::invalid_argument);
  Eigen::MatrixXd good = Eigen::MatrixXd::Identity(3, 2);
  Eigen::MatrixXd bad_sz(2, 2);
  bad_sz << 1, 2, 2, 1;
  EXPECT_THROW(LowDimModel(good, bad_sz, 0.1), std::invalid_argument);
  EXPECT_THROW(LowDimModel(good, Eigen::MatrixXd::Identity(2, 2), -1.0), std::invalid_argument);
}

TEST(LowDimModel, SampleCovarianceConverges) {
  SeededRng rng(5);
  const LowDimModel m = LowDimModel::random(6, 2, 4.0, 0.3, rng);
  const Eigen::MatrixXd x = sample_matrix(m, 40000, rng);
  const Eigen::MatrixXd emp = x.transpose() * x / static_cast<double>(x.rows());
  // Entries of the sample covariance have sd near 4/sqrt(40000) = 0.02.
  EXPECT_LT((emp - m.covariance()).cwiseAbs().maxCoeff(), 0.12);

  const auto s = sample(m, 3, rng);
  for (const auto& smp : s)
    EXPECT_TRUE(smp.x.isApprox(m.basis() * smp.z + smp.eps, 1e-12));
}

TEST(LowDimModel, SaveLoadRoundTrip) {
  test::TempDir dir;
  SeededRng rng(9);
  const LowDimModel m = LowDimModel::random(10, 3, 2.0, 0.4, rng);
  save_model(dir / "model.json", m);
  const LowDimModel back = load_model(dir / "model.json");
  EXPECT_EQ(back.ambient_dim(), 10);
  EXPECT_EQ(back.sigma_eps(), 0.4);
  EXPECT_TRUE(back.basis().isApprox(m.basis(), 1e-6));
  EXPECT_TRUE(back.covariance().isApprox(m.covariance(), 1e-6));
}
