#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "addmark/tensor.hpp"

namespace addmark {

/// Perturbed low-dimensional Gaussian model X = B Z + eps with
/// Z ~ N(0, Sigma_Z) and eps ~ N(0, sigma_eps^2 I_D).
///
/// Construction validates that B has full column rank (smallest singular value
/// above 1e-8 times the largest) and that Sigma_Z is symmetric positive
/// definite. An orthonormal basis of the column space U is cached from a
/// column-pivoted QR of B.
class LowDimModel {
 public:
  LowDimModel(Eigen::MatrixXd basis, Eigen::MatrixXd sigma_z, double sigma_eps);

  /// Default simulation model: B has i.i.d. N(0,1) entries and is then
  /// orthonormalized, Sigma_Z = latent_variance * I_d.
  static LowDimModel random(int ambient_dim, int latent_dim, double latent_variance,
                            double sigma_eps, SeededRng& rng);

  int ambient_dim() const { return static_cast<int>(basis_.rows()); }
  int latent_dim() const { return static_cast<int>(basis_.cols()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::MatrixXd& sigma_z() const { return sigma_z_; }
  double sigma_eps() const { return sigma_eps_; }
  /// D x d matrix with orthonormal columns spanning U.
  const Eigen::MatrixXd& orthonormal_basis() const { return q_; }
  /// Lower Cholesky factor of Sigma_Z.
  const Eigen::MatrixXd& latent_cholesky() const { return chol_; }

  Eigen::VectorXd project_onto_U(const Eigen::VectorXd& v) const;
  Eigen::VectorXd project_onto_U_perp(const Eigen::VectorXd& v) const;

  /// B Sigma_Z B^T + sigma_eps^2 I_D.
  Eigen::MatrixXd covariance() const;
  double covariance_trace() const;

  /// Draws a single x; z and eps are discarded.
  Eigen::VectorXd draw(SeededRng& rng) const;

 private:
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd sigma_z_;
  double sigma_eps_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd chol_;  // lower Cholesky factor of Sigma_Z
};

struct ModelSample {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  Eigen::VectorXd eps;
};

std::vector<ModelSample> sample(const LowDimModel& model, std::size_t n, SeededRng& rng);
/// Rows are samples; convenient for training on simulated data.
Eigen::MatrixXd sample_matrix(const LowDimModel& model, std::size_t n, SeededRng& rng);

Eigen::MatrixXd covariance_sigma_x(const LowDimModel& model);

// Model files: <stem>.json holds {D, d, sigma_eps, basis, sigma_z}; the two
// matrices are written next to it as ADDT tensors (1 x rows x cols).
void save_model(const std::filesystem::path& json_path, const LowDimModel& model);
LowDimModel load_model(const std::filesystem::path& json_path);

}  // namespace addmark
