#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string_view>

#include "addmark/tensor.hpp"

namespace addmark {

enum class LossKind { hinge, logistic };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// Convex, nonincreasing, 1-Lipschitz margin loss bounded below by 0.
struct MarginLoss {
  LossKind kind = LossKind::hinge;

  double value(double t) const;
  /// An element of the subdifferential; always in [-1, 0]. Hinge picks -1 at t = 1.
  double subgradient(double t) const;

  double lipschitz() const { return 1.0; }
  double at_zero() const;
  double infimum() const { return 0.0; }
};

double loss_value(const MarginLoss& loss, double t);
double loss_subgradient(const MarginLoss& loss, double t);

inline constexpr int kDefaultQuadraturePoints = 200;

/// E V(mean + sd * Z) for Z ~ N(0, 1). Hinge is evaluated in closed form;
/// logistic uses Gauss-Hermite with the given node count.
double gaussian_expectation(const MarginLoss& loss, double mean, double sd,
                            int quadrature_points = kDefaultQuadraturePoints);

/// The 1-D population curve h(r) = phi(r) + beta * r with
/// phi(r) = E V(r + sigma_eps * sqrt(r) * Z).
struct PopulationCurve {
  MarginLoss loss;
  double sigma_eps = 0.0;
  double beta = 0.0;
};

double phi(const PopulationCurve& curve, double r, int quadrature_points = kDefaultQuadraturePoints);
double h_pop(const PopulationCurve& curve, double r,
             int quadrature_points = kDefaultQuadraturePoints);

/// Empty when (loss, sigma_eps, beta) satisfy the sufficient conditions for a
/// unique positive minimizer; otherwise names the violated inequality.
std::optional<std::string> uniqueness_violation(const PopulationCurve& curve);

struct RStar {
  double r_star = 0.0;
  double h_min = 0.0;
};

/// Minimizes h over [0, max(20, 4/beta)]: coarse grid, then golden-section
/// refinement around the best grid point. Throws std::domain_error when the
/// uniqueness conditions fail.
RStar solve_r_star(const PopulationCurve& curve);

/// Nodes and weights for E f(Z), Z ~ N(0,1): E f(Z) ~= sum_i w_i f(x_i).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
const GaussHermiteRule& gauss_hermite(int points);

double normal_cdf(double x);
double normal_pdf(double x);

inline constexpr std::size_t kExhaustiveMessageLimit = 12;
inline constexpr std::size_t kMonteCarloMessages = 256;

/// Finite-sample objective with identity distortion:
///   n^-1 sum_i E_m sum_k V(m_k <w_k, x_i + sum_j m_j w_j>) + beta sum_k ||w_k||^2.
/// Rows of `watermarks` are w_k, rows of `data` are x_i. The message
/// expectation is exact for K <= 12; otherwise 256 messages per datum are
/// drawn from `rng` (which must then be provided).
double objective_finite(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& data,
                        const MarginLoss& loss, double beta, SeededRng* rng = nullptr);

/// Population objective for Gaussian data with covariance sigma_x. Exact up
/// to the 1-D quadrature: <w_k, X> ~ N(0, w_k^T Sigma_X w_k).
double objective_population(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& sigma_x,
                            const MarginLoss& loss, double beta);

}  // namespace addmark
