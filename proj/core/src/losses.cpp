#include "addmark/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "addmark/parallel.hpp"

namespace addmark {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::hinge ? "hinge" : "logistic";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "hinge") return LossKind::hinge;
  if (name == "logistic") return LossKind::logistic;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

double MarginLoss::value(double t) const {
  if (kind == LossKind::hinge) return std::max(1.0 - t, 0.0);
  // softplus(-t), stable for large |t|
  return std::max(-t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double MarginLoss::subgradient(double t) const {
  if (kind == LossKind::hinge) return t <= 1.0 ? -1.0 : 0.0;
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(t));
}

double MarginLoss::at_zero() const {
  return kind == LossKind::hinge ? 1.0 : std::numbers::ln2;
}

double loss_value(const MarginLoss& loss, double t) { return loss.value(t); }
double loss_subgradient(const MarginLoss& loss, double t) { return loss.subgradient(t); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

const GaussHermiteRule& gauss_hermite(int points) {
  static std::mutex mutex;
  static std::map<int, GaussHermiteRule> cache;
  if (points < 1) throw std::invalid_argument("quadrature needs at least one node");
  std::lock_guard lock(mutex);
  auto it = cache.find(points);
  if (it != cache.end()) return it->second;

  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite weight.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int i = 1; i < points; ++i) {
    jacobi(i, i - 1) = std::sqrt(static_cast<double>(i));
    jacobi(i - 1, i) = jacobi(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermiteRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return cache.emplace(points, std::move(rule)).first->second;
}

double gaussian_expectation(const MarginLoss& loss, double mean, double sd,
                            int quadrature_points) {
  if (!(sd > 0.0)) return loss.value(mean);
  if (loss.kind == LossKind::hinge) {
    // E(1 - mean - sd Z)_+ = (1 - mean) Phi(a) + sd pdf(a), a = (1 - mean)/sd
    const double gap = 1.0 - mean;
    const double a = gap / sd;
    return gap * normal_cdf(a) + sd * normal_pdf(a);
  }
  const auto& rule = gauss_hermite(quadrature_points);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights(i) * loss.value(mean + sd * rule.nodes(i));
  return acc;
}

double phi(const PopulationCurve& curve, double r, int quadrature_points) {
  if (r < 0.0) throw std::invalid_argument("phi is defined for r >= 0");
  return gaussian_expectation(curve.loss, r, curve.sigma_eps * std::sqrt(r), quadrature_points);
}

double h_pop(const PopulationCurve& curve, double r, int quadrature_points) {
  return phi(curve, r, quadrature_points) + curve.beta * r;
}

std::optional<std::string> uniqueness_violation(const PopulationCurve& curve) {
  const double s2 = curve.sigma_eps * curve.sigma_eps;
  if (!(curve.beta > 0.0)) return "beta > 0";
  if (curve.loss.kind == LossKind::hinge) {
    if (!(s2 < 4.0)) return "hinge requires sigma_eps^2 < 4";
    if (!(curve.beta < 1.0)) return "hinge requires beta < 1";
    return std::nullopt;
  }
  if (!(s2 < -4.0 + 2.0 * std::sqrt(6.0))) return "logistic requires sigma_eps^2 < -4 + 2*sqrt(6)";
  if (!(curve.beta < 0.5 - s2 / 8.0)) return "logistic requires beta < 1/2 - sigma_eps^2/8";
  return std::nullopt;
}

RStar solve_r_star(const PopulationCurve& curve) {
  if (auto violated = uniqueness_violation(curve))
    throw std::domain_error("r* is not guaranteed unique: " + *violated);

  const double r_max = std::max(20.0, 4.0 / curve.beta);
  constexpr int grid = 4000;
  const double step = r_max / grid;
  int best = 0;
  double best_h = h_pop(curve, 0.0);
  for (int i = 1; i <= grid; ++i) {
    const double h = h_pop(curve, i * step);
    if (h < best_h) {
      best_h = h;
      best = i;
    }
  }

  double lo = std::max(0.0, (best - 1) * step);
  double hi = std::min(r_max, (best + 1) * step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = h_pop(curve, a);
  double fb = h_pop(curve, b);
  while (hi - lo > 1e-10) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = h_pop(curve, a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = h_pop(curve, b);
    }
  }
  RStar out;
  out.r_star = 0.5 * (lo + hi);
  out.h_min = h_pop(curve, out.r_star);
  if (best_h < out.h_min) {
    out.r_star = best * step;
    out.h_min = best_h;
  }
  return out;
}

namespace {

double message_block_loss(const MarginLoss& loss, const Eigen::VectorXd& a,
                          const Eigen::MatrixXd& gram, const Eigen::VectorXd& m) {
  const Eigen::VectorXd gm = gram * m;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) acc += loss.value(m(k) * (a(k) + gm(k)));
  return acc;
}

}  // namespace

double objective_finite(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& data,
                        const MarginLoss& loss, double beta, SeededRng* rng) {
  const auto K = watermarks.rows();
  const auto n = data.rows();
  if (data.cols() != watermarks.cols())
    throw std::invalid_argument("data and watermark dimensions disagree");
  if (n == 0) throw std::invalid_argument("objective needs at least one datum");
  const bool exhaustive = static_cast<std::size_t>(K) <= kExhaustiveMessageLimit;
  if (!exhaustive && rng == nullptr)
    throw std::invalid_argument("Monte-Carlo messages (K > 12) need an RNG");

  const Eigen::MatrixXd gram = watermarks * watermarks.transpose();
  const Eigen::MatrixXd inner = data * watermarks.transpose();  // n x K

  std::vector<Eigen::VectorXd> messages;
  if (exhaustive) {
    const std::size_t count = std::size_t{1} << K;
    messages.reserve(count);
    for (std::size_t code = 0; code < count; ++code) {
      Eigen::VectorXd m(K);
      for (Eigen::Index k = 0; k < K; ++k) m(k) = (code >> k) & 1 ? 1.0 : -1.0;
      messages.push_back(std::move(m));
    }
  }

  constexpr Eigen::Index chunk = 256;
  const auto chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);
  std::vector<double> partial(chunks, 0.0);
  std::vector<SeededRng> streams;
  if (!exhaustive)
    for (std::size_t c = 0; c < chunks; ++c) streams.push_back(rng->split(c));

  parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    double acc = 0.0;
    for (Eigen::Index i = begin; i < end; ++i) {
      const Eigen::VectorXd a = inner.row(i).transpose();
      double datum = 0.0;
      if (exhaustive) {
        for (const auto& m : messages) datum += message_block_loss(loss, a, gram, m);
        datum /= static_cast<double>(messages.size());
      } else {
        Eigen::VectorXd m(K);
        for (std::size_t s = 0; s < kMonteCarloMessages; ++s) {
          for (Eigen::Index k = 0; k < K; ++k) m(k) = streams[c].sign();
          datum += message_block_loss(loss, a, gram, m);
        }
        datum /= static_cast<double>(kMonteCarloMessages);
      }
      acc += datum;
    }
    partial[c] = acc;
  });

  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n) + beta * watermarks.squaredNorm();
}

double objective_population(const Eigen::MatrixXd& watermarks, const Eigen::MatrixXd& sigma_x,
                            const MarginLoss& loss, double beta) {
  const auto K = watermarks.rows();
  if (static_cast<std::size_t>(K) > kExhaustiveMessageLimit)
    throw std::invalid_argument("population objective enumerates messages; K must be <= 12");
  const Eigen::MatrixXd gram = watermarks * watermarks.transpose();
  const Eigen::MatrixXd cov = watermarks * sigma_x * watermarks.transpose();
  const std::size_t count = std::size_t{1} << K;
  double acc = 0.0;
  Eigen::VectorXd m(K);
  for (std::size_t code = 0; code < count; ++code) {
    for (Eigen::Index k = 0; k < K; ++k) m(k) = (code >> k) & 1 ? 1.0 : -1.0;
    const Eigen::VectorXd gm = gram * m;
    for (Eigen::Index k = 0; k < K; ++k)
      acc += gaussian_expectation(loss, m(k) * gm(k), std::sqrt(std::max(cov(k, k), 0.0)));
  }
  return acc / static_cast<double>(count) + beta * watermarks.squaredNorm();
}

}  // namespace addmark
