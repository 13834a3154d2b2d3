#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "addmark/codec.hpp"
#include "addmark/losses.hpp"
#include "addmark/lowdim.hpp"
#include "addmark/trainer.hpp"

namespace addmark {

/// Gaussian simulation harness. Defaults are the reference configuration
/// (D=128, d=8, K=8, Sigma_Z = 4 I, sigma_eps = 0.3, hinge, beta = 0.05).
struct HarnessConfig {
  int D = 128;
  int d = 8;
  std::size_t K = 8;
  double latent_variance = 4.0;
  double sigma_eps = 0.3;
  LossKind loss = LossKind::hinge;
  double beta_theory = 0.05;
  std::size_t n = 10000;
  double delta = 0.05;
  double alpha = 0.05;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  bool oracle = false;

  // Optimizer settings forwarded to the trainer.
  int epochs = 300;
  int batch_size = 64;
  double lr_scale = 0.05;
  double momentum = 0.9;
  double tail_average = 0.25;
  LrSchedule lr_schedule = LrSchedule::cosine;

  // Declared tolerances.
  double max_leak = 0.15;
  double max_cos = 0.15;
  double max_radius_rel = 0.20;
  double fpr_band = 0.01;
  double degenerate_norm = 1e-3;

  PopulationCurve curve() const { return {MarginLoss{loss}, sigma_eps, beta_theory}; }
  TrainConfig train_config() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const HarnessConfig& cfg);
void from_json(const nlohmann::json& j, HarnessConfig& cfg);

struct ThresholdRates {
  std::string statistic;  // "S" or "S_dict"
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct TheoryReport {
  double r_star = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double max_subspace_leak = 0.0;  // max_k ||P_U w_k|| / ||w_k||
  double max_pairwise_cos = 0.0;
  double radius_error = 0.0;       // max_k | ||w_k||^2 - r* |
  double radius_rel_error = 0.0;   // radius_error / r*
  double min_sq_norm = 0.0;
  double max_norm = 0.0;
  double eps_n_delta = 0.0;
  std::optional<double> empirical_BA;
  std::optional<double> predicted_BA;
  std::optional<double> dict_BA;
  std::optional<double> dict_bound;
  std::vector<ThresholdRates> rates;
};

nlohmann::json to_json(const TheoryReport& r);

/// Geometry diagnostics of trained (or oracle) vectors against the model and
/// the population minimizer r*; eps_n_delta uses the training size n.
TheoryReport verify_geometry(const Eigen::MatrixXd& w, const LowDimModel& model,
                             const PopulationCurve& curve, std::size_t n, double delta);

/// Rows are Gamma = W x for x drawn from the model; with `messages` the
/// samples are watermarked, x + sum_k m_ik w_k (messages: trials x K).
Eigen::MatrixXd sample_gamma(const Eigen::MatrixXd& w, const LowDimModel& model, std::size_t trials,
                             SeededRng& rng, const Eigen::MatrixXd* messages = nullptr);

/// Monte-Carlo detection and decoding. The threshold is calibrated on an
/// independent null batch of `trials` samples; FPR/TPR, sign-decoder bit
/// accuracy and (with a dictionary) dictionary-decoder accuracy are measured
/// on fresh batches of the same size. Fills mu, sigma and the predictions.
TheoryReport verify_detection(const Eigen::MatrixXd& w, const LowDimModel& model, double alpha,
                              std::size_t trials, SeededRng& rng, const Dictionary* dict = nullptr);

/// TPR of the S test for the oracle model Gamma ~ N(mu m, sigma^2 I_K) at a
/// level-alpha threshold calibrated from the matching null N(0, sigma^2 I_K).
double oracle_tpr(std::size_t bits, double mu, double sigma, double alpha, std::size_t trials,
                  SeededRng& rng);

/// Random dictionary with exactly the requested minimum distance, by
/// rejection sampling. Throws after `attempts` failed restarts.
Dictionary generate_dictionary(std::size_t bits, std::size_t size, std::size_t target_d_min,
                               SeededRng& rng, int attempts = 1000);

struct TheoryCheck {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool passed = false;
  std::string note;
};

struct TheoryRun {
  HarnessConfig config;
  TheoryReport report;
  std::vector<TheoryCheck> checks;
  bool degenerate = false;  // beta_theory > K * L
  bool passed() const;
};

nlohmann::json to_json(const TheoryRun& run);

/// Builds the model, trains (or constructs the oracle watermark), and runs
/// both verifications against the declared tolerances.
TheoryRun run_theory_check(const HarnessConfig& cfg);

/// Trained harness watermark for `cfg` (throws std::invalid_argument in oracle mode).
TrainResult train_harness(const HarnessConfig& cfg, const LowDimModel& model);
LowDimModel harness_model(const HarnessConfig& cfg);

}  // namespace addmark
