#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <utility>
#include <vector>

#include "addmark/lowdim.hpp"
#include "addmark/tensor.hpp"
#include "addmark/watermark.hpp"

namespace addmark {

/// Set of admissible messages, kept sorted (lexicographic, -1 < +1).
class Dictionary {
 public:
  /// Throws on an empty set, mixed lengths or duplicates.
  explicit Dictionary(std::vector<Message> messages);

  std::size_t size() const { return messages_.size(); }
  std::size_t bits() const { return messages_.front().size(); }
  const std::vector<Message>& messages() const { return messages_; }
  /// Minimum pairwise Hamming distance; K + 1 for a single message.
  std::size_t d_min() const { return d_min_; }
  bool contains(const Message& m) const;

 private:
  std::vector<Message> messages_;
  std::size_t d_min_ = 0;
};

/// One message per line ('+'/'-' or '1'/'0'); text after '#' is ignored.
Dictionary load_dictionary(const std::filesystem::path& path);
void save_dictionary(const std::filesystem::path& path, const Dictionary& dict);

enum class DetectionMode { no_dictionary, dictionary };

struct DetectionReport {
  Eigen::VectorXd gamma;
  double S = 0.0;
  std::optional<double> S_dict;
  bool decision = false;
  Message decoded;
  double threshold_used = 0.0;
  DetectionMode mode = DetectionMode::no_dictionary;
};

nlohmann::json to_json(const DetectionReport& report);

/// x + sum_k m_k w_k; clamps to the declared range when `clip` is set.
ImageTensor embed(const ImageTensor& x, const Message& m, const WatermarkSet& w, bool clip = false);

Eigen::VectorXd inner_products(const ImageTensor& x, const WatermarkSet& w);
Eigen::VectorXd inner_products(const Eigen::VectorXd& x, const Eigen::MatrixXd& w);

double statistic_S(const Eigen::VectorXd& gamma);
std::pair<double, Message> statistic_S_dict(const Eigen::VectorXd& gamma, const Dictionary& dict);

/// sign(Gamma) with sign(0) = +1.
Message decode_sign(const Eigen::VectorXd& gamma);
Message decode_dict(const Eigen::VectorXd& gamma, const Dictionary& dict);

/// Full detection pass: Gamma, S (and S_D with a dictionary), decision
/// statistic > threshold, decoded message.
DetectionReport detect(const ImageTensor& x, const WatermarkSet& w, double threshold,
                       const Dictionary* dict = nullptr);
DetectionReport detect_gamma(const Eigen::VectorXd& gamma, double threshold,
                             const Dictionary* dict = nullptr);

/// Minimum calibration set size for level alpha: ceil(2 / alpha).
std::size_t min_calibration_size(double alpha);

/// Smallest score whose empirical CDF reaches 1 - alpha. Throws when fewer
/// than min_calibration_size(alpha) scores are supplied.
double calibrate_threshold(std::vector<double> null_scores, double alpha);

/// |D| <= mu^2 sqrt(d_min) / (mu^2 + sigma^2) * exp(mu^2 (d_min - 1) / (2 sigma^2)).
bool dictionary_improvement_condition(double mu, double sigma, std::size_t d_min,
                                      std::size_t dict_size);
/// Right-hand side of the condition above (may be +inf).
double dictionary_size_bound(double mu, double sigma, std::size_t d_min);

/// K orthonormal directions in the orthogonal complement of U, each scaled to
/// norm sqrt(r_star). Requires K <= D - d.
Eigen::MatrixXd make_oracle_watermark(const LowDimModel& model, std::size_t bits, double r_star,
                                      SeededRng& rng);

}  // namespace addmark
