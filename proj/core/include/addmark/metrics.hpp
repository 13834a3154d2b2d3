#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "addmark/tensor.hpp"

namespace addmark {

/// Fraction of matching bits. Throws on a length mismatch.
double bit_accuracy(const Message& decoded, const Message& truth);

std::size_t hamming(const Message& a, const Message& b);
/// Minimum pairwise distance by exhaustive scan; K + 1 for fewer than two messages.
std::size_t d_min(const std::vector<Message>& messages);

enum class ScoreLabel { null, watermarked };

struct ScoreSample {
  double score = 0.0;
  ScoreLabel label = ScoreLabel::null;
  std::optional<Message> message;
};

/// Mann-Whitney AUROC, ties counted 1/2. Needs both labels present.
double auroc(const std::vector<ScoreSample>& samples);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Staircase from (0,0) to (1,1), one vertex per distinct score threshold
/// (decision: score >= threshold).
std::vector<RocPoint> roc_curve(const std::vector<ScoreSample>& samples);
double trapezoid_area(const std::vector<RocPoint>& curve);

/// Fraction of `scores` strictly above `threshold`.
double exceed_rate(const std::vector<double>& scores, double threshold);

}  // namespace addmark
