#include <gtest/gtest.h>

#include <cmath>

#include "addmark/metrics.hpp"
#include "addmark/tensor.hpp"

using namespace addmark;

namespace {

std::vector<ScoreSample> scores(const std::vector<double>& null, const std::vector<double>& marked) {
  std::vector<ScoreSample> out;
  for (double s : null) out.push_back({s, ScoreLabel::null, std::nullopt});
  for (double s : marked) out.push_back({s, ScoreLabel::watermarked, std::nullopt});
  return out;
}

}  // namespace

TEST(BitMetrics, AccuracyHammingDmin) {
  const Message a = Message::parse("++--+"), b = Message::parse("+-+-+");
  EXPECT_EQ(hamming(a, b), 2u);
  EXPECT_DOUBLE_EQ(bit_accuracy(a, b), 0.6);
  EXPECT_THROW(hamming(a, Message::parse("++")), std::invalid_argument);
  EXPECT_EQ(d_min({Message::parse("0000"), Message::parse("0111"), Message::parse("1110")}), 2u);
}

TEST(Auroc, HandComputedCase) {
  // Pairs (marked > null): 1.5>1, 3>1, 3>2; 1.5<2. Three of four.
  EXPECT_DOUBLE_EQ(auroc(scores({1.0, 2.0}, {1.5, 3.0})), 0.75);
  EXPECT_DOUBLE_EQ(auroc(scores({1.0, 2.0}, {3.0, 4.0})), 1.0);
  EXPECT_DOUBLE_EQ(auroc(scores({1.0}, {1.0})), 0.5);
  // Tie counted as one half: (2 vs 2) = 0.5, (2 vs 1) = 1.
  EXPECT_DOUBLE_EQ(auroc(scores({1.0, 2.0}, {2.0})), 0.75);
  EXPECT_THROW(auroc(scores({1.0}, {})), std::invalid_argument);
}

TEST(Auroc, MatchesPairCountAndTrapezoid) {
  SeededRng rng(4);
  std::vector<double> n, m;
  for (int i = 0; i < 60; ++i) n.push_back(std::round(rng.normal() * 4) / 4);
  for (int i = 0; i < 45; ++i) m.push_back(std::round((rng.normal() + 1) * 4) / 4);
  double pairs = 0.0;
  for (double a : m)
    for (double b : n) pairs += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  const auto s = scores(n, m);
  EXPECT_NEAR(auroc(s), pairs / (60.0 * 45.0), 1e-14);
  const auto curve = roc_curve(s);
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
  EXPECT_NEAR(trapezoid_area(curve), auroc(s), 1e-14);
}

TEST(ExceedRate, StrictInequality) {
  EXPECT_DOUBLE_EQ(exceed_rate({1.0, 2.0, 3.0, 3.0}, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(exceed_rate({1.0, 2.0}, 5.0), 0.0);
}
