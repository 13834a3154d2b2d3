#include "addmark/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace addmark {

double bit_accuracy(const Message& decoded, const Message& truth) {
  if (decoded.size() != truth.size() || truth.size() == 0)
    throw std::invalid_argument("bit_accuracy: messages have lengths " +
                                std::to_string(decoded.size()) + " and " +
                                std::to_string(truth.size()));
  std::size_t same = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) same += decoded[k] == truth[k];
  return static_cast<double>(same) / static_cast<double>(truth.size());
}

std::size_t hamming(const Message& a, const Message& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming: message lengths differ");
  std::size_t d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] != b[k];
  return d;
}

std::size_t d_min(const std::vector<Message>& messages) {
  if (messages.empty()) return 0;
  std::size_t best = messages.front().size() + 1;
  for (std::size_t i = 0; i < messages.size(); ++i)
    for (std::size_t j = i + 1; j < messages.size(); ++j)
      best = std::min(best, hamming(messages[i], messages[j]));
  return best;
}

namespace {

void check_both_labels(const std::vector<ScoreSample>& samples, std::size_t& pos,
                       std::size_t& neg) {
  pos = neg = 0;
  for (const auto& s : samples) (s.label == ScoreLabel::watermarked ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("AUROC needs at least one null and one watermarked score");
}

}  // namespace

double auroc(const std::vector<ScoreSample>& samples) {
  std::size_t pos = 0, neg = 0;
  check_both_labels(samples, pos, neg);
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(samples.size());
  for (const auto& s : samples) sorted.emplace_back(s.score, s.label == ScoreLabel::watermarked);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // Average ranks over tie groups, then the Mann-Whitney U of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) group_pos += sorted[j++].second;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(group_pos);
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::vector<RocPoint> roc_curve(const std::vector<ScoreSample>& samples) {
  std::size_t pos = 0, neg = 0;
  check_both_labels(samples, pos, neg);
  std::vector<std::pair<double, bool>> sorted;
  for (const auto& s : samples) sorted.emplace_back(s.score, s.label == ScoreLabel::watermarked);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < sorted.size()) {
    const double score = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == score) (sorted[i++].second ? tp : fp)++;
    curve.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  return area;
}

double exceed_rate(const std::vector<double>& scores, double threshold) {
  if (scores.empty()) return 0.0;
  const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > threshold; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace addmark
