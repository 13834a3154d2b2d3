#include "addmark/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "addmark/metrics.hpp"

namespace addmark {

Dictionary::Dictionary(std::vector<Message> messages) : messages_(std::move(messages)) {
  if (messages_.empty()) throw std::invalid_argument("dictionary is empty");
  const std::size_t K = messages_.front().size();
  if (K == 0) throw std::invalid_argument("dictionary messages must have at least one bit");
  for (const auto& m : messages_)
    if (m.size() != K)
      throw std::invalid_argument("dictionary mixes message lengths " + std::to_string(K) +
                                  " and " + std::to_string(m.size()));
  std::sort(messages_.begin(), messages_.end());
  const auto dup = std::adjacent_find(messages_.begin(), messages_.end());
  if (dup != messages_.end())
    throw std::invalid_argument("duplicate dictionary message " + dup->to_string());
  d_min_ = addmark::d_min(messages_);
}

bool Dictionary::contains(const Message& m) const {
  return std::binary_search(messages_.begin(), messages_.end(), m);
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dictionary " + path.string());
  std::vector<Message> messages;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    try {
      messages.push_back(Message::parse(std::string_view(line).substr(first, last - first + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return Dictionary(std::move(messages));
}

void save_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# K=" << dict.bits() << " size=" << dict.size() << " d_min=" << dict.d_min() << '\n';
  for (const auto& m : dict.messages()) out << m.to_string() << '\n';
}

nlohmann::json to_json(const DetectionReport& r) {
  nlohmann::json j;
  j["gamma"] = std::vector<double>(r.gamma.data(), r.gamma.data() + r.gamma.size());
  j["S"] = r.S;
  j["S_dict"] = r.S_dict ? nlohmann::json(*r.S_dict) : nlohmann::json(nullptr);
  j["decision"] = r.decision;
  j["decoded"] = r.decoded.to_string();
  if (std::isfinite(r.threshold_used))
    j["threshold_used"] = r.threshold_used;
  else
    j["threshold_used"] = nullptr;
  j["mode"] = r.mode == DetectionMode::dictionary ? "dictionary" : "no_dictionary";
  return j;
}

ImageTensor embed(const ImageTensor& x, const Message& m, const WatermarkSet& w, bool clip) {
  if (!(x.shape() == w.image_shape()))
    throw std::invalid_argument("embed: image is " + to_string(x.shape()) + " but watermark expects " +
                                to_string(w.image_shape()));
  if (m.size() != w.bits())
    throw std::invalid_argument("embed: message has " + std::to_string(m.size()) +
                                " bits, watermark has K=" + std::to_string(w.bits()));
  std::vector<double> out(x.data().begin(), x.data().end());
  Eigen::VectorXd signs(static_cast<Eigen::Index>(m.size()));
  for (std::size_t k = 0; k < m.size(); ++k) signs(static_cast<Eigen::Index>(k)) = m[k];
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() +=
      w.vectors().transpose() * signs;
  // Additive marks may leave the declared interval; relabel unless clipping.
  ImageTensor result(x.shape(), std::move(out), ValueRange::unbounded);
  return clip ? clamped(result, x.value_range()) : relabel_if_fits(result, x.value_range());
}

Eigen::VectorXd inner_products(const Eigen::VectorXd& x, const Eigen::MatrixXd& w) {
  if (x.size() != w.cols())
    throw std::invalid_argument("inner_products: vector length does not match watermark D");
  return w * x;
}

Eigen::VectorXd inner_products(const ImageTensor& x, const WatermarkSet& w) {
  if (!(x.shape() == w.image_shape()))
    throw std::invalid_argument("inner_products: image is " + to_string(x.shape()) +
                                " but watermark expects " + to_string(w.image_shape()));
  auto d = x.data();
  return w.vectors() * Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

double statistic_S(const Eigen::VectorXd& gamma) { return gamma.cwiseAbs().sum(); }

std::pair<double, Message> statistic_S_dict(const Eigen::VectorXd& gamma, const Dictionary& dict) {
  if (static_cast<std::size_t>(gamma.size()) != dict.bits())
    throw std::invalid_argument("dictionary has K=" + std::to_string(dict.bits()) + " but Gamma has " +
                                std::to_string(gamma.size()) + " entries");
  double best = -std::numeric_limits<double>::infinity();
  const Message* arg = nullptr;
  // Messages are sorted, so keeping the first strict maximum is the
  // lexicographic tie-break.
  for (const auto& m : dict.messages()) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += m[k] * gamma(static_cast<Eigen::Index>(k));
    if (s > best) {
      best = s;
      arg = &m;
    }
  }
  return {best, *arg};
}

Message decode_sign(const Eigen::VectorXd& gamma) {
  std::vector<int> bits(static_cast<std::size_t>(gamma.size()));
  for (Eigen::Index k = 0; k < gamma.size(); ++k) bits[static_cast<std::size_t>(k)] = gamma(k) >= 0.0 ? 1 : -1;
  return Message(std::move(bits));
}

Message decode_dict(const Eigen::VectorXd& gamma, const Dictionary& dict) {
  return statistic_S_dict(gamma, dict).second;
}

DetectionReport detect_gamma(const Eigen::VectorXd& gamma, double threshold, const Dictionary* dict) {
  DetectionReport r;
  r.gamma = gamma;
  r.S = statistic_S(gamma);
  r.threshold_used = threshold;
  if (dict) {
    auto [s, m] = statistic_S_dict(gamma, *dict);
    r.S_dict = s;
    r.decoded = std::move(m);
    r.mode = DetectionMode::dictionary;
    r.decision = s > threshold;
  } else {
    r.decoded = decode_sign(gamma);
    r.decision = r.S > threshold;
  }
  return r;
}

DetectionReport detect(const ImageTensor& x, const WatermarkSet& w, double threshold,
                       const Dictionary* dict) {
  return detect_gamma(inner_products(x, w), threshold, dict);
}

std::size_t min_calibration_size(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  return static_cast<std::size_t>(std::ceil(2.0 / alpha - 1e-12));
}

double calibrate_threshold(std::vector<double> null_scores, double alpha) {
  const std::size_t need = min_calibration_size(alpha);
  if (null_scores.size() < need)
    throw std::invalid_argument("calibration at alpha=" + std::to_string(alpha) + " needs at least " +
                                std::to_string(need) + " null scores, got " +
                                std::to_string(null_scores.size()));
  std::sort(null_scores.begin(), null_scores.end());
  const double n = static_cast<double>(null_scores.size());
  const auto rank = static_cast<long long>(std::ceil((1.0 - alpha) * n - 1e-9));
  const auto idx = std::clamp<long long>(rank - 1, 0, static_cast<long long>(null_scores.size()) - 1);
  return null_scores[static_cast<std::size_t>(idx)];
}

double dictionary_size_bound(double mu, double sigma, std::size_t d_min) {
  if (!(sigma > 0.0) || d_min < 1) throw std::invalid_argument("need sigma > 0 and d_min >= 1");
  const double dm = static_cast<double>(d_min);
  const double log_bound = 2.0 * std::log(std::abs(mu)) + 0.5 * std::log(dm) -
                           std::log(mu * mu + sigma * sigma) +
                           mu * mu * (dm - 1.0) / (2.0 * sigma * sigma);
  return std::exp(log_bound);
}

bool dictionary_improvement_condition(double mu, double sigma, std::size_t d_min,
                                      std::size_t dict_size) {
  if (!(sigma > 0.0) || d_min < 1) throw std::invalid_argument("need sigma > 0 and d_min >= 1");
  if (mu == 0.0) return false;
  const double dm = static_cast<double>(d_min);
  const double log_bound = 2.0 * std::log(std::abs(mu)) + 0.5 * std::log(dm) -
                           std::log(mu * mu + sigma * sigma) +
                           mu * mu * (dm - 1.0) / (2.0 * sigma * sigma);
  return std::log(static_cast<double>(dict_size)) <= log_bound;
}

Eigen::MatrixXd make_oracle_watermark(const LowDimModel& model, std::size_t bits, double r_star,
                                      SeededRng& rng) {
  const auto D = model.ambient_dim();
  const auto d = model.latent_dim();
  const auto K = static_cast<Eigen::Index>(bits);
  if (bits < 1 || K > D - d)
    throw std::invalid_argument("oracle watermark needs 1 <= K <= D - d");
  if (!(r_star >= 0.0)) throw std::invalid_argument("r_star must be nonnegative");
  Eigen::MatrixXd g(D, K);
  for (Eigen::Index j = 0; j < K; ++j)
    for (Eigen::Index i = 0; i < D; ++i) g(i, j) = rng.normal();
  const Eigen::MatrixXd& q = model.orthonormal_basis();
  g -= q * (q.transpose() * g);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(D, K);
  // Re-project to remove rounding leakage into U, then re-normalize.
  basis -= q * (q.transpose() * basis);
  for (Eigen::Index j = 0; j < K; ++j) basis.col(j).normalize();
  return std::sqrt(r_star) * basis.transpose();
}

}  // namespace addmark
