#include "addmark/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "addmark/metrics.hpp"
#include "addmark/parallel.hpp"

namespace addmark {

TrainConfig HarnessConfig::train_config() const {
  TrainConfig t;
  t.bits = K;
  t.beta_alg = beta_theory * static_cast<double>(D);
  t.loss = MarginLoss{loss};
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr_scale = lr_scale;
  t.momentum = momentum;
  t.tail_average = tail_average;
  t.lr_schedule = lr_schedule;
  t.seed = seed;
  return t;
}

void HarnessConfig::validate() const {
  if (D < 2 || d < 1 || d >= D) throw std::invalid_argument("harness needs 1 <= d < D");
  if (K < 1 || static_cast<int>(K) > D - d) throw std::invalid_argument("harness needs 1 <= K <= D - d");
  if (!(latent_variance > 0.0)) throw std::invalid_argument("latent_variance must be positive");
  if (!(sigma_eps >= 0.0)) throw std::invalid_argument("sigma_eps must be nonnegative");
  if (!(beta_theory > 0.0)) throw std::invalid_argument("beta_theory must be positive");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (trials < min_calibration_size(alpha))
    throw std::invalid_argument("trials too small for calibration at this alpha");
  if (!oracle) train_config().validate();
}

void to_json(nlohmann::json& j, const HarnessConfig& c) {
  j = nlohmann::json{{"D", c.D},
                     {"d", c.d},
                     {"K", c.K},
                     {"latent_variance", c.latent_variance},
                     {"sigma_eps", c.sigma_eps},
                     {"loss", to_string(c.loss)},
                     {"beta_theory", c.beta_theory},
                     {"n", c.n},
                     {"delta", c.delta},
                     {"alpha", c.alpha},
                     {"trials", c.trials},
                     {"seed", c.seed},
                     {"oracle", c.oracle},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr_scale", c.lr_scale},
                     {"momentum", c.momentum},
                     {"tail_average", c.tail_average},
                     {"lr_schedule", c.lr_schedule == LrSchedule::cosine ? "cosine" : "constant"},
                     {"max_leak", c.max_leak},
                     {"max_cos", c.max_cos},
                     {"max_radius_rel", c.max_radius_rel},
                     {"fpr_band", c.fpr_band},
                     {"degenerate_norm", c.degenerate_norm}};
}

void from_json(const nlohmann::json& j, HarnessConfig& c) {
  const HarnessConfig d;
  c.D = j.value("D", d.D);
  c.d = j.value("d", d.d);
  c.K = j.value("K", d.K);
  c.latent_variance = j.value("latent_variance", d.latent_variance);
  c.sigma_eps = j.value("sigma_eps", d.sigma_eps);
  c.loss = parse_loss_kind(j.value("loss", std::string(to_string(d.loss))));
  c.beta_theory = j.value("beta_theory", d.beta_theory);
  c.n = j.value("n", d.n);
  c.delta = j.value("delta", d.delta);
  c.alpha = j.value("alpha", d.alpha);
  c.trials = j.value("trials", d.trials);
  c.seed = j.value("seed", d.seed);
  c.oracle = j.value("oracle", d.oracle);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_scale = j.value("lr_scale", d.lr_scale);
  c.momentum = j.value("momentum", d.momentum);
  c.tail_average = j.value("tail_average", d.tail_average);
  const auto schedule = j.value("lr_schedule", std::string("cosine"));
  if (schedule != "cosine" && schedule != "constant")
    throw std::invalid_argument("lr_schedule must be 'constant' or 'cosine'");
  c.lr_schedule = schedule == "cosine" ? LrSchedule::cosine : LrSchedule::constant;
  c.max_leak = j.value("max_leak", d.max_leak);
  c.max_cos = j.value("max_cos", d.max_cos);
  c.max_radius_rel = j.value("max_radius_rel", d.max_radius_rel);
  c.fpr_band = j.value("fpr_band", d.fpr_band);
  c.degenerate_norm = j.value("degenerate_norm", d.degenerate_norm);
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

double finite_or_null_guard(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

nlohmann::json to_json(const TheoryReport& r) {
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& t : r.rates)
    rates.push_back({{"statistic", t.statistic}, {"threshold", t.threshold}, {"fpr", t.fpr}, {"tpr", t.tpr}});
  return {{"r_star", r.r_star},
          {"mu", r.mu},
          {"sigma", r.sigma},
          {"max_subspace_leak", r.max_subspace_leak},
          {"max_pairwise_cos", r.max_pairwise_cos},
          {"radius_error", r.radius_error},
          {"radius_rel_error", finite_or_null_guard(r.radius_rel_error)},
          {"min_sq_norm", r.min_sq_norm},
          {"max_norm", r.max_norm},
          {"eps_n_delta", r.eps_n_delta},
          {"empirical_BA", opt(r.empirical_BA)},
          {"predicted_BA", opt(r.predicted_BA)},
          {"dict_BA", opt(r.dict_BA)},
          {"dict_bound", opt(r.dict_bound)},
          {"rates", rates}};
}

TheoryReport verify_geometry(const Eigen::MatrixXd& w, const LowDimModel& model,
                             const PopulationCurve& curve, std::size_t n, double delta) {
  if (w.cols() != model.ambient_dim())
    throw std::invalid_argument("watermark dimension does not match the model");
  TheoryReport r;
  if (!uniqueness_violation(curve)) r.r_star = solve_r_star(curve).r_star;
  const Eigen::MatrixXd& q = model.orthonormal_basis();
  const Eigen::VectorXd norms = w.rowwise().norm();
  r.min_sq_norm = norms.minCoeff() * norms.minCoeff();
  r.max_norm = norms.maxCoeff();
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    if (norms(k) > 0.0) {
      const double leak = (q.transpose() * w.row(k).transpose()).norm() / norms(k);
      r.max_subspace_leak = std::max(r.max_subspace_leak, leak);
    }
    const double err = std::abs(norms(k) * norms(k) - r.r_star);
    r.radius_error = std::max(r.radius_error, err);
    for (Eigen::Index j = k + 1; j < w.rows(); ++j)
      if (norms(k) > 0.0 && norms(j) > 0.0)
        r.max_pairwise_cos =
            std::max(r.max_pairwise_cos, std::abs(w.row(k).dot(w.row(j))) / (norms(k) * norms(j)));
  }
  r.radius_rel_error = r.r_star > 0.0 ? r.radius_error / r.r_star
                                      : std::numeric_limits<double>::infinity();
  const std::size_t K = static_cast<std::size_t>(w.rows());
  const double radius = feasible_ball_radius(curve.loss, K, curve.beta);
  r.eps_n_delta = uniform_deviation_bound(n, delta, K, curve.loss.lipschitz(), radius,
                                          model.covariance_trace());
  return r;
}

Eigen::MatrixXd sample_gamma(const Eigen::MatrixXd& w, const LowDimModel& model, std::size_t trials,
                             SeededRng& rng, const Eigen::MatrixXd* messages) {
  const auto K = w.rows();
  const auto D = w.cols();
  if (D != model.ambient_dim()) throw std::invalid_argument("watermark dimension does not match the model");
  if (messages && (messages->rows() != static_cast<Eigen::Index>(trials) || messages->cols() != K))
    throw std::invalid_argument("messages must be trials x K");
  const Eigen::MatrixXd wb = w * model.basis() * model.latent_cholesky();  // K x d
  const Eigen::MatrixXd gram = w * w.transpose();
  const auto d = model.latent_dim();
  const double s = model.sigma_eps();
  Eigen::MatrixXd gamma(static_cast<Eigen::Index>(trials), K);
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (trials + kChunk - 1) / kChunk;
  // Fresh stream id from the caller's engine, so repeated calls differ.
  const SeededRng base(rng.seed(), rng.engine()());
  parallel_for(chunks, [&](std::size_t c) {
    SeededRng local = base.split(c);
    Eigen::VectorXd z(d), eps(D);
    for (std::size_t t = c * kChunk; t < std::min(trials, (c + 1) * kChunk); ++t) {
      for (Eigen::Index i = 0; i < d; ++i) z(i) = local.normal();
      for (Eigen::Index i = 0; i < D; ++i) eps(i) = s * local.normal();
      Eigen::VectorXd g = wb * z + w * eps;
      if (messages) g += gram * messages->row(static_cast<Eigen::Index>(t)).transpose();
      gamma.row(static_cast<Eigen::Index>(t)) = g.transpose();
    }
  });
  return gamma;
}

namespace {

Eigen::MatrixXd random_messages(std::size_t trials, std::size_t K, SeededRng& rng,
                                const Dictionary* dict) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(K));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    if (dict) {
      const Message& msg = dict->messages()[rng.index(dict->size())];
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(t, k) = msg[static_cast<std::size_t>(k)];
    } else {
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(t, k) = rng.sign();
    }
  }
  return m;
}

Message row_message(const Eigen::MatrixXd& m, Eigen::Index t) {
  std::vector<int> bits(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) bits[static_cast<std::size_t>(k)] = m(t, k) > 0 ? 1 : -1;
  return Message(std::move(bits));
}

}  // namespace

TheoryReport verify_detection(const Eigen::MatrixXd& w, const LowDimModel& model, double alpha,
                              std::size_t trials, SeededRng& rng, const Dictionary* dict) {
  const auto K = static_cast<std::size_t>(w.rows());
  if (dict && dict->bits() != K) throw std::invalid_argument("dictionary K does not match the watermark");
  TheoryReport r;
  const Eigen::MatrixXd sigma_x = model.covariance();
  double energy = 0.0, variance = 0.0;
  double predicted = 0.0;
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    const double e = w.row(k).squaredNorm();
    const double v = w.row(k) * sigma_x * w.row(k).transpose();
    energy += e;
    variance += v;
    predicted += v > 0.0 ? normal_cdf(e / std::sqrt(v)) : (e > 0.0 ? 1.0 : 0.5);
  }
  r.mu = energy / static_cast<double>(K);
  r.sigma = std::sqrt(variance / static_cast<double>(K));
  r.predicted_BA = predicted / static_cast<double>(K);

  const Eigen::MatrixXd calib = sample_gamma(w, model, trials, rng);
  const Eigen::MatrixXd null = sample_gamma(w, model, trials, rng);
  const Eigen::MatrixXd msgs = random_messages(trials, K, rng, dict);
  const Eigen::MatrixXd marked = sample_gamma(w, model, trials, rng, &msgs);

  auto column_scores = [&](const Eigen::MatrixXd& g, bool use_dict) {
    std::vector<double> s(static_cast<std::size_t>(g.rows()));
    for (Eigen::Index t = 0; t < g.rows(); ++t) {
      const Eigen::VectorXd row = g.row(t).transpose();
      s[static_cast<std::size_t>(t)] = use_dict ? statistic_S_dict(row, *dict).first : statistic_S(row);
    }
    return s;
  };
  for (int pass = 0; pass < (dict ? 2 : 1); ++pass) {
    const bool use_dict = pass == 1;
    const double thr = calibrate_threshold(column_scores(calib, use_dict), alpha);
    r.rates.push_back({use_dict ? "S_dict" : "S", thr, exceed_rate(column_scores(null, use_dict), thr),
                       exceed_rate(column_scores(marked, use_dict), thr)});
  }

  double correct = 0.0, dict_correct = 0.0;
  for (Eigen::Index t = 0; t < marked.rows(); ++t) {
    const Eigen::VectorXd g = marked.row(t).transpose();
    const Message truth = row_message(msgs, t);
    correct += bit_accuracy(decode_sign(g), truth);
    if (dict) dict_correct += bit_accuracy(decode_dict(g, *dict), truth);
  }
  r.empirical_BA = correct / static_cast<double>(trials);
  if (dict) {
    r.dict_BA = dict_correct / static_cast<double>(trials);
    const double ratio = r.sigma > 0.0 ? r.mu / r.sigma : std::numeric_limits<double>::infinity();
    r.dict_bound = 1.0 - static_cast<double>(dict->size() - 1) *
                             normal_cdf(-ratio * std::sqrt(static_cast<double>(dict->d_min())));
  }
  return r;
}

double oracle_tpr(std::size_t bits, double mu, double sigma, double alpha, std::size_t trials,
                  SeededRng& rng) {
  std::vector<double> null(trials), alt(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t k = 0; k < bits; ++k) {
      s0 += std::abs(sigma * rng.normal());
      s1 += std::abs(mu * rng.sign() + sigma * rng.normal());
    }
    null[t] = s0;
    alt[t] = s1;
  }
  return exceed_rate(alt, calibrate_threshold(null, alpha));
}

Dictionary generate_dictionary(std::size_t bits, std::size_t size, std::size_t target_d_min,
                               SeededRng& rng, int attempts) {
  if (size < 2 || target_d_min < 1 || target_d_min > bits)
    throw std::invalid_argument("dictionary generation needs size >= 2 and 1 <= d_min <= K");
  for (int a = 0; a < attempts; ++a) {
    std::vector<Message> chosen;
    int misses = 0;
    while (chosen.size() < size && misses < 10000) {
      Message m = sample_uniform_message(bits, rng);
      const bool ok = std::all_of(chosen.begin(), chosen.end(),
                                  [&](const Message& c) { return hamming(c, m) >= target_d_min; });
      if (ok) {
        chosen.push_back(std::move(m));
        misses = 0;
      } else {
        ++misses;
      }
    }
    if (chosen.size() == size && d_min(chosen) == target_d_min) return Dictionary(std::move(chosen));
  }
  throw std::runtime_error("could not generate a dictionary of size " + std::to_string(size) +
                           " with d_min " + std::to_string(target_d_min));
}

bool TheoryRun::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const TheoryCheck& c) { return c.passed; });
}

nlohmann::json to_json(const TheoryRun& run) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : run.checks)
    checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"passed", c.passed},
                      {"note", c.note}});
  return {{"config", run.config},
          {"report", to_json(run.report)},
          {"degenerate", run.degenerate},
          {"checks", checks},
          {"passed", run.passed()}};
}

LowDimModel harness_model(const HarnessConfig& cfg) {
  SeededRng rng(cfg.seed, 1);
  return LowDimModel::random(cfg.D, cfg.d, cfg.latent_variance, cfg.sigma_eps, rng);
}

TrainResult train_harness(const HarnessConfig& cfg, const LowDimModel& model) {
  if (cfg.oracle) throw std::invalid_argument("oracle mode does not train");
  SeededRng data_rng(cfg.seed, 2);
  const Eigen::MatrixXd data = sample_matrix(model, cfg.n, data_rng);
  return train(data, Shape{1, 1, cfg.D}, ValueRange::unbounded, cfg.train_config());
}

TheoryRun run_theory_check(const HarnessConfig& cfg) {
  cfg.validate();
  TheoryRun run;
  run.config = cfg;
  const LowDimModel model = harness_model(cfg);
  const PopulationCurve curve = cfg.curve();
  const MarginLoss loss{cfg.loss};
  run.degenerate = cfg.beta_theory > static_cast<double>(cfg.K) * loss.lipschitz();
  const auto violation = uniqueness_violation(curve);

  auto check = [&](std::string name, double value, double limit, bool ok, std::string note = {}) {
    run.checks.push_back({std::move(name), value, limit, ok, std::move(note)});
  };

  Eigen::MatrixXd w;
  if (cfg.oracle) {
    if (violation) throw std::invalid_argument("oracle watermark needs a unique r*: " + *violation);
    SeededRng rng(cfg.seed, 4);
    w = make_oracle_watermark(model, cfg.K, solve_r_star(curve).r_star, rng);
  } else {
    w = train_harness(cfg, model).watermark.vectors();
  }
  run.report = verify_geometry(w, model, curve, cfg.n, cfg.delta);
  TheoryReport& r = run.report;

  if (run.degenerate) {
    check("trivial_minimizer_norm", r.max_norm, cfg.degenerate_norm, r.max_norm <= cfg.degenerate_norm,
          "beta exceeds K*L; the minimizer is w = 0 and detection checks are skipped");
    return run;
  }
  const double R2 = std::pow(feasible_ball_radius(loss, cfg.K, cfg.beta_theory), 2);
  const double total = w.squaredNorm();
  check("feasible_ball", total, R2, total <= R2 * (1.0 + 1e-9));
  check("eps_n_delta_finite", r.eps_n_delta, 0.0, std::isfinite(r.eps_n_delta) && r.eps_n_delta > 0.0);
  if (violation) {
    check("r_star_unique", 0.0, 0.0, false, *violation);
    return run;
  }
  const double tight = 1e-9;
  const double leak_limit = cfg.oracle ? tight : cfg.max_leak;
  const double cos_limit = cfg.oracle ? tight : cfg.max_cos;
  const double rad_limit = cfg.oracle ? tight : cfg.max_radius_rel;
  check("subspace_leak", r.max_subspace_leak, leak_limit, r.max_subspace_leak <= leak_limit);
  check("pairwise_cos", r.max_pairwise_cos, cos_limit, r.max_pairwise_cos <= cos_limit);
  check("radius_rel_error", r.radius_rel_error, rad_limit, r.radius_rel_error <= rad_limit);
  check("nontrivial", r.min_sq_norm, r.r_star / 2.0, r.min_sq_norm >= r.r_star / 2.0);

  if (!(cfg.sigma_eps > 0.0)) {
    check("detection", 0.0, 0.0, true, "sigma_eps = 0; detection checks skipped");
    return run;
  }
  SeededRng rng(cfg.seed, 3);
  TheoryReport det = verify_detection(w, model, cfg.alpha, cfg.trials, rng);
  r.mu = det.mu;
  r.sigma = det.sigma;
  r.empirical_BA = det.empirical_BA;
  r.predicted_BA = det.predicted_BA;
  r.rates = det.rates;
  const double fpr = r.rates.front().fpr;
  check("fpr_at_alpha", fpr, cfg.fpr_band, std::abs(fpr - cfg.alpha) <= cfg.fpr_band);
  // Convergence of bit accuracy to the oracle value Phi(r* / (sigma_eps sqrt(r*))).
  const double oracle_ba = normal_cdf(std::sqrt(r.r_star) / cfg.sigma_eps);
  check("bit_accuracy", *r.empirical_BA, oracle_ba, std::abs(*r.empirical_BA - oracle_ba) <= 0.01);
  return run;
}

}  // namespace addmark
