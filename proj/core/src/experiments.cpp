#include "addmark/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "addmark/codec.hpp"
#include "addmark/metrics.hpp"
#include "addmark/parallel.hpp"

namespace addmark {

namespace {

constexpr std::uint64_t kTestStream = 0x7E57;
constexpr std::uint64_t kAurocStream = 0xA0C;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(seed ^ splitmix64(tag)); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

TrainConfig reference_image_train_config() {
  TrainConfig t;
  t.bits = 16;
  t.loss = MarginLoss{LossKind::logistic};
  t.beta_alg = 4200.0;
  t.epochs = 100;
  t.lr_scale = 0.001;
  t.init_norm = 0.85;
  t.distortion_pool = default_pool();
  return t;
}

void to_json(nlohmann::json& j, const ImageExperimentConfig& c) {
  j = nlohmann::json{{"shape", {c.shape.channels, c.shape.height, c.shape.width}},
                     {"n_train", c.n_train},
                     {"n_test", c.n_test},
                     {"auroc_pairs", c.auroc_pairs},
                     {"field", {{"smoothness", c.field.smoothness},
                                {"contrast", c.field.contrast},
                                {"channel_mix", c.field.channel_mix}}},
                     {"train", c.train},
                     {"eval_pool", c.eval_pool},
                     {"noise_check_sigma", c.noise_check_sigma},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ImageExperimentConfig& c) {
  const ImageExperimentConfig d;
  if (j.contains("shape")) {
    const auto& s = j.at("shape");
    c.shape = {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()};
  }
  c.n_train = j.value("n_train", d.n_train);
  c.n_test = j.value("n_test", d.n_test);
  c.auroc_pairs = j.value("auroc_pairs", d.auroc_pairs);
  if (j.contains("field")) {
    const auto& f = j.at("field");
    c.field.smoothness = f.value("smoothness", d.field.smoothness);
    c.field.contrast = f.value("contrast", d.field.contrast);
    c.field.channel_mix = f.value("channel_mix", d.field.channel_mix);
  }
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("eval_pool")) c.eval_pool = j.at("eval_pool").get<std::vector<DistortionSpec>>();
  c.noise_check_sigma = j.value("noise_check_sigma", d.noise_check_sigma);
  c.seed = j.value("seed", d.seed);
}

nlohmann::json to_json(const ImageExperimentResult& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& s : r.per_distortion) per[s.label] = s.bit_accuracy;
  return {{"psnr", format_psnr(r.psnr)},
          {"psnr_db", std::isfinite(r.psnr) ? nlohmann::json(r.psnr) : nlohmann::json(nullptr)},
          {"bit_accuracy", per},
          {"avg_bit_accuracy", r.avg_bit_accuracy},
          {"noise_check_bit_accuracy", r.noise_check_bit_accuracy},
          {"auroc", r.auroc ? nlohmann::json(*r.auroc) : nlohmann::json(nullptr)},
          {"mean_sq_norm", r.mean_sq_norm},
          {"train_seconds", r.train_seconds}};
}

ImageExperimentResult evaluate_watermark(const WatermarkSet& w, const std::vector<ImageTensor>& test,
                                         const std::vector<DistortionSpec>& pool,
                                         double noise_check_sigma,
                                         const std::vector<ImageTensor>* auroc_images,
                                         std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("evaluation needs at least one test image");
  validate_pool(pool);
  ImageExperimentResult r;
  r.watermark = w;
  r.mean_sq_norm = w.squared_norms().mean();
  const std::size_t n = test.size();

  std::vector<Message> messages;
  std::vector<ImageTensor> marked;
  SeededRng msg_rng(seed, 1);
  double psnr_sum = 0.0;
  bool any_infinite = false;
  for (const auto& x : test) {
    messages.push_back(sample_uniform_message(w.bits(), msg_rng));
    marked.push_back(embed(x, messages.back(), w));
    const double p = psnr(x, marked.back(), range_max(x.value_range()));
    if (std::isfinite(p)) psnr_sum += p; else any_infinite = true;
  }
  r.psnr = any_infinite ? kPsnrInfinity : psnr_sum / static_cast<double>(n);

  std::vector<DistortionSpec> specs = pool;
  auto noise = DistortionSpec::make(DistortionKind::gaussian_noise);
  noise.noise_sigma = noise_check_sigma;
  specs.push_back(noise);
  std::vector<double> ba(specs.size(), 0.0);
  parallel_for(specs.size(), [&](std::size_t s) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      SeededRng rng(seed, (s + 2) * 1000003 + i);
      const ImageTensor out = apply(specs[s], marked[i], rng);
      total += bit_accuracy(decode_sign(inner_products(out, w)), messages[i]);
    }
    ba[s] = total / static_cast<double>(n);
  });
  double weighted = 0.0;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    r.per_distortion.push_back({pool[s].label(), ba[s]});
    weighted += ba[s];
  }
  r.avg_bit_accuracy = weighted / static_cast<double>(pool.size());
  r.noise_check_bit_accuracy = ba.back();

  if (auroc_images && !auroc_images->empty()) {
    std::vector<ScoreSample> samples;
    SeededRng rng(seed, 2);
    for (const auto& x : *auroc_images) {
      samples.push_back({statistic_S(inner_products(x, w)), ScoreLabel::null, std::nullopt});
      Message m = sample_uniform_message(w.bits(), rng);
      const double s = statistic_S(inner_products(embed(x, m, w), w));
      samples.push_back({s, ScoreLabel::watermarked, std::move(m)});
    }
    r.auroc = auroc(samples);
  }
  return r;
}

ImageExperimentResult run_image_experiment(const ImageExperimentConfig& cfg) {
  const auto train_images = synthetic_images(cfg.n_train, cfg.shape, cfg.seed, cfg.field);
  const auto test_images = synthetic_images(cfg.n_test, cfg.shape, derived_seed(cfg.seed, kTestStream), cfg.field);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const auto start = std::chrono::steady_clock::now();
  TrainResult trained = train(train_images, tc);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto auroc_images =
      synthetic_images(cfg.auroc_pairs, cfg.shape, derived_seed(cfg.seed, kAurocStream), cfg.field);
  ImageExperimentResult r = evaluate_watermark(trained.watermark, test_images, cfg.eval_pool,
                                               cfg.noise_check_sigma, &auroc_images, cfg.seed);
  r.train_seconds = seconds;
  return r;
}

std::vector<SweepRow> sweep(const std::string& parameter, const std::vector<double>& values,
                            const ImageExperimentConfig& base, const std::vector<std::uint64_t>& seeds) {
  if (values.empty() || seeds.empty()) throw std::invalid_argument("sweep grid and seeds must be nonempty");
  if (parameter != "beta" && parameter != "n")
    throw std::invalid_argument("sweep parameter must be 'beta' or 'n'");
  const auto base_batches = [&](std::size_t n) {
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(base.train.batch_size), n);
    return (n + b - 1) / b;
  };
  const std::size_t base_steps = base_batches(base.n_train) * static_cast<std::size_t>(base.train.epochs);
  std::vector<SweepRow> rows;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      ImageExperimentConfig cfg = base;
      cfg.seed = seed;
      cfg.auroc_pairs = 0;
      if (parameter == "beta") {
        if (!(v > 0.0)) throw std::invalid_argument("beta multipliers must be positive");
        cfg.train.beta_alg = base.train.beta_alg * v;
      } else {
        if (!(v >= 1.0)) throw std::invalid_argument("n values must be at least 1");
        cfg.n_train = static_cast<std::size_t>(std::llround(v));
        // Keep the number of SGD steps comparable across n.
        const std::size_t per_epoch = base_batches(cfg.n_train);
        cfg.train.epochs = std::max<int>(base.train.epochs,
                                         static_cast<int>((base_steps + per_epoch - 1) / per_epoch));
      }
      const ImageExperimentResult r = run_image_experiment(cfg);
      rows.push_back({parameter, v, seed, r.psnr, r.avg_bit_accuracy});
    }
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "parameter,value,seed,psnr,avg_bit_accuracy\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.parameter << ',' << r.value << ',' << r.seed << ',' << format_psnr(r.psnr) << ','
        << r.avg_bit_accuracy << '\n';
}

std::vector<SweepMedian> sweep_medians(const std::vector<SweepRow>& rows) {
  std::vector<double> order;
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : rows) {
    if (!groups.contains(r.value)) order.push_back(r.value);
    groups[r.value].first.push_back(r.psnr);
    groups[r.value].second.push_back(r.avg_bit_accuracy);
  }
  std::vector<SweepMedian> out;
  for (double v : order) out.push_back({v, median(groups[v].first), median(groups[v].second)});
  return out;
}

nlohmann::json to_json(const BenchResult& b) {
  return {{"images", b.images},
          {"batch_size", b.batch_size},
          {"embed_ms_per_image", {{"mean", b.embed_mean_ms}, {"se", b.embed_se_ms}}},
          {"decode_ms_per_image", {{"mean", b.decode_mean_ms}, {"se", b.decode_se_ms}}},
          {"embed_total_s", b.embed_total_s},
          {"decode_total_s", b.decode_total_s}};
}

BenchResult run_bench(const std::vector<ImageTensor>& images, const WatermarkSet& w,
                      std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0 || images.size() < batch_size)
    throw std::invalid_argument("bench needs at least " + std::to_string(batch_size) + " images");
  using clock = std::chrono::steady_clock;
  BenchResult b;
  b.batch_size = batch_size;
  const std::size_t batches = images.size() / batch_size;
  b.images = batches * batch_size;
  SeededRng rng(seed, 0xBE7C);
  std::vector<Message> messages;
  for (std::size_t i = 0; i < b.images; ++i) messages.push_back(sample_uniform_message(w.bits(), rng));

  std::vector<ImageTensor> marked(batch_size);
  std::vector<double> embed_obs, decode_obs;
  for (std::size_t k = 0; k < batches; ++k) {
    auto t0 = clock::now();
    for (std::size_t j = 0; j < batch_size; ++j)
      marked[j] = embed(images[k * batch_size + j], messages[k * batch_size + j], w);
    auto t1 = clock::now();
    for (std::size_t j = 0; j < batch_size; ++j)
      if (decode_sign(inner_products(marked[j], w)).size() != w.bits()) throw std::logic_error("decode");
    auto t2 = clock::now();
    const double per = 1000.0 / static_cast<double>(batch_size);
    embed_obs.push_back(std::chrono::duration<double>(t1 - t0).count() * per);
    decode_obs.push_back(std::chrono::duration<double>(t2 - t1).count() * per);
  }
  auto summarize = [](const std::vector<double>& v, double& mean, double& se, double& total_s,
                      std::size_t per_batch) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
    total_s = mean * static_cast<double>(v.size() * per_batch) / 1000.0;
  };
  summarize(embed_obs, b.embed_mean_ms, b.embed_se_ms, b.embed_total_s, batch_size);
  summarize(decode_obs, b.decode_mean_ms, b.decode_se_ms, b.decode_total_s, batch_size);
  return b;
}

}  // namespace addmark
