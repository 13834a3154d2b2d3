// addmark: train, embed, detect and evaluate additive multi-bit watermarks.
//
// Exit codes: 0 success, 1 verification failure (or diverged training),
// 2 usage or input error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "addmark/codec.hpp"
#include "addmark/experiments.hpp"
#include "addmark/image_io.hpp"
#include "addmark/metrics.hpp"
#include "addmark/parallel.hpp"
#include "addmark/synthetic.hpp"
#include "addmark/theory.hpp"
#include "addmark/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace addmark;

namespace {

constexpr const char* kVersion = ADDMARK_VERSION;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  int threads = 0;
  std::string out;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
}

void echo(const std::string& command, const json& resolved) {
  std::cerr << json{{"addmark_version", kVersion}, {"command", command}, {"config", resolved}}.dump()
            << '\n';
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(c.out);
  if (!out) throw UsageError("cannot write " + c.out);
  out << text << '\n';
}

std::vector<ImageTensor> load_dir(const std::string& dir, ValueRange range, std::size_t limit = 0) {
  if (!fs::is_directory(dir)) throw UsageError("no such directory: " + dir);
  std::vector<ImageTensor> images;
  for (const auto& p : list_images(dir)) {
    if (limit && images.size() == limit) break;
    images.push_back(read_image(p, range));
  }
  if (images.empty()) throw UsageError("no readable images in " + dir);
  return images;
}

ImageTensor load_image(const std::string& path, ValueRange range) {
  if (!fs::exists(path)) throw UsageError("no such file: " + path);
  return read_image(path, range);
}

WatermarkSet load_wm(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("no such file: " + path);
  return load_watermark(path);
}

std::optional<Dictionary> load_dict(const std::string& path, std::size_t bits) {
  if (path.empty()) return std::nullopt;
  if (!fs::exists(path)) throw UsageError("no such file: " + path);
  Dictionary d = load_dictionary(path);
  if (d.bits() != bits)
    throw UsageError("dictionary has K=" + std::to_string(d.bits()) + " but the watermark has K=" +
                     std::to_string(bits));
  return d;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--config", c.config, "JSON config file (flags override it)");
  app->add_option("--threads", c.threads, "Worker threads (default: ADDMARK_THREADS or 1)");
  app->add_option("--out", c.out, "Output path");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::optional<std::size_t> bits;
  std::optional<double> beta_alg;
  std::optional<std::string> loss;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr_scale;
  std::optional<double> learning_rate;
  std::optional<std::string> map_kind;
  std::string pool;
  std::string features = "downsample";
  int feature_dim = 48;
  std::string log;
  std::string range = "unit";
};

int cmd_train(const Common& c, const TrainArgs& a) {
  json cfg_json = read_config(c.config);
  TrainConfig cfg = cfg_json.get<TrainConfig>();
  if (a.bits) cfg.bits = *a.bits;
  if (a.beta_alg) cfg.beta_alg = *a.beta_alg;
  if (a.loss) cfg.loss.kind = parse_loss_kind(*a.loss);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr_scale) cfg.lr_scale = *a.lr_scale;
  if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
  if (a.map_kind) cfg.map_kind = parse_map_kind(*a.map_kind);
  if (a.pool == "default") cfg.distortion_pool = default_pool();
  else if (a.pool == "identity") cfg.distortion_pool = {DistortionSpec::make(DistortionKind::identity)};
  else if (!a.pool.empty()) throw UsageError("--pool must be 'default' or 'identity'");
  cfg.seed = c.seed;
  if (c.out.empty()) throw UsageError("--out is required for train");
  cfg.validate();

  const auto images = load_dir(a.data, parse_value_range(a.range));
  std::optional<FeatureExtractor> psi;
  if (cfg.map_kind == MapKind::affine) {
    const Shape s = images.front().shape();
    if (a.features == "downsample")
      psi = FeatureExtractor::identity_downsample(s, std::min(4, s.height), std::min(4, s.width));
    else if (a.features == "projection")
      psi = FeatureExtractor::random_projection(s, a.feature_dim, c.seed);
    else
      throw UsageError("--features must be 'downsample' or 'projection'");
  }
  json resolved = cfg;
  resolved["data"] = a.data;
  resolved["n"] = images.size();
  resolved["out"] = c.out;
  echo("train", resolved);

  const TrainResult r = train(images, cfg, psi ? &*psi : nullptr);
  save_watermark(c.out, r.watermark);
  const std::string log = a.log.empty() ? c.out + ".log.csv" : a.log;
  write_training_log(log, r.log);
  std::cout << json{{"watermark", c.out},
                    {"log", log},
                    {"steps", r.steps},
                    {"base_learning_rate", r.base_learning_rate},
                    {"mean_sq_norm", r.watermark.squared_norms().mean()},
                    {"projected", r.projected}}
                   .dump()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------- embed

struct EmbedArgs {
  std::string image;
  std::string watermark;
  std::string message;
  bool random = false;
  bool no_clip = false;
};

int cmd_embed(const Common& c, const EmbedArgs& a) {
  if (c.out.empty()) throw UsageError("--out is required for embed");
  const WatermarkSet w = load_wm(a.watermark);
  Message m;
  if (a.random) {
    SeededRng rng(c.seed, 0xE3B);
    m = sample_uniform_message(w.bits(), rng);
  } else {
    if (a.message.empty()) throw UsageError("give --message or --random");
    try {
      m = Message::parse(a.message);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("malformed message: ") + e.what());
    }
  }
  if (m.size() != w.bits())
    throw UsageError("message has " + std::to_string(m.size()) + " bits but the watermark has K=" +
                     std::to_string(w.bits()));
  const ImageTensor x = load_image(a.image, w.value_range());
  const bool raw = fs::path(c.out).extension() == ".addt";
  const bool clip = !raw && !a.no_clip;
  echo("embed", {{"image", a.image}, {"watermark", a.watermark}, {"message", m.to_string()},
                 {"clip", clip}, {"out", c.out}, {"seed", c.seed}});
  ImageTensor marked = embed(x, m, w, clip);
  if (!raw && !clip) marked = clamped(marked, x.value_range());  // displayable formats are 8-bit
  write_image(c.out, marked);
  const double p = psnr(x, marked, range_max(x.value_range()));
  std::cout << json{{"out", c.out}, {"message", m.to_string()}, {"psnr", format_psnr(p)}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- detect / decode / calibrate

struct DetectArgs {
  std::string image;
  std::string watermark;
  std::string dictionary;
  std::optional<double> threshold;
  std::optional<double> alpha;
  std::string calibration_dir;
};

std::vector<double> null_scores(const WatermarkSet& w, const std::string& dir, const Dictionary* dict) {
  std::vector<double> scores;
  for (const auto& x : load_dir(dir, w.value_range())) {
    const Eigen::VectorXd g = inner_products(x, w);
    scores.push_back(dict ? statistic_S_dict(g, *dict).first : statistic_S(g));
  }
  return scores;
}

int cmd_detect(const Common& c, const DetectArgs& a, bool need_threshold, const std::string& name) {
  const WatermarkSet w = load_wm(a.watermark);
  const auto dict = load_dict(a.dictionary, w.bits());
  double threshold = std::numeric_limits<double>::infinity();
  if (a.threshold) {
    threshold = *a.threshold;
  } else if (a.alpha) {
    if (a.calibration_dir.empty()) throw UsageError("--alpha needs --calibration-dir");
    threshold = calibrate_threshold(null_scores(w, a.calibration_dir, dict ? &*dict : nullptr), *a.alpha);
  } else if (need_threshold) {
    throw UsageError("detect needs --threshold or --alpha with --calibration-dir");
  }
  const ImageTensor x = load_image(a.image, w.value_range());
  echo(name, {{"image", a.image},
              {"watermark", a.watermark},
              {"dictionary", a.dictionary},
              {"threshold", std::isfinite(threshold) ? json(threshold) : json(nullptr)},
              {"alpha", a.alpha ? json(*a.alpha) : json(nullptr)}});
  const DetectionReport r = detect(x, w, threshold, dict ? &*dict : nullptr);
  emit(c, to_json(r).dump());
  return 0;
}

struct CalibrateArgs {
  std::string watermark;
  std::string dictionary;
  std::string calibration_dir;
  double alpha = 0.05;
};

int cmd_calibrate(const Common& c, const CalibrateArgs& a) {
  const WatermarkSet w = load_wm(a.watermark);
  const auto dict = load_dict(a.dictionary, w.bits());
  echo("calibrate", {{"watermark", a.watermark}, {"dictionary", a.dictionary},
                     {"calibration_dir", a.calibration_dir}, {"alpha", a.alpha}});
  const auto scores = null_scores(w, a.calibration_dir, dict ? &*dict : nullptr);
  const double t = calibrate_threshold(scores, a.alpha);
  emit(c, json{{"threshold", t}, {"alpha", a.alpha}, {"n", scores.size()},
               {"statistic", dict ? "S_dict" : "S"}}.dump());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string watermark;
  std::string data;
  bool experiment = false;
  bool auroc = true;
  double noise_sigma = 0.02;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  if (a.experiment) {
    ImageExperimentConfig cfg = read_config(c.config).get<ImageExperimentConfig>();
    cfg.seed = c.seed;
    echo("eval", cfg);
    const ImageExperimentResult r = run_image_experiment(cfg);
    emit(c, to_json(r).dump(2));
    return 0;
  }
  if (a.watermark.empty() || a.data.empty())
    throw UsageError("eval needs --watermark and --data (or --experiment)");
  const WatermarkSet w = load_wm(a.watermark);
  const auto images = load_dir(a.data, w.value_range());
  json cfg = read_config(c.config);
  const auto pool = cfg.contains("eval_pool") ? cfg.at("eval_pool").get<std::vector<DistortionSpec>>()
                                              : default_pool();
  echo("eval", {{"watermark", a.watermark}, {"data", a.data}, {"eval_pool", pool},
                {"noise_check_sigma", a.noise_sigma}, {"auroc", a.auroc}, {"seed", c.seed}});
  const ImageExperimentResult r =
      evaluate_watermark(w, images, pool, a.noise_sigma, a.auroc ? &images : nullptr, c.seed);
  emit(c, to_json(r).dump(2));
  return 0;
}

// ---------------------------------------------------------------- theory-check

struct TheoryArgs {
  bool oracle = false;
  std::optional<double> beta;
  std::optional<std::size_t> n;
  std::optional<int> epochs;
};

int cmd_theory(const Common& c, const TheoryArgs& a) {
  HarnessConfig cfg = read_config(c.config).get<HarnessConfig>();
  cfg.seed = c.seed;
  if (a.oracle) cfg.oracle = true;
  if (a.beta) cfg.beta_theory = *a.beta;
  if (a.n) cfg.n = *a.n;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  echo("theory-check", cfg);
  const TheoryRun run = run_theory_check(cfg);
  emit(c, to_json(run).dump(2));
  if (!run.passed()) {
    std::ostringstream os;
    os << "failed checks:";
    for (const auto& ch : run.checks)
      if (!ch.passed) os << ' ' << ch.name << " (" << ch.value << " vs " << ch.limit << ")";
    throw CheckFailed(os.str());
  }
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string parameter = "beta";
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  int size = 32;
};

int cmd_sweep(const Common& c, const SweepArgs& a) {
  if (c.out.empty()) throw UsageError("--out is required for sweep (CSV path)");
  const json cfg_json = read_config(c.config);
  ImageExperimentConfig cfg = cfg_json.get<ImageExperimentConfig>();
  if (!cfg_json.contains("shape")) {
    cfg.shape = {3, a.size, a.size};
    // Same beta_theory as the reference 64x64 setting.
    if (!cfg_json.contains("train"))
      cfg.train.beta_alg *= static_cast<double>(cfg.shape.size()) / (3.0 * 64.0 * 64.0);
  }
  std::vector<double> values = a.values;
  if (values.empty())
    values = a.parameter == "beta" ? std::vector<double>{0.005, 0.05, 0.5} : std::vector<double>{10, 100, 1000};
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds = {c.seed, c.seed + 1, c.seed + 2};
  echo("sweep", {{"parameter", a.parameter}, {"values", values}, {"seeds", seeds}, {"base", cfg}});
  const auto rows = sweep(a.parameter, values, cfg, seeds);
  write_sweep_csv(c.out, rows);
  json med = json::array();
  for (const auto& m : sweep_medians(rows))
    med.push_back({{"value", m.value}, {"psnr", format_psnr(m.psnr)}, {"avg_bit_accuracy", m.avg_bit_accuracy}});
  std::cout << json{{"csv", c.out}, {"medians", med}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string data;
  std::string watermark;
  std::size_t synthetic = 0;
  int size = 256;
  std::size_t bits = 48;
  std::size_t batch = 64;
};

int cmd_bench(const Common& c, const BenchArgs& a) {
  std::vector<ImageTensor> images;
  std::optional<WatermarkSet> w;
  if (!a.watermark.empty()) w = load_wm(a.watermark);
  if (!a.data.empty()) {
    images = load_dir(a.data, w ? w->value_range() : ValueRange::unit);
  } else if (a.synthetic > 0) {
    images = synthetic_images(a.synthetic, {3, a.size, a.size}, c.seed);
  } else {
    throw UsageError("bench needs --data or --synthetic N");
  }
  if (!w) {
    const Shape s = images.front().shape();
    SeededRng rng(c.seed, 0xB3);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(a.bits), static_cast<Eigen::Index>(s.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 0.01 * rng.normal();
    w = WatermarkSet(std::move(v), s, ValueRange::unit);
  }
  if (images.size() < a.batch)
    throw UsageError("bench needs at least " + std::to_string(a.batch) + " images, got " +
                     std::to_string(images.size()));
  echo("bench", {{"images", images.size()}, {"batch", a.batch}, {"K", w->bits()}, {"D", w->dim()},
                 {"seed", c.seed}});
  const BenchResult b = run_bench(images, *w, a.batch, c.seed);
  std::cout << "op      ms/image   stderr\n";
  std::printf("embed   %8.4f   %8.4f\n", b.embed_mean_ms, b.embed_se_ms);
  std::printf("decode  %8.4f   %8.4f\n", b.decode_mean_ms, b.decode_se_ms);
  std::fflush(stdout);
  if (!c.out.empty()) emit(c, to_json(b).dump(2));
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::size_t count = 64;
  int size = 64;
  int channels = 3;
  double smoothness = FieldParams{}.smoothness;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  if (c.out.empty()) throw UsageError("--out is required for synth (directory)");
  FieldParams fp;
  fp.smoothness = a.smoothness;
  echo("synth", {{"count", a.count}, {"shape", {a.channels, a.size, a.size}}, {"smoothness", a.smoothness},
                 {"seed", c.seed}, {"out", c.out}});
  write_synthetic_dir(c.out, synthetic_images(a.count, {a.channels, a.size, a.size}, c.seed, fp));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"addmark: additive multi-bit image watermarking"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Learn K watermark vectors from a directory of images");
  add_common(train_cmd, common);
  train_cmd->add_option("data", ta.data, "Training image directory")->required();
  train_cmd->add_option("--bits,-K", ta.bits, "Message length K");
  train_cmd->add_option("--beta-alg", ta.beta_alg, "Penalty weight (divided by D)");
  train_cmd->add_option("--loss", ta.loss, "hinge | logistic");
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--batch-size", ta.batch_size);
  train_cmd->add_option("--lr-scale", ta.lr_scale, "Learning rate = lr_scale * D / mean ||x||^2");
  train_cmd->add_option("--learning-rate", ta.learning_rate, "Explicit base learning rate");
  train_cmd->add_option("--map-kind", ta.map_kind, "constant | affine");
  train_cmd->add_option("--pool", ta.pool, "default | identity");
  train_cmd->add_option("--features", ta.features, "downsample | projection (affine maps)");
  train_cmd->add_option("--feature-dim", ta.feature_dim);
  train_cmd->add_option("--log", ta.log, "Training log CSV (default <out>.log.csv)");
  train_cmd->add_option("--value-range", ta.range, "unit | byte");

  EmbedArgs ea;
  auto* embed_cmd = app.add_subcommand("embed", "Add a message to an image");
  add_common(embed_cmd, common);
  embed_cmd->add_option("image", ea.image)->required();
  embed_cmd->add_option("--watermark,-w", ea.watermark)->required();
  embed_cmd->add_option("--message,-m", ea.message, "'+-' or '10' string of length K");
  embed_cmd->add_flag("--random", ea.random, "Draw a uniform message from --seed");
  embed_cmd->add_flag("--no-clip", ea.no_clip, "Skip clipping (only meaningful for .addt output)");

  DetectArgs da;
  auto* detect_cmd = app.add_subcommand("detect", "Test an image for the watermark");
  auto* decode_cmd = app.add_subcommand("decode", "Recover the message from an image");
  for (auto* sub : {detect_cmd, decode_cmd}) {
    add_common(sub, common);
    sub->add_option("image", da.image)->required();
    sub->add_option("--watermark,-w", da.watermark)->required();
    sub->add_option("--dictionary,-d", da.dictionary);
    sub->add_option("--threshold", da.threshold);
    sub->add_option("--alpha", da.alpha);
    sub->add_option("--calibration-dir", da.calibration_dir);
  }

  CalibrateArgs ca;
  auto* calib_cmd = app.add_subcommand("calibrate", "Threshold from unwatermarked images");
  add_common(calib_cmd, common);
  calib_cmd->add_option("--watermark,-w", ca.watermark)->required();
  calib_cmd->add_option("--calibration-dir", ca.calibration_dir)->required();
  calib_cmd->add_option("--alpha", ca.alpha);
  calib_cmd->add_option("--dictionary,-d", ca.dictionary);

  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR, bit accuracy per distortion, AUROC");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--watermark,-w", va.watermark);
  eval_cmd->add_option("--data", va.data);
  eval_cmd->add_flag("--experiment", va.experiment, "Train and evaluate on synthetic fields");
  eval_cmd->add_flag("!--no-auroc", va.auroc);
  eval_cmd->add_option("--noise-sigma", va.noise_sigma);

  TheoryArgs tha;
  auto* theory_cmd = app.add_subcommand("theory-check", "Gaussian-model verification suite");
  add_common(theory_cmd, common);
  theory_cmd->add_flag("--oracle", tha.oracle, "Use the oracle watermark instead of training");
  theory_cmd->add_option("--beta", tha.beta, "beta_theory");
  theory_cmd->add_option("--n", tha.n);
  theory_cmd->add_option("--epochs", tha.epochs);

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep", "Retrain over a beta or n grid");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--param", sa.parameter)->check(CLI::IsMember({"beta", "n"}));
  sweep_cmd->add_option("--values", sa.values)->delimiter(',');
  sweep_cmd->add_option("--seeds", sa.seeds)->delimiter(',');
  sweep_cmd->add_option("--size", sa.size, "Image side for synthetic fields");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Embed/decode timing, ms per image");
  add_common(bench_cmd, common);
  bench_cmd->add_option("--data", ba.data);
  bench_cmd->add_option("--watermark,-w", ba.watermark);
  bench_cmd->add_option("--synthetic", ba.synthetic, "Generate N synthetic images instead of --data");
  bench_cmd->add_option("--size", ba.size);
  bench_cmd->add_option("--bits,-K", ba.bits);
  bench_cmd->add_option("--batch", ba.batch);

  SynthArgs ya;
  auto* synth_cmd = app.add_subcommand("synth", "Write smoothed Gaussian field images");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--count", ya.count);
  synth_cmd->add_option("--size", ya.size);
  synth_cmd->add_option("--channels", ya.channels);
  synth_cmd->add_option("--smoothness", ya.smoothness);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);
    if (*train_cmd) return cmd_train(common, ta);
    if (*embed_cmd) return cmd_embed(common, ea);
    if (*detect_cmd) return cmd_detect(common, da, true, "detect");
    if (*decode_cmd) return cmd_detect(common, da, false, "decode");
    if (*calib_cmd) return cmd_calibrate(common, ca);
    if (*eval_cmd) return cmd_eval(common, va);
    if (*theory_cmd) return cmd_theory(common, tha);
    if (*sweep_cmd) return cmd_sweep(common, sa);
    if (*bench_cmd) return cmd_bench(common, ba);
    if (*synth_cmd) return cmd_synth(common, ya);
  } catch (const CheckFailed& e) {
    std::cerr << "addmark: " << e.what() << '\n';
    return 1;
  } catch (const TrainingDiverged& e) {
    std::cerr << "addmark: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "addmark: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
