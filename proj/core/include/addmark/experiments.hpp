#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "addmark/distortions.hpp"
#include "addmark/synthetic.hpp"
#include "addmark/trainer.hpp"

namespace addmark {

/// Reference trainer settings for 64x64x3 synthetic fields: K=16, logistic
/// loss, beta_alg = 4200, full default distortion pool.
TrainConfig reference_image_train_config();

/// Train on synthetic fields, then evaluate PSNR, bit accuracy under every
/// distortion of `eval_pool`, and the no-dictionary AUROC of S.
struct ImageExperimentConfig {
  Shape shape{3, 64, 64};
  std::size_t n_train = 500;
  std::size_t n_test = 200;
  /// Clean images scored with and without a mark; 0 skips the AUROC.
  std::size_t auroc_pairs = 2000;
  FieldParams field;
  TrainConfig train = reference_image_train_config();
  std::vector<DistortionSpec> eval_pool = default_pool();
  /// Extra noise strength reported on its own (unit-range sigma).
  double noise_check_sigma = 0.02;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ImageExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ImageExperimentConfig& cfg);

struct DistortionScore {
  std::string label;
  double bit_accuracy = 0.0;
};

struct ImageExperimentResult {
  double psnr = 0.0;  // mean over test images, unclipped marks
  std::vector<DistortionScore> per_distortion;
  double avg_bit_accuracy = 0.0;
  double noise_check_bit_accuracy = 0.0;
  std::optional<double> auroc;
  double mean_sq_norm = 0.0;
  double train_seconds = 0.0;
  WatermarkSet watermark;
};

nlohmann::json to_json(const ImageExperimentResult& r);

/// Evaluates an existing watermark on `test` images (messages and distortion
/// randomness from `seed`). When `auroc_images` is given, each image is
/// scored once unmarked and once marked with a fresh message.
ImageExperimentResult evaluate_watermark(const WatermarkSet& w, const std::vector<ImageTensor>& test,
                                         const std::vector<DistortionSpec>& pool,
                                         double noise_check_sigma,
                                         const std::vector<ImageTensor>* auroc_images,
                                         std::uint64_t seed);

ImageExperimentResult run_image_experiment(const ImageExperimentConfig& cfg);

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  std::uint64_t seed = 0;
  double psnr = 0.0;
  double avg_bit_accuracy = 0.0;
};

/// parameter is "beta" (values multiply base.train.beta_alg) or "n" (values
/// replace base.n_train). One retraining per (value, seed).
std::vector<SweepRow> sweep(const std::string& parameter, const std::vector<double>& values,
                            const ImageExperimentConfig& base, const std::vector<std::uint64_t>& seeds);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

/// Per-value median over seeds of PSNR and average bit accuracy, in grid order.
struct SweepMedian {
  double value = 0.0;
  double psnr = 0.0;
  double avg_bit_accuracy = 0.0;
};
std::vector<SweepMedian> sweep_medians(const std::vector<SweepRow>& rows);

struct BenchResult {
  std::size_t images = 0;
  std::size_t batch_size = 0;
  double embed_mean_ms = 0.0;
  double embed_se_ms = 0.0;
  double decode_mean_ms = 0.0;
  double decode_se_ms = 0.0;
  double embed_total_s = 0.0;
  double decode_total_s = 0.0;
};

nlohmann::json to_json(const BenchResult& b);

/// Times embed (x + sum m_k w_k, written to a fresh tensor) and decode
/// (Gamma and sign) per image; each batch's per-image time is one
/// observation. Needs at least one full batch.
BenchResult run_bench(const std::vector<ImageTensor>& images, const WatermarkSet& w,
                      std::size_t batch_size = 64, std::uint64_t seed = 0);

}  // namespace addmark
