#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "acconet/tensor.hpp"

namespace acconet::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kBeta2 = 0.3;
inline constexpr double kAlpha = 0.5;
inline constexpr const char* kToolVersion = "acconet-eval 1.0.0";
inline constexpr std::array<const char*, 9> kMetricKeys{
    "s_measure", "max_f", "mean_f", "adp_f", "max_e",
    "mean_e",    "adp_e", "mae",    "pr_curve"};

/// Threshold k of the sweep, k = 0..255: (k + 1) / 256. A pixel is predicted
/// salient at a threshold when its value is >= the threshold.
constexpr double threshold_at(int k) { return (k + 1) / 256.0; }

/// A prediction in [0, 1] and a binary mask, both (1, 1, H, W).
struct EvalPair {
  Tensor prediction;
  Tensor truth;

  /// Throws ShapeError unless both are single-image single-channel maps of
  /// the same size.
  void validate() const;
};

class DegenerateTruthError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

double mae(const EvalPair& pair);

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

/// One point per sweep threshold. Precision is 0 when nothing is predicted
/// positive. Throws DegenerateTruthError for an all-background truth.
std::vector<PrPoint> pr_curve(const EvalPair& pair);

/// Weighted harmonic mean with beta^2 = 0.3; 0 when P = R = 0.
double f_beta(double precision, double recall);

/// min(1, 2 * mean(prediction)).
double adaptive_threshold(const Tensor& prediction);

struct SweepMeasures {
  double max = 0, mean = 0, adaptive = 0;
  std::array<double, kThresholds> curve{};
};

SweepMeasures f_measures(const EvalPair& pair);

/// Enhanced-alignment score of a binary foreground map against the truth,
/// including the all-black / all-white truth special cases.
double enhanced_alignment(const Tensor& binary_map, const Tensor& truth);
SweepMeasures e_measures(const EvalPair& pair);

/// alpha * object-aware + (1 - alpha) * region-aware structural similarity.
double s_measure(const EvalPair& pair);

/// Per-image min-max stretch to [0, 1]; constant maps are returned as-is.
Tensor normalize_prediction(const Tensor& prediction);
/// Binarizes a mask at half of full scale (values in [0, 1]).
Tensor binarize_truth(const Tensor& mask);

struct ImageMetrics {
  double s_measure = 0, mae = 0, adp_f = 0, adp_e = 0;
  std::array<double, kThresholds> f_curve{}, e_curve{}, precision{}, recall{};
};

/// All per-image quantities after normalization and binarization.
ImageMetrics evaluate_pair(const EvalPair& pair);

struct MetricReport {
  std::size_t images = 0;
  double s_measure = 0, max_f = 0, mean_f = 0, adp_f = 0;
  double max_e = 0, mean_e = 0, adp_e = 0, mae = 0;
  std::vector<PrPoint> pr_curve;
  std::array<double, kThresholds> f_curve{}, e_curve{};
};

/// Scalars are averaged over images; curves are averaged per threshold
/// before taking their max and mean.
MetricReport aggregate(std::span<const ImageMetrics> per_image);

/// Loads an 8-bit image as a (1, 1, H, W) map scaled to [0, 1].
Tensor load_gray(const std::filesystem::path& path);

/// Matches files by basename stem between the two directories.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir);

/// Key/value JSON document with a header recording the conventions.
std::string report_json(const MetricReport& report);
void write_report(const std::filesystem::path& path, const MetricReport& report);
/// "threshold,precision,recall" rows.
void write_pr_curve(const std::filesystem::path& path, const MetricReport& report);
std::vector<PrPoint> read_pr_curve(const std::filesystem::path& path);

}  // namespace acconet::metrics
