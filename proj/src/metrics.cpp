#include "acconet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include "json.hpp"
#include <opencv2/imgcodecs.hpp>
#include <sstream>

namespace acconet::metrics {

namespace {

constexpr double kMatlabEps = std::numeric_limits<double>::epsilon();

struct Counts {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  double n() const { return tp + fp + fn + tn; }
};

// Number of sweep thresholds a value clears: #{k : (k + 1) / 256 <= v}.
// Scaling by 256 is exact, so the floor matches the comparison exactly.
int cleared(double v) {
  const double s = std::floor(v * 256.0);
  if (s <= 0) return 0;
  return s >= kThresholds ? kThresholds : static_cast<int>(s);
}

// counts[k] for every sweep threshold, from per-bin histograms.
std::array<Counts, kThresholds> sweep_counts(const EvalPair& pair) {
  std::array<double, kThresholds + 1> fg{}, bg{};
  const Tensor& p = pair.prediction;
  const Tensor& g = pair.truth;
  for (std::size_t i = 0; i < p.size(); ++i) {
    (g[i] > 0.5 ? fg : bg)[cleared(p[i])] += 1;
  }
  const double total_fg = [&] { double s = 0; for (double v : fg) s += v; return s; }();
  const double total_bg = [&] { double s = 0; for (double v : bg) s += v; return s; }();
  std::array<Counts, kThresholds> out;
  double tp = 0, fp = 0;
  // Pixel in bin b is positive at threshold k iff k < b.
  for (int k = kThresholds - 1; k >= 0; --k) {
    tp += fg[k + 1];
    fp += bg[k + 1];
    out[k] = {tp, fp, total_fg - tp, total_bg - fp};
  }
  return out;
}

Counts counts_at(const EvalPair& pair, double threshold) {
  Counts c;
  for (std::size_t i = 0; i < pair.prediction.size(); ++i) {
    const bool pos = pair.prediction[i] >= threshold;
    const bool fg = pair.truth[i] > 0.5;
    if (pos && fg) c.tp += 1;
    else if (pos) c.fp += 1;
    else if (fg) c.fn += 1;
    else c.tn += 1;
  }
  return c;
}

double precision_of(const Counts& c) {
  return c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
}
double recall_of(const Counts& c) {
  return c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
}

// The alignment matrix of a binary map takes one value per (map, truth)
// combination, so the mean enhanced alignment follows from the four counts.
double e_from_counts(const Counts& c) {
  const double n = c.n();
  if (c.tp + c.fn == 0) return c.tn / n;  // all-black truth: 1 - FM
  if (c.fp + c.tn == 0) return c.tp / n;  // all-white truth: FM
  const double mu_fm = (c.tp + c.fp) / n;
  const double mu_gt = (c.tp + c.fn) / n;
  auto enhanced = [&](double fm, double gt) {
    const double a = fm - mu_fm, b = gt - mu_gt;
    const double align = 2.0 * a * b / (a * a + b * b + kMatlabEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
  };
  return (c.tp * enhanced(1, 1) + c.fp * enhanced(1, 0) + c.fn * enhanced(0, 1) +
          c.tn * enhanced(0, 0)) /
         n;
}

double mean_of(const Tensor& t) { return sum(t) / static_cast<double>(t.size()); }

// Object-aware similarity of values drawn from one region.
double object_score(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double x = 0;
  for (double a : v) x += a;
  x /= static_cast<double>(v.size());
  double var = 0;
  for (double a : v) var += (a - x) * (a - x);
  const double sigma =
      v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kMatlabEps);
}

double s_object(const Tensor& pred, const Tensor& gt) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] > 0.5) {
      fg.push_back(pred[i]);
    } else {
      bg.push_back(1.0 - pred[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pred.size());
  return u * object_score(fg) + (1 - u) * object_score(bg);
}

// Structural similarity of one rectangular block [r0, r1) x [c0, c1).
double block_ssim(const Tensor& pred, const Tensor& gt, int r0, int r1, int c0,
                  int c1) {
  const int w = pred.w();
  const double n = static_cast<double>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 0.0;
  double x = 0, y = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      x += pred[r * w + c];
      y += gt[r * w + c];
    }
  x /= n;
  y /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const double a = pred[r * w + c] - x, b = gt[r * w + c] - y;
      sx += a * a;
      sy += b * b;
      sxy += a * b;
    }
  sx /= (n - 1 + kMatlabEps);
  sy /= (n - 1 + kMatlabEps);
  sxy /= (n - 1 + kMatlabEps);
  const double alpha = 4 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0) return alpha / (beta + kMatlabEps);
  if (beta == 0) return 1.0;
  return 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
  const int h = gt.h(), w = gt.w();
  // 1-based centroid, rounded half away from zero.
  double total = 0, sx = 0, sy = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (gt[r * w + c] > 0.5) {
        total += 1;
        sx += c + 1;
        sy += r + 1;
      }
  int x, y;
  if (total == 0) {
    x = static_cast<int>(std::round(w / 2.0));
    y = static_cast<int>(std::round(h / 2.0));
  } else {
    x = static_cast<int>(std::round(sx / total));
    y = static_cast<int>(std::round(sy / total));
  }
  const double area = static_cast<double>(w) * h;
  const double w1 = x * y / area;
  const double w2 = (w - x) * y / area;
  const double w3 = x * (h - y) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(pred, gt, 0, y, 0, x) +
         w2 * block_ssim(pred, gt, 0, y, x, w) +
         w3 * block_ssim(pred, gt, y, h, 0, x) +
         w4 * block_ssim(pred, gt, y, h, x, w);
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

}  // namespace

void EvalPair::validate() const {
  if (prediction.n() != 1 || prediction.c() != 1) {
    throw ShapeError("prediction must be a single (1,1,H,W) map, got " +
                     prediction.shape().str());
  }
  expect_same_shape(prediction, truth, "evaluation pair");
  if (prediction.empty()) throw ShapeError("evaluation pair: empty maps");
}

double mae(const EvalPair& pair) {
  pair.validate();
  double acc = 0;
  for (std::size_t i = 0; i < pair.prediction.size(); ++i) {
    acc += std::abs(pair.prediction[i] - pair.truth[i]);
  }
  return acc / static_cast<double>(pair.prediction.size());
}

std::vector<PrPoint> pr_curve(const EvalPair& pair) {
  pair.validate();
  const auto counts = sweep_counts(pair);
  if (counts[0].tp + counts[0].fn == 0) {
    throw DegenerateTruthError("pr_curve: truth has no foreground pixels");
  }
  std::vector<PrPoint> out(kThresholds);
  for (int k = 0; k < kThresholds; ++k) {
    out[k] = {threshold_at(k), precision_of(counts[k]), recall_of(counts[k])};
  }
  return out;
}

double f_beta(double precision, double recall) {
  const double den = kBeta2 * precision + recall;
  if (den <= 0) return 0.0;
  return (1 + kBeta2) * precision * recall / den;
}

double adaptive_threshold(const Tensor& prediction) {
  return std::min(1.0, 2.0 * mean_of(prediction));
}

SweepMeasures f_measures(const EvalPair& pair) {
  pair.validate();
  const auto counts = sweep_counts(pair);
  SweepMeasures m;
  double acc = 0;
  for (int k = 0; k < kThresholds; ++k) {
    m.curve[k] = f_beta(precision_of(counts[k]), recall_of(counts[k]));
    acc += m.curve[k];
    m.max = std::max(m.max, m.curve[k]);
  }
  m.mean = acc / kThresholds;
  const Counts a = counts_at(pair, adaptive_threshold(pair.prediction));
  m.adaptive = f_beta(precision_of(a), recall_of(a));
  return m;
}

double enhanced_alignment(const Tensor& binary_map, const Tensor& truth) {
  EvalPair pair{binary_map, truth};
  pair.validate();
  return e_from_counts(counts_at(pair, 0.5));
}

SweepMeasures e_measures(const EvalPair& pair) {
  pair.validate();
  const auto counts = sweep_counts(pair);
  SweepMeasures m;
  double acc = 0;
  for (int k = 0; k < kThresholds; ++k) {
    m.curve[k] = e_from_counts(counts[k]);
    acc += m.curve[k];
    m.max = std::max(m.max, m.curve[k]);
  }
  m.mean = acc / kThresholds;
  m.adaptive = e_from_counts(counts_at(pair, adaptive_threshold(pair.prediction)));
  return m;
}

double s_measure(const EvalPair& pair) {
  pair.validate();
  const Tensor& pred = pair.prediction;
  const Tensor gt = binarize_truth(pair.truth);
  const double y = mean_of(gt);
  if (y == 0) return 1.0 - mean_of(pred);
  if (y == 1) return mean_of(pred);
  const double q = kAlpha * s_object(pred, gt) + (1 - kAlpha) * s_region(pred, gt);
  return std::max(0.0, q);
}

Tensor normalize_prediction(const Tensor& prediction) {
  const auto [lo, hi] =
      std::minmax_element(prediction.values().begin(), prediction.values().end());
  if (lo == prediction.values().end() || *hi <= *lo) return prediction;
  const double min = *lo, range = *hi - *lo;
  Tensor out(prediction.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (prediction[i] - min) / range;
  return out;
}

Tensor binarize_truth(const Tensor& mask) {
  Tensor out(mask.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] > 0.5 ? 1.0 : 0.0;
  return out;
}

ImageMetrics evaluate_pair(const EvalPair& raw) {
  raw.validate();
  const EvalPair pair{normalize_prediction(raw.prediction), binarize_truth(raw.truth)};
  ImageMetrics m;
  m.mae = mae(pair);
  m.s_measure = s_measure(pair);
  const auto counts = sweep_counts(pair);
  for (int k = 0; k < kThresholds; ++k) {
    m.precision[k] = precision_of(counts[k]);
    m.recall[k] = recall_of(counts[k]);
    m.f_curve[k] = f_beta(m.precision[k], m.recall[k]);
    m.e_curve[k] = e_from_counts(counts[k]);
  }
  const Counts a = counts_at(pair, adaptive_threshold(pair.prediction));
  m.adp_f = f_beta(precision_of(a), recall_of(a));
  m.adp_e = e_from_counts(a);
  return m;
}

MetricReport aggregate(std::span<const ImageMetrics> per_image) {
  MetricReport r;
  r.images = per_image.size();
  if (per_image.empty()) return r;
  std::array<double, kThresholds> prec{}, rec{};
  for (const ImageMetrics& m : per_image) {
    r.s_measure += m.s_measure;
    r.mae += m.mae;
    r.adp_f += m.adp_f;
    r.adp_e += m.adp_e;
    for (int k = 0; k < kThresholds; ++k) {
      r.f_curve[k] += m.f_curve[k];
      r.e_curve[k] += m.e_curve[k];
      prec[k] += m.precision[k];
      rec[k] += m.recall[k];
    }
  }
  const double n = static_cast<double>(per_image.size());
  r.s_measure /= n;
  r.mae /= n;
  r.adp_f /= n;
  r.adp_e /= n;
  double sf = 0, se = 0;
  for (int k = 0; k < kThresholds; ++k) {
    r.f_curve[k] /= n;
    r.e_curve[k] /= n;
    r.max_f = std::max(r.max_f, r.f_curve[k]);
    r.max_e = std::max(r.max_e, r.e_curve[k]);
    sf += r.f_curve[k];
    se += r.e_curve[k];
    r.pr_curve.push_back({threshold_at(k), prec[k] / n, rec[k] / n});
  }
  r.mean_f = sf / kThresholds;
  r.mean_e = se / kThresholds;
  return r;
}

Tensor load_gray(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw std::runtime_error("cannot read image: " + path.string());
  Tensor t(1, 1, img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    const auto* row = img.ptr<unsigned char>(r);
    for (int c = 0; c < img.cols; ++c) t.at(0, 0, r, c) = row[c] / 255.0;
  }
  return t;
}

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir) {
  std::map<std::string, std::filesystem::path> preds, gts;
  for (const auto& p : list_images(pred_dir)) preds[p.stem().string()] = p;
  for (const auto& p : list_images(gt_dir)) gts[p.stem().string()] = p;
  std::vector<std::string> unmatched;
  for (const auto& [k, v] : preds)
    if (!gts.count(k)) unmatched.push_back("prediction without truth: " + v.filename().string());
  for (const auto& [k, v] : gts)
    if (!preds.count(k)) unmatched.push_back("truth without prediction: " + v.filename().string());
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "unmatched basenames between " << pred_dir.string() << " and " << gt_dir.string();
    for (const auto& u : unmatched) os << "\n  " << u;
    throw std::runtime_error(os.str());
  }
  std::vector<ImageMetrics> per_image;
  for (const auto& [stem, pred_path] : preds) {
    EvalPair pair{load_gray(pred_path), load_gray(gts.at(stem))};
    if (!(pair.prediction.shape() == pair.truth.shape())) {
      throw ShapeError("size mismatch for " + pred_path.filename().string() + ": " +
                       pair.prediction.shape().str() + " vs " + pair.truth.shape().str());
    }
    per_image.push_back(evaluate_pair(pair));
  }
  return aggregate(per_image);
}

std::string report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["tool"] = kToolVersion;
  j["conventions"] = {
      {"thresholds", "256 values (k+1)/256, k=0..255; positive iff prediction >= threshold"},
      {"adaptive_threshold", "min(1, 2 * mean(prediction)), positive iff >="},
      {"precision_without_positives", 0},
      {"f_beta_squared", kBeta2},
      {"s_alpha", kAlpha},
      {"e_measure_normalization", "mean over H*W pixels"},
      {"prediction_normalization", "per-image min-max unless constant"},
      {"truth_binarization", "> 0.5 of full scale"},
      {"curve_aggregation", "per-threshold mean over images, then max/mean"}};
  j["images"] = r.images;
  j["metrics"] = {{"s_measure", r.s_measure}, {"max_f", r.max_f},
                  {"mean_f", r.mean_f},       {"adp_f", r.adp_f},
                  {"max_e", r.max_e},         {"mean_e", r.mean_e},
                  {"adp_e", r.adp_e},         {"mae", r.mae}};
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const PrPoint& p : r.pr_curve) {
    curve.push_back({{"threshold", p.threshold},
                     {"precision", p.precision},
                     {"recall", p.recall}});
  }
  j["metrics"]["pr_curve"] = std::move(curve);
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report_json(report);
}

void write_pr_curve(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "threshold,precision,recall\n";
  for (const PrPoint& p : report.pr_curve) {
    out << fmt(p.threshold) << "," << fmt(p.precision) << "," << fmt(p.recall) << "\n";
  }
}

std::vector<PrPoint> read_pr_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "threshold,precision,recall") {
    throw std::runtime_error(path.string() + ": missing PR-curve header");
  }
  std::vector<PrPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PrPoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.threshold, &p.precision,
                    &p.recall) != 3) {
      throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace acconet::metrics
