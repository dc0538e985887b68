#include "acconet/plot.hpp"

#include <cstdio>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace acconet::plot {

namespace {

const cv::Scalar kPalette[] = {
    {180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
    {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

}  // namespace

void plot_pr_curves(const std::vector<NamedCurve>& curves,
                    const std::filesystem::path& png, int width, int height) {
  if (curves.empty()) throw std::invalid_argument("plot_pr_curves: no curves given");
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = 20, top = 20, bottom = 60;
  const int pw = width - left - right, ph = height - top - bottom;
  auto to_px = [&](double recall, double precision) {
    return cv::Point(left + static_cast<int>(std::lround(recall * pw)),
                     top + static_cast<int>(std::lround((1.0 - precision) * ph)));
  };

  const cv::Scalar grid(225, 225, 225), axis(0, 0, 0);
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv::line(img, to_px(v, 0), to_px(v, 1), grid, 1);
    cv::line(img, to_px(0, v), to_px(1, v), grid, 1);
    char label[8];
    std::snprintf(label, sizeof label, "%.1f", v);
    cv::putText(img, label, to_px(v, 0) + cv::Point(-12, 20), cv::FONT_HERSHEY_SIMPLEX,
                0.4, axis, 1, cv::LINE_AA);
    cv::putText(img, label, to_px(0, v) + cv::Point(-32, 4), cv::FONT_HERSHEY_SIMPLEX,
                0.4, axis, 1, cv::LINE_AA);
  }
  cv::rectangle(img, to_px(0, 1), to_px(1, 0), axis, 1);
  cv::putText(img, "Recall", cv::Point(left + pw / 2 - 25, height - 15),
              cv::FONT_HERSHEY_SIMPLEX, 0.55, axis, 1, cv::LINE_AA);
  cv::putText(img, "Precision", cv::Point(5, top + 12), cv::FONT_HERSHEY_SIMPLEX, 0.5,
              axis, 1, cv::LINE_AA);

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const cv::Scalar color = kPalette[i % std::size(kPalette)];
    std::vector<cv::Point> pts;
    for (const metrics::PrPoint& p : curves[i].points) pts.push_back(to_px(p.recall, p.precision));
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const cv::Point key(left + 15, top + 20 + 20 * static_cast<int>(i));
    cv::line(img, key, key + cv::Point(25, 0), color, 2, cv::LINE_AA);
    cv::putText(img, curves[i].label, key + cv::Point(32, 5), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                axis, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(png.string(), img)) throw std::runtime_error("cannot write " + png.string());
}

void write_combined_csv(const std::vector<NamedCurve>& curves,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "curve,threshold,precision,recall\n";
  char buf[96];
  for (const NamedCurve& c : curves)
    for (const metrics::PrPoint& p : c.points) {
      std::snprintf(buf, sizeof buf, ",%.10f,%.10f,%.10f\n", p.threshold, p.precision,
                    p.recall);
      out << c.label << buf;
    }
}

}  // namespace acconet::plot
