#include "support.hpp"

#include <unistd.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace testing_support {

void write_synthetic_split(const fs::path& root, const std::string& split, int count,
                           int size, std::uint64_t seed) {
  Gen gen(seed);
  const fs::path img_dir = root / split / "images";
  const fs::path gt_dir = root / split / "gt";
  fs::create_directories(img_dir);
  fs::create_directories(gt_dir);
  for (int i = 0; i < count; ++i) {
    cv::Mat mask(size, size, CV_8U, cv::Scalar(0));
    const int radius = gen.integer(size / 8, size / 4);
    const cv::Point centre(gen.integer(radius, size - 1 - radius),
                           gen.integer(radius, size - 1 - radius));
    cv::circle(mask, centre, radius, cv::Scalar(255), cv::FILLED);
    cv::Mat img(size, size, CV_8UC3);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const bool fg = mask.at<unsigned char>(r, c) > 0;
        for (int ch = 0; ch < 3; ++ch) {
          const int base = fg ? 170 + 30 * ch : 40;
          img.at<cv::Vec3b>(r, c)[ch] =
              cv::saturate_cast<unsigned char>(base + gen.integer(-30, 30));
        }
      }
    char name[32];
    std::snprintf(name, sizeof name, "img_%04d", i);
    cv::imwrite((img_dir / (std::string(name) + ".png")).string(), img);
    cv::imwrite((gt_dir / (std::string(name) + ".png")).string(), mask);
  }
}

}  // namespace testing_support
