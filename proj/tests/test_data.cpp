#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "acconet/data.hpp"
#include "support.hpp"

namespace acconet {
namespace {

using data::Split;
using data::Variant;
using testing_support::Gen;
using testing_support::TempDir;
namespace fs = std::filesystem;

void write_png(const fs::path& path, const cv::Mat& m) {
  fs::create_directories(path.parent_path());
  ASSERT_TRUE(cv::imwrite(path.string(), m));
}

// Minimal image/mask pairs named 0000.png, 0001.png, ... under one split.
void write_layout(const fs::path& root, const std::string& split, int count) {
  const cv::Mat img(2, 2, CV_8UC3, cv::Scalar(10, 20, 30));
  const cv::Mat mask(2, 2, CV_8U, cv::Scalar(255));
  for (int i = 0; i < count; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%04d.png", i);
    write_png(root / split / "images" / name, img);
    write_png(root / split / "gt" / name, mask);
  }
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && max_abs_diff(a, b) == 0.0;
}

TEST(ScanTest, EorssdAndOrssdLayoutsGiveThePaperCounts) {
  TempDir dir("scan");
  write_layout(dir.path() / "eorssd", "train", 1400);
  write_layout(dir.path() / "eorssd", "test", 600);
  write_layout(dir.path() / "orssd", "train", 600);
  write_layout(dir.path() / "orssd", "test", 200);
  const auto e = data::scan_dataset(dir.path() / "eorssd");
  ASSERT_EQ(e.size(), 2000u);
  EXPECT_EQ(data::scan_split(dir.path() / "eorssd", Split::train).size(), 1400u);
  EXPECT_EQ(data::scan_split(dir.path() / "eorssd", Split::test).size(), 600u);
  EXPECT_EQ(data::scan_split(dir.path() / "orssd", Split::train).size(), 600u);
  EXPECT_EQ(data::scan_split(dir.path() / "orssd", Split::test).size(), 200u);
  EXPECT_EQ(e.front().split, Split::train);
  EXPECT_EQ(e.back().split, Split::test);
  for (std::size_t i = 1; i < 1400; ++i) EXPECT_LT(e[i - 1].stem(), e[i].stem());
  for (const auto& p : e) EXPECT_EQ(p.image.stem(), p.mask.stem());

  // the augmented training set sizes follow without loading any pixels
  data::TrainingSet eorssd(data::scan_split(dir.path() / "eorssd", Split::train), 256,
                           data::Normalization::imagenet(), true);
  data::TrainingSet orssd(data::scan_split(dir.path() / "orssd", Split::train), 256,
                          data::Normalization::imagenet(), true);
  EXPECT_EQ(eorssd.size(), 11200u);
  EXPECT_EQ(orssd.size(), 4800u);
  EXPECT_EQ(orssd.source_count(), 600u);
}

TEST(ScanTest, EmptyOrMissingDirectoryYieldsNothing) {
  TempDir dir("empty");
  EXPECT_TRUE(data::scan_dataset(dir.path()).empty());
  EXPECT_TRUE(data::scan_dataset(dir.path() / "absent").empty());
}

TEST(ScanTest, OrphansAreListed) {
  TempDir dir("orphans");
  write_layout(dir.path(), "train", 3);
  fs::remove(dir.path() / "train" / "gt" / "0001.png");
  write_png(dir.path() / "train" / "gt" / "extra.png", cv::Mat(2, 2, CV_8U, cv::Scalar(0)));
  try {
    data::scan_split(dir.path(), Split::train);
    FAIL() << "expected OrphanError";
  } catch (const data::OrphanError& e) {
    ASSERT_EQ(e.orphans().size(), 2u);
    EXPECT_NE(e.orphans()[0].find("0001.png"), std::string::npos);
    EXPECT_NE(e.orphans()[1].find("extra.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("extra.png"), std::string::npos);
  }
}

TEST(ScanTest, JpegImagesPairWithPngMasks) {
  TempDir dir("jpeg");
  write_png(dir.path() / "test" / "images" / "a.jpg", cv::Mat(4, 4, CV_8UC3, cv::Scalar(1, 2, 3)));
  write_png(dir.path() / "test" / "gt" / "a.png", cv::Mat(4, 4, CV_8U, cv::Scalar(0)));
  const auto pairs = data::scan_split(dir.path(), Split::test);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].image.extension(), ".jpg");
  EXPECT_EQ(pairs[0].split, Split::test);
}

TEST(PreprocessTest, ResizesAndNormalizes) {
  TempDir dir("pre");
  cv::Mat img(512, 512, CV_8UC3, cv::Scalar(0, 0, 255));  // pure red in BGR order
  cv::Mat mask(512, 512, CV_8U, cv::Scalar(0));
  cv::rectangle(mask, cv::Rect(0, 0, 256, 512), cv::Scalar(255), cv::FILLED);
  write_png(dir.path() / "i.png", img);
  write_png(dir.path() / "m.png", mask);
  const data::SamplePair pair{dir.path() / "i.png", dir.path() / "m.png", Split::train};

  const data::Sample id = data::preprocess(pair, 256, data::Normalization::identity());
  EXPECT_EQ(id.image.shape(), (Shape{1, 3, 256, 256}));
  EXPECT_EQ(id.mask.shape(), (Shape{1, 1, 256, 256}));
  EXPECT_DOUBLE_EQ(id.image.at(0, 0, 100, 100), 1.0);
  EXPECT_DOUBLE_EQ(id.image.at(0, 1, 100, 100), 0.0);
  EXPECT_DOUBLE_EQ(id.image.at(0, 2, 100, 100), 0.0);
  EXPECT_EQ(id.mask.at(0, 0, 10, 10), 1.0);
  EXPECT_EQ(id.mask.at(0, 0, 10, 200), 0.0);
  for (double v : id.mask.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_EQ(sum(id.mask), 128.0 * 256.0);

  const data::Sample net = data::preprocess(pair, 256, data::Normalization::imagenet());
  EXPECT_NEAR(net.image.at(0, 0, 5, 5), (1.0 - 0.485) / 0.229, 1e-12);
  EXPECT_NEAR(net.image.at(0, 2, 5, 5), (0.0 - 0.406) / 0.225, 1e-12);
  EXPECT_EQ(data::Normalization::named("identity").std[1], 1.0);
  EXPECT_THROW(data::Normalization::named("zscore"), std::invalid_argument);
}

TEST(PreprocessTest, MaskBinarizationIsIdempotentAtHalfScale) {
  TempDir dir("mask");
  cv::Mat square(4, 4, CV_8U, cv::Scalar(0));
  square.at<unsigned char>(0, 0) = 127;
  square.at<unsigned char>(0, 1) = 128;
  square.at<unsigned char>(1, 1) = 255;
  write_png(dir.path() / "s.png", square);
  const Tensor s = data::load_mask(dir.path() / "s.png", 4);
  EXPECT_EQ(s.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(s.at(0, 0, 0, 1), 1.0);
  EXPECT_EQ(s.at(0, 0, 1, 1), 1.0);
  EXPECT_EQ(sum(s), 2.0);
  // a binary {0, 255} mask written back and reloaded gives the same map
  cv::Mat again(4, 4, CV_8U);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) again.at<unsigned char>(r, c) = s.at(0, 0, r, c) > 0 ? 255 : 0;
  write_png(dir.path() / "b.png", again);
  EXPECT_TRUE(bit_equal(data::load_mask(dir.path() / "b.png", 4), s));
}

TEST(PreprocessTest, UnreadableFilesNameThePath) {
  TempDir dir("bad");
  std::ofstream(dir.path() / "broken.png") << "garbage";
  try {
    data::load_image(dir.path() / "broken.png", 8, data::Normalization::identity());
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos);
  }
  EXPECT_THROW(data::load_mask(dir.path() / "missing.png", 8), std::runtime_error);
}

Tensor numbered(int s) {
  Tensor t(1, 1, s, s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

TEST(AugmentTest, RotationIsCounterClockwise) {
  // [[0, 1], [2, 3]] turned a quarter counter-clockwise is [[1, 3], [0, 2]]
  const Tensor r = data::apply_variant(numbered(2), Variant::rot90);
  EXPECT_EQ(r[0], 1.0);
  EXPECT_EQ(r[1], 3.0);
  EXPECT_EQ(r[2], 0.0);
  EXPECT_EQ(r[3], 2.0);
  const Tensor f = data::apply_variant(numbered(2), Variant::hflip);
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 0.0);
}

TEST(AugmentTest, GroupStructure) {
  Gen gen(1);
  const Tensor x = gen.normal_tensor({2, 3, 5, 5});
  using data::apply_variant;
  EXPECT_TRUE(bit_equal(apply_variant(apply_variant(x, Variant::rot180), Variant::rot180), x));
  EXPECT_TRUE(bit_equal(apply_variant(apply_variant(x, Variant::hflip), Variant::hflip), x));
  Tensor four = x;
  for (int i = 0; i < 4; ++i) four = apply_variant(four, Variant::rot90);
  EXPECT_TRUE(bit_equal(four, x));
  EXPECT_TRUE(bit_equal(apply_variant(apply_variant(x, Variant::rot90), Variant::rot270), x));
  EXPECT_TRUE(bit_equal(apply_variant(x, Variant::hflip_rot90),
                        apply_variant(apply_variant(x, Variant::hflip), Variant::rot90)));
  // the vertical flip is a member: rot180 after hflip
  Tensor vflip(x.shape());
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 5; ++r)
        for (int col = 0; col < 5; ++col) vflip.at(n, c, r, col) = x.at(n, c, 4 - r, col);
  EXPECT_TRUE(bit_equal(apply_variant(x, Variant::hflip_rot180), vflip));
}

TEST(AugmentTest, EightDistinctVariantsInLockstep) {
  Gen gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = gen.integer(2, 9);
    const Tensor img = gen.normal_tensor({1, 3, s, s});
    const Tensor mask = gen.mask(s, s);
    const auto set = data::augment_eightfold(img, mask);
    ASSERT_EQ(set.size(), 8u);
    std::set<int> tags;
    for (const auto& a : set) {
      tags.insert(static_cast<int>(a.variant));
      EXPECT_EQ(sum(a.mask), sum(mask));
      EXPECT_EQ(a.image.shape(), img.shape());
      // the mask moved exactly as the image did
      Tensor probe(1, 1, s, s);
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) probe.at(0, 0, r, c) = img.at(0, 1, r, c);
      EXPECT_TRUE(bit_equal(data::apply_variant(probe, a.variant), [&] {
        Tensor t(1, 1, s, s);
        for (int r = 0; r < s; ++r)
          for (int c = 0; c < s; ++c) t.at(0, 0, r, c) = a.image.at(0, 1, r, c);
        return t;
      }()));
    }
    EXPECT_EQ(tags.size(), 8u);
  }
  const auto distinct = data::augment_eightfold(numbered(3), numbered(3));
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j) EXPECT_FALSE(bit_equal(distinct[i].image, distinct[j].image));
}

TEST(AugmentTest, NonSquareInputIsRejected) {
  EXPECT_THROW(data::apply_variant(Tensor(1, 1, 4, 5), Variant::rot90), ShapeError);
  EXPECT_THROW(data::augment_eightfold(Tensor(1, 3, 4, 5), Tensor(1, 1, 4, 5)), ShapeError);
  EXPECT_THROW(data::variant_at(8), std::out_of_range);
}

TEST(TrainingSetTest, IndexingBatchingAndDeterministicOrder) {
  TempDir dir("set");
  testing_support::write_synthetic_split(dir.path(), "train", 3, 16, 5);
  const auto pairs = data::scan_split(dir.path(), Split::train);
  data::TrainingSet set(pairs, 16, data::Normalization::imagenet(), true);
  data::TrainingSet plain(pairs, 16, data::Normalization::imagenet(), false);
  ASSERT_EQ(set.size(), 24u);
  ASSERT_EQ(plain.size(), 3u);
  EXPECT_THROW(set.get(24), std::out_of_range);

  const data::Sample base = data::preprocess(pairs[1], 16, data::Normalization::imagenet());
  for (int v = 0; v < 8; ++v) {
    const data::Sample s = set.get(8 + v);
    EXPECT_TRUE(bit_equal(s.image, data::apply_variant(base.image, data::variant_at(v))));
    EXPECT_TRUE(bit_equal(s.mask, data::apply_variant(base.mask, data::variant_at(v))));
  }
  EXPECT_TRUE(bit_equal(plain.get(1).image, base.image));

  const std::vector<std::size_t> idx{5, 17, 2};
  const data::Batch b = set.batch(idx);
  EXPECT_EQ(b.images.shape(), (Shape{3, 3, 16, 16}));
  EXPECT_EQ(b.masks.shape(), (Shape{3, 1, 16, 16}));
  EXPECT_EQ(b.images.at(1, 2, 3, 4), set.get(17).image.at(0, 2, 3, 4));

  const auto o1 = set.epoch_order(7, 0);
  EXPECT_EQ(o1, set.epoch_order(7, 0));
  EXPECT_NE(o1, set.epoch_order(7, 1));
  EXPECT_NE(o1, set.epoch_order(8, 0));
  auto sorted = o1;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);

  // a second set over the same root replays the same batch sequence
  data::TrainingSet again(data::scan_split(dir.path(), Split::train), 16,
                          data::Normalization::imagenet(), true);
  const auto o2 = again.epoch_order(7, 0);
  for (std::size_t start = 0; start < o1.size(); start += 4) {
    const std::span<const std::size_t> a(o1.data() + start, 4), c(o2.data() + start, 4);
    EXPECT_TRUE(bit_equal(set.batch(a).images, again.batch(c).images));
  }
}

}  // namespace
}  // namespace acconet
