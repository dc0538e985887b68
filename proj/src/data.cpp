#include "acconet/data.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>

namespace acconet::data {

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

std::map<std::string, fs::path> list_by_stem(const fs::path& dir,
                                             std::initializer_list<const char*> exts) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower_ext(e.path());
    if (std::none_of(exts.begin(), exts.end(), [&](const char* x) { return ext == x; })) {
      continue;
    }
    const std::string stem = e.path().stem().string();
    if (out.count(stem)) {
      throw std::runtime_error("duplicate basename '" + stem + "' in " + dir.string());
    }
    out.emplace(stem, e.path());
  }
  return out;
}

// Source index for the output pixel (r, c) of a quarter-turn rotation.
void rotate_src(int k, int s, int r, int c, int& sr, int& sc) {
  switch (k & 3) {
    case 0: sr = r; sc = c; break;
    case 1: sr = c; sc = s - 1 - r; break;
    case 2: sr = s - 1 - r; sc = s - 1 - c; break;
    default: sr = s - 1 - c; sc = r; break;
  }
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train|test)");
}

OrphanError::OrphanError(std::vector<std::string> orphans, const std::string& where)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "unpaired files under " << where << ":";
        for (const auto& o : orphans) os << "\n  " << o;
        return os.str();
      }()),
      orphans_(std::move(orphans)) {}

std::vector<SamplePair> scan_split(const fs::path& root, Split split) {
  const fs::path base = root / to_string(split);
  const auto images = list_by_stem(base / "images", {".png", ".jpg", ".jpeg"});
  const auto masks = list_by_stem(base / "gt", {".png"});
  std::vector<std::string> orphans;
  for (const auto& [stem, p] : images)
    if (!masks.count(stem)) orphans.push_back("image without mask: " + p.string());
  for (const auto& [stem, p] : masks)
    if (!images.count(stem)) orphans.push_back("mask without image: " + p.string());
  if (!orphans.empty()) throw OrphanError(std::move(orphans), base.string());
  std::vector<SamplePair> out;
  out.reserve(images.size());
  for (const auto& [stem, p] : images) out.push_back({p, masks.at(stem), split});
  return out;
}

std::vector<SamplePair> scan_dataset(const fs::path& root) {
  auto out = scan_split(root, Split::train);
  auto test = scan_split(root, Split::test);
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

Normalization Normalization::named(const std::string& name) {
  if (name == "imagenet") return imagenet();
  if (name == "identity") return identity();
  throw std::invalid_argument("unknown normalization '" + name +
                              "' (expected imagenet|identity)");
}

Tensor load_image(const fs::path& path, int size, const Normalization& norm) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image: " + path.string());
  if (bgr.rows != size || bgr.cols != size) {
    cv::resize(bgr, bgr, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  }
  Tensor t(1, 3, size, size);
  for (int r = 0; r < size; ++r) {
    const auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < size; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = row[c][2 - ch] / 255.0;
        t.at(0, ch, r, c) = (v - norm.mean[ch]) / norm.std[ch];
      }
    }
  }
  return t;
}

Tensor load_mask(const fs::path& path, int size) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("cannot read mask: " + path.string());
  if (m.rows != size || m.cols != size) {
    cv::resize(m, m, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  }
  Tensor t(1, 1, size, size);
  for (int r = 0; r < size; ++r) {
    const auto* row = m.ptr<unsigned char>(r);
    for (int c = 0; c < size; ++c) t.at(0, 0, r, c) = row[c] > 127.5 ? 1.0 : 0.0;
  }
  return t;
}

Sample preprocess(const SamplePair& pair, int size, const Normalization& norm) {
  return {load_image(pair.image, size, norm), load_mask(pair.mask, size)};
}

std::string to_string(Variant v) {
  static const char* names[kVariants] = {"identity",    "rot90",       "rot180",
                                         "rot270",      "hflip",       "hflip+rot90",
                                         "hflip+rot180", "hflip+rot270"};
  return names[static_cast<int>(v)];
}

Variant variant_at(int index) {
  if (index < 0 || index >= kVariants) {
    throw std::out_of_range("variant index " + std::to_string(index));
  }
  return static_cast<Variant>(index);
}

Tensor apply_variant(const Tensor& x, Variant v) {
  if (x.h() != x.w()) {
    throw ShapeError("augmentation needs square maps, got " + std::to_string(x.h()) +
                     "x" + std::to_string(x.w()));
  }
  const int s = x.h();
  const int code = static_cast<int>(v);
  const bool flip = code >= 4;
  const int k = code & 3;
  Tensor out(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int ch = 0; ch < x.c(); ++ch) {
      const Real* src = x.plane(n, ch);
      Real* dst = out.plane(n, ch);
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
          int sr, sc;
          rotate_src(k, s, r, c, sr, sc);
          if (flip) sc = s - 1 - sc;
          dst[r * s + c] = src[sr * s + sc];
        }
    }
  return out;
}

std::vector<AugmentedPair> augment_eightfold(const Tensor& image, const Tensor& mask) {
  if (image.h() != mask.h() || image.w() != mask.w()) {
    throw ShapeError("image " + image.shape().str() + " and mask " + mask.shape().str() +
                     " differ in size");
  }
  std::vector<AugmentedPair> out;
  out.reserve(kVariants);
  for (int i = 0; i < kVariants; ++i) {
    const Variant v = variant_at(i);
    out.push_back({apply_variant(image, v), apply_variant(mask, v), v});
  }
  return out;
}

TrainingSet::TrainingSet(std::vector<SamplePair> pairs, int size, Normalization norm,
                         bool augment)
    : pairs_(std::move(pairs)),
      size_(size),
      norm_(norm),
      augment_(augment),
      cache_(pairs_.size()) {
  if (size_ <= 0) throw std::invalid_argument("image size must be positive");
  const double bytes = static_cast<double>(pairs_.size()) * 4.0 * size_ * size_ *
                       sizeof(Real);
  cache_enabled_ = bytes <= kCacheBudgetBytes;
}

std::size_t TrainingSet::size() const {
  return pairs_.size() * (augment_ ? kVariants : 1);
}

const Sample& TrainingSet::source(std::size_t i) const {
  if (!cache_[i]) cache_[i] = preprocess(pairs_[i], size_, norm_);
  return *cache_[i];
}

Sample TrainingSet::load(std::size_t i) const {
  if (cache_enabled_) return source(i);
  return preprocess(pairs_[i], size_, norm_);
}

Sample TrainingSet::get(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("sample index " + std::to_string(index));
  const std::size_t per = augment_ ? kVariants : 1;
  const Sample s = load(index / per);
  const Variant v = variant_at(static_cast<int>(index % per));
  if (v == Variant::identity) return s;
  return {apply_variant(s.image, v), apply_variant(s.mask, v)};
}

Batch TrainingSet::batch(std::span<const std::size_t> indices) const {
  const int b = static_cast<int>(indices.size());
  Batch out{Tensor(b, 3, size_, size_), Tensor(b, 1, size_, size_)};
  const std::size_t img_plane = 3 * static_cast<std::size_t>(size_) * size_;
  const std::size_t mask_plane = static_cast<std::size_t>(size_) * size_;
  for (int i = 0; i < b; ++i) {
    const Sample s = get(indices[i]);
    std::copy(s.image.data(), s.image.data() + img_plane, out.images.plane(i, 0));
    std::copy(s.mask.data(), s.mask.data() + mask_plane, out.masks.plane(i, 0));
  }
  return out;
}

std::vector<std::size_t> TrainingSet::epoch_order(std::uint64_t seed, int epoch) const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with an explicit draw so the order is portable across
  // standard library implementations.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace acconet::data
