#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acconet/tensor.hpp"

namespace acconet::data {

namespace fs = std::filesystem;

enum class Split { train, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SamplePair {
  fs::path image;
  fs::path mask;
  Split split = Split::train;
  std::string stem() const { return image.stem().string(); }
};

/// Raised when images and masks do not pair up by basename.
class OrphanError : public std::runtime_error {
 public:
  OrphanError(std::vector<std::string> orphans, const std::string& where);
  const std::vector<std::string>& orphans() const { return orphans_; }

 private:
  std::vector<std::string> orphans_;
};

/// Pairs `<root>/<split>/images/*.{png,jpg}` with `<root>/<split>/gt/*.png`,
/// sorted by basename. A missing split directory yields no pairs.
std::vector<SamplePair> scan_split(const fs::path& root, Split split);
/// Train pairs followed by test pairs.
std::vector<SamplePair> scan_dataset(const fs::path& root);

/// Per-channel (x - mean) / std applied to RGB values scaled to [0, 1].
struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static Normalization imagenet() { return {}; }
  static Normalization identity() { return {{0, 0, 0}, {1, 1, 1}}; }
  /// "imagenet" or "identity".
  static Normalization named(const std::string& name);
};

/// (1, 3, size, size), bilinear resize then normalization.
Tensor load_image(const fs::path& path, int size, const Normalization& norm);
/// (1, 1, size, size), nearest-neighbour resize then {0, 1} at half scale.
Tensor load_mask(const fs::path& path, int size);

struct Sample {
  Tensor image;
  Tensor mask;
};

Sample preprocess(const SamplePair& pair, int size, const Normalization& norm);

/// The dihedral group of the square: rotation by k quarter turns
/// (counter-clockwise), optionally preceded by a horizontal flip.
enum class Variant : int {
  identity = 0,
  rot90,
  rot180,
  rot270,
  hflip,
  hflip_rot90,
  hflip_rot180,
  hflip_rot270
};
inline constexpr int kVariants = 8;
std::string to_string(Variant v);
Variant variant_at(int index);

/// Applies a variant to every plane of a square (B, C, S, S) tensor.
Tensor apply_variant(const Tensor& x, Variant v);

struct AugmentedPair {
  Tensor image;
  Tensor mask;
  Variant variant = Variant::identity;
};

/// All eight variants, image and mask transformed identically.
std::vector<AugmentedPair> augment_eightfold(const Tensor& image, const Tensor& mask);

struct Batch {
  Tensor images;  // (B, 3, S, S)
  Tensor masks;   // (B, 1, S, S)
};

/// Training samples indexed as (source pair, variant). Variants are produced
/// on demand, so the set never materializes the augmented copies.
class TrainingSet {
 public:
  TrainingSet(std::vector<SamplePair> pairs, int size, Normalization norm,
              bool augment);

  std::size_t size() const;
  std::size_t source_count() const { return pairs_.size(); }
  bool augmented() const { return augment_; }
  int image_size() const { return size_; }

  Sample get(std::size_t index) const;
  Batch batch(std::span<const std::size_t> indices) const;

  /// Permutation of [0, size()) seeded from (seed, epoch) only.
  std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch) const;

 private:
  // Preprocessed sources are kept in memory when they fit this budget.
  static constexpr double kCacheBudgetBytes = 1024.0 * 1024.0 * 1024.0;

  const Sample& source(std::size_t i) const;
  Sample load(std::size_t i) const;

  std::vector<SamplePair> pairs_;
  int size_;
  Normalization norm_;
  bool augment_;
  bool cache_enabled_ = true;
  mutable std::vector<std::optional<Sample>> cache_;
};

}  // namespace acconet::data
