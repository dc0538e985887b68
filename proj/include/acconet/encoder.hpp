#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "acconet/layers.hpp"
#include "acconet/schedule.hpp"

namespace acconet::encoder {

/// Per-call state a backbone needs to back-propagate; opaque to callers.
struct BackboneTrace {
  virtual ~BackboneTrace() = default;
};

/// Anything that maps a (B, 3, S, S) image batch to five feature maps
/// matching its declared schedule can drive the rest of the network.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const ShapeSchedule& schedule() const = 0;
  virtual std::string kind() const = 0;
  virtual LevelTensors extract(const Tensor& images, bool training,
                               std::unique_ptr<BackboneTrace>* trace) = 0;
  /// grads[t] may be empty when level t received no gradient. Returns the
  /// gradient with respect to the input images.
  virtual Tensor backward(const BackboneTrace& trace, const LevelTensors& grads) = 0;
  virtual void collect(nn::ParameterRefs& refs) = 0;
};

/// VGG-16 with the final max-pooling and the fully connected layers removed:
/// five blocks of (2, 2, 3, 3, 3) 3x3 convolutions with ReLU, a 2x2 max-pool
/// in front of blocks 2..5. Level t is the last convolution of block t.
class Vgg16Backbone : public Backbone {
 public:
  explicit Vgg16Backbone(ShapeSchedule schedule);

  const ShapeSchedule& schedule() const override { return schedule_; }
  std::string kind() const override { return "vgg16-shaped"; }
  LevelTensors extract(const Tensor& images, bool training,
                       std::unique_ptr<BackboneTrace>* trace) override;
  Tensor backward(const BackboneTrace& trace, const LevelTensors& grads) override;
  void collect(nn::ParameterRefs& refs) override;

  void init(const nn::InitSpec& spec, nn::Rng& rng);
  /// Layer names in forward order, e.g. "encoder.block3.conv2".
  std::vector<std::string> layer_names() const;

  static constexpr std::array<int, kLevels> kConvsPerBlock{2, 2, 3, 3, 3};

 private:
  struct Block {
    std::vector<nn::Conv2d> convs;
  };
  ShapeSchedule schedule_;
  std::vector<Block> blocks_;
};

/// Validates the batch against the schedule and runs the backbone.
LevelTensors extract_features(Backbone& backbone, const Tensor& images,
                              bool training = false,
                              std::unique_ptr<BackboneTrace>* trace = nullptr);

/// Throws ShapeError unless features[t] has shape (B, c_t, h_t, w_t).
void validate_features(const LevelTensors& features,
                       const ShapeSchedule& schedule, int batch);

struct BackboneSource {
  enum class Kind { random, pretrained_file } kind = Kind::random;
  std::filesystem::path path;  // pretrained_file only
  std::uint64_t seed = 0;
  nn::InitSpec init{};
};

class WeightMismatchError : public std::runtime_error {
 public:
  WeightMismatchError(const std::string& what, std::vector<std::string> layers)
      : std::runtime_error(what), layers(std::move(layers)) {}
  std::vector<std::string> layers;  // unmatched layer names
};

/// Builds a VGG-16-shaped backbone. Random mode draws zero-mean Gaussian
/// weights with zero biases; pretrained mode copies every encoder.* tensor
/// from a tensor archive and rejects missing or mis-shaped entries.
std::unique_ptr<Vgg16Backbone> init_backbone(const ShapeSchedule& schedule,
                                             const BackboneSource& source);

/// Writes the backbone's parameters as a pretrained weight file.
void save_backbone(const std::filesystem::path& path, Vgg16Backbone& backbone);

}  // namespace acconet::encoder
