#pragma once

#include <memory>
#include <string>
#include <vector>

#include "acconet/accom.hpp"
#include "acconet/decoder.hpp"
#include "acconet/encoder.hpp"

namespace acconet {

/// The named network variants of the ablation study.
enum class Ablation {
  full,         // ACCoM + BAB
  baseline,     // plain encoder-decoder
  accom_only,   // "+ACCoM"
  bab_only,     // "+BAB"
  no_local,     // "w/o LB"
  no_adjacent,  // "w/o AB"
  direct,       // "w/ DC"
  normal_conv,  // "w/ NC"
};

std::string to_string(Ablation a);
/// Accepts the table names ("Baseline", "+ACCoM", "w/o LB", ...) as well as
/// the identifiers above.
Ablation parse_ablation(const std::string& s);
const std::vector<Ablation>& all_ablations();

struct ModelConfig {
  ShapeSchedule schedule{};
  bool accom = true;
  bool local_branch = true;
  bool adjacent_branches = true;
  decoder::BabMode bab_mode = decoder::BabMode::full;
  int ca_reduction = 16;
  int sa_kernel = 7;
  nn::InitSpec init{};  // newly added layers

  static ModelConfig for_ablation(Ablation a, ShapeSchedule schedule = {});
};

/// Encoder, five ACCoMs and the BAB decoder with deep supervision.
class AcconetModel {
 public:
  struct Output {
    LevelTensors features;
    LevelTensors accom;
    decoder::DecoderState decoder;
    const Tensor& saliency() const { return decoder.final_map(); }
  };

  struct Trace {
    std::unique_ptr<encoder::BackboneTrace> encoder;
    std::array<accom::Accom::Trace, kLevels> accom;
    decoder::Decoder::Trace decoder;
  };

  AcconetModel(ModelConfig cfg, std::unique_ptr<encoder::Backbone> backbone);

  /// Random initialization of every added layer; the backbone keeps
  /// whatever initialization it was built with.
  void init_added_layers(std::uint64_t seed);

  Output forward(const Tensor& images, bool training, Trace* trace = nullptr);
  /// Back-propagates d(loss)/dS^t for every level into parameter gradients.
  /// Returns d(loss)/d(images) when requested.
  void backward(const Trace& trace, const LevelTensors& d_saliency,
                Tensor* d_images = nullptr);

  nn::ParameterRefs parameters();
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }
  encoder::Backbone& backbone() { return *backbone_; }
  accom::Accom& accom_module(int level) { return accoms_.at(level - 1); }
  decoder::Decoder& decoder() { return decoder_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<encoder::Backbone> backbone_;
  std::vector<accom::Accom> accoms_;
  decoder::Decoder decoder_;
};

}  // namespace acconet
