#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nn_blocks.hpp"

namespace rdi {

struct ModelConfig {
  int image_size = 256;
  int levels = 3;  // encoder/decoder depth L
  int num_classes = 40;
  double width_mult = 1.0;
  int spade_embed = 64;  // scaled by width_mult like every other width
  bool temporal_enabled = true;
  bool rgbd_spade_enabled = true;
  bool separate_encoders = true;
  bool composite_output = true;
  bool adv_on_composited = false;
  bool hole_only_losses = false;
  Activation activation = Activation::kRelu;
  SegCondMode seg_cond = SegCondMode::kSoftmax;

  void validate() const;
  int ch(int base) const;  // width_mult-scaled channel count, min 1

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

// DeepFillV2-style coarse completion net with the four dilated layers and
// two 2x upsamples; full-resolution output in the input value range.
class CoarseNet : public Module {
 public:
  CoarseNet(int in_channels, int out_channels, const ModelConfig& cfg,
            std::mt19937_64& rng);

  // x: masked frame with the mask concatenated as the last channel
  Tensor forward(const Tensor& x) const;
  int64_t mads(int h, int w) const;

 private:
  struct Stage {
    std::shared_ptr<GatedConv2d> conv;
    bool upsample_before = false;
    bool norm = true;
  };
  std::vector<Stage> stages_;
  std::shared_ptr<ConvLayer> out_conv_;
  bool tanh_out_;
};

// L stride-2 stages: stem K5S1, then per level K3S2 + K3S1 doubling width.
class FineEncoder : public Module {
 public:
  FineEncoder(int in_channels, const ModelConfig& cfg, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  int out_channels() const { return cout_; }
  int64_t mads(int h, int w) const;

 private:
  int cout_;
  std::vector<std::shared_ptr<GatedConv2d>> layers_;
};

// Fusion conv, dilated completion, two K3S1 convs, ConvLSTM (or a plain
// conv when the temporal path is ablated).
class BottleneckModule : public Module {
 public:
  BottleneckModule(int in_channels, int channels, const ModelConfig& cfg,
                   std::mt19937_64& rng);

  std::pair<Tensor, ConvLstmState> forward(const Tensor& fused_input,
                                           const ConvLstmState& state) const;
  ConvLstmState zero_state(int n, int h, int w) const;
  int channels() const { return channels_; }
  int64_t mads(int h, int w) const;

  std::shared_ptr<DilatedBlock> dilated() const { return dilated_; }
  std::shared_ptr<ConvLstmCell> lstm() const { return lstm_; }

 private:
  int channels_;
  bool temporal_;
  Activation act_;
  std::shared_ptr<GatedConv2d> fuse_, post1_, post2_;
  std::shared_ptr<DilatedBlock> dilated_;
  std::shared_ptr<ConvLstmCell> lstm_;
  std::shared_ptr<ConvLayer> lstm_replacement_;
};

struct GeneratorState {
  ConvLstmState lstm;
  Tensor prev_in_image, prev_in_depth;    // previous masked inputs
  Tensor prev_out_image, prev_out_depth;  // previous final outputs

  bool defined() const { return prev_in_image.defined(); }
  GeneratorState detached() const;
};

struct GeneratorOutput {
  Tensor image;  // user-facing output (composited when enabled), [-1,1]
  Tensor depth;  // [0,1]
  Tensor raw_image, raw_depth;
  Tensor coarse_image, coarse_depth;
  std::vector<Tensor> seg_logits;  // coarse-to-fine, L entries (SPADE mode)
};

class Generator : public Module {
 public:
  Generator(const ModelConfig& cfg, std::mt19937_64& rng);

  // image {N,3,S,S} in [-1,1], depth {N,1,S,S} in [0,1], mask {N,1,S,S} in
  // {0,1}; holes are zeroed internally. state == nullptr means first /
  // single frame (auxiliary inputs default to the current frame).
  std::pair<GeneratorOutput, GeneratorState> step(
      const Tensor& image, const Tensor& depth, const Tensor& mask,
      const GeneratorState* state) const;

  const ModelConfig& config() const { return cfg_; }

  // exposed stages (contract tests drive them directly)
  Tensor coarse_image_forward(const Tensor& masked, const Tensor& mask) const;
  Tensor coarse_depth_forward(const Tensor& masked, const Tensor& mask) const;
  std::pair<Tensor, ConvLstmState> bottleneck_forward(
      const Tensor& img_feat, const Tensor& depth_feat,
      const ConvLstmState& state) const;
  struct DecodeOut {
    Tensor image, depth;
    std::vector<Tensor> seg_logits;
  };
  DecodeOut decode(const Tensor& fused) const;

  std::shared_ptr<BottleneckModule> bottleneck() const { return bottleneck_; }
  const std::vector<std::shared_ptr<UpBlock>>& up_blocks() const { return up_blocks_; }

  struct ParamBreakdown {
    int64_t coarse = 0, encoders = 0, bottleneck = 0, decoder = 0, total = 0;
  };
  ParamBreakdown param_breakdown() const;
  int64_t count_mads(int h, int w) const;

 private:
  Tensor encode_stream(const FineEncoder& enc, const std::vector<Tensor>& parts) const;

  ModelConfig cfg_;
  std::shared_ptr<CoarseNet> coarse_img_, coarse_depth_;
  std::shared_ptr<FineEncoder> enc_img_, enc_depth_, enc_joint_;
  std::shared_ptr<BottleneckModule> bottleneck_;
  std::vector<std::shared_ptr<UpBlock>> up_blocks_;
  std::vector<std::shared_ptr<TransposedUpBlock>> up_blocks_ablated_;
  std::shared_ptr<ConvLayer> head_img_1_, head_img_2_, head_depth_1_, head_depth_2_;
};

// composed = mask * coarse + (1 - mask) * input
Tensor compose_coarse(const Tensor& input, const Tensor& coarse, const Tensor& mask);

// Analytic totals (no parameter materialization needed for MADs).
int64_t count_params(const ModelConfig& cfg);                 // generator only
int64_t count_mads(const ModelConfig& cfg, int h, int w);     // generator only

}  // namespace rdi
