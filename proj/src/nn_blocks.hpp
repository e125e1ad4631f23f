#pragma once

#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "module.hpp"
#include "tensor.hpp"

namespace rdi {

enum class Activation { kRelu, kElu };

Tensor apply_act(const Tensor& x, Activation a);

// How decoder segmentation logits are embedded before SPADE.
enum class SegCondMode { kSoftmax, kLogits, kOneHot };

// out = act(conv_f(x)) * sigmoid(conv_g(x))
class GatedConv2d : public Module {
 public:
  GatedConv2d(int cin, int cout, int k, int stride, int dilation,
              Activation act, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;

  int out_channels() const { return cout_; }
  int out_size(int in) const;
  int64_t mads(int h, int w) const;

  // test hook: zero the gate path so sigmoid(0) = 0.5 everywhere
  void zero_gate_path();

 private:
  int cin_, cout_, k_, stride_, dilation_, pad_;
  Activation act_;
  Tensor wf_, bf_, wg_, bg_;
};

// plain conv + optional bias, zero padding preserving size at stride 1
class ConvLayer : public Module {
 public:
  ConvLayer(int cin, int cout, int k, int stride, int dilation,
            std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;

  int out_channels() const { return cout_; }
  int out_size(int in) const;
  int64_t mads(int h, int w) const;
  Tensor weight() const { return w_; }
  Tensor bias() const { return b_; }

 private:
  int cin_, cout_, k_, stride_, dilation_, pad_;
  Tensor w_, b_;
};

// Four gated convolutions, dilation 2,4,8,16, stride 1, size preserved.
class DilatedBlock : public Module {
 public:
  DilatedBlock(int channels, Activation act, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  int64_t mads(int h, int w) const;

  const std::vector<std::shared_ptr<GatedConv2d>>& layers() const { return layers_; }

 private:
  std::vector<std::shared_ptr<GatedConv2d>> layers_;
};

struct ConvLstmState {
  Tensor hidden;  // {N,C,H,W}, tanh-bounded
  Tensor cell;

  bool defined() const { return hidden.defined(); }
  ConvLstmState detached() const { return {hidden.detach(), cell.detach()}; }
};

// Gate equations of the convolutional LSTM; no peephole terms.
class ConvLstmCell : public Module {
 public:
  ConvLstmCell(int cin, int hidden, int k, std::mt19937_64& rng);

  std::pair<Tensor, ConvLstmState> step(const Tensor& x,
                                        const ConvLstmState& s) const;
  ConvLstmState zero_state(int n, int h, int w) const;

  int hidden_channels() const { return hidden_; }
  int64_t mads(int h, int w) const;

  Tensor weight() const { return w_; }
  Tensor bias() const { return b_; }

 private:
  int cin_, hidden_, k_;
  Tensor w_;  // {4*hidden, cin+hidden, k, k}
  Tensor b_;  // {4*hidden}, forget slice initialized to +1
};

// Pyramid pooling segmentation head: bins {1,2,3,6} -> C/4 projections ->
// bilinear upsample -> concat with input -> 1x1 conv to class logits.
class PpmHead : public Module {
 public:
  PpmHead(int cin, int num_classes, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  int64_t mads(int h, int w) const;

 private:
  int cin_, num_classes_, proj_;
  std::vector<std::shared_ptr<ConvLayer>> proj_convs_;
  std::shared_ptr<ConvLayer> out_conv_;
};

// Spatially-adaptive modulation shared between the RGB and depth streams:
// both streams are normalized parameter-free and transformed with the same
// (1 + gamma) * x_hat + beta maps computed from the segmentation.
class RgbdSpade : public Module {
 public:
  RgbdSpade(int feat_channels, int num_classes, int embed_channels,
            SegCondMode mode, std::mt19937_64& rng);

  std::pair<Tensor, Tensor> forward(const Tensor& i, const Tensor& d,
                                    const Tensor& seg_logits) const;
  // single-stream variant (used by tests)
  Tensor forward_one(const Tensor& x, const Tensor& seg_logits) const;

  int64_t mads(int h, int w) const;

  void zero_modulation_paths();  // test hook: zero gamma/beta convs

 private:
  std::pair<Tensor, Tensor> gamma_beta(const Tensor& seg_logits, int h, int w) const;

  int feat_, num_classes_, embed_;
  SegCondMode mode_;
  std::shared_ptr<ConvLayer> embed_conv_, gamma_conv_, beta_conv_;
};

// Fig. 3a residual up block: nearest 2x upsample, PPM segmentation at the
// upsampled scale, two shared SPADE layers with intermediate per-stream
// convolutions, learned 1x1 skip projections.
class UpBlock : public Module {
 public:
  UpBlock(int cin, int cout, int num_classes, int embed_channels,
          Activation act, SegCondMode mode, std::mt19937_64& rng);

  struct Out {
    Tensor i, d, seg_logits;
  };
  Out forward(const Tensor& i_l, const Tensor& d_l) const;

  int64_t mads(int h, int w) const;

  std::shared_ptr<RgbdSpade> spade1() const { return spade1_; }
  std::shared_ptr<RgbdSpade> spade2() const { return spade2_; }
  // test hook: zero the residual branch output convs
  void zero_residual_branch();

 private:
  int cin_, cout_;
  Activation act_;
  std::shared_ptr<PpmHead> ppm_;
  std::shared_ptr<RgbdSpade> spade1_, spade2_;
  std::shared_ptr<ConvLayer> conv1_i_, conv1_d_, conv2_i_, conv2_d_;
  std::shared_ptr<ConvLayer> skip_i_, skip_d_;
};

// Ablation decoder stage: per-stream K3S2 transposed conv + IN + act.
class TransposedUpBlock : public Module {
 public:
  TransposedUpBlock(int cin, int cout, Activation act, std::mt19937_64& rng);

  std::pair<Tensor, Tensor> forward(const Tensor& i_l, const Tensor& d_l) const;
  int64_t mads(int h, int w) const;

 private:
  int cin_, cout_;
  Activation act_;
  Tensor w_i_, b_i_, w_d_, b_d_;  // {cin, cout, 3, 3}
};

}  // namespace rdi
