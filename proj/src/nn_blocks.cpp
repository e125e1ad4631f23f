#include "nn_blocks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdi {

namespace {

int64_t conv_mads(int k, int cin, int cout, int oh, int ow) {
  return static_cast<int64_t>(k) * k * cin * cout * oh * ow;
}

}  // namespace

Tensor apply_act(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kElu:
      return elu(x);
  }
  throw std::logic_error("apply_act: unknown activation");
}

// ---- GatedConv2d ----------------------------------------------------------

GatedConv2d::GatedConv2d(int cin, int cout, int k, int stride, int dilation,
                         Activation act, std::mt19937_64& rng)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), dilation_(dilation),
      pad_(dilation * (k - 1) / 2), act_(act) {
  wf_ = add_param("w_feat", kaiming_conv_weight({cout, cin, k, k}, rng));
  bf_ = add_param("b_feat", zeros({cout}));
  wg_ = add_param("w_gate", kaiming_conv_weight({cout, cin, k, k}, rng));
  bg_ = add_param("b_gate", zeros({cout}));
}

int GatedConv2d::out_size(int in) const {
  return (in + 2 * pad_ - dilation_ * (k_ - 1) - 1) / stride_ + 1;
}

Tensor GatedConv2d::forward(const Tensor& x) const {
  if (x.dim(1) != cin_)
    throw std::invalid_argument("GatedConv2d: expected " + std::to_string(cin_) +
                                " input channels, got " + std::to_string(x.dim(1)));
  ConvOpt opt{stride_, pad_, dilation_};
  Tensor feat = apply_act(conv2d(x, wf_, bf_, opt), act_);
  Tensor gate = sigmoid(conv2d(x, wg_, bg_, opt));
  return feat * gate;
}

int64_t GatedConv2d::mads(int h, int w) const {
  return 2 * conv_mads(k_, cin_, cout_, out_size(h), out_size(w));
}

void GatedConv2d::zero_gate_path() {
  auto w = wg_.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  auto b = bg_.mutable_data();
  std::fill(b.begin(), b.end(), 0.0);
}

// ---- ConvLayer -------------------------------------------------------------

ConvLayer::ConvLayer(int cin, int cout, int k, int stride, int dilation,
                     std::mt19937_64& rng)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), dilation_(dilation),
      pad_(dilation * (k - 1) / 2) {
  w_ = add_param("w", kaiming_conv_weight({cout, cin, k, k}, rng));
  b_ = add_param("b", zeros({cout}));
}

int ConvLayer::out_size(int in) const {
  return (in + 2 * pad_ - dilation_ * (k_ - 1) - 1) / stride_ + 1;
}

Tensor ConvLayer::forward(const Tensor& x) const {
  if (x.dim(1) != cin_)
    throw std::invalid_argument("ConvLayer: expected " + std::to_string(cin_) +
                                " input channels, got " + std::to_string(x.dim(1)));
  return conv2d(x, w_, b_, ConvOpt{stride_, pad_, dilation_});
}

int64_t ConvLayer::mads(int h, int w) const {
  return conv_mads(k_, cin_, cout_, out_size(h), out_size(w));
}

// ---- DilatedBlock ----------------------------------------------------------

DilatedBlock::DilatedBlock(int channels, Activation act, std::mt19937_64& rng) {
  int idx = 0;
  for (int d : {2, 4, 8, 16}) {
    layers_.push_back(add_module(
        "dil" + std::to_string(idx++),
        std::make_shared<GatedConv2d>(channels, channels, 3, 1, d, act, rng)));
  }
}

Tensor DilatedBlock::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = l->forward(h);
  return h;
}

int64_t DilatedBlock::mads(int h, int w) const {
  int64_t total = 0;
  for (const auto& l : layers_) total += l->mads(h, w);
  return total;
}

// ---- ConvLstmCell ----------------------------------------------------------

ConvLstmCell::ConvLstmCell(int cin, int hidden, int k, std::mt19937_64& rng)
    : cin_(cin), hidden_(hidden), k_(k) {
  w_ = add_param("w", kaiming_conv_weight({4 * hidden, cin + hidden, k, k}, rng));
  Tensor b = zeros({4 * hidden});
  {
    // gate order: input, forget, output, candidate; forget bias starts at +1
    auto bd = b.mutable_data();
    for (int i = hidden; i < 2 * hidden; ++i) bd[i] = 1.0;
  }
  b_ = add_param("b", b);
}

ConvLstmState ConvLstmCell::zero_state(int n, int h, int w) const {
  return {zeros({n, hidden_, h, w}), zeros({n, hidden_, h, w})};
}

std::pair<Tensor, ConvLstmState> ConvLstmCell::step(const Tensor& x,
                                                    const ConvLstmState& s) const {
  if (x.dim(1) != cin_)
    throw std::invalid_argument("ConvLstmCell: input channel mismatch");
  if (!shape_eq(s.hidden.shape(), {x.dim(0), hidden_, x.dim(2), x.dim(3)}))
    throw std::invalid_argument("ConvLstmCell: state/input shape mismatch");
  Tensor xh = concat_channels({x, s.hidden});
  Tensor gates = conv2d(xh, w_, b_, ConvOpt{1, k_ / 2, 1});
  Tensor gi = sigmoid(slice_channels(gates, 0, hidden_));
  Tensor gf = sigmoid(slice_channels(gates, hidden_, 2 * hidden_));
  Tensor go = sigmoid(slice_channels(gates, 2 * hidden_, 3 * hidden_));
  Tensor gc = tanh(slice_channels(gates, 3 * hidden_, 4 * hidden_));
  Tensor cell = gf * s.cell + gi * gc;
  Tensor hidden = go * tanh(cell);
  return {hidden, ConvLstmState{hidden, cell}};
}

int64_t ConvLstmCell::mads(int h, int w) const {
  return conv_mads(k_, cin_ + hidden_, 4 * hidden_, h, w);
}

// ---- PpmHead ---------------------------------------------------------------

PpmHead::PpmHead(int cin, int num_classes, std::mt19937_64& rng)
    : cin_(cin), num_classes_(num_classes), proj_(std::max(1, cin / 4)) {
  for (int i = 0; i < 4; ++i)
    proj_convs_.push_back(add_module(
        "proj" + std::to_string(i),
        std::make_shared<ConvLayer>(cin, proj_, 1, 1, 1, rng)));
  out_conv_ = add_module(
      "out", std::make_shared<ConvLayer>(cin + 4 * proj_, num_classes, 1, 1, 1, rng));
}

Tensor PpmHead::forward(const Tensor& x) const {
  const int h = x.dim(2), w = x.dim(3);
  static const int kBins[4] = {1, 2, 3, 6};
  std::vector<Tensor> parts{x};
  for (int i = 0; i < 4; ++i) {
    const int bh = std::min(kBins[i], h), bw = std::min(kBins[i], w);
    Tensor pooled = adaptive_avg_pool(x, bh, bw);
    Tensor proj = relu(proj_convs_[static_cast<size_t>(i)]->forward(pooled));
    parts.push_back(upsample_bilinear(proj, h, w));
  }
  return out_conv_->forward(concat_channels(parts));
}

int64_t PpmHead::mads(int h, int w) const {
  int64_t total = 0;
  static const int kBins[4] = {1, 2, 3, 6};
  for (int i = 0; i < 4; ++i) {
    const int bh = std::min(kBins[i], h), bw = std::min(kBins[i], w);
    total += conv_mads(1, cin_, proj_, bh, bw);
  }
  total += conv_mads(1, cin_ + 4 * proj_, num_classes_, h, w);
  return total;
}

// ---- RgbdSpade -------------------------------------------------------------

RgbdSpade::RgbdSpade(int feat_channels, int num_classes, int embed_channels,
                     SegCondMode mode, std::mt19937_64& rng)
    : feat_(feat_channels), num_classes_(num_classes),
      embed_(std::max(1, embed_channels)), mode_(mode) {
  embed_conv_ = add_module(
      "embed", std::make_shared<ConvLayer>(num_classes, embed_, 3, 1, 1, rng));
  gamma_conv_ = add_module(
      "gamma", std::make_shared<ConvLayer>(embed_, feat_, 3, 1, 1, rng));
  beta_conv_ = add_module(
      "beta", std::make_shared<ConvLayer>(embed_, feat_, 3, 1, 1, rng));
}

std::pair<Tensor, Tensor> RgbdSpade::gamma_beta(const Tensor& seg_logits,
                                                int h, int w) const {
  Tensor cond = seg_logits;
  if (mode_ == SegCondMode::kSoftmax) {
    cond = softmax_channels(cond);
  } else if (mode_ == SegCondMode::kOneHot) {
    NoGradGuard ng;
    Tensor probs = softmax_channels(cond.detach());
    const int n = probs.dim(0), c = probs.dim(1);
    const int64_t hw = static_cast<int64_t>(probs.dim(2)) * probs.dim(3);
    Tensor hard = zeros(probs.shape());
    auto hd = hard.mutable_data();
    auto pd = probs.data();
    for (int ni = 0; ni < n; ++ni)
      for (int64_t j = 0; j < hw; ++j) {
        int best = 0;
        for (int ci = 1; ci < c; ++ci)
          if (pd[(static_cast<int64_t>(ni) * c + ci) * hw + j] >
              pd[(static_cast<int64_t>(ni) * c + best) * hw + j])
            best = ci;
        hd[(static_cast<int64_t>(ni) * c + best) * hw + j] = 1.0;
      }
    cond = hard;
  }
  if (cond.dim(2) != h || cond.dim(3) != w) cond = upsample_bilinear(cond, h, w);
  Tensor e = relu(embed_conv_->forward(cond));
  return {gamma_conv_->forward(e), beta_conv_->forward(e)};
}

std::pair<Tensor, Tensor> RgbdSpade::forward(const Tensor& i, const Tensor& d,
                                             const Tensor& seg_logits) const {
  if (!shape_eq(i.shape(), d.shape()))
    throw std::invalid_argument("RgbdSpade: stream shapes differ");
  auto [g, b] = gamma_beta(seg_logits, i.dim(2), i.dim(3));
  Tensor scale = add_scalar(g, 1.0);
  Tensor oi = instance_norm(i) * scale + b;
  Tensor od = instance_norm(d) * scale + b;
  return {oi, od};
}

Tensor RgbdSpade::forward_one(const Tensor& x, const Tensor& seg_logits) const {
  auto [g, b] = gamma_beta(seg_logits, x.dim(2), x.dim(3));
  return instance_norm(x) * add_scalar(g, 1.0) + b;
}

int64_t RgbdSpade::mads(int h, int w) const {
  return conv_mads(3, num_classes_, embed_, h, w) +
         2 * conv_mads(3, embed_, feat_, h, w);
}

void RgbdSpade::zero_modulation_paths() {
  for (auto conv : {gamma_conv_, beta_conv_}) {
    auto w = conv->weight().mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    auto b = conv->bias().mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
}

// ---- UpBlock ---------------------------------------------------------------

UpBlock::UpBlock(int cin, int cout, int num_classes, int embed_channels,
                 Activation act, SegCondMode mode, std::mt19937_64& rng)
    : cin_(cin), cout_(cout), act_(act) {
  ppm_ = add_module("ppm", std::make_shared<PpmHead>(cin, num_classes, rng));
  spade1_ = add_module("spade1", std::make_shared<RgbdSpade>(
                                     cin, num_classes, embed_channels, mode, rng));
  spade2_ = add_module("spade2", std::make_shared<RgbdSpade>(
                                     cout, num_classes, embed_channels, mode, rng));
  conv1_i_ = add_module("conv1_i", std::make_shared<ConvLayer>(cin, cout, 3, 1, 1, rng));
  conv1_d_ = add_module("conv1_d", std::make_shared<ConvLayer>(cin, cout, 3, 1, 1, rng));
  conv2_i_ = add_module("conv2_i", std::make_shared<ConvLayer>(cout, cout, 3, 1, 1, rng));
  conv2_d_ = add_module("conv2_d", std::make_shared<ConvLayer>(cout, cout, 3, 1, 1, rng));
  skip_i_ = add_module("skip_i", std::make_shared<ConvLayer>(cin, cout, 1, 1, 1, rng));
  skip_d_ = add_module("skip_d", std::make_shared<ConvLayer>(cin, cout, 1, 1, 1, rng));
}

UpBlock::Out UpBlock::forward(const Tensor& i_l, const Tensor& d_l) const {
  Tensor ui = upsample_nearest2(i_l);
  Tensor ud = upsample_nearest2(d_l);
  Tensor seg = ppm_->forward(ui);
  auto [a_i, a_d] = spade1_->forward(ui, ud, seg);
  Tensor b_i = conv1_i_->forward(apply_act(a_i, act_));
  Tensor b_d = conv1_d_->forward(apply_act(a_d, act_));
  auto [c_i, c_d] = spade2_->forward(b_i, b_d, seg);
  Tensor r_i = conv2_i_->forward(apply_act(c_i, act_));
  Tensor r_d = conv2_d_->forward(apply_act(c_d, act_));
  return {skip_i_->forward(ui) + r_i, skip_d_->forward(ud) + r_d, seg};
}

int64_t UpBlock::mads(int h, int w) const {
  const int uh = 2 * h, uw = 2 * w;
  int64_t total = ppm_->mads(uh, uw);
  total += spade1_->mads(uh, uw) + spade2_->mads(uh, uw);
  total += 2 * conv_mads(3, cin_, cout_, uh, uw);
  total += 2 * conv_mads(3, cout_, cout_, uh, uw);
  total += 2 * conv_mads(1, cin_, cout_, uh, uw);
  return total;
}

void UpBlock::zero_residual_branch() {
  for (auto conv : {conv2_i_, conv2_d_}) {
    auto w = conv->weight().mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    auto b = conv->bias().mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
}

// ---- TransposedUpBlock -------------------------------------------------------

TransposedUpBlock::TransposedUpBlock(int cin, int cout, Activation act,
                                     std::mt19937_64& rng)
    : cin_(cin), cout_(cout), act_(act) {
  const double stddev = std::sqrt(2.0 / (cin * 9.0));
  w_i_ = add_param("w_i", randn({cin, cout, 3, 3}, rng, stddev));
  b_i_ = add_param("b_i", zeros({cout}));
  w_d_ = add_param("w_d", randn({cin, cout, 3, 3}, rng, stddev));
  b_d_ = add_param("b_d", zeros({cout}));
}

std::pair<Tensor, Tensor> TransposedUpBlock::forward(const Tensor& i_l,
                                                     const Tensor& d_l) const {
  Tensor oi = apply_act(instance_norm(conv_transpose2d(i_l, w_i_, b_i_, 2, 1, 1)), act_);
  Tensor od = apply_act(instance_norm(conv_transpose2d(d_l, w_d_, b_d_, 2, 1, 1)), act_);
  return {oi, od};
}

int64_t TransposedUpBlock::mads(int h, int w) const {
  return 2 * conv_mads(3, cin_, cout_, 2 * h, 2 * w);
}

}  // namespace rdi
