#include "generator.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void ModelConfig::validate() const {
  require(levels >= 1, "ModelConfig: L >= 1 required");
  require(image_size >= (1 << levels) &&
              image_size % (1 << levels) == 0,
          "ModelConfig: image size must be divisible by 2^L");
  require(image_size % 4 == 0, "ModelConfig: coarse stage needs size divisible by 4");
  require(num_classes >= 2, "ModelConfig: num_classes >= 2");
  require(width_mult > 0, "ModelConfig: width_mult must be positive");
}

int ModelConfig::ch(int base) const {
  return std::max(1, static_cast<int>(std::lround(base * width_mult)));
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["image_size"] = image_size;
  j["levels"] = levels;
  j["num_classes"] = num_classes;
  j["width_mult"] = width_mult;
  j["spade_embed"] = spade_embed;
  j["temporal_enabled"] = temporal_enabled;
  j["rgbd_spade_enabled"] = rgbd_spade_enabled;
  j["separate_encoders"] = separate_encoders;
  j["composite_output"] = composite_output;
  j["adv_on_composited"] = adv_on_composited;
  j["hole_only_losses"] = hole_only_losses;
  j["activation"] = activation == Activation::kRelu ? "relu" : "elu";
  j["seg_cond"] = seg_cond == SegCondMode::kSoftmax
                      ? "softmax"
                      : (seg_cond == SegCondMode::kLogits ? "logits" : "onehot");
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.levels = j.value("levels", c.levels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.width_mult = j.value("width_mult", c.width_mult);
  c.spade_embed = j.value("spade_embed", c.spade_embed);
  c.temporal_enabled = j.value("temporal_enabled", c.temporal_enabled);
  c.rgbd_spade_enabled = j.value("rgbd_spade_enabled", c.rgbd_spade_enabled);
  c.separate_encoders = j.value("separate_encoders", c.separate_encoders);
  c.composite_output = j.value("composite_output", c.composite_output);
  c.adv_on_composited = j.value("adv_on_composited", c.adv_on_composited);
  c.hole_only_losses = j.value("hole_only_losses", c.hole_only_losses);
  const std::string act = j.value("activation", std::string("relu"));
  c.activation = act == "elu" ? Activation::kElu : Activation::kRelu;
  const std::string sc = j.value("seg_cond", std::string("softmax"));
  c.seg_cond = sc == "logits" ? SegCondMode::kLogits
                              : (sc == "onehot" ? SegCondMode::kOneHot
                                                : SegCondMode::kSoftmax);
  c.validate();
  return c;
}

// ---- CoarseNet -------------------------------------------------------------

CoarseNet::CoarseNet(int in_channels, int out_channels, const ModelConfig& cfg,
                     std::mt19937_64& rng)
    : tanh_out_(out_channels == 3) {
  const int c24 = cfg.ch(24), c48 = cfg.ch(48), c96 = cfg.ch(96), c12 = cfg.ch(12);
  struct Spec {
    int cin, cout, k, stride, dil;
    bool up;
  };
  const std::vector<Spec> specs = {
      {in_channels, c24, 5, 1, 1, false}, {c24, c48, 3, 2, 1, false},
      {c48, c48, 3, 1, 1, false},         {c48, c96, 3, 2, 1, false},
      {c96, c96, 3, 1, 1, false},         {c96, c96, 3, 1, 2, false},
      {c96, c96, 3, 1, 4, false},         {c96, c96, 3, 1, 8, false},
      {c96, c96, 3, 1, 16, false},        {c96, c96, 3, 1, 1, false},
      {c96, c96, 3, 1, 1, false},         {c96, c48, 3, 1, 1, true},
      {c48, c48, 3, 1, 1, false},         {c48, c24, 3, 1, 1, true},
      {c24, c12, 3, 1, 1, false},
  };
  int idx = 0;
  for (const auto& s : specs) {
    Stage st;
    st.conv = add_module("g" + std::to_string(idx++),
                         std::make_shared<GatedConv2d>(s.cin, s.cout, s.k, s.stride,
                                                       s.dil, cfg.activation, rng));
    st.upsample_before = s.up;
    stages_.push_back(st);
  }
  out_conv_ = add_module("out", std::make_shared<ConvLayer>(c12, out_channels, 3, 1, 1, rng));
}

Tensor CoarseNet::forward(const Tensor& x) const {
  require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0,
          "CoarseNet: spatial size must be divisible by 4");
  Tensor h = x;
  for (const auto& st : stages_) {
    if (st.upsample_before) h = upsample_nearest2(h);
    h = st.conv->forward(h);
    if (st.norm) h = instance_norm(h);
  }
  Tensor pre = out_conv_->forward(h);
  return tanh_out_ ? tanh(pre) : clamp01_ste(pre);
}

int64_t CoarseNet::mads(int h, int w) const {
  int64_t total = 0;
  int ch = h, cw = w;
  // spatial trace: two stride-2 stages down, two upsamples back
  for (const auto& st : stages_) {
    if (st.upsample_before) {
      ch *= 2;
      cw *= 2;
    }
    total += st.conv->mads(ch, cw);
    ch = st.conv->out_size(ch);
    cw = st.conv->out_size(cw);
  }
  total += out_conv_->mads(ch, cw);
  return total;
}

// ---- FineEncoder -----------------------------------------------------------

FineEncoder::FineEncoder(int in_channels, const ModelConfig& cfg,
                         std::mt19937_64& rng) {
  const Activation act = cfg.activation;
  int idx = 0;
  auto push = [&](int cin, int cout, int k, int stride) {
    layers_.push_back(add_module(
        "e" + std::to_string(idx++),
        std::make_shared<GatedConv2d>(cin, cout, k, stride, 1, act, rng)));
  };
  int c = cfg.ch(64);
  push(in_channels, c, 5, 1);
  for (int l = 0; l < cfg.levels; ++l) {
    push(c, c, 3, 2);
    push(c, 2 * c, 3, 1);
    c *= 2;
  }
  cout_ = c;
}

Tensor FineEncoder::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = instance_norm(l->forward(h));
  return h;
}

int64_t FineEncoder::mads(int h, int w) const {
  int64_t total = 0;
  int ch = h, cw = w;
  for (const auto& l : layers_) {
    total += l->mads(ch, cw);
    ch = l->out_size(ch);
    cw = l->out_size(cw);
  }
  return total;
}

// ---- BottleneckModule --------------------------------------------------------

BottleneckModule::BottleneckModule(int in_channels, int channels,
                                   const ModelConfig& cfg, std::mt19937_64& rng)
    : channels_(channels), temporal_(cfg.temporal_enabled), act_(cfg.activation) {
  fuse_ = add_module("fuse", std::make_shared<GatedConv2d>(in_channels, channels, 3,
                                                           1, 1, act_, rng));
  dilated_ = add_module("dilated", std::make_shared<DilatedBlock>(channels, act_, rng));
  post1_ = add_module("post1",
                      std::make_shared<GatedConv2d>(channels, channels, 3, 1, 1, act_, rng));
  post2_ = add_module("post2",
                      std::make_shared<GatedConv2d>(channels, channels, 3, 1, 1, act_, rng));
  if (temporal_) {
    lstm_ = add_module("lstm", std::make_shared<ConvLstmCell>(channels, channels, 3, rng));
  } else {
    lstm_replacement_ = add_module(
        "lstm_replacement", std::make_shared<ConvLayer>(channels, channels, 3, 1, 1, rng));
  }
}

ConvLstmState BottleneckModule::zero_state(int n, int h, int w) const {
  if (!temporal_) return {};
  return lstm_->zero_state(n, h, w);
}

std::pair<Tensor, ConvLstmState> BottleneckModule::forward(
    const Tensor& fused_input, const ConvLstmState& state) const {
  Tensor h = instance_norm(fuse_->forward(fused_input));
  h = instance_norm(dilated_->forward(h));
  h = instance_norm(post1_->forward(h));
  h = instance_norm(post2_->forward(h));
  if (!temporal_) {
    Tensor out = apply_act(instance_norm(lstm_replacement_->forward(h)), act_);
    return {out, ConvLstmState{}};
  }
  ConvLstmState s = state.defined() ? state
                                    : lstm_->zero_state(h.dim(0), h.dim(2), h.dim(3));
  if (!shape_eq(s.hidden.shape(), {h.dim(0), channels_, h.dim(2), h.dim(3)}))
    throw std::invalid_argument("BottleneckModule: carried state shape incompatible");
  auto [out, ns] = lstm_->step(h, s);
  return {out, ns};
}

int64_t BottleneckModule::mads(int h, int w) const {
  int64_t total = fuse_->mads(h, w) + dilated_->mads(h, w) + post1_->mads(h, w) +
                  post2_->mads(h, w);
  total += temporal_ ? lstm_->mads(h, w) : lstm_replacement_->mads(h, w);
  return total;
}

// ---- Generator ---------------------------------------------------------------

GeneratorState GeneratorState::detached() const {
  GeneratorState s;
  if (lstm.defined()) s.lstm = lstm.detached();
  if (prev_in_image.defined()) {
    s.prev_in_image = prev_in_image.detach();
    s.prev_in_depth = prev_in_depth.detach();
    s.prev_out_image = prev_out_image.detach();
    s.prev_out_depth = prev_out_depth.detach();
  }
  return s;
}

Generator::Generator(const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  coarse_img_ = add_module("coarse_img", std::make_shared<CoarseNet>(4, 3, cfg_, rng));
  coarse_depth_ = add_module("coarse_depth", std::make_shared<CoarseNet>(2, 1, cfg_, rng));
  if (cfg_.separate_encoders) {
    enc_img_ = add_module("enc_img", std::make_shared<FineEncoder>(10, cfg_, rng));
    enc_depth_ = add_module("enc_depth", std::make_shared<FineEncoder>(4, cfg_, rng));
  } else {
    enc_joint_ = add_module("enc_joint", std::make_shared<FineEncoder>(13, cfg_, rng));
  }
  const int feat = cfg_.ch(64) << cfg_.levels;
  const int fuse_in = cfg_.separate_encoders ? 2 * feat : feat;
  bottleneck_ = add_module("bottleneck",
                           std::make_shared<BottleneckModule>(fuse_in, feat, cfg_, rng));
  const int embed = cfg_.ch(cfg_.spade_embed);
  int c = feat;
  for (int l = 0; l < cfg_.levels; ++l) {
    const int cout = c / 2;
    if (cfg_.rgbd_spade_enabled) {
      up_blocks_.push_back(add_module(
          "up" + std::to_string(l),
          std::make_shared<UpBlock>(c, cout, cfg_.num_classes, embed,
                                    cfg_.activation, cfg_.seg_cond, rng)));
    } else {
      up_blocks_ablated_.push_back(add_module(
          "up" + std::to_string(l),
          std::make_shared<TransposedUpBlock>(c, cout, cfg_.activation, rng)));
    }
    c = cout;
  }
  const int c32 = cfg_.ch(32);
  head_img_1_ = add_module("head_img_1", std::make_shared<ConvLayer>(c, c32, 3, 1, 1, rng));
  head_img_2_ = add_module("head_img_2", std::make_shared<ConvLayer>(c32, 3, 3, 1, 1, rng));
  head_depth_1_ = add_module("head_depth_1", std::make_shared<ConvLayer>(c, c32, 3, 1, 1, rng));
  head_depth_2_ = add_module("head_depth_2", std::make_shared<ConvLayer>(c32, 1, 3, 1, 1, rng));
}

Tensor compose_coarse(const Tensor& input, const Tensor& coarse, const Tensor& mask) {
  require(shape_eq(input.shape(), coarse.shape()), "compose_coarse: shape mismatch");
  Tensor m = mask;
  if (mask.dim(1) != input.dim(1)) {
    require(mask.dim(1) == 1, "compose_coarse: mask must have 1 channel");
    std::vector<Tensor> reps(static_cast<size_t>(input.dim(1)), mask);
    m = concat_channels(reps);
  }
  Tensor inv = add_scalar(neg(m), 1.0);
  return m * coarse + inv * input;
}

Tensor Generator::coarse_image_forward(const Tensor& masked, const Tensor& mask) const {
  return coarse_img_->forward(concat_channels({masked, mask}));
}

Tensor Generator::coarse_depth_forward(const Tensor& masked, const Tensor& mask) const {
  return coarse_depth_->forward(concat_channels({masked, mask}));
}

std::pair<Tensor, ConvLstmState> Generator::bottleneck_forward(
    const Tensor& img_feat, const Tensor& depth_feat, const ConvLstmState& state) const {
  Tensor fused_in = cfg_.separate_encoders
                        ? concat_channels({img_feat, depth_feat})
                        : img_feat;
  return bottleneck_->forward(fused_in, state);
}

Generator::DecodeOut Generator::decode(const Tensor& fused) const {
  Tensor i = fused, d = fused;
  std::vector<Tensor> seg;
  if (cfg_.rgbd_spade_enabled) {
    for (const auto& blk : up_blocks_) {
      auto out = blk->forward(i, d);
      i = out.i;
      d = out.d;
      seg.push_back(out.seg_logits);
    }
  } else {
    for (const auto& blk : up_blocks_ablated_) {
      auto [ni, nd] = blk->forward(i, d);
      i = ni;
      d = nd;
    }
  }
  Tensor img = tanh(head_img_2_->forward(
      apply_act(instance_norm(head_img_1_->forward(i)), cfg_.activation)));
  Tensor dep = clamp01_ste(head_depth_2_->forward(
      apply_act(instance_norm(head_depth_1_->forward(d)), cfg_.activation)));
  return {img, dep, seg};
}

Tensor Generator::encode_stream(const FineEncoder& enc,
                                const std::vector<Tensor>& parts) const {
  return enc.forward(concat_channels(parts));
}

std::pair<GeneratorOutput, GeneratorState> Generator::step(
    const Tensor& image, const Tensor& depth, const Tensor& mask,
    const GeneratorState* state) const {
  require(image.dim(1) == 3 && depth.dim(1) == 1 && mask.dim(1) == 1,
          "Generator::step: channel layout must be 3/1/1");
  require(image.dim(2) == depth.dim(2) && image.dim(2) == mask.dim(2) &&
              image.dim(3) == mask.dim(3),
          "Generator::step: spatial shapes must agree");

  Tensor inv_mask = add_scalar(neg(mask), 1.0);
  Tensor inv3 = concat_channels({inv_mask, inv_mask, inv_mask});
  Tensor i_m = image * inv3;
  Tensor d_m = depth * inv_mask;

  Tensor coarse_i = coarse_image_forward(i_m, mask);
  Tensor coarse_d = coarse_depth_forward(d_m, mask);
  Tensor comp_i = compose_coarse(i_m, coarse_i, mask);
  Tensor comp_d = compose_coarse(d_m, coarse_d, mask);

  Tensor prev_in_i = i_m, prev_in_d = d_m, prev_out_i = i_m, prev_out_d = d_m;
  if (cfg_.temporal_enabled && state && state->defined()) {
    require(shape_eq(state->prev_in_image.shape(), image.shape()),
            "Generator::step: carried state shape incompatible with inputs");
    prev_in_i = state->prev_in_image;
    prev_in_d = state->prev_in_depth;
    prev_out_i = state->prev_out_image;
    prev_out_d = state->prev_out_depth;
  }

  Tensor fused;
  ConvLstmState lstm_in;
  if (cfg_.temporal_enabled && state) lstm_in = state->lstm;
  ConvLstmState lstm_out;
  if (cfg_.separate_encoders) {
    Tensor fi = encode_stream(*enc_img_, {comp_i, prev_in_i, prev_out_i, mask});
    Tensor fd = encode_stream(*enc_depth_, {comp_d, prev_in_d, prev_out_d, mask});
    auto [f, s] = bottleneck_->forward(concat_channels({fi, fd}), lstm_in);
    fused = f;
    lstm_out = s;
  } else {
    Tensor fj = encode_stream(
        *enc_joint_, {comp_i, comp_d, prev_in_i, prev_in_d, prev_out_i, prev_out_d, mask});
    auto [f, s] = bottleneck_->forward(fj, lstm_in);
    fused = f;
    lstm_out = s;
  }

  DecodeOut dec = decode(fused);

  GeneratorOutput out;
  out.raw_image = dec.image;
  out.raw_depth = dec.depth;
  out.coarse_image = coarse_i;
  out.coarse_depth = coarse_d;
  out.seg_logits = dec.seg_logits;
  if (cfg_.composite_output) {
    out.image = compose_coarse(i_m, dec.image, mask);
    out.depth = compose_coarse(d_m, dec.depth, mask);
  } else {
    out.image = dec.image;
    out.depth = dec.depth;
  }

  GeneratorState ns;
  ns.lstm = lstm_out;
  ns.prev_in_image = i_m;
  ns.prev_in_depth = d_m;
  ns.prev_out_image = out.image;
  ns.prev_out_depth = out.depth;
  return {out, ns};
}

Generator::ParamBreakdown Generator::param_breakdown() const {
  ParamBreakdown b;
  b.coarse = coarse_img_->param_count() + coarse_depth_->param_count();
  b.encoders = cfg_.separate_encoders
                   ? enc_img_->param_count() + enc_depth_->param_count()
                   : enc_joint_->param_count();
  b.bottleneck = bottleneck_->param_count();
  int64_t dec = head_img_1_->param_count() + head_img_2_->param_count() +
                head_depth_1_->param_count() + head_depth_2_->param_count();
  for (const auto& u : up_blocks_) dec += u->param_count();
  for (const auto& u : up_blocks_ablated_) dec += u->param_count();
  b.decoder = dec;
  b.total = b.coarse + b.encoders + b.bottleneck + b.decoder;
  return b;
}

int64_t Generator::count_mads(int h, int w) const {
  int64_t total = 0;
  total += coarse_img_->mads(h, w) + coarse_depth_->mads(h, w);
  if (cfg_.separate_encoders)
    total += enc_img_->mads(h, w) + enc_depth_->mads(h, w);
  else
    total += enc_joint_->mads(h, w);
  const int bh = h >> cfg_.levels, bw = w >> cfg_.levels;
  total += bottleneck_->mads(bh, bw);
  int ch = bh, cw = bw;
  for (int l = 0; l < cfg_.levels; ++l) {
    if (cfg_.rgbd_spade_enabled)
      total += up_blocks_[static_cast<size_t>(l)]->mads(ch, cw);
    else
      total += up_blocks_ablated_[static_cast<size_t>(l)]->mads(ch, cw);
    ch *= 2;
    cw *= 2;
  }
  total += head_img_1_->mads(h, w) + head_img_2_->mads(h, w);
  total += head_depth_1_->mads(h, w) + head_depth_2_->mads(h, w);
  return total;
}

int64_t count_params(const ModelConfig& cfg) {
  std::mt19937_64 rng(0);
  Generator g(cfg, rng);
  return g.param_count();
}

int64_t count_mads(const ModelConfig& cfg, int h, int w) {
  std::mt19937_64 rng(0);
  Generator g(cfg, rng);
  return g.count_mads(h, w);
}

}  // namespace rdi
