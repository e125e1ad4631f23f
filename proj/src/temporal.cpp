#include "temporal.hpp"

#include <stdexcept>

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor occl_weighted_l1(const Tensor& a, const Tensor& b, const Tensor& occ) {
  Tensor o = occ;
  if (occ.dim(1) != a.dim(1)) {
    require(occ.dim(1) == 1, "temporal loss: occlusion mask must be 1-channel");
    std::vector<Tensor> reps(static_cast<size_t>(a.dim(1)), occ);
    o = concat_channels(reps);
  }
  return mean_all(o * abs(a - b));
}

}  // namespace

Tensor backward_warp(const Tensor& img, const Tensor& flow) {
  return warp_bilinear(img, flow);
}

RgbFrame backward_warp(const RgbFrame& img, const FlowField& flow) {
  NoGradGuard ng;
  return rgb_from_tensor(warp_bilinear(to_tensor(img), to_tensor(flow)));
}

DepthMap backward_warp(const DepthMap& img, const FlowField& flow) {
  NoGradGuard ng;
  return depth_from_tensor(warp_bilinear(to_tensor(img), to_tensor(flow)),
                           img.depth_scale);
}

std::pair<FlowField, OcclusionMask> GtFlowProvider::flow(int t, int x) const {
  const int T = sample_->size();
  require(t >= 0 && t < T && x >= 0 && x < T, "GtFlowProvider: frame index out of range");
  if (x == t - 1 && sample_->flow_fwd[static_cast<size_t>(t)].has_value())
    return {*sample_->flow_fwd[static_cast<size_t>(t)],
            *sample_->occl[static_cast<size_t>(t)]};
  if (x == 0 && t >= 1) {
    if (t == 1 && sample_->flow_fwd[1].has_value())
      return {*sample_->flow_fwd[1], *sample_->occl[1]};
    if (sample_->flow_to_first[static_cast<size_t>(t)].has_value())
      return {*sample_->flow_to_first[static_cast<size_t>(t)],
              *sample_->occl_first[static_cast<size_t>(t)]};
  }
  throw std::runtime_error("GtFlowProvider: no stored flow for pair (" +
                           std::to_string(t) + "," + std::to_string(x) + ")");
}

TemporalLosses temporal_losses(const std::vector<Tensor>& outputs,
                               const std::vector<Tensor>& flow_fwd,
                               const std::vector<Tensor>& occl,
                               const std::vector<Tensor>& flow_first,
                               const std::vector<Tensor>& occl_first) {
  const size_t T = outputs.size();
  require(T >= 2, "temporal_losses: need T >= 2");
  require(flow_fwd.size() == T && occl.size() == T, "temporal_losses: fwd lists must have length T");
  require(flow_first.size() == T && occl_first.size() == T,
          "temporal_losses: to-first lists must have length T");

  Tensor st = zeros({1});
  for (size_t t = 1; t < T; ++t) {
    require(flow_fwd[t].defined() && occl[t].defined(),
            "temporal_losses: missing flow/occlusion for pair (" +
                std::to_string(t) + "," + std::to_string(t - 1) + ")");
    Tensor warped = warp_bilinear(outputs[t - 1], flow_fwd[t]);
    st = st + occl_weighted_l1(outputs[t], warped, occl[t]);
  }

  Tensor lt = zeros({1});
  for (size_t t = 2; t < T; ++t) {
    require(flow_first[t].defined() && occl_first[t].defined(),
            "temporal_losses: missing flow/occlusion for pair (" +
                std::to_string(t) + ",0)");
    Tensor warped = warp_bilinear(outputs[0], flow_first[t]);
    lt = lt + occl_weighted_l1(outputs[t], warped, occl_first[t]);
  }
  return {st, lt};
}

TemporalLosses temporal_losses(const std::vector<Tensor>& outputs,
                               const SequenceSample& sample) {
  const size_t T = outputs.size();
  require(static_cast<int>(T) == sample.size(),
          "temporal_losses: output count differs from sequence length");
  GtFlowProvider provider(sample);
  std::vector<Tensor> ff(T), oc(T), f1(T), o1(T);
  for (size_t t = 1; t < T; ++t) {
    auto [f, o] = provider.flow(static_cast<int>(t), static_cast<int>(t) - 1);
    ff[t] = to_tensor(f);
    oc[t] = to_tensor(o);
  }
  for (size_t t = 2; t < T; ++t) {
    auto [f, o] = provider.flow(static_cast<int>(t), 0);
    f1[t] = to_tensor(f);
    o1[t] = to_tensor(o);
  }
  return temporal_losses(outputs, ff, oc, f1, o1);
}

}  // namespace rdi
