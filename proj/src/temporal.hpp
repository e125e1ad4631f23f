#pragma once

#include <utility>
#include <vector>

#include "core_types.hpp"
#include "tensor.hpp"

namespace rdi {

// Bilinear backward warp: sample img at (x+dx, y+dy); border clamped.
// Differentiable w.r.t. the image (flow is a constant).
Tensor backward_warp(const Tensor& img, const Tensor& flow);
RgbFrame backward_warp(const RgbFrame& img, const FlowField& flow);
DepthMap backward_warp(const DepthMap& img, const FlowField& flow);

// Flow/occlusion source for temporal supervision. The default provider
// serves the ground-truth flow stored in a SequenceSample; an external
// estimator can implement the same interface. Absence of flow for a
// requested pair is an error, never a silent zero flow.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  // flow from frame t to frame x (0-based indices) plus occlusion mask
  virtual std::pair<FlowField, OcclusionMask> flow(int t, int x) const = 0;
};

class GtFlowProvider : public FlowProvider {
 public:
  explicit GtFlowProvider(const SequenceSample& sample) : sample_(&sample) {}
  std::pair<FlowField, OcclusionMask> flow(int t, int x) const override;

 private:
  const SequenceSample* sample_;
};

// Short/long-term temporal losses over image outputs.
//   st = sum_{t>=1} mean(O^{t->t-1} .* |I_t - warp(I_{t-1}, F^{t->t-1})|)
//   lt = sum_{t>=2} mean(O^{t->0}   .* |I_t - warp(I_0,    F^{t->0})|)
// (0-based frames; lt is an empty sum for T = 2.)
// outputs: T tensors {N,C,H,W}; flows {N,2,H,W}; occlusions {N,1,H,W}.
// flow_fwd[t] / occl[t] describe pair (t, t-1); entries for t = 0 unused.
// flow_first[t] / occl_first[t] describe (t, 0); entries for t < 2 unused.
struct TemporalLosses {
  Tensor st, lt;
};
TemporalLosses temporal_losses(const std::vector<Tensor>& outputs,
                               const std::vector<Tensor>& flow_fwd,
                               const std::vector<Tensor>& occl,
                               const std::vector<Tensor>& flow_first,
                               const std::vector<Tensor>& occl_first);

// Convenience: losses for one sequence's outputs using its stored GT flow.
TemporalLosses temporal_losses(const std::vector<Tensor>& outputs,
                               const SequenceSample& sample);

}  // namespace rdi
