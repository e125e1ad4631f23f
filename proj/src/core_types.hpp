#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

// Canonical in-memory frame types. All pixel buffers are channel-planar
// (CHW) row-major doubles; conversions to/from the NCHW autodiff tensors
// are zero-surprise copies.

namespace rdi {

// 3xHxW, values in [-1, 1].
struct RgbFrame {
  int h = 0, w = 0;
  std::vector<double> data;  // planar, 3*h*w

  double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * h + y) * w + x]; }
};

// 1xHxW in [0,1]; depth_scale converts to meters (meters = value * depth_scale).
struct DepthMap {
  int h = 0, w = 0;
  double depth_scale = 10.0;
  std::vector<double> data;  // h*w

  double& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

struct SegmentationMap {
  int h = 0, w = 0;
  int num_classes = 0;
  std::vector<int> classes;  // h*w ids in [0, num_classes)
  std::vector<int> background_ids;

  int at(int y, int x) const { return classes[static_cast<size_t>(y) * w + x]; }
  bool is_background(int id) const;
};

// 1 = hole (region to inpaint), 0 = observed.
struct InpaintMask {
  int h = 0, w = 0;
  std::vector<uint8_t> data;  // h*w, {0,1}

  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

// 2xHxW planar: plane 0 = dx, plane 1 = dy, pixel displacements.
struct FlowField {
  int h = 0, w = 0;
  std::vector<double> data;  // 2*h*w

  double dx(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
  double dy(int y, int x) const { return data[(static_cast<size_t>(h) + y) * w + x]; }
  double& dx(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  double& dy(int y, int x) { return data[(static_cast<size_t>(h) + y) * w + x]; }
};

// Soft validity in [0,1]; 1 = valid (non-occluded).
struct OcclusionMask {
  int h = 0, w = 0;
  std::vector<double> data;  // h*w

  double at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

struct FrameSample {
  RgbFrame color;
  DepthMap depth;
  SegmentationMap seg;
  InpaintMask mask;
};

// T aligned frames plus ground-truth flow/occlusion. flow_fwd[t] maps frame
// t to t-1 (defined for t >= 1, 0-based); flow_to_first[t] maps frame t to
// frame 0 (defined for t >= 2; the t == 1 pair equals flow_fwd[1]).
struct SequenceSample {
  std::vector<FrameSample> frames;
  std::vector<std::optional<FlowField>> flow_fwd;
  std::vector<std::optional<FlowField>> flow_to_first;
  std::vector<std::optional<OcclusionMask>> occl;
  std::vector<std::optional<OcclusionMask>> occl_first;

  int size() const { return static_cast<int>(frames.size()); }
  void validate() const;  // shared H/W, list lengths, value ranges
};

struct LossWeights {
  double rec = 10.0;
  double per = 10.0;
  double sty = 250.0;
  double grad = 100.0;
  double seg = 10.0;
  double temporal = 10.0;
};

// ---- operations ----------------------------------------------------------

// out = 2*raw/255 - 1. Rejects values outside [0,255].
RgbFrame normalize_rgb(const std::vector<int>& raw, int h, int w);
// Inverse of normalize_rgb with rounding to the nearest 8-bit level.
std::vector<int> denormalize_rgb(const RgbFrame& f);

// out = clamp(metric/depth_max, 0, 1). Rejects depth_max <= 0 or negatives.
DepthMap scale_depth(const std::vector<double>& metric_m, int h, int w, double depth_max);

RgbFrame apply_mask(const RgbFrame& f, const InpaintMask& m);
DepthMap apply_mask(const DepthMap& d, const InpaintMask& m);

// ---- tensor bridging -----------------------------------------------------

Tensor to_tensor(const RgbFrame& f);        // {1,3,H,W}
Tensor to_tensor(const DepthMap& d);        // {1,1,H,W}
Tensor to_tensor(const InpaintMask& m);     // {1,1,H,W} in {0,1}
Tensor to_tensor(const FlowField& f);       // {1,2,H,W}
Tensor to_tensor(const OcclusionMask& o);   // {1,1,H,W}

RgbFrame rgb_from_tensor(const Tensor& t);          // {1,3,H,W}
DepthMap depth_from_tensor(const Tensor& t, double depth_scale);

}  // namespace rdi
