#include "core_types.hpp"

#include <algorithm>
#include <cmath>

namespace rdi {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

bool SegmentationMap::is_background(int id) const {
  return std::find(background_ids.begin(), background_ids.end(), id) !=
         background_ids.end();
}

void SequenceSample::validate() const {
  require(!frames.empty(), "SequenceSample: T >= 1 required");
  const int h = frames[0].color.h, w = frames[0].color.w;
  for (const auto& f : frames) {
    require(f.color.h == h && f.color.w == w, "SequenceSample: frame size mismatch");
    require(f.depth.h == h && f.depth.w == w, "SequenceSample: depth size mismatch");
    require(f.seg.h == h && f.seg.w == w, "SequenceSample: seg size mismatch");
    require(f.mask.h == h && f.mask.w == w, "SequenceSample: mask size mismatch");
    for (double v : f.color.data)
      require(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9, "RgbFrame value outside [-1,1]");
    for (double v : f.depth.data)
      require(v >= 0.0 && v <= 1.0 + 1e-9, "DepthMap value outside [0,1]");
    require(f.depth.depth_scale > 0, "DepthMap depth_scale must be positive");
    for (int id : f.seg.classes)
      require(id >= 0 && id < f.seg.num_classes, "SegmentationMap id out of range");
  }
  const size_t t = frames.size();
  require(flow_fwd.size() == t && flow_to_first.size() == t &&
              occl.size() == t && occl_first.size() == t,
          "SequenceSample: flow/occlusion list length must equal T");
}

RgbFrame normalize_rgb(const std::vector<int>& raw, int h, int w) {
  require(static_cast<size_t>(h) * w * 3 == raw.size(),
          "normalize_rgb: buffer size does not match 3*h*w");
  RgbFrame f;
  f.h = h;
  f.w = w;
  f.data.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    require(raw[i] >= 0 && raw[i] <= 255,
            "normalize_rgb: value " + std::to_string(raw[i]) + " outside [0,255]");
    f.data[i] = 2.0 * raw[i] / 255.0 - 1.0;
  }
  return f;
}

std::vector<int> denormalize_rgb(const RgbFrame& f) {
  std::vector<int> out(f.data.size());
  for (size_t i = 0; i < f.data.size(); ++i) {
    const double v = (f.data[i] + 1.0) * 255.0 / 2.0;
    out[i] = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
  }
  return out;
}

DepthMap scale_depth(const std::vector<double>& metric_m, int h, int w,
                     double depth_max) {
  require(depth_max > 0, "scale_depth: depth_max must be positive");
  require(static_cast<size_t>(h) * w == metric_m.size(),
          "scale_depth: buffer size does not match h*w");
  DepthMap d;
  d.h = h;
  d.w = w;
  d.depth_scale = depth_max;
  d.data.resize(metric_m.size());
  for (size_t i = 0; i < metric_m.size(); ++i) {
    require(metric_m[i] >= 0, "scale_depth: negative metric depth");
    d.data[i] = std::clamp(metric_m[i] / depth_max, 0.0, 1.0);
  }
  return d;
}

RgbFrame apply_mask(const RgbFrame& f, const InpaintMask& m) {
  require(f.h == m.h && f.w == m.w, "apply_mask: shape mismatch");
  RgbFrame out = f;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x)
        if (m.at(y, x)) out.at(c, y, x) = 0.0;
  return out;
}

DepthMap apply_mask(const DepthMap& d, const InpaintMask& m) {
  require(d.h == m.h && d.w == m.w, "apply_mask: shape mismatch");
  DepthMap out = d;
  for (int y = 0; y < d.h; ++y)
    for (int x = 0; x < d.w; ++x)
      if (m.at(y, x)) out.at(y, x) = 0.0;
  return out;
}

Tensor to_tensor(const RgbFrame& f) { return from_vec({1, 3, f.h, f.w}, f.data); }

Tensor to_tensor(const DepthMap& d) { return from_vec({1, 1, d.h, d.w}, d.data); }

Tensor to_tensor(const InpaintMask& m) {
  std::vector<double> v(m.data.begin(), m.data.end());
  return from_vec({1, 1, m.h, m.w}, std::move(v));
}

Tensor to_tensor(const FlowField& f) { return from_vec({1, 2, f.h, f.w}, f.data); }

Tensor to_tensor(const OcclusionMask& o) { return from_vec({1, 1, o.h, o.w}, o.data); }

RgbFrame rgb_from_tensor(const Tensor& t) {
  require(t.shape().size() == 4 && t.dim(0) == 1 && t.dim(1) == 3,
          "rgb_from_tensor: expected {1,3,H,W}");
  RgbFrame f;
  f.h = t.dim(2);
  f.w = t.dim(3);
  f.data.assign(t.data().begin(), t.data().end());
  return f;
}

DepthMap depth_from_tensor(const Tensor& t, double depth_scale) {
  require(t.shape().size() == 4 && t.dim(0) == 1 && t.dim(1) == 1,
          "depth_from_tensor: expected {1,1,H,W}");
  DepthMap d;
  d.h = t.dim(2);
  d.w = t.dim(3);
  d.depth_scale = depth_scale;
  d.data.assign(t.data().begin(), t.data().end());
  return d;
}

}  // namespace rdi
