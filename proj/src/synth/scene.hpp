#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "../core_types.hpp"

namespace rdi::synth {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);
Vec3 operator*(const Vec3& a, double s);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalize(const Vec3& a);

struct CameraPose {
  Vec3 position;
  Vec3 look_at;
};

// Pinhole camera, computer-vision convention: x right, y down, z forward;
// pixel (i, j) has center (i + 0.5, j + 0.5).
struct Camera {
  Vec3 pos, axis_u, axis_v, fwd;
  double f = 0, cx = 0, cy = 0;
  int wpix = 0, hpix = 0;

  static Camera from_pose(const CameraPose& pose, double fov_deg, int w, int h);
  Vec3 to_cam(const Vec3& world) const;
  // false if the point is behind the camera
  bool project(const Vec3& world, double& u, double& v, double& z) const;
  Vec3 ray_dir(double u, double v) const;  // unit ray through (u, v)
};

// Smooth world-space procedural texture; low spatial frequency keeps the
// rendered-flow consistency check within its bilinear-resampling tolerance.
struct TextureSpec {
  Vec3 base{0.5, 0.5, 0.5};
  Vec3 amp{0.2, 0.2, 0.2};
  Vec3 wave{0.15, 0.1, 0.12};  // cycles per meter
  double phase = 0.0;
};

struct QuadSpec {
  Vec3 origin, eu, ev;  // corners: origin, +eu, +eu+ev, +ev
  int class_id = 0;
  int object_id = -1;  // -1 for room surfaces
  TextureSpec tex;
};

struct BoxSpec {
  Vec3 min, max;
  int class_id = 3;
  TextureSpec tex;
};

struct SceneSpec {
  Vec3 room_min{0, 0, 0};
  Vec3 room_max{6, 3, 6};
  std::vector<BoxSpec> boxes;
  std::vector<CameraPose> camera_path;  // one pose per frame
  Vec3 light_dir{0.3, -1.0, 0.2};      // direction light travels
  double ambient = 0.75;
  double diffuse = 0.25;
  double fov_deg = 60.0;
  int width = 64, height = 64;
  double depth_max = 10.0;
  int num_classes = 8;
  std::vector<int> background_ids = {0, 1, 2};
  uint64_t seed = 0;

  void validate() const;
};

struct RenderedFrame {
  RgbFrame color;
  DepthMap depth;
  SegmentationMap seg;
  std::vector<int> object_ids;     // per pixel; -1 = room surface
  std::vector<uint8_t> shadow;     // 1 = shadowed
  std::vector<int> shadow_caster;  // casting object id, -1 = none
  std::vector<Vec3> world_pos;     // exact surface point per pixel
  std::vector<double> z_m;         // unquantized depth in meters
};

class SceneGeometry {
 public:
  explicit SceneGeometry(const SceneSpec& spec);

  const std::vector<QuadSpec>& quads() const { return quads_; }
  // Nearest intersection along orig + t*dir with t > tmin. Returns the quad
  // index or -1. Used by the renderer's shadow rays and as the test oracle.
  int raycast(const Vec3& orig, const Vec3& dir, double tmin, double* t_out) const;

 private:
  std::vector<QuadSpec> quads_;
};

// Z-buffered triangle rasterization with perspective-correct attributes,
// flat shading, exact shadow rays.
RenderedFrame render_frame(const SceneGeometry& geo, const SceneSpec& spec,
                           const Camera& cam);

struct RenderedSequence {
  SequenceSample sample;               // masks left all-zero
  std::vector<RenderedFrame> frames;   // full per-pixel ground truth
};

// Full sequence with analytic flow (reprojection of exact surface points)
// and exact occlusion. Deterministic for a given spec.
RenderedSequence render_sequence(const SceneSpec& spec);

// Marks a source pixel invalid (0) when its reprojection leaves the frame
// or its depth, expressed in the target camera, exceeds the target z-buffer
// by more than tau (all depths in the shared [0,1] scale).
OcclusionMask exact_occlusion(const DepthMap& depth_src_in_target,
                              const DepthMap& depth_target,
                              const FlowField& flow_src_to_target,
                              double tau = 5e-3);

// O = exp(-alpha * e) with e the per-pixel mean squared channel difference
// in [0,1] intensity scale. alpha <= 0 is rejected.
OcclusionMask photometric_occlusion(const RgbFrame& frame,
                                    const RgbFrame& warped_ref, double alpha = 50.0);

// Union of one or more randomly chosen non-background connected components.
// instance_ids/shadow_caster (from the renderer) refine components to exact
// object instances and enable shadow-inclusive masks.
InpaintMask sample_object_mask(const SegmentationMap& seg, std::mt19937_64& rng,
                               bool include_shadow,
                               const std::vector<int>* instance_ids = nullptr,
                               const std::vector<int>* shadow_caster = nullptr);

// Deterministic random indoor scene for dataset generation.
SceneSpec make_random_scene(uint64_t seed, int frames, int size,
                            int num_classes = 8);

}  // namespace rdi::synth
