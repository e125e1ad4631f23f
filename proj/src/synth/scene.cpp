#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace rdi::synth {

namespace {

constexpr double kNearPlane = 0.05;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalize(const Vec3& a) {
  const double n = norm(a);
  if (n < 1e-12) throw std::invalid_argument("normalize: zero-length vector");
  return a * (1.0 / n);
}

Camera Camera::from_pose(const CameraPose& pose, double fov_deg, int w, int h) {
  Camera c;
  c.pos = pose.position;
  const Vec3 dir = pose.look_at - pose.position;
  if (norm(dir) < 1e-9)
    throw std::invalid_argument("Camera: degenerate pose (zero view direction)");
  c.fwd = normalize(dir);
  Vec3 world_up{0, 1, 0};
  if (std::fabs(dot(c.fwd, world_up)) > 0.999) world_up = {1, 0, 0};
  c.axis_u = normalize(cross(world_up, c.fwd));  // image x
  c.axis_v = cross(c.axis_u, c.fwd);             // image y (down)
  c.wpix = w;
  c.hpix = h;
  c.f = (w / 2.0) / std::tan(fov_deg * M_PI / 360.0);
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  return c;
}

Vec3 Camera::to_cam(const Vec3& world) const {
  const Vec3 d = world - pos;
  return {dot(d, axis_u), dot(d, axis_v), dot(d, fwd)};
}

bool Camera::project(const Vec3& world, double& u, double& v, double& z) const {
  const Vec3 c = to_cam(world);
  z = c.z;
  if (c.z <= 1e-9) return false;
  u = f * c.x / c.z + cx;
  v = f * c.y / c.z + cy;
  return true;
}

Vec3 Camera::ray_dir(double u, double v) const {
  const Vec3 d = axis_u * ((u - cx) / f) + axis_v * ((v - cy) / f) + fwd;
  return normalize(d);
}

void SceneSpec::validate() const {
  require(!camera_path.empty(), "SceneSpec: camera path must have T >= 1 poses");
  require(!boxes.empty(), "SceneSpec: at least one non-background object required");
  require(width > 0 && height > 0, "SceneSpec: invalid image size");
  require(depth_max > 0, "SceneSpec: depth_max must be positive");
  for (const auto& p : camera_path) {
    if (norm(p.look_at - p.position) < 1e-9)
      throw std::invalid_argument("SceneSpec: degenerate camera pose");
    require(p.position.x > room_min.x && p.position.x < room_max.x &&
                p.position.y > room_min.y && p.position.y < room_max.y &&
                p.position.z > room_min.z && p.position.z < room_max.z,
            "SceneSpec: camera must stay inside the room");
  }
  for (int id : background_ids)
    require(id >= 0 && id < num_classes, "SceneSpec: background id out of range");
  for (const auto& b : boxes)
    require(b.class_id >= 0 && b.class_id < num_classes,
            "SceneSpec: box class id out of range");
}

namespace {

TextureSpec wall_texture(int which) {
  TextureSpec t;
  t.base = which == 0 ? Vec3{0.55, 0.52, 0.48}
                      : (which == 1 ? Vec3{0.42, 0.40, 0.36} : Vec3{0.6, 0.6, 0.62});
  t.amp = {0.12, 0.1, 0.1};
  t.wave = {0.13 + 0.02 * which, 0.07, 0.11};
  t.phase = 0.7 * which;
  return t;
}

void add_box_quads(std::vector<QuadSpec>& quads, const Vec3& mn, const Vec3& mx,
                   int class_id, int object_id, const TextureSpec& tex,
                   bool inward) {
  const Vec3 dx{mx.x - mn.x, 0, 0};
  const Vec3 dy{0, mx.y - mn.y, 0};
  const Vec3 dz{0, 0, mx.z - mn.z};
  // outward normals: cross(eu, ev) points out of the box
  std::vector<QuadSpec> faces(6);
  faces[0] = {mn, dz, dy};                         // -x
  faces[1] = {{mx.x, mn.y, mn.z}, dy, dz};         // +x
  faces[2] = {mn, dx, dz};                         // -y (bottom)
  faces[3] = {{mn.x, mx.y, mn.z}, dz, dx};         // +y (top)
  faces[4] = {mn, dy, dx};                         // -z
  faces[5] = {{mn.x, mn.y, mx.z}, dx, dy};         // +z
  for (auto& f : faces) {
    if (inward) std::swap(f.eu, f.ev);  // flip normals toward the interior
    f.class_id = class_id;
    f.object_id = object_id;
    f.tex = tex;
    quads.push_back(f);
  }
}

}  // namespace

SceneGeometry::SceneGeometry(const SceneSpec& spec) {
  // room: inward-facing box; floor/ceiling get their own classes
  std::vector<QuadSpec> room;
  add_box_quads(room, spec.room_min, spec.room_max, 0, -1, wall_texture(0), true);
  room[2].class_id = 1;  // floor (-y face)
  room[2].tex = wall_texture(1);
  room[3].class_id = 2;  // ceiling
  room[3].tex = wall_texture(2);
  quads_ = room;
  int object_id = 0;
  for (const auto& b : spec.boxes) {
    add_box_quads(quads_, b.min, b.max, b.class_id, object_id++, b.tex, false);
  }
}

int SceneGeometry::raycast(const Vec3& orig, const Vec3& dir, double tmin,
                           double* t_out) const {
  int best = -1;
  double best_t = 1e30;
  for (size_t qi = 0; qi < quads_.size(); ++qi) {
    const QuadSpec& q = quads_[qi];
    const Vec3 n = cross(q.eu, q.ev);
    const double denom = dot(n, dir);
    if (std::fabs(denom) < 1e-12) continue;
    const double t = dot(n, q.origin - orig) / denom;
    if (t <= tmin || t >= best_t) continue;
    const Vec3 p = orig + dir * t - q.origin;
    const double uu = dot(q.eu, q.eu), vv = dot(q.ev, q.ev);
    const double pu = dot(p, q.eu) / uu, pv = dot(p, q.ev) / vv;
    if (pu < 0 || pu > 1 || pv < 0 || pv > 1) continue;
    best_t = t;
    best = static_cast<int>(qi);
  }
  if (t_out) *t_out = best_t;
  return best;
}

namespace {

Vec3 texture_color(const TextureSpec& t, const Vec3& x) {
  const double s = 2.0 * M_PI * (t.wave.x * x.x + t.wave.y * x.y + t.wave.z * x.z);
  Vec3 c;
  c.x = t.base.x + t.amp.x * std::sin(s + t.phase);
  c.y = t.base.y + t.amp.y * std::sin(s + t.phase + 2.1);
  c.z = t.base.z + t.amp.z * std::sin(s + t.phase + 4.2);
  c.x = std::clamp(c.x, 0.0, 1.0);
  c.y = std::clamp(c.y, 0.0, 1.0);
  c.z = std::clamp(c.z, 0.0, 1.0);
  return c;
}

struct CamVert {
  Vec3 cam;    // camera-space position
  Vec3 world;  // world-space position
};

// Clip a camera-space triangle against z = kNearPlane; 0..2 output triangles.
int clip_near(const CamVert in[3], CamVert out[2][3]) {
  CamVert poly[4];
  int npoly = 0;
  for (int i = 0; i < 3; ++i) {
    const CamVert& a = in[i];
    const CamVert& b = in[(i + 1) % 3];
    const bool ain = a.cam.z > kNearPlane, bin = b.cam.z > kNearPlane;
    if (ain) poly[npoly++] = a;
    if (ain != bin) {
      const double t = (kNearPlane - a.cam.z) / (b.cam.z - a.cam.z);
      CamVert m;
      m.cam = a.cam + (b.cam - a.cam) * t;
      m.world = a.world + (b.world - a.world) * t;
      poly[npoly++] = m;
    }
  }
  if (npoly < 3) return 0;
  out[0][0] = poly[0];
  out[0][1] = poly[1];
  out[0][2] = poly[2];
  if (npoly == 3) return 1;
  out[1][0] = poly[0];
  out[1][1] = poly[2];
  out[1][2] = poly[3];
  return 2;
}

struct RasterBuffers {
  std::vector<double> z;
  std::vector<int> quad;
  std::vector<Vec3> world;
};

void rasterize(const SceneGeometry& geo, const Camera& cam, RasterBuffers& buf) {
  const int w = cam.wpix, h = cam.hpix;
  buf.z.assign(static_cast<size_t>(w) * h, 1e30);
  buf.quad.assign(static_cast<size_t>(w) * h, -1);
  buf.world.assign(static_cast<size_t>(w) * h, Vec3{});
  const auto& quads = geo.quads();
  for (size_t qi = 0; qi < quads.size(); ++qi) {
    const QuadSpec& q = quads[qi];
    const Vec3 n = cross(q.eu, q.ev);
    if (dot(n, cam.pos - q.origin) <= 0) continue;  // backface
    const Vec3 corners[4] = {q.origin, q.origin + q.eu, q.origin + q.eu + q.ev,
                             q.origin + q.ev};
    const int tris[2][3] = {{0, 1, 2}, {0, 2, 3}};
    for (const auto& tri : tris) {
      CamVert cv[3];
      for (int i = 0; i < 3; ++i) {
        cv[i].world = corners[tri[i]];
        cv[i].cam = cam.to_cam(corners[tri[i]]);
      }
      CamVert clipped[2][3];
      const int ntri = clip_near(cv, clipped);
      for (int ti = 0; ti < ntri; ++ti) {
        double sx[3], sy[3], invz[3];
        Vec3 wz[3];  // world / z
        for (int i = 0; i < 3; ++i) {
          const Vec3& c = clipped[ti][i].cam;
          sx[i] = cam.f * c.x / c.z + cam.cx;
          sy[i] = cam.f * c.y / c.z + cam.cy;
          invz[i] = 1.0 / c.z;
          wz[i] = clipped[ti][i].world * invz[i];
        }
        const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) -
                            (sx[2] - sx[0]) * (sy[1] - sy[0]);
        if (std::fabs(area) < 1e-12) continue;
        const double inv_area = 1.0 / area;
        int x0 = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}) - 0.5)));
        int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}) + 0.5)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}) - 0.5)));
        int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}) + 0.5)));
        for (int py = y0; py <= y1; ++py) {
          const double cyp = py + 0.5;
          for (int px = x0; px <= x1; ++px) {
            const double cxp = px + 0.5;
            double l0 = ((sx[1] - cxp) * (sy[2] - cyp) - (sx[2] - cxp) * (sy[1] - cyp)) * inv_area;
            double l1 = ((sx[2] - cxp) * (sy[0] - cyp) - (sx[0] - cxp) * (sy[2] - cyp)) * inv_area;
            double l2 = 1.0 - l0 - l1;
            if (l0 < 0 || l1 < 0 || l2 < 0) continue;
            const double iz = l0 * invz[0] + l1 * invz[1] + l2 * invz[2];
            const double z = 1.0 / iz;
            const size_t idx = static_cast<size_t>(py) * w + px;
            if (z >= buf.z[idx]) continue;
            buf.z[idx] = z;
            buf.quad[idx] = static_cast<int>(qi);
            buf.world[idx] = (wz[0] * l0 + wz[1] * l1 + wz[2] * l2) * z;
          }
        }
      }
    }
  }
}

}  // namespace

RenderedFrame render_frame(const SceneGeometry& geo, const SceneSpec& spec,
                           const Camera& cam) {
  const int w = spec.width, h = spec.height;
  RasterBuffers buf;
  rasterize(geo, cam, buf);

  RenderedFrame out;
  out.seg.h = h;
  out.seg.w = w;
  out.seg.num_classes = spec.num_classes;
  out.seg.background_ids = spec.background_ids;
  out.seg.classes.assign(static_cast<size_t>(w) * h, 0);
  out.object_ids.assign(static_cast<size_t>(w) * h, -1);
  out.shadow.assign(static_cast<size_t>(w) * h, 0);
  out.shadow_caster.assign(static_cast<size_t>(w) * h, -1);
  out.world_pos.assign(static_cast<size_t>(w) * h, Vec3{});
  out.z_m.assign(static_cast<size_t>(w) * h, spec.depth_max);

  const Vec3 light = normalize(spec.light_dir);
  std::vector<int> rgb(static_cast<size_t>(w) * h * 3, 0);
  std::vector<double> depth_m(static_cast<size_t>(w) * h, spec.depth_max);
  const auto& quads = geo.quads();

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const size_t idx = static_cast<size_t>(py) * w + px;
      const int qi = buf.quad[idx];
      if (qi < 0) continue;  // camera inside a closed room: should not happen
      const QuadSpec& q = quads[static_cast<size_t>(qi)];
      const Vec3 X = buf.world[idx];
      out.world_pos[idx] = X;
      out.z_m[idx] = buf.z[idx];
      depth_m[idx] = buf.z[idx];
      out.seg.classes[idx] = q.class_id;
      out.object_ids[idx] = q.object_id;

      Vec3 n = normalize(cross(q.eu, q.ev));
      double lambert = std::max(0.0, -dot(n, light));
      int caster = -1;
      if (lambert > 0) {
        double t_hit;
        const Vec3 shadow_origin = X + n * 1e-6;
        const int hit = geo.raycast(shadow_origin, light * -1.0, 1e-6, &t_hit);
        if (hit >= 0) {
          out.shadow[idx] = 1;
          caster = quads[static_cast<size_t>(hit)].object_id;
          lambert = 0.0;
        }
      }
      out.shadow_caster[idx] = caster;
      const Vec3 tex = texture_color(q.tex, X);
      const double shade = spec.ambient + spec.diffuse * lambert;
      const Vec3 c = tex * shade;
      rgb[idx * 3 + 0] = std::clamp(static_cast<int>(std::lround(c.x * 255.0)), 0, 255);
      rgb[idx * 3 + 1] = std::clamp(static_cast<int>(std::lround(c.y * 255.0)), 0, 255);
      rgb[idx * 3 + 2] = std::clamp(static_cast<int>(std::lround(c.z * 255.0)), 0, 255);
    }
  }

  // interleaved 8-bit -> planar [-1,1]
  std::vector<int> planar(static_cast<size_t>(w) * h * 3);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i)
      planar[static_cast<size_t>(c) * w * h + i] = rgb[i * 3 + c];
  out.color = normalize_rgb(planar, h, w);
  out.depth = scale_depth(depth_m, h, w, spec.depth_max);
  return out;
}

RenderedSequence render_sequence(const SceneSpec& spec) {
  spec.validate();
  SceneGeometry geo(spec);
  const int T = static_cast<int>(spec.camera_path.size());
  const int w = spec.width, h = spec.height;

  RenderedSequence out;
  std::vector<Camera> cams;
  for (int t = 0; t < T; ++t) {
    cams.push_back(Camera::from_pose(spec.camera_path[static_cast<size_t>(t)],
                                     spec.fov_deg, w, h));
    out.frames.push_back(render_frame(geo, spec, cams.back()));
  }

  auto& s = out.sample;
  for (int t = 0; t < T; ++t) {
    FrameSample fs;
    fs.color = out.frames[static_cast<size_t>(t)].color;
    fs.depth = out.frames[static_cast<size_t>(t)].depth;
    fs.seg = out.frames[static_cast<size_t>(t)].seg;
    fs.mask.h = h;
    fs.mask.w = w;
    fs.mask.data.assign(static_cast<size_t>(w) * h, 0);
    s.frames.push_back(std::move(fs));
  }
  s.flow_fwd.resize(static_cast<size_t>(T));
  s.flow_to_first.resize(static_cast<size_t>(T));
  s.occl.resize(static_cast<size_t>(T));
  s.occl_first.resize(static_cast<size_t>(T));

  // Analytic flow: reproject each pixel's exact surface point into the
  // target camera; occlusion from the exact reprojected depth.
  auto flow_pair = [&](int t, int x) -> std::pair<FlowField, OcclusionMask> {
    const RenderedFrame& src = out.frames[static_cast<size_t>(t)];
    const Camera& cam_x = cams[static_cast<size_t>(x)];
    FlowField flow;
    flow.h = h;
    flow.w = w;
    flow.data.assign(static_cast<size_t>(2) * w * h, 0.0);
    std::vector<double> reproj_m(static_cast<size_t>(w) * h, 0.0);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const size_t idx = static_cast<size_t>(py) * w + px;
        double u, v, z;
        const bool ok = cam_x.project(src.world_pos[idx], u, v, z);
        if (!ok) {
          // behind the target camera: out-of-bounds flow, max depth
          u = -2.0 * w;
          v = -2.0 * h;
          z = spec.depth_max;
        }
        // float32 rounding here keeps in-memory flow identical to the
        // .flo file contents
        flow.dx(py, px) = static_cast<double>(
            static_cast<float>(u - (px + 0.5)));
        flow.dy(py, px) = static_cast<double>(
            static_cast<float>(v - (py + 0.5)));
        reproj_m[idx] = std::clamp(z, 0.0, spec.depth_max);
      }
    DepthMap reproj = scale_depth(reproj_m, h, w, spec.depth_max);
    OcclusionMask occ = exact_occlusion(
        reproj, out.frames[static_cast<size_t>(x)].depth, flow);
    return {std::move(flow), std::move(occ)};
  };

  for (int t = 1; t < T; ++t) {
    auto [f, o] = flow_pair(t, t - 1);
    s.flow_fwd[static_cast<size_t>(t)] = std::move(f);
    s.occl[static_cast<size_t>(t)] = std::move(o);
  }
  for (int t = 2; t < T; ++t) {
    auto [f, o] = flow_pair(t, 0);
    s.flow_to_first[static_cast<size_t>(t)] = std::move(f);
    s.occl_first[static_cast<size_t>(t)] = std::move(o);
  }
  return out;
}

OcclusionMask exact_occlusion(const DepthMap& depth_src_in_target,
                              const DepthMap& depth_target,
                              const FlowField& flow, double tau) {
  const int h = depth_src_in_target.h, w = depth_src_in_target.w;
  require(depth_target.h == h && depth_target.w == w && flow.h == h && flow.w == w,
          "exact_occlusion: shape mismatch");
  OcclusionMask o;
  o.h = h;
  o.w = w;
  o.data.assign(static_cast<size_t>(h) * w, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = x + 0.5 + flow.dx(y, x);
      const double v = y + 0.5 + flow.dy(y, x);
      if (u < 0 || u >= w || v < 0 || v >= h) {
        o.data[static_cast<size_t>(y) * w + x] = 0.0;
        continue;
      }
      const int tx = std::min(static_cast<int>(u), w - 1);
      const int ty = std::min(static_cast<int>(v), h - 1);
      const double z_src = depth_src_in_target.at(y, x);
      const double z_buf = depth_target.at(ty, tx);
      if (z_src > z_buf + tau) o.data[static_cast<size_t>(y) * w + x] = 0.0;
    }
  return o;
}

OcclusionMask photometric_occlusion(const RgbFrame& frame, const RgbFrame& warped_ref,
                                    double alpha) {
  require(alpha > 0, "photometric_occlusion: alpha must be positive");
  require(frame.h == warped_ref.h && frame.w == warped_ref.w,
          "photometric_occlusion: shape mismatch");
  OcclusionMask o;
  o.h = frame.h;
  o.w = frame.w;
  o.data.resize(static_cast<size_t>(frame.h) * frame.w);
  for (int y = 0; y < frame.h; ++y)
    for (int x = 0; x < frame.w; ++x) {
      double e = 0.0;
      for (int c = 0; c < 3; ++c) {
        // compare in [0,1] intensity scale
        const double d = (frame.at(c, y, x) - warped_ref.at(c, y, x)) * 0.5;
        e += d * d;
      }
      e /= 3.0;
      o.data[static_cast<size_t>(y) * o.w + x] = std::exp(-alpha * e);
    }
  return o;
}

InpaintMask sample_object_mask(const SegmentationMap& seg, std::mt19937_64& rng,
                               bool include_shadow,
                               const std::vector<int>* instance_ids,
                               const std::vector<int>* shadow_caster) {
  const int h = seg.h, w = seg.w;
  const size_t n = static_cast<size_t>(h) * w;
  // component labels: from instances when available, else BFS over
  // same-class non-background neighbors
  std::vector<int> comp(n, -1);
  int ncomp = 0;
  if (instance_ids) {
    require(instance_ids->size() == n, "sample_object_mask: instance map size mismatch");
    int max_id = -1;
    for (size_t i = 0; i < n; ++i) {
      if ((*instance_ids)[i] >= 0 && !seg.is_background(seg.classes[i])) {
        comp[i] = (*instance_ids)[i];
        max_id = std::max(max_id, comp[i]);
      }
    }
    ncomp = max_id + 1;
  } else {
    for (size_t i = 0; i < n; ++i) {
      if (comp[i] >= 0 || seg.is_background(seg.classes[i])) continue;
      const int label = ncomp++;
      std::queue<size_t> q;
      q.push(i);
      comp[i] = label;
      while (!q.empty()) {
        const size_t cur = q.front();
        q.pop();
        const int cy = static_cast<int>(cur) / w, cx = static_cast<int>(cur) % w;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const size_t ni = static_cast<size_t>(ny) * w + nx;
          if (comp[ni] >= 0 || seg.classes[ni] != seg.classes[cur] ||
              seg.is_background(seg.classes[ni]))
            continue;
          comp[ni] = label;
          q.push(ni);
        }
      }
    }
  }

  std::vector<int> present;
  for (size_t i = 0; i < n; ++i)
    if (comp[i] >= 0 &&
        std::find(present.begin(), present.end(), comp[i]) == present.end())
      present.push_back(comp[i]);
  if (present.empty())
    throw std::runtime_error("sample_object_mask: no non-background pixels");
  std::sort(present.begin(), present.end());

  const int k = 1 + static_cast<int>(rng() % present.size());
  std::vector<int> chosen = present;
  for (size_t i = chosen.size() - 1; i > 0; --i)
    std::swap(chosen[i], chosen[rng() % (i + 1)]);
  chosen.resize(static_cast<size_t>(k));

  InpaintMask m;
  m.h = h;
  m.w = w;
  m.data.assign(n, 0);
  auto is_chosen = [&](int c) {
    return std::find(chosen.begin(), chosen.end(), c) != chosen.end();
  };
  for (size_t i = 0; i < n; ++i)
    if (comp[i] >= 0 && is_chosen(comp[i])) m.data[i] = 1;
  if (include_shadow && shadow_caster) {
    require(shadow_caster->size() == n, "sample_object_mask: shadow map size mismatch");
    for (size_t i = 0; i < n; ++i)
      if ((*shadow_caster)[i] >= 0 && is_chosen((*shadow_caster)[i])) m.data[i] = 1;
  }
  return m;
}

SceneSpec make_random_scene(uint64_t seed, int frames, int size, int num_classes) {
  require(frames >= 1, "make_random_scene: frames >= 1");
  require(num_classes >= 4, "make_random_scene: need at least one object class");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  auto unif = [&](double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
  };

  SceneSpec spec;
  spec.seed = seed;
  spec.width = size;
  spec.height = size;
  spec.num_classes = num_classes;
  spec.room_min = {0, 0, 0};
  spec.room_max = {unif(5.0, 7.0), unif(2.6, 3.2), unif(5.0, 7.0)};
  spec.light_dir = normalize(Vec3{unif(-0.4, 0.4), -1.0, unif(-0.4, 0.4)});

  const Vec3 center{spec.room_max.x / 2, 0.0, spec.room_max.z / 2};
  const int nobj = 2 + static_cast<int>(rng() % 3);
  for (int i = 0; i < nobj && static_cast<int>(spec.boxes.size()) < nobj;) {
    const double sx = unif(0.45, 1.1), sy = unif(0.5, 1.4), sz = unif(0.45, 1.1);
    const double px = center.x + unif(-1.4, 1.4);
    const double pz = center.z + unif(-1.4, 1.4);
    BoxSpec b;
    b.min = {px - sx / 2, 0.002, pz - sz / 2};
    b.max = {px + sx / 2, 0.002 + sy, pz + sz / 2};
    bool ok = true;
    for (const auto& other : spec.boxes) {
      const bool sep = b.max.x + 0.3 < other.min.x || other.max.x + 0.3 < b.min.x ||
                       b.max.z + 0.3 < other.min.z || other.max.z + 0.3 < b.min.z;
      if (!sep) ok = false;
    }
    if (ok) {
      b.class_id = 3 + static_cast<int>(rng() % (num_classes - 3));
      b.tex.base = {unif(0.25, 0.75), unif(0.25, 0.75), unif(0.25, 0.75)};
      b.tex.amp = {unif(0.08, 0.22), unif(0.08, 0.22), unif(0.08, 0.22)};
      b.tex.wave = {unif(-0.2, 0.2), unif(-0.2, 0.2), unif(-0.2, 0.2)};
      b.tex.phase = unif(0, 6.28);
      spec.boxes.push_back(b);
      ++i;
    } else {
      ++i;  // bounded attempts; at least one box is guaranteed below
    }
  }
  if (spec.boxes.empty()) {
    BoxSpec b;
    b.min = {center.x - 0.4, 0.002, center.z - 0.4};
    b.max = {center.x + 0.4, 0.802, center.z + 0.4};
    b.class_id = 3;
    spec.boxes.push_back(b);
  }

  // slow orbit around the room center with small radial/height jitter
  const double radius = unif(1.9, 2.5);
  const double height = unif(1.2, 1.8);
  double angle = unif(0, 2 * M_PI);
  const double angle_step = unif(0.012, 0.028) * (rng() % 2 ? 1.0 : -1.0);
  const Vec3 look{center.x + unif(-0.3, 0.3), unif(0.4, 1.0),
                  center.z + unif(-0.3, 0.3)};
  for (int t = 0; t < frames; ++t) {
    CameraPose p;
    p.position = {center.x + radius * std::cos(angle), height + 0.02 * std::sin(0.4 * t),
                  center.z + radius * std::sin(angle)};
    p.position.x = std::clamp(p.position.x, 0.3, spec.room_max.x - 0.3);
    p.position.z = std::clamp(p.position.z, 0.3, spec.room_max.z - 0.3);
    p.position.y = std::clamp(p.position.y, 0.3, spec.room_max.y - 0.3);
    p.look_at = look;
    spec.camera_path.push_back(p);
    angle += angle_step;
  }
  return spec;
}

}  // namespace rdi::synth
